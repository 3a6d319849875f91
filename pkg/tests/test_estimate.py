"""
Least squares, information matrices and credibility regions.

Ground truth: scipy.stats.chi2 for quantiles, noiseless data for exact
recovery.
"""

import numpy as np
import pytest
from scipy import stats

from gsdual.errors import DomainError, RankDeficient, SingularInfo
from gsdual.estimate import (Estimate, InfoMatrix, chi2_quantile, confidence_dof, empty_info,
                             in_credibility_region, info_matrix, least_squares, parameter_error)
from gsdual.plant import Policy, Simulator, simulate


def noiseless_run(system, horizon, rng, x0=None):
    policy = Policy(K=np.zeros((system.n_u, system.n_x)), Sigma=np.eye(system.n_u))
    x0 = np.zeros(system.n_x) if x0 is None else x0
    return simulate(system, policy, x0, horizon, rng, disturbances=np.zeros((horizon, system.n_x)))


class TestChi2Quantile:

    @pytest.mark.parametrize("dof,delta", [(1, 0.1), (6, 0.1), (6, 0.5), (12, 0.01)])
    def test_matches_scipy(self, dof, delta):
        assert chi2_quantile(dof, delta) == pytest.approx(stats.chi2.ppf(1.0 - delta, dof), rel=1e-10)

    def test_domain(self):
        with pytest.raises(DomainError):
            chi2_quantile(3, 1.5)
        with pytest.raises(DomainError):
            chi2_quantile(0, 0.1)

    def test_dof(self):
        assert confidence_dof(2, 1) == 6


class TestLeastSquares:

    def test_noiseless_recovers_truth(self, desk_system, rng):
        est = least_squares(noiseless_run(desk_system, 30, rng))
        np.testing.assert_allclose(est.A_hat, desk_system.A, atol=1e-10)
        np.testing.assert_allclose(est.B_hat, desk_system.B, atol=1e-10)

    def test_too_few_samples(self, desk_system, rng):
        with pytest.raises(RankDeficient):
            least_squares(noiseless_run(desk_system, 2, rng))

    def test_no_excitation(self, desk_system, rng):
        traj = simulate(desk_system, Policy(K=np.zeros((1, 2))), np.zeros(2), 20, rng,
                        disturbances=np.zeros((20, 2)))
        with pytest.raises(RankDeficient):
            least_squares(traj)

    def test_noisy_estimate_is_close(self, desk_system, rng):
        traj = Simulator(desk_system).random_exploration(1.0, np.zeros(2), 2000, rng)
        est = least_squares(traj)
        np.testing.assert_allclose(est.theta, np.hstack([desk_system.A, desk_system.B]), atol=0.05)

    def test_estimate_dict(self):
        est = Estimate(A_hat=np.array([[0.5]]), B_hat=np.array([[2.0]]))
        back = Estimate.from_dict(est.to_dict())
        np.testing.assert_array_equal(back.theta, est.theta)


class TestInfoMatrix:

    def test_scaling(self, scalar_system, rng):
        traj = Simulator(scalar_system).random_exploration(1.0, [0.0], 50, rng)
        info = info_matrix(traj, 0.1, 2.0)
        phi = np.hstack([traj.states[:-1], traj.inputs])
        np.testing.assert_allclose(info.D, phi.T @ phi / (0.01 * 2.0))
        assert info.sample_count == 50

    def test_additive_over_data(self, desk_system, rng):
        sim = Simulator(desk_system)
        first = sim.random_exploration(1.0, np.zeros(2), 40, rng)
        second = sim.random_exploration(1.0, first.final_state, 60, rng)
        joint = info_matrix([first, second], 0.1, 3.0)
        summed = info_matrix(first, 0.1, 3.0) + info_matrix(second, 0.1, 3.0)
        np.testing.assert_allclose(joint.D, summed.D)
        assert summed.sample_count == 100

    def test_mixed_scaling_not_added(self):
        with pytest.raises(DomainError):
            empty_info(1, 1, 0.1, 1.0) + empty_info(1, 1, 0.2, 1.0)

    def test_singular_inverse(self):
        with pytest.raises(SingularInfo):
            empty_info(1, 1, 0.1, 1.0).inverse()

    def test_dict(self):
        info = InfoMatrix(D=np.eye(2), c_delta=1.5, sigma_w=0.1, sample_count=3)
        back = InfoMatrix.from_dict(info.to_dict())
        np.testing.assert_array_equal(back.D, info.D)
        assert back.c_delta == 1.5


class TestCredibilityRegion:

    def test_truth_at_estimate(self, desk_system):
        est = Estimate(A_hat=desk_system.A, B_hat=desk_system.B)
        info = InfoMatrix(D=np.eye(3), c_delta=1.0, sigma_w=0.1, sample_count=1)
        assert in_credibility_region(desk_system.A, desk_system.B, est, info)

    def test_boundary(self):
        est = Estimate(A_hat=np.array([[1.0]]), B_hat=np.array([[0.0]]))
        info = InfoMatrix(D=np.diag([4.0, 1.0]), c_delta=1.0, sigma_w=1.0, sample_count=1)
        # E^T D E = 4 * 0.5^2 = 1 on the boundary, 4 * 0.6^2 outside
        assert in_credibility_region([[0.5]], [[0.0]], est, info)
        assert not in_credibility_region([[0.4]], [[0.0]], est, info)

    def test_parameter_error_layout(self):
        est = Estimate(A_hat=np.array([[1.0, 2.0], [3.0, 4.0]]), B_hat=np.array([[5.0], [6.0]]))
        E = parameter_error(np.zeros((2, 2)), np.zeros((2, 1)), est)
        np.testing.assert_array_equal(E, [[1.0, 3.0], [2.0, 4.0], [5.0, 6.0]])

    def test_needs_definite_information(self, desk_system):
        est = Estimate(A_hat=desk_system.A, B_hat=desk_system.B)
        with pytest.raises(SingularInfo):
            in_credibility_region(desk_system.A, desk_system.B, est, empty_info(2, 1, 0.1, 1.0))

    @pytest.mark.slow
    def test_coverage_of_truth(self, desk_system):
        c_delta = chi2_quantile(confidence_dof(2, 1), 0.1)
        hits = 0
        trials = 300
        for i in range(trials):
            rng = np.random.default_rng(i)
            traj = Simulator(desk_system).random_exploration(1.0, np.zeros(2), 200, rng)
            hits += in_credibility_region(desk_system.A, desk_system.B, least_squares(traj),
                                          info_matrix(traj, desk_system.sigma_w, c_delta))
        assert hits / trials >= 0.9 - 2 * np.sqrt(0.09 / trials)
