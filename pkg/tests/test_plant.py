"""
Simulation and performance-channel tests.

Known values:
- x+ = 0.5 x, x0 = 1, no input or noise: x_k = 0.5^k
- scheduled scalar gain K=1, K_s=0.5, dA=0.2, dB=0.4: (1 + 0.1) / (1 - 0.2) = 1.375
"""

import numpy as np
import pytest

from gsdual.errors import DimensionMismatch, SingularMatrix, ZeroDisturbance
from gsdual.plant import (LtiSystem, PerfChannel, Policy, Simulator, Trajectory, empirical_l2_gain,
                          perf_output, quad_perf_lhs, simulate, stack_trajectories, tail_energy_ratio,
                          trajectory_rows)


class TestSystemTypes:

    def test_shapes_checked(self):
        with pytest.raises(DimensionMismatch):
            LtiSystem(A=np.eye(2), B=np.ones((3, 1)), sigma_w=0.1)

    def test_sigma_positive(self):
        with pytest.raises(DimensionMismatch):
            LtiSystem(A=np.eye(2), B=np.ones((2, 1)), sigma_w=0.0)

    def test_l2_multiplier(self):
        pc = PerfChannel.l2_gain(2.0, np.eye(2), np.zeros((2, 1)))
        np.testing.assert_allclose(pc.multiplier, np.diag([-2.0, -2.0, 0.5, 0.5]))

    def test_perf_channel_needs_pd_r(self):
        with pytest.raises(SingularMatrix):
            PerfChannel(C=np.eye(1), D=np.zeros((1, 1)), D_w=np.zeros((1, 1)), Q_p=-np.eye(1),
                        S_p=np.zeros((1, 1)), R_p=np.zeros((1, 1)))


class TestPolicy:

    def test_plain_gain(self):
        np.testing.assert_array_equal(Policy(K=[[1.0, 2.0]]).gain(), [[1.0, 2.0]])

    def test_scheduled_gain(self):
        policy = Policy(K=[[1.0]], K_s=[[0.5]], Delta_s=[[0.2, 0.4]])
        np.testing.assert_allclose(policy.gain(), [[1.375]])

    def test_singular_schedule(self):
        with pytest.raises(SingularMatrix):
            Policy(K=[[1.0]], K_s=[[1.0]], Delta_s=[[0.0, 1.0]]).gain()


class TestSimulate:

    def test_free_decay(self, rng):
        system = LtiSystem(A=[[0.5]], B=[[1.0]], sigma_w=1.0)
        traj = simulate(system, Policy(K=[[0.0]]), [1.0], 5, rng, disturbances=np.zeros((5, 1)))
        np.testing.assert_allclose(traj.states[:, 0], 0.5 ** np.arange(6))
        assert traj.horizon == 5
        np.testing.assert_allclose(traj.final_state, [0.5 ** 5])

    def test_same_seed_same_trajectory(self, desk_system):
        policy = Policy(K=np.zeros((1, 2)), Sigma=np.eye(1))
        a = simulate(desk_system, policy, np.zeros(2), 50, np.random.default_rng(3))
        b = simulate(desk_system, policy, np.zeros(2), 50, np.random.default_rng(3))
        np.testing.assert_array_equal(a.states, b.states)

    def test_feedback_is_applied(self, scalar_system, rng):
        traj = simulate(scalar_system, Policy(K=[[-0.5]]), [2.0], 3, rng, disturbances=np.zeros((3, 1)))
        np.testing.assert_allclose(traj.inputs[:, 0], -0.5 * traj.states[:-1, 0])
        np.testing.assert_allclose(traj.states[1:, 0], 0.4 * traj.states[:-1, 0])

    def test_bad_x0(self, desk_system, rng):
        with pytest.raises(DimensionMismatch):
            simulate(desk_system, Policy(K=np.zeros((1, 2))), [1.0], 3, rng)

    def test_zero_horizon(self, desk_system, rng):
        with pytest.raises(DimensionMismatch):
            simulate(desk_system, Policy(K=np.zeros((1, 2))), np.zeros(2), 0, rng)


class TestPerformance:

    def test_perf_output(self):
        pc = PerfChannel.l2_gain(1.0, [[1.0, 0.0]], [[2.0]], [[0.0, 1.0]])
        np.testing.assert_allclose(perf_output(pc, [1.0, 2.0], [3.0], [0.0, 4.0]), [1.0 + 6.0 + 4.0])

    def test_quad_perf_lhs_by_hand(self, rng):
        # z = x, x+ = 0 * x + w: z_k = w_{k-1}
        system = LtiSystem(A=[[0.0]], B=[[0.0]], sigma_w=1.0)
        pc = PerfChannel.l2_gain(2.0, [[1.0]], [[0.0]])
        w = np.array([[1.0], [0.0], [0.0]])
        traj = simulate(system, Policy(K=[[0.0]]), [0.0], 3, rng, perf=pc, disturbances=w)
        s_wz, s_ww = quad_perf_lhs(pc, traj)
        # -2 * |w|^2 + 0.5 * |z|^2 = -2 + 0.5
        assert s_wz == pytest.approx(-1.5)
        assert s_ww == pytest.approx(1.0)
        assert empirical_l2_gain(pc, [traj]) == pytest.approx(1.0)

    def test_zero_disturbance(self, rng):
        system = LtiSystem(A=[[0.5]], B=[[0.0]], sigma_w=1.0)
        pc = PerfChannel.l2_gain(1.0, [[1.0]], [[0.0]])
        traj = simulate(system, Policy(K=[[0.0]]), [1.0], 4, rng, perf=pc, disturbances=np.zeros((4, 1)))
        with pytest.raises(ZeroDisturbance):
            empirical_l2_gain(pc, [traj])

    def test_tail_energy_of_decayed_run(self, rng):
        system = LtiSystem(A=[[0.1]], B=[[0.0]], sigma_w=1.0)
        pc = PerfChannel.l2_gain(1.0, [[1.0]], [[0.0]])
        w = np.zeros((50, 1))
        w[0] = 1.0
        traj = simulate(system, Policy(K=[[0.0]]), [0.0], 50, rng, perf=pc, disturbances=w)
        assert tail_energy_ratio(traj) < 1e-12


class TestTrajectoryData:

    def test_rows_and_header(self, desk_system, rng):
        traj = simulate(desk_system, Policy(K=np.zeros((1, 2))), np.zeros(2), 4, rng)
        header, rows = trajectory_rows(traj)
        assert header == ["k", "x0", "x1", "u0", "w0", "w1"]
        assert len(rows) == 5
        assert rows[-1][0] == 4

    def test_dict_round_trip(self, desk_system, rng):
        traj = simulate(desk_system, Policy(K=np.zeros((1, 2)), Sigma=np.eye(1)), np.zeros(2), 6, rng)
        back = Trajectory.from_dict(traj.to_dict())
        np.testing.assert_array_equal(back.states, traj.states)
        np.testing.assert_array_equal(back.inputs, traj.inputs)

    def test_stacking(self, desk_system, rng):
        sim = Simulator(desk_system)
        first = sim.random_exploration(1.0, np.zeros(2), 10, rng)
        second = sim.random_exploration(1.0, first.final_state, 5, rng)
        phi, x_next = stack_trajectories([first, second])
        assert phi.shape == (15, 3)
        assert x_next.shape == (15, 2)
        np.testing.assert_array_equal(x_next[10], second.states[1])
