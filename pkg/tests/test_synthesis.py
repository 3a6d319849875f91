"""
Dual design tests.

Known values:
- scalar K=1, K_s=0.5, dA=0.2, dB=0.4: K_new = 1.1 / 0.8 = 1.375
- A=0.9, B=1, Q=R=1 with negligible uncertainty: K0 equals the DARE gain (about -0.5377)
"""

from dataclasses import replace

import numpy as np
import pytest
from scipy import linalg

from conftest import requires_solver
from gsdual.config import GridSpec
from gsdual.errors import (AllInfeasible, DomainError, IllPosed, Infeasible, RankDeficient, SingularMatrix,
                           StageError, stage_label)
from gsdual.estimate import Estimate, InfoMatrix
from gsdual.lmi_blocks import ExplorationData, GainSchedulingData
from gsdual.plant import Simulator, Trajectory
from gsdual.synthesis import (DesignProblem, DualDesign, Hyperparams, InitialResult, build_dual_sdp,
                              design_from_assignment, design_problem,
                              dual_variables, explore, grid_points, k_new, line_search, recover_controllers,
                              gamma_bisection, robust_lqr_K0, robust_lqr_line_search, run_algorithm1)
from gsdual.utils import spawn_rng

A_DESK = np.array([[0.9, 0.2], [0.0, 0.7]])
B_DESK = np.array([[0.0], [1.0]])


def scalar_estimate(a, b):
    return Estimate(A_hat=np.array([[a]]), B_hat=np.array([[b]]))


def desk_problem(desk_perf, D0_scale=1e4, schedule=True):
    D0 = D0_scale * np.eye(3)
    gs = GainSchedulingData(A0_hat=A_DESK, B0_hat=B_DESK, perf=desk_perf)
    ed = ExplorationData(A0_hat=A_DESK, B0_hat=B_DESK, D0=D0, Q=np.eye(2), R=np.eye(1))
    return DesignProblem(gs=gs, ed=ed, T=1000, sigma_w=0.1, c_delta=10.6, K0=np.array([[-0.1, -0.4]]),
                         schedule=schedule)


def dare_gain(A, B, Q, R):
    P = linalg.solve_discrete_are(A, B, Q, R)
    return -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)


class TestHyperparams:

    def test_positive(self):
        with pytest.raises(DomainError):
            Hyperparams(eps=1.0, t_e=0.0, lambda_s=1.0, lambda_u=1.0)

    def test_dict(self):
        hyper = Hyperparams(eps=0.5, t_e=0.01, lambda_s=1.0, lambda_u=10.0)
        assert Hyperparams.from_dict(hyper.to_dict()) == hyper

    def test_grid_points(self):
        grid = GridSpec(eps=(0.5, 1.0), t_e=(1.0, 3.0), lambda_s=(1.0,), lambda_u=(0.1, 1.0, 10.0))
        points = grid_points(grid, 0.1)
        assert len(points) == grid.size == 12
        assert (points[0].eps, points[0].lambda_s, points[0].lambda_u) == (0.5, 1.0, 0.1)
        assert points[0].t_e == pytest.approx(0.01)
        assert points[1].lambda_u == 1.0
        assert points[-1].eps == 1.0


class TestDualProgram:

    def test_variables(self):
        names = [v.name for v in dual_variables(2, 1)]
        assert names == ["W_e", "Z_e", "Y_e", "Sigma", "K_s", "M", "N", "DbarT", "Ds"]
        assert "K_s" not in [v.name for v in dual_variables(2, 1, schedule=False)]

    def test_constraints(self, desk_perf):
        p = build_dual_sdp(desk_problem(desk_perf), Hyperparams(1.0, 0.01, 1.0, 1.0))
        assert [c.name for c in p.constraints] == ["S1", "Se", "S2", "S3", "DbarT"]
        strict = {c.name for c in p.constraints if c.strict}
        assert strict == {"S2", "S3", "DbarT"}
        assert all(p.margins[name] > 0 for name in strict)
        assert p.objective.terms == (("Y_e", 1.0),)

    def test_unscheduled_program_builds(self, desk_perf):
        p = build_dual_sdp(desk_problem(desk_perf, schedule=False), Hyperparams(1.0, 0.01, 1.0, 1.0))
        assert len(p.vars) == 8


class TestRecovery:

    def test_gains(self, rng):
        K_e = np.array([[0.5, -1.0]])
        K = np.array([[-0.2, 0.3]])
        W_e = 2.0 * np.eye(2)
        a = rng.standard_normal((2, 2))
        N = a @ a.T + np.eye(2)
        got_e, got = recover_controllers(W_e, W_e @ K_e.T, K @ N, N)
        np.testing.assert_allclose(got_e, K_e)
        np.testing.assert_allclose(got, K)

    def test_singular_lyapunov_variable(self):
        with pytest.raises(SingularMatrix):
            recover_controllers(np.eye(2), np.zeros((2, 1)), np.zeros((1, 2)), np.diag([1.0, 0.0]))

    def test_unscheduled_assignment(self, desk_perf):
        problem = desk_problem(desk_perf, schedule=False)
        values = {"W_e": np.eye(2), "Z_e": np.zeros((2, 1)), "Y_e": np.eye(3), "Sigma": np.eye(1),
                  "M": np.zeros((1, 2)), "N": np.eye(2), "DbarT": np.eye(3), "Ds": np.eye(3)}
        design = design_from_assignment(problem, Hyperparams(1.0, 0.01, 1.0, 1.0), values, 3.0)
        np.testing.assert_array_equal(design.K_s, np.zeros((1, 2)))
        np.testing.assert_allclose(design.X, np.eye(2))
        back = DualDesign.from_dict(design.to_dict())
        assert back.hyper == design.hyper
        assert back.exploration_cost == 3.0


class TestKNew:

    def test_scalar_value(self):
        controller = k_new([[1.0]], [[0.5]], scalar_estimate(0.0, 0.0), scalar_estimate(0.2, 0.4))
        np.testing.assert_allclose(controller.K_new, [[1.375]])

    def test_no_scheduling_change(self):
        est = Estimate(A_hat=A_DESK, B_hat=B_DESK)
        controller = k_new([[-0.1, -0.4]], [[0.3, 0.2]], est, est)
        np.testing.assert_allclose(controller.K_new, [[-0.1, -0.4]])

    def test_zero_scheduling_gain(self):
        controller = k_new([[-0.5]], [[0.0]], scalar_estimate(0.9, 1.0), scalar_estimate(0.7, 2.0))
        np.testing.assert_allclose(controller.K_new, [[-0.5]])

    def test_ill_posed(self):
        with pytest.raises(IllPosed) as info:
            k_new([[1.0]], [[1.0]], scalar_estimate(0.0, 0.0), scalar_estimate(0.1, 1.0))
        assert "cond" in info.value.diagnostics

    def test_normalized_delta_reported(self):
        controller = k_new([[1.0]], [[0.5]], scalar_estimate(0.0, 0.0), scalar_estimate(0.2, 0.4),
                           Ds=np.eye(2))
        np.testing.assert_allclose(controller.K_new, [[1.375]])


class TestExplore:

    def test_deterministic_feedback(self, desk_system):
        K_e = np.array([[-0.1, -0.2]])
        traj = explore(Simulator(desk_system), K_e, np.zeros((1, 1)), 20, np.zeros(2), spawn_rng(1, "explore"))
        np.testing.assert_allclose(traj.inputs, traj.states[:-1] @ K_e.T)

    def test_same_stream_same_data(self, desk_system):
        sim = Simulator(desk_system)
        a = explore(sim, [[-0.1, -0.2]], [[0.5]], 30, np.zeros(2), spawn_rng(4, "explore"))
        b = explore(sim, [[-0.1, -0.2]], [[0.5]], 30, np.zeros(2), spawn_rng(4, "explore"))
        np.testing.assert_array_equal(a.states, b.states)


@requires_solver
class TestRobustLqr:

    def test_matches_dare_with_negligible_uncertainty(self):
        A, B, Q, R = np.array([[0.9]]), np.array([[1.0]]), np.eye(1), np.eye(1)
        ed = ExplorationData(A0_hat=A, B0_hat=B, D0=1e6 * np.eye(2), Q=Q, R=R)
        K0, cost = robust_lqr_K0(ed, 0.01, 0.1)
        expected = dare_gain(A, B, Q, R)
        assert expected[0, 0] == pytest.approx(-0.5377, abs=1e-4)
        np.testing.assert_allclose(K0, expected, atol=2e-3)
        assert cost > 0

    def test_desk_gain_is_stabilizing(self):
        ed = ExplorationData(A0_hat=A_DESK, B0_hat=B_DESK, D0=1e4 * np.eye(3), Q=np.eye(2), R=np.eye(1))
        K0, _, t_e = robust_lqr_line_search(ed, 0.1, (0.3, 1.0))
        assert max(abs(np.linalg.eigvals(A_DESK + B_DESK @ K0))) < 1.0
        assert t_e in (pytest.approx(0.003), pytest.approx(0.01))

    def test_huge_uncertainty_is_infeasible(self):
        ed = ExplorationData(A0_hat=A_DESK, B0_hat=B_DESK, D0=1e-4 * np.eye(3), Q=np.eye(2), R=np.eye(1))
        with pytest.raises(Infeasible):
            robust_lqr_line_search(ed, 0.1, (1.0,))


@requires_solver
class TestLineSearch:

    def test_all_infeasible_keeps_statuses(self, desk_perf):
        problem = desk_problem(desk_perf, D0_scale=1e-4)
        grid = GridSpec(eps=(1.0,), t_e=(1.0,), lambda_s=(1.0,), lambda_u=(1.0, 10.0))
        with pytest.raises(AllInfeasible) as info:
            line_search(problem, grid)
        assert len(info.value.statuses) == 2
        assert all(row["status"] != "Optimal" for row in info.value.statuses)

    @pytest.mark.slow
    def test_design_is_certified(self, desk_perf):
        problem = desk_problem(desk_perf)
        grid = GridSpec(eps=(0.5, 1.0), t_e=(1.0,), lambda_s=(1.0, 10.0), lambda_u=(1.0, 10.0))
        design, statuses = line_search(problem, grid)
        assert len(statuses) == grid.size
        feasible = [row["objective"] for row in statuses if row["status"] == "Optimal"]
        assert design.exploration_cost == pytest.approx(min(feasible))
        assert max(abs(np.linalg.eigvals(A_DESK + B_DESK @ design.K))) < 1.0
        assert np.all(np.linalg.eigvalsh(design.Sigma) >= -1e-8)

    @pytest.mark.slow
    def test_jobs_do_not_change_result(self, desk_perf):
        problem = desk_problem(desk_perf)
        grid = GridSpec(eps=(0.5, 1.0), t_e=(1.0,), lambda_s=(1.0,), lambda_u=(1.0, 10.0))
        serial, rows_serial = line_search(problem, grid, jobs=1)
        parallel, rows_parallel = line_search(problem, grid, jobs=2)
        np.testing.assert_array_equal(serial.K, parallel.K)
        assert [r["status"] for r in rows_serial] == [r["status"] for r in rows_parallel]

    @pytest.mark.slow
    def test_coordinate_mode_visits_fewer_points(self, desk_perf):
        problem = desk_problem(desk_perf)
        grid = GridSpec(eps=(0.5, 1.0, 2.0), t_e=(0.3, 1.0), lambda_s=(0.1, 1.0, 10.0),
                        lambda_u=(0.1, 1.0, 10.0), mode="coordinate", max_sweeps=2)
        design, statuses = line_search(problem, grid)
        assert len(statuses) < grid.size
        assert design.exploration_cost > 0


class TestDesignProblem:

    @staticmethod
    def desk_initial():
        traj = Trajectory(states=np.zeros((2, 2)), inputs=np.zeros((1, 1)), noises=np.zeros((1, 2)))
        info0 = InfoMatrix(D=1e4 * np.eye(3), c_delta=10.6, sigma_w=0.1, sample_count=1)
        return InitialResult(trajectory=traj, estimate=Estimate(A_hat=A_DESK, B_hat=B_DESK), info0=info0,
                             K0=np.array([[-0.1, -0.4]]), K0_cost=1.0, K0_t_e=0.01)

    def test_schedule_follows_scenario(self, desk_cfg):
        hyper = Hyperparams(1.0, 0.01, 1.0, 1.0)
        on = design_problem(desk_cfg, self.desk_initial())
        off = design_problem(replace(desk_cfg, schedule=False), self.desk_initial())
        assert on.schedule and not off.schedule
        assert "K_s" in [v.name for v in build_dual_sdp(on, hyper).vars]
        assert "K_s" not in [v.name for v in build_dual_sdp(off, hyper).vars]

    def test_explicit_argument_wins(self, desk_cfg):
        assert not design_problem(desk_cfg, self.desk_initial(), schedule=False).schedule


class TestStageLabels:

    def test_short_initial_run_fails_in_estimate(self, desk_cfg):
        # two samples cannot identify three regressors
        cfg = replace(desk_cfg, N0=2)
        with pytest.raises(StageError) as info:
            run_algorithm1(cfg, Simulator(cfg.system), seed=0)
        assert info.value.stage == "estimate"
        assert isinstance(info.value.cause, RankDeficient)

    def test_labelled_error_keeps_first_stage(self):
        with pytest.raises(StageError) as info:
            with stage_label("explore"):
                with stage_label("design"):
                    raise IllPosed("singular schedule")
        assert info.value.stage == "design"
        assert isinstance(info.value.cause, IllPosed)

    def test_foreign_errors_pass_through(self):
        with pytest.raises(ValueError):
            with stage_label("design"):
                raise ValueError("not ours")


@requires_solver
@pytest.mark.slow
class TestEndToEnd:

    def test_run_is_reproducible_and_stabilizing(self, desk_cfg):
        cfg = replace(desk_cfg, grid=replace(desk_cfg.grid, eps=(1.0,), lambda_s=(1.0, 10.0),
                                             lambda_u=(1.0, 10.0)))
        sim = Simulator(cfg.system)
        first = run_algorithm1(cfg, sim, seed=3)
        second = run_algorithm1(cfg, sim, seed=3)
        K_new = first.exploration.controller.K_new
        np.testing.assert_array_equal(K_new, second.exploration.controller.K_new)
        assert max(abs(np.linalg.eigvals(cfg.system.A + cfg.system.B @ K_new))) < 1.0
        assert first.initial.trajectory.horizon == cfg.N0
        assert first.exploration.trajectory.horizon == cfg.T


@requires_solver
class TestGammaBisection:

    GRID = GridSpec(eps=(1.0,), t_e=(1.0,), lambda_s=(1.0, 10.0), lambda_u=(1.0, 10.0))

    def test_zero_budget(self, desk_perf):
        with pytest.raises(AllInfeasible):
            gamma_bisection(desk_problem(desk_perf), self.GRID, budget=0.0, gamma_hi=20.0)

    @pytest.mark.slow
    def test_gamma_within_bracket(self, desk_perf):
        gamma, design, statuses = gamma_bisection(desk_problem(desk_perf), self.GRID, budget=1e6,
                                                  gamma_hi=20.0, gamma_lo=0.5, rel_tol=0.1)
        assert 0.5 < gamma <= 20.0
        assert design.exploration_cost <= 1e6
        assert len(statuses) == self.GRID.size
