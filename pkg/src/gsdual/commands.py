"""
Pipeline stage commands for gsdual.

Each command reads the artifacts of the previous stages from the output
directory, runs its part of the pipeline and writes its own artifacts plus
its section of report.json. cmd_full chains the four stages, so a full run
and four single-stage runs leave identical files behind.

Functions:
    cmd_estimate(cfg, dump_sdp=None) -> int
        Random initial exploration, least squares, D0 and robust LQR gain K0

    cmd_design(cfg, dump_sdp=None, jobs=None) -> int
        Line-searched dual SDP -> (K_e, Sigma, K, K_s, ...)

    cmd_explore(cfg) -> int
        Targeted exploration, re-estimation and K_new

    cmd_validate(cfg, jobs=None) -> int
        Independent certification and Monte Carlo checks

    cmd_full(cfg, dump_sdp=None, jobs=None) -> int
        All of the above in order

Flow:
    estimate -> estimate.json, initial_data.json, initial_trajectory.csv
    design   -> design.json, solver_status.csv
    explore  -> exploration.json, exploration_data.json, exploration_trajectory.csv
    validate -> validation.json, validation.csv
    every stage -> report.json section, timings.json entry
"""

import time
from contextlib import contextmanager
from typing import Iterator, List, Optional

from gsdual import artifacts
from gsdual.config import ScenarioConfig
from gsdual.constants import ExitCode
from gsdual.errors import AllInfeasible, stage_label
from gsdual.lmi_blocks import ExplorationData
from gsdual.output import print_info, print_summary, print_warning
from gsdual.plant import Simulator, Trajectory, trajectory_rows
from gsdual.sdp_core import dump_standard_form
from gsdual.synthesis import (DualDesign, ExplorationResult, InitialResult, build_dual_sdp, design_controller,
                              design_problem, exploration_phase, identify_initial, robust_lqr_program)
from gsdual.utils import debug_print, spawn_rng
from gsdual.validate import run_validation

STAGES = ("estimate", "design", "explore", "validate")

STATUS_HEADER = ["index", "eps", "t_e", "lambda_s", "lambda_u", "status", "objective", "max_violation"]


@contextmanager
def _stage(name: str, out: str) -> Iterator[None]:
    """Label errors with the stage name and record the stage's wall time."""
    start = time.perf_counter()
    debug_print(f"Stage '{name}' starting")
    with stage_label(name):
        yield
    elapsed = time.perf_counter() - start
    artifacts.record_timing(out, name, elapsed)
    debug_print(f"Stage '{name}' finished in {elapsed:.3f}s")


def _load_initial(out: str) -> InitialResult:
    trajectory = Trajectory.from_dict(artifacts.read_json(out, "initial_data"))
    return InitialResult.from_dict(artifacts.read_json(out, "estimate"), trajectory)


def _load_design(out: str) -> DualDesign:
    return DualDesign.from_dict(artifacts.read_json(out, "design"))


def _load_exploration(out: str) -> ExplorationResult:
    trajectory = Trajectory.from_dict(artifacts.read_json(out, "exploration_data"))
    return ExplorationResult.from_dict(artifacts.read_json(out, "exploration"), trajectory)


def _status_rows(statuses: List[dict]) -> List[list]:
    return [[row.get(key, "") for key in STATUS_HEADER] for row in statuses]


def cmd_estimate(cfg: ScenarioConfig, dump_sdp: Optional[str] = None) -> int:
    """
    Stage 1: N0 steps of white-noise input, least squares, D0 and K0.

    Starts a fresh report.json and timings.json in the output directory.
    """
    out = artifacts.ensure_out_dir(cfg.out)
    artifacts.write_json(out, "timings", {})
    with _stage("estimate", out):
        simulator = Simulator(cfg.system)
        initial = identify_initial(cfg, simulator, spawn_rng(cfg.seed, "initial", 0))

        artifacts.write_json(out, "initial_data", initial.trajectory.to_dict())
        header, rows = trajectory_rows(initial.trajectory)
        artifacts.write_csv(out, "initial_csv", header, rows)
        artifacts.write_json(out, "estimate", initial.to_dict())
        artifacts.write_json(out, "report", {"config": cfg.to_dict(), "seed": cfg.seed,
                                             "initial": initial.to_dict()})
        if dump_sdp:
            est = initial.estimate
            ed = ExplorationData(A0_hat=est.A_hat, B0_hat=est.B_hat, D0=initial.info0.D, Q=cfg.Q, R=cfg.R)
            dump_standard_form(robust_lqr_program(ed, initial.K0_t_e, cfg.system.sigma_w),
                               f"{dump_sdp}.robust_lqr.json")

    print_summary("estimate", f"{cfg.N0} samples, c_delta={initial.c_delta:.4f}, "
                              f"K0={initial.K0.round(4).tolist()}, robust LQR cost {initial.K0_cost:.4g}")
    return int(ExitCode.OK)


def cmd_design(cfg: ScenarioConfig, dump_sdp: Optional[str] = None, jobs: Optional[int] = None) -> int:
    """Stage 2: dual SDP over the hyperparameter grid."""
    out = cfg.out
    initial = _load_initial(out)
    with _stage("design", out):
        try:
            design, statuses = design_controller(cfg, initial, jobs=jobs)
        except AllInfeasible as exc:
            # the status table is the main diagnostic for an infeasible grid
            artifacts.write_csv(out, "solver_status", STATUS_HEADER, _status_rows(exc.statuses))
            raise
        record = {**design.to_dict(), "schedule": cfg.schedule}
        artifacts.write_json(out, "design", record)
        artifacts.write_csv(out, "solver_status", STATUS_HEADER, _status_rows(statuses))
        artifacts.merge_report(out, "design", record)
        artifacts.merge_report(out, "solver_status", statuses)
        if dump_sdp:
            dump_standard_form(build_dual_sdp(design_problem(cfg, initial), design.hyper),
                               f"{dump_sdp}.dual.json")

    feasible = sum(1 for row in statuses if row["status"] == "Optimal")
    h = design.hyper
    print_summary("design", f"tr(Y_e)={design.exploration_cost:.4g} at eps={h.eps:g}, t_e={h.t_e:g}, "
                            f"lambda_s={h.lambda_s:g}, lambda_u={h.lambda_u:g} "
                            f"({feasible}/{len(statuses)} points feasible"
                            f"{'' if cfg.schedule else ', K_s fixed at 0'})")
    return int(ExitCode.OK)


def cmd_explore(cfg: ScenarioConfig) -> int:
    """Stage 3: apply u = K_e x + e for T steps, re-estimate, compute K_new."""
    out = cfg.out
    initial = _load_initial(out)
    design = _load_design(out)
    with _stage("explore", out):
        simulator = Simulator(cfg.system)
        result = exploration_phase(cfg, simulator, spawn_rng(cfg.seed, "explore", 0), initial, design)
        artifacts.write_json(out, "exploration_data", result.trajectory.to_dict())
        header, rows = trajectory_rows(result.trajectory)
        artifacts.write_csv(out, "exploration_csv", header, rows)
        artifacts.write_json(out, "exploration", result.to_dict())
        artifacts.merge_report(out, "exploration", result.to_dict())

    size = design.delta_s_bound().normalized_size(result.delta_s)
    print_summary("explore", f"{cfg.T} steps, K_new={result.controller.K_new.round(4).tolist()}, "
                             f"Delta_s at {size:.3f} of its certified radius")
    if size > 1.0:
        print_warning("realized Delta_s lies outside the certified scheduling set")
    return int(ExitCode.OK)


def cmd_validate(cfg: ScenarioConfig, jobs: Optional[int] = None) -> int:
    """Stage 4: certification, sampled performance, exploration covariance check, Monte Carlo studies."""
    out = cfg.out
    initial = _load_initial(out)
    design = _load_design(out)
    exploration = _load_exploration(out)
    with _stage("validate", out):
        report = run_validation(cfg, initial, design, exploration, jobs=cfg.jobs if jobs is None else jobs)
        artifacts.write_json(out, "validation", report.to_dict())
        header, rows = report.csv_rows(cfg.seed)
        artifacts.write_csv(out, "validation_csv", header, rows)
        artifacts.merge_report(out, "validation", report.to_dict())

    print_summary("validate", f"certified={report.certified}, worst performance ratio "
                              f"{report.performance.worst_ratio:.4g}, covariance discrepancy "
                              f"{report.assumption2.discrepancy:.3f}")
    if report.assumption2.flagged:
        print_warning("empirical exploration covariance differs markedly from the predicted one")
    if report.coverage is not None:
        print_info(f"coverage: theta_0 {report.coverage.theta_0:.3f}, theta_T {report.coverage.theta_T:.3f}, "
                   f"joint {report.coverage.joint:.3f} over {report.coverage.trials} trials")
    if report.pipeline is not None:
        print_info(f"pipeline Monte Carlo: joint event in {report.pipeline.joint:.3f} of {report.pipeline.runs} runs")
    return int(ExitCode.OK)


def cmd_full(cfg: ScenarioConfig, dump_sdp: Optional[str] = None, jobs: Optional[int] = None) -> int:
    """All four stages in order; stops at the first failure."""
    cmd_estimate(cfg, dump_sdp)
    cmd_design(cfg, dump_sdp, jobs)
    cmd_explore(cfg)
    cmd_validate(cfg, jobs)
    print_info(f"artifacts written to {cfg.out}")
    return int(ExitCode.OK)


COMMANDS = {
    "estimate": lambda cfg, args: cmd_estimate(cfg, args.dump_sdp),
    "design": lambda cfg, args: cmd_design(cfg, args.dump_sdp, args.jobs),
    "explore": lambda cfg, args: cmd_explore(cfg),
    "validate": lambda cfg, args: cmd_validate(cfg, args.jobs),
    "full": lambda cfg, args: cmd_full(cfg, args.dump_sdp, args.jobs),
}
