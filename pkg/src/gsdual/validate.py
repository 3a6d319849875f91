"""
Independent checks of a dual design.

None of these functions reuse the synthesis solve: the analysis inequality is
re-solved with the controller fixed, sampled closed loops are certified with
their own dissipation inequality, and Monte Carlo runs draw fresh data.

Types:
    ValidationConfig     - trial counts, horizon, boundary share, delta, seed
    SampledPerformance   - worst ratio, per-trial rows, frozen-LMI failures
    CoverageResult       - marginal and joint containment frequencies
    Assumption2Report    - covariance discrepancy and D_T vs DbarT
    PipelineMonteCarlo   - joint-event bookkeeping over repeated pipeline runs
    ValidationReport     - everything cmd_validate writes

Functions:
    certify_fixed(design, gs) -> bool
    realized_closed_loop(design, gs, delta_s, delta_u) -> RealizedLoop
    frozen_performance_ok(loop, perf, X) -> bool
    performance_ratio(loop, perf, disturbances) -> float
    violation_margin(perf, margin) -> float
    sampled_performance(design, gs, vcfg) -> SampledPerformance
    coverage_test(system, N0, T, delta, n_trials, seed) -> CoverageResult
    assumption2_check(traj, design, T, sigma_w, c_delta, D0) -> Assumption2Report
    pipeline_monte_carlo(cfg, n_runs, seed, jobs) -> PipelineMonteCarlo
    run_validation(cfg, initial, design, exploration) -> ValidationReport

Flow:
    1. commands.cmd_validate loads design and exploration artifacts
    2. run_validation certifies, samples, checks the exploration covariance and, when
       configured, runs the coverage and pipeline Monte Carlo studies
    3. commands writes validation.json and validation.csv
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from gsdual import sdp_core
from gsdual.config import ScenarioConfig, ValidationSettings
from gsdual.constants import (ASSUMPTION2_FLAG, CERT_TOL, DEFAULT_TOL, EPS_GRID, MIN_COVERAGE_TRIALS,
                              TAIL_ENERGY_TOL)
from gsdual.errors import (CertificationFailed, DomainError, IllPosed, InfeasibleError,
                           NumericalError, PerformanceViolation, SingularMatrix, StageError)
from gsdual.estimate import (chi2_quantile, confidence_dof, in_credibility_region,
                             info_matrix, least_squares)
from gsdual.lmi_blocks import (GainSchedulingData, analysis_lmi_fixed, exploration_gram,
                               quadratic_performance_lmi)
from gsdual.matrix_kit import ZERO, assemble, eig_extremes, is_definite, symmetrize
from gsdual.plant import (LtiSystem, PerfChannel, Policy, Simulator, Trajectory, quad_perf_lhs,
                          simulate, stack_trajectories, tail_energy_ratio)
from gsdual.sdp_core import ConicProgram, DecisionVar, LmiConstraint, Structure
from gsdual.synthesis import DualDesign, ExplorationResult, InitialResult, run_algorithm1
from gsdual.uncertainty import delta_s_bound, sample_delta
from gsdual.utils import debug_print, spawn_rng


@dataclass(frozen=True)
class ValidationConfig:
    n_trials: int = 200
    delta: float = 0.1
    horizon: int = 400
    boundary_fraction: float = 0.5
    seed: int = 0
    frozen_lmi_samples: int = 200
    margin: Optional[float] = None

    def __post_init__(self) -> None:
        if self.n_trials < 1:
            raise DomainError("n_trials must be at least 1")
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")
        if self.horizon < 2:
            raise DomainError("validation horizon must be at least 2")
        if not 0.0 <= self.boundary_fraction <= 1.0:
            raise DomainError("boundary_fraction must lie in [0, 1]")
        if self.margin is not None and not self.margin >= 0.0:
            raise DomainError(f"margin must be non-negative, got {self.margin}")

    @classmethod
    def from_settings(cls, settings: ValidationSettings, delta: float, seed: int) -> "ValidationConfig":
        return cls(n_trials=settings.n_trials, delta=delta, horizon=settings.horizon,
                   boundary_fraction=settings.boundary_fraction, seed=seed,
                   frozen_lmi_samples=settings.frozen_lmi_samples)


# ---------------------------------------------------------------------------
# Analysis certificate
# ---------------------------------------------------------------------------

def analysis_program(design: DualDesign, gs: GainSchedulingData) -> ConicProgram:
    """Feasibility program in (X, lambda_s, lambda_u) with (K, K_s, Ds, DbarT) fixed."""
    n_x = gs.n_x
    K, Ks, Ds, DbarT = design.K, design.K_s, design.Ds, design.DbarT
    return ConicProgram(
        vars=(DecisionVar("X", (n_x, n_x), Structure.SYMMETRIC),
              DecisionVar("lambda_s", structure=Structure.SCALAR),
              DecisionVar("lambda_u", structure=Structure.SCALAR)),
        constraints=(
            LmiConstraint("X", lambda v: v["X"], strict=True),
            LmiConstraint("multipliers", lambda v: assemble([[v["lambda_s"], ZERO], [ZERO, v["lambda_u"]]],
                                                            row_dims=[1, 1], col_dims=[1, 1]),
                          strict=True),
            LmiConstraint("analysis", lambda v: analysis_lmi_fixed(K, Ks, v["X"], v["lambda_s"],
                                                                   v["lambda_u"], Ds, DbarT, gs),
                          sense="nsd", strict=True),
        ),
        name="analysis",
    )


def synthesis_certificate_margin(design: DualDesign, gs: GainSchedulingData) -> float:
    """Largest eigenvalue of the analysis form at the synthesized X = N^{-1} (< 0 when consistent)."""
    lam_s, lam_u = design.hyper.lambda_s, design.hyper.lambda_u
    form = analysis_lmi_fixed(design.K, design.K_s, design.X, lam_s, lam_u, design.Ds, design.DbarT, gs)
    _, hi = eig_extremes(form)
    return hi


def certify_fixed(design: DualDesign, gs: GainSchedulingData, solver: Optional[str] = None,
                  raise_on_failure: bool = True) -> bool:
    """
    Re-solve the analysis problem for the fixed controller.

    Args:
        design: Optimal design from the dual SDP
        gs: Generalized plant data the design was computed for
        raise_on_failure: raise instead of returning False

    Raises:
        CertificationFailed: the analysis problem has no solution although the
                             synthesis solve returned one
    """
    try:
        report = sdp_core.solve(analysis_program(design, gs), tol=CERT_TOL, solver=solver)
    except (InfeasibleError, NumericalError) as exc:
        debug_print(f"analysis certificate not found: {type(exc).__name__}: {exc}")
        if raise_on_failure:
            raise CertificationFailed(f"analysis LMI infeasible for the synthesized controller ({exc}); "
                                      f"synthesis margin {synthesis_certificate_margin(design, gs):.3e}") from exc
        return False
    debug_print(f"analysis certificate: lambda_s={report.assignment['lambda_s']:.4g}, "
                f"lambda_u={report.assignment['lambda_u']:.4g}, violation {report.max_violation:.2e}")
    return True


# ---------------------------------------------------------------------------
# Frozen closed loops
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RealizedLoop:
    """x+ = A x + w, z = C x + D_w w under u = K_sched x on the plant A0 + Delta, B0 + Delta."""
    A: np.ndarray
    C: np.ndarray
    D_w: np.ndarray
    K_sched: np.ndarray
    A_true: np.ndarray
    B_true: np.ndarray


def realized_closed_loop(design: DualDesign, gs: GainSchedulingData, delta_s: np.ndarray,
                         delta_u: np.ndarray) -> RealizedLoop:
    """
    Closed loop for frozen scheduling and uncertainty blocks.

    The plant is (A0 + dA_s + dA_u, B0 + dB_s + dB_u) and the scheduled law
    resolves to K_sched = (I - K_s dB_s)^{-1} (K + K_s dA_s).

    Raises:
        IllPosed: I - K_s dB_s is singular for this delta_s
    """
    n_x = gs.n_x
    delta_s, delta_u = np.atleast_2d(delta_s), np.atleast_2d(delta_u)
    try:
        K_sched = Policy(K=design.K, K_s=design.K_s, Delta_s=delta_s).gain()
    except SingularMatrix as exc:
        raise IllPosed(str(exc), {"delta_s": delta_s.tolist()}) from exc
    total = delta_s + delta_u
    A_true = gs.A0_hat + total[:, :n_x]
    B_true = gs.B0_hat + total[:, n_x:]
    p = gs.perf
    return RealizedLoop(A=A_true + B_true @ K_sched, C=p.C + p.D @ K_sched, D_w=p.D_w,
                        K_sched=K_sched, A_true=A_true, B_true=B_true)


def _free_lyapunov_program(loop: RealizedLoop, perf: PerfChannel) -> ConicProgram:
    n_x = loop.A.shape[0]
    return ConicProgram(
        vars=(DecisionVar("X", (n_x, n_x), Structure.SYMMETRIC),),
        constraints=(LmiConstraint("X", lambda v: v["X"], strict=True),
                     LmiConstraint("performance", lambda v: quadratic_performance_lmi(
                         loop.A, loop.C, loop.D_w, perf.multiplier, v["X"]), sense="nsd", strict=True)),
        name="frozen-performance",
    )


def frozen_performance_ok(loop: RealizedLoop, perf: PerfChannel, X: Optional[np.ndarray] = None,
                          solver: Optional[str] = None) -> bool:
    """
    Quadratic performance of one frozen closed loop.

    Tries the common certificate X first; if it does not verify, searches a
    loop-specific X with the solver.
    """
    if X is not None and is_definite(quadratic_performance_lmi(loop.A, loop.C, loop.D_w, perf.multiplier, X),
                                     "neg", DEFAULT_TOL):
        return True
    try:
        sdp_core.solve(_free_lyapunov_program(loop, perf), tol=CERT_TOL, solver=solver)
    except (InfeasibleError, NumericalError):
        return False
    return True


def performance_ratio(loop: RealizedLoop, perf: PerfChannel, disturbances: np.ndarray,
                      x0: Optional[np.ndarray] = None) -> Tuple[float, float]:
    """
    Simulate the frozen loop for the given disturbance sequence.

    Returns:
        (sum [w; z]^T P [w; z] / sum |w|^2, tail energy share of z)
    """
    n_x = loop.A.shape[0]
    system = LtiSystem(A=loop.A_true, B=loop.B_true, sigma_w=1.0)
    x0 = np.zeros(n_x) if x0 is None else x0
    # disturbances are fixed, the generator is never drawn from
    traj = simulate(system, Policy(K=loop.K_sched), x0, disturbances.shape[0], np.random.default_rng(0),
                    perf=perf, disturbances=disturbances)
    s_wz, s_ww = quad_perf_lhs(perf, traj)
    return s_wz / s_ww, tail_energy_ratio(traj)


def violation_margin(perf: PerfChannel, margin: Optional[float] = None) -> float:
    """
    Slack a sampled ratio must keep below zero.

    Defaults to CERT_TOL times the largest weight on |w|^2, which is gamma for
    an L2-gain channel (gamma^2 before the multiplier is divided by gamma).
    """
    if margin is not None:
        return float(margin)
    return CERT_TOL * max(1.0, float(np.max(np.abs(np.linalg.eigvalsh(perf.Q_p)))))


def l2_disturbance(n_x: int, horizon: int, rng: np.random.Generator) -> np.ndarray:
    """Gaussian burst over the first half of the window, zero afterwards."""
    w = np.zeros((horizon, n_x))
    active = max(1, horizon // 2)
    w[:active] = rng.standard_normal((active, n_x))
    return w


@dataclass
class SampledPerformance:
    worst_ratio: float
    trials: int
    frozen_failures: int
    truncated: int
    margin: float = 0.0
    rows: List[Dict[str, Any]] = field(default_factory=list)
    worst_triple: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"worst_ratio": self.worst_ratio, "trials": self.trials,
                "frozen_failures": self.frozen_failures, "truncated": self.truncated,
                "margin": self.margin, "worst_triple": self.worst_triple}


def sampled_performance(design: DualDesign, gs: GainSchedulingData, vcfg: ValidationConfig,
                        delta_u_scale: float = 1.0, solver: Optional[str] = None,
                        raise_on_violation: bool = True) -> SampledPerformance:
    """
    Sample (Delta_s, Delta_u) from the certified sets, simulate an L2
    disturbance through each frozen closed loop and check the quadratic
    performance inequality on the realized sums.

    The first `frozen_lmi_samples` draws are also certified with the
    dissipation inequality of the frozen loop, which has no truncation error.

    Args:
        delta_u_scale: Inflate Delta_u beyond its set (falsification runs)

    Raises:
        PerformanceViolation: a sampled ratio is above -margin (see violation_margin)
                              or the frozen LMI fails; carries the (Delta_s, Delta_u, w) triple
    """
    s_bound, u_bound = design.delta_s_bound(), design.delta_u_bound()
    margin = violation_margin(gs.perf, vcfg.margin)
    X = design.X
    worst, worst_triple = -np.inf, {}
    frozen_failures = truncated = 0
    rows: List[Dict[str, Any]] = []
    for trial in range(vcfg.n_trials):
        rng = spawn_rng(vcfg.seed, "performance", trial)
        delta_s = sample_delta(s_bound, rng, vcfg.boundary_fraction)
        delta_u = delta_u_scale * sample_delta(u_bound, rng, vcfg.boundary_fraction)
        w = l2_disturbance(gs.n_x, vcfg.horizon, rng)
        triple = {"trial": trial, "delta_s": delta_s.tolist(), "delta_u": delta_u.tolist(), "w": w.tolist()}
        try:
            loop = realized_closed_loop(design, gs, delta_s, delta_u)
        except IllPosed as exc:
            if raise_on_violation:
                raise PerformanceViolation(f"trial {trial}: scheduled law ill-posed ({exc})", triple) from exc
            rows.append({"trial": trial, "ratio": float("inf"), "frozen_ok": False, "tail": ""})
            worst, worst_triple = float("inf"), triple
            continue

        frozen_ok = True
        if trial < vcfg.frozen_lmi_samples:
            frozen_ok = frozen_performance_ok(loop, gs.perf, X, solver)
            frozen_failures += int(not frozen_ok)
        stable = float(np.max(np.abs(np.linalg.eigvals(loop.A)))) < 1.0
        ratio, tail = performance_ratio(loop, gs.perf, w) if stable else (float("inf"), 1.0)
        truncated += int(tail > TAIL_ENERGY_TOL)
        rows.append({"trial": trial, "ratio": ratio, "frozen_ok": frozen_ok, "tail": tail})
        if ratio > worst:
            worst, worst_triple = ratio, triple
        if raise_on_violation and (ratio > -margin or not frozen_ok):
            raise PerformanceViolation(f"trial {trial}: performance ratio {ratio:.4g}, frozen LMI "
                                       f"{'holds' if frozen_ok else 'fails'}", triple)
    debug_print(f"sampled performance: worst ratio {worst:.4g} over {vcfg.n_trials} trials, "
                f"{frozen_failures} frozen-LMI failures, {truncated} truncated")
    return SampledPerformance(worst_ratio=float(worst), trials=vcfg.n_trials, frozen_failures=frozen_failures,
                              truncated=truncated, margin=margin, rows=rows, worst_triple=worst_triple)


# ---------------------------------------------------------------------------
# Coverage
# ---------------------------------------------------------------------------

@dataclass
class CoverageResult:
    trials: int
    theta_0: float
    theta_T: float
    joint: float
    delta_s: Dict[str, float]
    rows: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"trials": self.trials, "theta_0": self.theta_0, "theta_T": self.theta_T,
                "joint": self.joint, "delta_s": self.delta_s}


def _coverage_worker(task: Tuple[LtiSystem, int, int, float, float, int, int, Tuple[float, ...], bool]
                     ) -> Dict[str, Any]:
    system, N0, T, c_delta, input_std, seed, index, eps_grid, noiseless = task
    rng = spawn_rng(seed, "coverage", index)
    n_x, n_u = system.n_x, system.n_u
    policy = Policy(K=np.zeros((n_u, n_x)), Sigma=input_std ** 2 * np.eye(n_u))
    zeros = (lambda h: np.zeros((h, n_x))) if noiseless else (lambda h: None)
    first = simulate(system, policy, np.zeros(n_x), N0, rng, disturbances=zeros(N0))
    second = simulate(system, policy, first.final_state, T, rng, disturbances=zeros(T))
    est0, estT = least_squares(first), least_squares([first, second])
    info0 = info_matrix(first, system.sigma_w, c_delta)
    infoT = info_matrix([first, second], system.sigma_w, c_delta)
    in0 = in_credibility_region(system.A, system.B, est0, info0)
    inT = in_credibility_region(system.A, system.B, estT, infoT)
    ds = np.hstack([estT.A_hat - est0.A_hat, estT.B_hat - est0.B_hat])
    row: Dict[str, Any] = {"trial": index, "in_theta_0": in0, "in_theta_T": inT}
    for eps in eps_grid:
        row[f"in_delta_s_eps_{eps:g}"] = delta_s_bound(eps, info0, infoT, n_x).contains(ds)
    return row


def coverage_test(system: LtiSystem, N0: int, T: int, delta: float, n_trials: int, seed: int,
                  input_std: float = 1.0, eps_grid: Sequence[float] = EPS_GRID, jobs: int = 1,
                  noiseless: bool = False, min_trials: int = MIN_COVERAGE_TRIALS) -> CoverageResult:
    """
    Repeat data generation and estimation; count how often the truth lies in
    the credibility region after N0 and after N0 + T samples, and how often
    the realized Delta_s lies in the Young-inequality set for each eps.

    Both marginal frequencies and the joint one are reported; no union bound
    over the two events is assumed.

    Raises:
        DomainError: fewer than `min_trials` repeats (MIN_COVERAGE_TRIALS unless lowered)
    """
    if n_trials < max(1, min_trials):
        raise DomainError(f"coverage needs at least {max(1, min_trials)} trials, got {n_trials}")
    c_delta = chi2_quantile(confidence_dof(system.n_x, system.n_u), delta)
    tasks = [(system, N0, T, c_delta, input_std, seed, i, tuple(eps_grid), noiseless) for i in range(n_trials)]
    if jobs <= 1:
        rows = [_coverage_worker(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=max(1, min(jobs, len(tasks)))) as ex:
            rows = list(ex.map(_coverage_worker, tasks))
    frac = lambda key: float(np.mean([bool(r[key]) for r in rows]))  # noqa: E731
    joint = float(np.mean([bool(r["in_theta_0"] and r["in_theta_T"]) for r in rows]))
    delta_s = {f"{eps:g}": frac(f"in_delta_s_eps_{eps:g}") for eps in eps_grid}
    result = CoverageResult(trials=n_trials, theta_0=frac("in_theta_0"), theta_T=frac("in_theta_T"),
                            joint=joint, delta_s=delta_s, rows=rows)
    debug_print(f"coverage over {n_trials} trials: theta_0 {result.theta_0:.3f}, theta_T "
                f"{result.theta_T:.3f}, joint {joint:.3f}")
    return result


def coverage_floor(delta: float, n_trials: int) -> float:
    """1 - delta minus two binomial standard errors."""
    return (1.0 - delta) - 2.0 * float(np.sqrt(delta * (1.0 - delta) / n_trials))


# ---------------------------------------------------------------------------
# Exploration covariance (empirical vs. predicted)
# ---------------------------------------------------------------------------

@dataclass
class Assumption2Report:
    discrepancy: float
    relative: bool
    dominates: bool
    min_eig_gap: float
    flagged: bool

    def to_dict(self) -> dict:
        return {"discrepancy": self.discrepancy, "relative": self.relative, "dominates": self.dominates,
                "min_eig_gap": self.min_eig_gap, "flagged": self.flagged}


def assumption2_check(traj: Trajectory, design: DualDesign, T: int, sigma_w: float, c_delta: float,
                      D0: np.ndarray) -> Assumption2Report:
    """
    Compare sum_k [x;u][x;u]^T of the exploration run with
    T [[W_e, W_e K_e^T], [K_e W_e, K_e W_e K_e^T + Sigma]], and check whether
    D0 + sum / (sigma_w^2 c_delta) dominates DbarT.

    Reports only; a large discrepancy is flagged, never raised.
    """
    phi, _ = stack_trajectories([traj])
    empirical = phi.T @ phi
    predicted = T * exploration_gram(design.W_e, design.Z_e, design.Sigma)
    denom = float(np.linalg.norm(predicted, "fro"))
    diff = float(np.linalg.norm(empirical - predicted, "fro"))
    relative = denom > 0.0
    discrepancy = diff / denom if relative else diff
    realized = symmetrize(np.asarray(D0, dtype=float) + empirical / (sigma_w ** 2 * c_delta))
    gap, _ = eig_extremes(realized - design.DbarT)
    dominates = gap >= -DEFAULT_TOL * (1.0 + float(np.linalg.norm(design.DbarT, 2)))
    report = Assumption2Report(discrepancy=discrepancy, relative=relative, dominates=dominates,
                               min_eig_gap=gap, flagged=discrepancy > ASSUMPTION2_FLAG)
    debug_print(f"assumption 2: discrepancy {discrepancy:.4f}, D_T >= DbarT: {dominates}")
    return report


# ---------------------------------------------------------------------------
# Monte Carlo over whole pipeline runs
# ---------------------------------------------------------------------------

@dataclass
class PipelineMonteCarlo:
    runs: int
    completed: int
    in_delta_s: float
    in_delta_u: float
    well_posed: float
    performance: float
    joint: float
    rows: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"runs": self.runs, "completed": self.completed, "in_delta_s": self.in_delta_s,
                "in_delta_u": self.in_delta_u, "well_posed": self.well_posed,
                "performance": self.performance, "joint": self.joint}


def _pipeline_worker(task: Tuple[ScenarioConfig, int, int]) -> Dict[str, Any]:
    cfg, seed, index = task
    row: Dict[str, Any] = {"run": index, "status": "ok", "in_delta_s": False, "in_delta_u": False,
                           "well_posed": False, "performance": False}
    simulator = Simulator(cfg.system)
    try:
        run = run_algorithm1(cfg, simulator, seed=seed, jobs=1, stream_prefix="mc-", index=index)
    except StageError as exc:
        row["status"] = type(exc.cause).__name__
        row["failed_stage"] = exc.stage
        return row
    truth = simulator.truth
    est0 = run.initial.estimate
    estT = run.exploration.estimate_T
    design = run.design
    delta_s = np.hstack([estT.A_hat - est0.A_hat, estT.B_hat - est0.B_hat])
    delta_u = np.hstack([truth.A - estT.A_hat, truth.B - estT.B_hat])
    row["in_delta_s"] = design.delta_s_bound().contains(delta_s)
    row["in_delta_u"] = design.delta_u_bound().contains(delta_u)
    row["well_posed"] = True
    gs = GainSchedulingData(A0_hat=est0.A_hat, B0_hat=est0.B_hat, perf=cfg.perf)
    K_new = run.exploration.controller.K_new
    p = cfg.perf
    loop = RealizedLoop(A=truth.A + truth.B @ K_new, C=p.C + p.D @ K_new, D_w=p.D_w, K_sched=K_new,
                        A_true=truth.A, B_true=truth.B)
    row["performance"] = frozen_performance_ok(loop, gs.perf, design.X, cfg.solver)
    row["K_new"] = K_new.tolist()
    return row


def pipeline_monte_carlo(cfg: ScenarioConfig, n_runs: int, seed: Optional[int] = None,
                         jobs: int = 1) -> PipelineMonteCarlo:
    """
    Repeat the whole pipeline with fresh data and record, per run, whether the
    realized blocks fall in the certified sets, whether K_new exists and
    whether the true closed loop meets the performance inequality.

    Runs use the coordinate line search; grid points are solved serially
    inside each run and runs are spread over `jobs` processes.
    """
    if n_runs < 1:
        raise DomainError("n_runs must be at least 1")
    seed = cfg.seed if seed is None else seed
    mc_cfg = replace(cfg, grid=replace(cfg.grid, mode="coordinate"), jobs=1)
    tasks = [(mc_cfg, seed, i) for i in range(n_runs)]
    if jobs <= 1:
        rows = [_pipeline_worker(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=max(1, min(jobs, len(tasks)))) as ex:
            rows = list(ex.map(_pipeline_worker, tasks))

    def frac(key: str) -> float:
        return float(np.mean([bool(r[key]) for r in rows]))

    joint = float(np.mean([all(bool(r[k]) for k in ("in_delta_s", "in_delta_u", "well_posed", "performance"))
                           for r in rows]))
    result = PipelineMonteCarlo(runs=n_runs, completed=sum(r["status"] == "ok" for r in rows),
                                in_delta_s=frac("in_delta_s"), in_delta_u=frac("in_delta_u"),
                                well_posed=frac("well_posed"), performance=frac("performance"),
                                joint=joint, rows=rows)
    debug_print(f"pipeline Monte Carlo: {result.completed}/{n_runs} completed, joint {joint:.3f}")
    return result


# ---------------------------------------------------------------------------
# Stage entry
# ---------------------------------------------------------------------------

@dataclass
class ValidationReport:
    certified: bool
    synthesis_margin: float
    performance: SampledPerformance
    assumption2: Assumption2Report
    coverage: Optional[CoverageResult] = None
    pipeline: Optional[PipelineMonteCarlo] = None

    def to_dict(self) -> dict:
        return {"certified": self.certified, "synthesis_margin": self.synthesis_margin,
                "performance": self.performance.to_dict(), "assumption2": self.assumption2.to_dict(),
                "coverage": None if self.coverage is None else self.coverage.to_dict(),
                "pipeline_monte_carlo": None if self.pipeline is None else self.pipeline.to_dict()}

    def csv_rows(self, seed: int) -> Tuple[List[str], List[list]]:
        """One row per trial: kind, trial id, seed, coverage flags, ratio, discrepancy."""
        header = ["kind", "trial", "seed", "in_theta_0", "in_theta_T", "in_delta_s", "in_delta_u",
                  "well_posed", "ratio", "frozen_ok", "discrepancy"]
        rows: List[list] = []
        for r in self.performance.rows:
            rows.append(["performance", r["trial"], seed, "", "", "", "", "", r["ratio"], r["frozen_ok"],
                         self.assumption2.discrepancy])
        if self.coverage is not None:
            key = f"in_delta_s_eps_{1.0:g}"
            for r in self.coverage.rows:
                rows.append(["coverage", r["trial"], seed, r["in_theta_0"], r["in_theta_T"], r.get(key, ""),
                             "", "", "", "", ""])
        if self.pipeline is not None:
            for r in self.pipeline.rows:
                rows.append(["pipeline", r["run"], seed, "", "", r["in_delta_s"], r["in_delta_u"],
                             r["well_posed"], "", r["performance"], ""])
        return header, rows


def run_validation(cfg: ScenarioConfig, initial: InitialResult, design: DualDesign,
                   exploration: ExplorationResult, jobs: int = 1) -> ValidationReport:
    """
    Certify the design, sample closed loops and check the exploration covariance; run the
    coverage and pipeline studies when their trial counts are configured.

    Raises:
        CertificationFailed, PerformanceViolation
    """
    est0 = initial.estimate
    gs = GainSchedulingData(A0_hat=est0.A_hat, B0_hat=est0.B_hat, perf=cfg.perf)
    vcfg = ValidationConfig.from_settings(cfg.validation, cfg.delta, cfg.seed)
    margin = synthesis_certificate_margin(design, gs)
    certified = certify_fixed(design, gs, cfg.solver)
    performance = sampled_performance(design, gs, vcfg, solver=cfg.solver)
    a2 = assumption2_check(exploration.trajectory, design, cfg.T, cfg.system.sigma_w, initial.c_delta,
                           initial.info0.D)
    coverage = pipeline = None
    if cfg.validation.coverage_trials:
        coverage = coverage_test(cfg.system, cfg.N0, cfg.T, cfg.delta, cfg.validation.coverage_trials,
                                 cfg.seed, cfg.initial_input_std, jobs=jobs)
    if cfg.validation.pipeline_runs:
        pipeline = pipeline_monte_carlo(cfg, cfg.validation.pipeline_runs, cfg.seed, jobs=jobs)
    return ValidationReport(certified=certified, synthesis_margin=margin, performance=performance,
                            assumption2=a2, coverage=coverage, pipeline=pipeline)
