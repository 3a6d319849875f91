"""
Dual controller design: robust LQR pre-step, the combined SDP, its
hyperparameter line search, targeted exploration and K_new.

Pipeline (one system run, one root seed):

    1. random exploration for N0 steps             -> D_0 data
    2. least squares, D_0, robust LQR gain K0      -> identify_initial()
    3. line search over (eps, t_e, lambda_s, lambda_u) of the dual SDP
       -> (K_e, Sigma, K, K_s, N, M, DbarT, Ds)    -> design_controller()
    4. u = K_e x + e, e ~ N(0, Sigma) for T steps  -> explore()
    5. least squares on all data                   -> A_T_hat, B_T_hat, D_T
    6. K_new = (I - K_s (B_T - B_0))^{-1} (K + K_s (A_T - A_0))   -> k_new()

Types:
    Hyperparams, DesignProblem, DualDesign, FinalController,
    InitialResult, ExplorationResult, RunReport

Functions:
    robust_lqr_program(ed, t_e, sigma_w) -> ConicProgram
    robust_lqr_K0(ed, t_e, sigma_w) -> (K0, cost)
    robust_lqr_line_search(ed, sigma_w, t_e_multiples) -> (K0, cost, t_e)
    build_dual_sdp(problem, hyper) -> ConicProgram
    recover_controllers(W_e, Z_e, M, N) -> (K_e, K)
    line_search(problem, grid) -> (DualDesign, statuses)
    gamma_bisection(problem, grid, budget, ...) -> (gamma, DualDesign, statuses)
    explore(simulator, K_e, Sigma, T, x0, rng) -> Trajectory
    k_new(K, Ks, est0, estT) -> FinalController
    identify_initial / design_controller / exploration_phase / run_algorithm1
"""

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from gsdual import sdp_core
from gsdual.config import GridSpec, ScenarioConfig
from gsdual.constants import CERT_TOL, COND_CAP, K0_SIGMA_SCALE
from gsdual.errors import (AllInfeasible, DomainError, IllPosed, Infeasible, InfeasibleError,
                           NumericalError, SingularMatrix, stage_label)
from gsdual.estimate import (Estimate, InfoMatrix, chi2_quantile, confidence_dof, info_matrix,
                             least_squares)
from gsdual.lmi_blocks import (ExplorationData, GainSchedulingData, dbar_constraint, s1_block,
                               s2_gain_sched, se_block)
from gsdual.matrix_kit import symmetrize
from gsdual.plant import PerfChannel, Policy, Simulator, Trajectory
from gsdual.sdp_core import ConicProgram, DecisionVar, LmiConstraint, Objective, Structure
from gsdual.uncertainty import DeltaBound, ds_feasibility_block
from gsdual.utils import debug_print, spawn_rng

SYM, RECT = Structure.SYMMETRIC, Structure.RECTANGULAR


def _arr(value: Any) -> np.ndarray:
    return np.atleast_2d(np.asarray(value, dtype=float))


@dataclass(frozen=True)
class Hyperparams:
    """Line-search parameters; t_e is absolute (not a multiple of sigma_w^2)."""
    eps: float
    t_e: float
    lambda_s: float
    lambda_u: float

    def __post_init__(self) -> None:
        for name in ("eps", "t_e", "lambda_s", "lambda_u"):
            if not getattr(self, name) > 0:
                raise DomainError(f"hyperparameter {name} must be positive, got {getattr(self, name)}")

    def to_dict(self) -> dict:
        return {"eps": self.eps, "t_e": self.t_e, "lambda_s": self.lambda_s, "lambda_u": self.lambda_u}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Hyperparams":
        return cls(**{k: float(data[k]) for k in ("eps", "t_e", "lambda_s", "lambda_u")})


@dataclass(frozen=True)
class DesignProblem:
    """Everything the dual SDP needs except the hyperparameters (picklable)."""
    gs: GainSchedulingData
    ed: ExplorationData
    T: int
    sigma_w: float
    c_delta: float
    K0: np.ndarray
    schedule: bool = True

    @property
    def n_x(self) -> int:
        return self.gs.n_x

    @property
    def n_u(self) -> int:
        return self.gs.n_u


@dataclass(frozen=True)
class DualDesign:
    K_e: np.ndarray
    Sigma: np.ndarray
    K: np.ndarray
    K_s: np.ndarray
    N: np.ndarray
    M: np.ndarray
    DbarT: np.ndarray
    Ds: np.ndarray
    W_e: np.ndarray
    Z_e: np.ndarray
    Y_e: np.ndarray
    exploration_cost: float
    hyper: Hyperparams
    max_violation: float = 0.0

    _MATRICES = ("K_e", "Sigma", "K", "K_s", "N", "M", "DbarT", "Ds", "W_e", "Z_e", "Y_e")

    @property
    def X(self) -> np.ndarray:
        """Lyapunov matrix of the analysis inequality, N^{-1}."""
        return symmetrize(np.linalg.inv(self.N))

    def delta_s_bound(self) -> DeltaBound:
        """Certified scheduling set Delta_s^T Delta_s <= Ds^{-1}."""
        return DeltaBound(P=np.linalg.inv(self.Ds), rows=self.N.shape[0])

    def delta_u_bound(self) -> DeltaBound:
        """Certified uncertainty set Delta_u^T Delta_u <= DbarT^{-1}."""
        return DeltaBound(P=np.linalg.inv(self.DbarT), rows=self.N.shape[0])

    def to_dict(self) -> dict:
        data: Dict[str, Any] = {name: getattr(self, name).tolist() for name in self._MATRICES}
        data.update({"exploration_cost": self.exploration_cost, "hyper": self.hyper.to_dict(),
                     "max_violation": self.max_violation})
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DualDesign":
        mats = {name: _arr(data[name]) for name in cls._MATRICES}
        return cls(**mats, exploration_cost=float(data["exploration_cost"]),
                   hyper=Hyperparams.from_dict(data["hyper"]),
                   max_violation=float(data.get("max_violation", 0.0)))


@dataclass(frozen=True)
class FinalController:
    K_new: np.ndarray
    estimates_T: Estimate

    def to_dict(self) -> dict:
        return {"K_new": self.K_new.tolist(), "estimate_T": self.estimates_T.to_dict()}


# ---------------------------------------------------------------------------
# Robust LQR pre-step
# ---------------------------------------------------------------------------

def robust_lqr_program(ed: ExplorationData, t_e: float, sigma_w: float,
                       Sigma: Optional[np.ndarray] = None) -> ConicProgram:
    """min tr Y_e s.t. S1 >= 0, Se >= 0 over (W_e, Z_e, Y_e) with Sigma fixed."""
    n_x, n_u = ed.n_x, ed.n_u
    if Sigma is None:
        Sigma = K0_SIGMA_SCALE * sigma_w ** 2 * np.eye(n_u)
    Sigma = symmetrize(Sigma)
    return ConicProgram(
        vars=(DecisionVar("W_e", (n_x, n_x), SYM), DecisionVar("Z_e", (n_x, n_u), RECT),
              DecisionVar("Y_e", (n_x + n_u, n_x + n_u), SYM)),
        constraints=(
            LmiConstraint("S1", lambda v: s1_block(v["W_e"], v["Y_e"], v["Z_e"], ed.Q, ed.R)),
            LmiConstraint("Se", lambda v: se_block(t_e, v["Z_e"], v["W_e"], Sigma, ed.D0,
                                                  ed.A0_hat, ed.B0_hat, sigma_w)),
        ),
        objective=Objective.trace("Y_e"),
        name=f"robust-lqr(t_e={t_e:g})",
    )


def recover_gain(W: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """K = Z^T W^{-1}."""
    W = symmetrize(W)
    if np.linalg.cond(W) > COND_CAP:
        raise SingularMatrix("Gramian W is numerically singular")
    return np.linalg.solve(W, _arr(Z)).T


def robust_lqr_K0(ed: ExplorationData, t_e: float, sigma_w: float,
                  solver: Optional[str] = None) -> Tuple[np.ndarray, float]:
    """
    Robust LQR gain K0 = Z_e^T W_e^{-1} for the nominal model and its cost tr Y_e.

    Raises:
        Infeasible: no gain is robustly stabilizing for this D0 (collect more
                    initial data or raise delta)
    """
    report = sdp_core.solve(robust_lqr_program(ed, t_e, sigma_w), tol=CERT_TOL, solver=solver)
    K0 = recover_gain(report.assignment["W_e"], report.assignment["Z_e"])
    return K0, report.objective_value


def robust_lqr_line_search(ed: ExplorationData, sigma_w: float, t_e_multiples: Sequence[float],
                           solver: Optional[str] = None) -> Tuple[np.ndarray, float, float]:
    """
    Best robust LQR gain over t_e in {m * sigma_w^2}.

    Returns:
        (K0, cost, t_e) of the cheapest feasible point; the first wins ties
    """
    best: Optional[Tuple[np.ndarray, float, float]] = None
    for multiple in t_e_multiples:
        t_e = multiple * sigma_w ** 2
        try:
            K0, cost = robust_lqr_K0(ed, t_e, sigma_w, solver)
        except (InfeasibleError, NumericalError) as exc:
            debug_print(f"robust LQR at t_e={t_e:g}: {type(exc).__name__}")
            continue
        debug_print(f"robust LQR at t_e={t_e:g}: cost {cost:.6g}")
        if best is None or cost < best[1]:
            best = (K0, cost, t_e)
    if best is None:
        raise Infeasible("robust LQR is infeasible for every t_e; the initial uncertainty is too large "
                         "(increase N0 or delta)")
    return best


# ---------------------------------------------------------------------------
# Dual SDP
# ---------------------------------------------------------------------------

def dual_variables(n_x: int, n_u: int, schedule: bool = True) -> Tuple[DecisionVar, ...]:
    n = n_x + n_u
    variables = [
        DecisionVar("W_e", (n_x, n_x), SYM), DecisionVar("Z_e", (n_x, n_u), RECT),
        DecisionVar("Y_e", (n, n), SYM), DecisionVar("Sigma", (n_u, n_u), SYM),
        DecisionVar("K_s", (n_u, n_x), RECT), DecisionVar("M", (n_u, n_x), RECT),
        DecisionVar("N", (n_x, n_x), SYM), DecisionVar("DbarT", (n, n), SYM),
        DecisionVar("Ds", (n, n), SYM),
    ]
    if not schedule:
        variables = [v for v in variables if v.name != "K_s"]
    return tuple(variables)


def build_dual_sdp(problem: DesignProblem, hyper: Hyperparams) -> ConicProgram:
    """
    The combined exploration / robust gain-scheduling program for fixed hyperparameters:

        min tr Y_e
        s.t. S1(W_e, Y_e, Z_e) >= 0
             Se(t_e, Z_e, W_e, Sigma) >= 0
             S2(K_s, M, N, lambda_s, lambda_u, Ds, DbarT) < 0
             S3(eps, D0, DbarT, Ds) > 0
             DbarT bound (relaxed Gramian with V = [I, K0^T]) > 0

    With problem.schedule False, K_s is not a variable and enters as 0.
    """
    gs, ed = problem.gs, problem.ed
    n_x, n_u = problem.n_x, problem.n_u
    zero_ks = np.zeros((n_u, n_x))

    def ks(v: Mapping[str, Any]) -> Any:
        return v["K_s"] if problem.schedule else zero_ks

    constraints = (
        LmiConstraint("S1", lambda v: s1_block(v["W_e"], v["Y_e"], v["Z_e"], ed.Q, ed.R)),
        LmiConstraint("Se", lambda v: se_block(hyper.t_e, v["Z_e"], v["W_e"], v["Sigma"], ed.D0,
                                              ed.A0_hat, ed.B0_hat, problem.sigma_w)),
        LmiConstraint("S2", lambda v: s2_gain_sched(ks(v), v["M"], v["N"], hyper.lambda_s,
                                                   hyper.lambda_u, v["Ds"], v["DbarT"], gs),
                      sense="nsd", strict=True),
        LmiConstraint("S3", lambda v: ds_feasibility_block(hyper.eps, ed.D0, v["DbarT"], v["Ds"]),
                      strict=True),
        LmiConstraint("DbarT", lambda v: dbar_constraint(v["W_e"], v["Z_e"], v["Sigma"], v["DbarT"],
                                                        problem.K0, ed.D0, problem.T,
                                                        problem.sigma_w, problem.c_delta),
                      strict=True),
    )
    return ConicProgram(vars=dual_variables(n_x, n_u, problem.schedule), constraints=constraints,
                        objective=Objective.trace("Y_e"),
                        name=(f"dual(eps={hyper.eps:g}, t_e={hyper.t_e:g}, "
                              f"lambda_s={hyper.lambda_s:g}, lambda_u={hyper.lambda_u:g})"))


def recover_controllers(W_e: np.ndarray, Z_e: np.ndarray, M: np.ndarray,
                        N: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    K_e = Z_e^T W_e^{-1} and K = M N^{-1}.

    Raises:
        SingularMatrix: W_e or N numerically singular
    """
    N = symmetrize(N)
    if np.linalg.cond(N) > COND_CAP:
        raise SingularMatrix("Lyapunov variable N is numerically singular")
    K = np.linalg.solve(N, _arr(M).T).T
    return recover_gain(W_e, Z_e), K


def design_from_assignment(problem: DesignProblem, hyper: Hyperparams, values: Mapping[str, Any],
                           cost: float, max_violation: float = 0.0) -> DualDesign:
    K_e, K = recover_controllers(values["W_e"], values["Z_e"], values["M"], values["N"])
    K_s = _arr(values["K_s"]) if problem.schedule else np.zeros((problem.n_u, problem.n_x))
    return DualDesign(K_e=K_e, Sigma=symmetrize(values["Sigma"]), K=K, K_s=K_s,
                      N=symmetrize(values["N"]), M=_arr(values["M"]), DbarT=symmetrize(values["DbarT"]),
                      Ds=symmetrize(values["Ds"]), W_e=symmetrize(values["W_e"]), Z_e=_arr(values["Z_e"]),
                      Y_e=symmetrize(values["Y_e"]), exploration_cost=float(cost), hyper=hyper,
                      max_violation=float(max_violation))


def solve_design(problem: DesignProblem, hyper: Hyperparams, solver: Optional[str] = None,
                 tol: float = CERT_TOL) -> DualDesign:
    """Solve the dual SDP at one hyperparameter point (raises on failure)."""
    report = sdp_core.solve(build_dual_sdp(problem, hyper), tol=tol, solver=solver)
    return design_from_assignment(problem, hyper, report.assignment, report.objective_value,
                                  report.max_violation)


def _solve_point_worker(task: Tuple[int, DesignProblem, Hyperparams, Optional[str], float]
                        ) -> Tuple[dict, Optional[DualDesign]]:
    """Top-level picklable worker: one grid point -> (status row, design or None)."""
    index, problem, hyper, solver, tol = task
    row: Dict[str, Any] = {"index": index, **hyper.to_dict()}
    try:
        report = sdp_core.solve(build_dual_sdp(problem, hyper), tol=tol, solver=solver)
        design = design_from_assignment(problem, hyper, report.assignment, report.objective_value,
                                        report.max_violation)
    except InfeasibleError:
        row.update(status=sdp_core.SolverStatus.INFEASIBLE.value, objective="", max_violation="")
        return row, None
    except NumericalError as exc:
        report = getattr(exc, "report", None)
        row.update(status=sdp_core.SolverStatus.NUMERICAL_FAILURE.value, objective="",
                   max_violation="" if report is None else report.max_violation)
        return row, None
    row.update(status=sdp_core.SolverStatus.OPTIMAL.value, objective=design.exploration_cost,
               max_violation=design.max_violation)
    return row, design


def _run_points(problem: DesignProblem, points: Sequence[Tuple[int, Hyperparams]], jobs: int,
                solver: Optional[str], tol: float) -> List[Tuple[dict, Optional[DualDesign]]]:
    tasks = [(index, problem, hyper, solver, tol) for index, hyper in points]
    if jobs <= 1 or len(tasks) <= 1:
        return [_solve_point_worker(task) for task in tasks]
    workers = max(1, min(jobs, len(tasks)))
    debug_print(f"Solving {len(tasks)} grid points on {workers} worker processes")
    with ProcessPoolExecutor(max_workers=workers) as ex:
        # map preserves input order, so results do not depend on scheduling
        return list(ex.map(_solve_point_worker, tasks))


def grid_points(grid: GridSpec, sigma_w: float) -> List[Hyperparams]:
    """Full Cartesian grid in (eps, t_e, lambda_s, lambda_u) order."""
    return [Hyperparams(eps=e, t_e=m * sigma_w ** 2, lambda_s=ls, lambda_u=lu)
            for e, m, ls, lu in itertools.product(grid.eps, grid.t_e, grid.lambda_s, grid.lambda_u)]


def _best(results: Sequence[Tuple[dict, Optional[DualDesign]]]) -> Optional[DualDesign]:
    best: Optional[DualDesign] = None
    for _, design in results:
        if design is not None and (best is None or design.exploration_cost < best.exploration_cost):
            best = design
    return best


def _coordinate_search(problem: DesignProblem, grid: GridSpec, jobs: int, solver: Optional[str],
                       tol: float) -> Tuple[Optional[DualDesign], List[dict]]:
    axes = [tuple(grid.eps), tuple(m * problem.sigma_w ** 2 for m in grid.t_e),
            tuple(grid.lambda_s), tuple(grid.lambda_u)]
    current = [len(axis) // 2 for axis in axes]
    cache: Dict[Tuple[int, ...], Tuple[dict, Optional[DualDesign]]] = {}
    order: List[Tuple[int, ...]] = []

    def evaluate(keys: List[Tuple[int, ...]]) -> None:
        todo = [k for k in keys if k not in cache]
        points = [(len(order) + i, Hyperparams(*(axes[a][k[a]] for a in range(4))))
                  for i, k in enumerate(todo)]
        for key, result in zip(todo, _run_points(problem, points, jobs, solver, tol)):
            cache[key] = result
            order.append(key)

    def cost(key: Tuple[int, ...]) -> float:
        design = cache[key][1]
        return np.inf if design is None else design.exploration_cost

    evaluate([tuple(current)])
    for sweep in range(grid.max_sweeps):
        start = tuple(current)
        for axis in range(4):
            candidates = []
            for j in range(len(axes[axis])):
                key = list(current)
                key[axis] = j
                candidates.append(tuple(key))
            evaluate(candidates)
            best_key = min(candidates, key=lambda k: (cost(k), candidates.index(k)))
            if cost(best_key) < cost(tuple(current)):
                current = list(best_key)
        debug_print(f"coordinate sweep {sweep + 1}: point {tuple(current)}, cost {cost(tuple(current)):.6g}")
        if tuple(current) == start:
            break
    results = [cache[k] for k in order]
    return cache[tuple(current)][1], [row for row, _ in results]


def line_search(problem: DesignProblem, grid: GridSpec, jobs: int = 1, solver: Optional[str] = None,
                tol: float = CERT_TOL) -> Tuple[DualDesign, List[dict]]:
    """
    Solve the dual SDP over the hyperparameter grid and keep the cheapest design.

    grid.mode "grid" solves every point of the Cartesian grid; "coordinate"
    sweeps one hyperparameter at a time from the grid centre. Ties go to the
    earliest point, so the result does not depend on `jobs`.

    Returns:
        (best design, one status row per solved point)

    Raises:
        AllInfeasible: no point gave a certified design
    """
    if grid.mode == "coordinate":
        best, statuses = _coordinate_search(problem, grid, jobs, solver, tol)
    else:
        points = list(enumerate(grid_points(grid, problem.sigma_w)))
        results = _run_points(problem, points, jobs, solver, tol)
        best, statuses = _best(results), [row for row, _ in results]
    feasible = sum(1 for row in statuses if row["status"] == sdp_core.SolverStatus.OPTIMAL.value)
    debug_print(f"line search ({grid.mode}): {feasible}/{len(statuses)} points feasible")
    if best is None:
        raise AllInfeasible(f"the dual SDP is infeasible at all {len(statuses)} grid points", statuses)
    return best, statuses


def with_l2_gain(problem: DesignProblem, gamma: float) -> DesignProblem:
    p = problem.gs.perf
    perf = PerfChannel.l2_gain(gamma, p.C, p.D, p.D_w)
    return replace(problem, gs=replace(problem.gs, perf=perf))


def gamma_bisection(problem: DesignProblem, grid: GridSpec, budget: float, gamma_hi: float,
                    gamma_lo: float = 1e-3, rel_tol: float = 1e-2, max_iter: int = 30, jobs: int = 1,
                    solver: Optional[str] = None) -> Tuple[float, DualDesign, List[dict]]:
    """
    Smallest L2 gain gamma whose best design costs at most `budget`.

    Bisects on gamma in log scale between gamma_lo and gamma_hi. This is an
    extension of the fixed-performance design: the performance level becomes
    the objective and the exploration cost a constraint.

    Raises:
        AllInfeasible: even gamma_hi cannot be met within the budget
    """
    def attempt(gamma: float) -> Optional[Tuple[DualDesign, List[dict]]]:
        try:
            design, statuses = line_search(with_l2_gain(problem, gamma), grid, jobs, solver)
        except AllInfeasible:
            return None
        return (design, statuses) if design.exploration_cost <= budget else None

    found = attempt(gamma_hi)
    if found is None:
        raise AllInfeasible(f"no design meets gamma={gamma_hi:g} within exploration budget {budget:g}")
    hi, lo = gamma_hi, gamma_lo
    for _ in range(max_iter):
        if hi / lo <= 1.0 + rel_tol:
            break
        mid = float(np.sqrt(hi * lo))
        result = attempt(mid)
        debug_print(f"gamma bisection: gamma={mid:.6g} {'feasible' if result else 'infeasible'}")
        if result is None:
            lo = mid
        else:
            hi, found = mid, result
    return hi, found[0], found[1]


# ---------------------------------------------------------------------------
# Exploration and final controller
# ---------------------------------------------------------------------------

def explore(simulator: Simulator, K_e: np.ndarray, Sigma: np.ndarray, T: int, x0: Any,
            rng: np.random.Generator) -> Trajectory:
    """Apply u_k = K_e x_k + e_k, e_k ~ N(0, Sigma), for T steps from x0."""
    return simulator.run(Policy(K=_arr(K_e), Sigma=symmetrize(Sigma)), x0, T, rng)


def k_new(K: np.ndarray, Ks: np.ndarray, est0: Estimate, estT: Estimate,
          Ds: Optional[np.ndarray] = None) -> FinalController:
    """
    Resolve u = K x + K_s Delta_s [x; u] into u = K_new x with
    Delta_s = [A_T_hat - A0_hat, B_T_hat - B0_hat].

    Raises:
        IllPosed: I - K_s (B_T_hat - B0_hat) is singular, or the explicit law
                  does not reproduce the implicit one
    """
    K, Ks = _arr(K), _arr(Ks)
    dA = estT.A_hat - est0.A_hat
    dB = estT.B_hat - est0.B_hat
    lhs = np.eye(K.shape[0]) - Ks @ dB
    diagnostics: Dict[str, Any] = {"cond": float(np.linalg.cond(lhs)),
                                   "delta_s_norm": float(np.linalg.norm(np.hstack([dA, dB]), 2))}
    if Ds is not None:
        bound = DeltaBound(P=np.linalg.inv(symmetrize(Ds)), rows=dA.shape[0])
        diagnostics["delta_s_normalized"] = bound.normalized_size(np.hstack([dA, dB]))
    if not np.isfinite(diagnostics["cond"]) or diagnostics["cond"] > COND_CAP:
        raise IllPosed("I - K_s (B_T - B_0) is singular; the scheduling variable left the certified set",
                       diagnostics)
    K_new = np.linalg.solve(lhs, K + Ks @ dA)

    # fixed point u = K x + K_s (dA x + dB u) at u = K_new x
    basis = np.eye(K.shape[1])
    u = K_new @ basis
    residual = u - (K @ basis + Ks @ (dA @ basis + dB @ u))
    scale = 1.0 + float(np.abs(u).max(initial=0.0))
    diagnostics["fixed_point_residual"] = float(np.abs(residual).max(initial=0.0))
    if not np.all(np.isfinite(K_new)) or diagnostics["fixed_point_residual"] > 1e-8 * scale:
        raise IllPosed("K_new does not satisfy the implicit control law", diagnostics)
    return FinalController(K_new=K_new, estimates_T=estT)


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

@dataclass
class InitialResult:
    """Outcome of random exploration, least squares and the robust LQR pre-step."""
    trajectory: Trajectory
    estimate: Estimate
    info0: InfoMatrix
    K0: np.ndarray
    K0_cost: float
    K0_t_e: float

    @property
    def c_delta(self) -> float:
        return self.info0.c_delta

    def to_dict(self) -> dict:
        return {"estimate": self.estimate.to_dict(), "info0": self.info0.to_dict(),
                "c_delta": self.info0.c_delta, "K0": self.K0.tolist(), "K0_cost": self.K0_cost,
                "K0_t_e": self.K0_t_e, "terminal_state": self.trajectory.final_state.tolist(),
                "samples": self.trajectory.horizon}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], trajectory: Trajectory) -> "InitialResult":
        return cls(trajectory=trajectory, estimate=Estimate.from_dict(data["estimate"]),
                   info0=InfoMatrix.from_dict(data["info0"]), K0=_arr(data["K0"]),
                   K0_cost=float(data["K0_cost"]), K0_t_e=float(data["K0_t_e"]))


@dataclass
class ExplorationResult:
    trajectory: Trajectory
    estimate_T: Estimate
    info_T: InfoMatrix
    controller: FinalController
    delta_s: np.ndarray

    def to_dict(self) -> dict:
        return {"estimate_T": self.estimate_T.to_dict(), "info_T": self.info_T.to_dict(),
                "K_new": self.controller.K_new.tolist(), "delta_s": self.delta_s.tolist(),
                "terminal_state": self.trajectory.final_state.tolist(),
                "samples": self.trajectory.horizon}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], trajectory: Trajectory) -> "ExplorationResult":
        est = Estimate.from_dict(data["estimate_T"])
        return cls(trajectory=trajectory, estimate_T=est, info_T=InfoMatrix.from_dict(data["info_T"]),
                   controller=FinalController(K_new=_arr(data["K_new"]), estimates_T=est),
                   delta_s=_arr(data["delta_s"]))


def identify_initial(cfg: ScenarioConfig, simulator: Simulator, rng: np.random.Generator) -> InitialResult:
    """
    Random exploration for N0 steps, least squares, D0 and the robust LQR gain K0.

    Raises:
        RankDeficient: the initial data are not exciting (N0 too small)
        Infeasible: no robust LQR gain for the initial uncertainty
    """
    traj = simulator.random_exploration(cfg.initial_input_std, cfg.initial_state, cfg.N0, rng)
    est = least_squares(traj)
    c_delta = chi2_quantile(confidence_dof(cfg.n_x, cfg.n_u), cfg.delta)
    info0 = info_matrix(traj, simulator.sigma_w, c_delta)
    ed = ExplorationData(A0_hat=est.A_hat, B0_hat=est.B_hat, D0=info0.D, Q=cfg.Q, R=cfg.R)
    K0, cost, t_e = robust_lqr_line_search(ed, simulator.sigma_w, cfg.grid.t_e, cfg.solver)
    debug_print(f"initial phase: c_delta={c_delta:.4f}, K0={K0.tolist()}, robust LQR cost {cost:.6g}")
    return InitialResult(trajectory=traj, estimate=est, info0=info0, K0=K0, K0_cost=cost, K0_t_e=t_e)


def design_problem(cfg: ScenarioConfig, initial: InitialResult,
                   schedule: Optional[bool] = None) -> DesignProblem:
    """Dual design data from the initial phase; `schedule` defaults to the scenario's [design] switch."""
    est = initial.estimate
    gs = GainSchedulingData(A0_hat=est.A_hat, B0_hat=est.B_hat, perf=cfg.perf)
    ed = ExplorationData(A0_hat=est.A_hat, B0_hat=est.B_hat, D0=initial.info0.D, Q=cfg.Q, R=cfg.R)
    return DesignProblem(gs=gs, ed=ed, T=cfg.T, sigma_w=cfg.system.sigma_w, c_delta=initial.c_delta,
                         K0=initial.K0, schedule=cfg.schedule if schedule is None else schedule)


def design_controller(cfg: ScenarioConfig, initial: InitialResult, jobs: Optional[int] = None,
                      schedule: Optional[bool] = None) -> Tuple[DualDesign, List[dict]]:
    """Line-searched dual design, or the gamma bisection when a cost budget is configured."""
    problem = design_problem(cfg, initial, schedule)
    jobs = cfg.jobs if jobs is None else jobs
    if cfg.gamma_budget is not None and cfg.gamma is not None:
        gamma, design, statuses = gamma_bisection(problem, cfg.grid, cfg.gamma_budget, cfg.gamma,
                                                  jobs=jobs, solver=cfg.solver)
        debug_print(f"gamma bisection settled at gamma={gamma:.6g}")
        return design, statuses
    return line_search(problem, cfg.grid, jobs=jobs, solver=cfg.solver)


def exploration_phase(cfg: ScenarioConfig, simulator: Simulator, rng: np.random.Generator,
                      initial: InitialResult, design: DualDesign) -> ExplorationResult:
    """
    Targeted exploration from the initial run's terminal state, re-estimation
    on all data and the final gain K_new.
    """
    traj = explore(simulator, design.K_e, design.Sigma, cfg.T, initial.trajectory.final_state, rng)
    data = [initial.trajectory, traj]
    est_T = least_squares(data)
    info_T = info_matrix(data, simulator.sigma_w, initial.c_delta)
    controller = k_new(design.K, design.K_s, initial.estimate, est_T, design.Ds)
    delta_s = np.hstack([est_T.A_hat - initial.estimate.A_hat, est_T.B_hat - initial.estimate.B_hat])
    return ExplorationResult(trajectory=traj, estimate_T=est_T, info_T=info_T, controller=controller,
                             delta_s=delta_s)


@dataclass
class RunReport:
    seed: int
    initial: InitialResult
    design: DualDesign
    statuses: List[dict]
    exploration: ExplorationResult
    config: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"config": self.config, "seed": self.seed, "initial": self.initial.to_dict(),
                "design": self.design.to_dict(), "solver_status": self.statuses,
                "exploration": self.exploration.to_dict()}


def run_algorithm1(cfg: ScenarioConfig, simulator: Simulator, seed: Optional[int] = None,
                   jobs: Optional[int] = None, stream_prefix: str = "", index: int = 0) -> RunReport:
    """
    Run all six steps in memory.

    Random streams are spawn_rng(seed, prefix + "initial" / "explore", index),
    so the standalone stage commands reproduce the same draws.

    Raises:
        StageError: labelled "estimate", "design" or "explore"; `cause` holds
                    the RankDeficient / AllInfeasible / IllPosed raised there
    """
    seed = cfg.seed if seed is None else seed
    with stage_label("estimate"):
        initial = identify_initial(cfg, simulator, spawn_rng(seed, f"{stream_prefix}initial", index))
    with stage_label("design"):
        design, statuses = design_controller(cfg, initial, jobs=jobs)
    with stage_label("explore"):
        exploration = exploration_phase(cfg, simulator, spawn_rng(seed, f"{stream_prefix}explore", index),
                                         initial, design)
    return RunReport(seed=seed, initial=initial, design=design, statuses=statuses,
                     exploration=exploration, config=cfg.to_dict())
