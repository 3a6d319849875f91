"""
Solver-agnostic SDP representation, the CVXPY adapter and a certificate checker.

A ConicProgram is a list of matrix decision variables, a list of affine LMI
constraints and a trace-based linear objective. Each constraint carries a
builder: a callable taking a mapping {variable name: value} and returning
the constraint matrix. Builders are written once against plain arithmetic
and `matrix_kit.assemble`, so the same builder evaluates numeric assignments
(certification, standard-form dump) and CVXPY variables (solving).

Strict constraints F > 0 / F < 0 are posed as F >= margin I / F <= -margin I
with margin = DEFAULT_TOL (1 + |F(0)|).

Types:
    Structure     - symmetric / rectangular / scalar
    DecisionVar   - name, shape, structure
    LmiConstraint - name, builder, sense ("psd" or "nsd"), strict flag
    Objective     - sum of weight * tr(var)
    ConicProgram  - the immutable program
    SolverStatus  - Optimal / Infeasible / NumericalFailure
    SolverReport  - status, assignment, objective value, max violation

Functions:
    solve(p, tol, solver) -> SolverReport
    check_assignment(p, assignment) -> float
    constraint_violations(p, assignment) -> Dict[str, float]
    standard_form(p) -> dict
    dump_standard_form(p, path) -> None

Flow:
    1. lmi_blocks builds constraint builders, synthesis/validate wrap them in a ConicProgram
    2. solve() hands the program to CVXPY, maps the status and re-checks the
       returned assignment with check_assignment() using eigenvalues only
    3. Infeasible / NumericalFailure are raised with the report attached
"""

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, Iterator, Mapping, Optional, Sequence, Tuple

import cvxpy as cp
import numpy as np
from scipy import sparse

from gsdual import utils
from gsdual.constants import CERT_TOL, DEFAULT_TOL
from gsdual.dependencies import get_solver
from gsdual.errors import (Infeasible, MissingVariable, NumericalFailure, ShapeMismatch)
from gsdual.matrix_kit import eig_extremes, symmetrize
from gsdual.utils import debug_print

Builder = Callable[[Mapping[str, Any]], Any]


class Structure(str, Enum):
    SYMMETRIC = "symmetric"
    RECTANGULAR = "rectangular"
    SCALAR = "scalar"


class SolverStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class DecisionVar:
    name: str
    shape: Tuple[int, int] = (1, 1)
    structure: Structure = Structure.RECTANGULAR

    def __post_init__(self) -> None:
        if self.structure is Structure.SCALAR:
            object.__setattr__(self, "shape", (1, 1))
        elif self.structure is Structure.SYMMETRIC and self.shape[0] != self.shape[1]:
            raise ShapeMismatch(f"symmetric variable {self.name} must be square, got {self.shape}")
        if min(self.shape) < 1:
            raise ShapeMismatch(f"variable {self.name} has empty shape {self.shape}")

    @property
    def size(self) -> int:
        """Number of free coordinates."""
        if self.structure is Structure.SYMMETRIC:
            n = self.shape[0]
            return n * (n + 1) // 2
        return self.shape[0] * self.shape[1]

    def zero(self) -> Any:
        return 0.0 if self.structure is Structure.SCALAR else np.zeros(self.shape)

    def unit(self, index: int) -> Any:
        """Value of the index-th coordinate basis element."""
        if self.structure is Structure.SCALAR:
            return 1.0
        value = np.zeros(self.shape)
        if self.structure is Structure.SYMMETRIC:
            rows, cols = np.triu_indices(self.shape[0])
            value[rows[index], cols[index]] = 1.0
            value[cols[index], rows[index]] = 1.0
        else:
            value.flat[index] = 1.0
        return value

    def coerce(self, value: Any) -> Any:
        """Numeric value in the shape builders expect (float for scalars)."""
        arr = np.asarray(value, dtype=float)
        if self.structure is Structure.SCALAR:
            if arr.size != 1:
                raise ShapeMismatch(f"scalar variable {self.name} got shape {arr.shape}")
            return float(arr.reshape(-1)[0])
        arr = arr.reshape(self.shape) if arr.size == self.shape[0] * self.shape[1] else arr
        if arr.shape != self.shape:
            raise ShapeMismatch(f"variable {self.name} expects {self.shape}, got {arr.shape}")
        return symmetrize(arr) if self.structure is Structure.SYMMETRIC else arr

    def cvxpy_variable(self) -> cp.Variable:
        if self.structure is Structure.SCALAR:
            return cp.Variable(name=self.name)
        return cp.Variable(self.shape, name=self.name,
                           symmetric=self.structure is Structure.SYMMETRIC)


@dataclass(frozen=True)
class LmiConstraint:
    """
    build(values) >= 0 (sense "psd") or build(values) <= 0 (sense "nsd").

    `strict` turns the inequality into a margin-separated one.
    """
    name: str
    build: Builder
    sense: str = "psd"
    strict: bool = False

    def __post_init__(self) -> None:
        if self.sense not in ("psd", "nsd"):
            raise ValueError(f"constraint {self.name}: sense must be 'psd' or 'nsd', got {self.sense!r}")


@dataclass(frozen=True)
class Objective:
    """sum_i weight_i * tr(var_i); an empty objective is a feasibility problem."""
    terms: Tuple[Tuple[str, float], ...] = ()

    @classmethod
    def trace(cls, name: str, weight: float = 1.0) -> "Objective":
        return cls(terms=((name, float(weight)),))

    def scaled(self, factor: float) -> "Objective":
        return Objective(terms=tuple((n, w * factor) for n, w in self.terms))

    def evaluate(self, values: Mapping[str, Any]) -> Any:
        total: Any = 0.0
        for name, weight in self.terms:
            value = values[name]
            if isinstance(value, cp.Expression):
                total = total + weight * (cp.trace(value) if value.ndim == 2 else value)
            else:
                total = total + weight * float(np.trace(np.atleast_2d(value)))
        return total


class _DeclaredValues(Mapping):
    """Mapping that rejects lookups of undeclared variables."""

    def __init__(self, values: Mapping[str, Any], context: str):
        self._values = values
        self._context = context

    def __getitem__(self, key: str) -> Any:
        if key not in self._values:
            raise MissingVariable(f"{self._context} references undeclared variable '{key}'")
        return self._values[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)


@dataclass(frozen=True)
class ConicProgram:
    """
    Immutable SDP: min objective s.t. every constraint holds.

    Construction evaluates each builder at the zero assignment, which checks
    that builders only reference declared variables, that they return square
    matrices, and fixes the strict margins from the constant terms.
    """
    vars: Tuple[DecisionVar, ...]
    constraints: Tuple[LmiConstraint, ...]
    objective: Objective = field(default_factory=Objective)
    name: str = "sdp"
    margins: Dict[str, float] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "vars", tuple(self.vars))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        names = [v.name for v in self.vars]
        if len(set(names)) != len(names):
            raise ShapeMismatch(f"duplicate variable names in {self.name}")
        cnames = [c.name for c in self.constraints]
        if len(set(cnames)) != len(cnames):
            raise ShapeMismatch(f"duplicate constraint names in {self.name}")
        for term, _ in self.objective.terms:
            if term not in names:
                raise MissingVariable(f"objective references undeclared variable '{term}'")

        zero = self.zero_assignment()
        margins = {}
        for con in self.constraints:
            constant = _evaluate(con, zero, f"constraint {con.name}")
            if np.max(np.abs(constant - constant.T), initial=0.0) > 1e-9 * (1.0 + np.abs(constant).max(initial=0.0)):
                raise ShapeMismatch(f"constraint {con.name} has a non-symmetric constant term")
            margins[con.name] = DEFAULT_TOL * (1.0 + float(np.linalg.norm(constant, 2))) if con.strict else 0.0
        object.__setattr__(self, "margins", margins)

    def var(self, name: str) -> DecisionVar:
        for v in self.vars:
            if v.name == name:
                return v
        raise MissingVariable(f"program {self.name} has no variable '{name}'")

    @property
    def var_names(self) -> Tuple[str, ...]:
        return tuple(v.name for v in self.vars)

    def zero_assignment(self) -> Dict[str, Any]:
        return {v.name: v.zero() for v in self.vars}

    def without(self, *constraint_names: str) -> "ConicProgram":
        """Copy of the program with the named constraints dropped (relaxation)."""
        unknown = set(constraint_names) - {c.name for c in self.constraints}
        if unknown:
            raise MissingVariable(f"no constraint named {sorted(unknown)}")
        kept = tuple(c for c in self.constraints if c.name not in constraint_names)
        return replace(self, constraints=kept, margins={})

    def with_objective(self, objective: Objective) -> "ConicProgram":
        return replace(self, objective=objective, margins={})


@dataclass
class SolverReport:
    status: SolverStatus
    assignment: Dict[str, Any]
    objective_value: float
    max_violation: float
    solver: str = ""
    backend_status: str = ""
    solve_time: float = 0.0

    @property
    def optimal(self) -> bool:
        return self.status is SolverStatus.OPTIMAL

    def summary(self) -> dict:
        """Status fields without the assignment (solver_status.csv rows)."""
        return {"status": self.status.value, "backend_status": self.backend_status,
                "objective": self.objective_value, "max_violation": self.max_violation,
                "solver": self.solver}


def _evaluate(con: LmiConstraint, values: Mapping[str, Any], context: str) -> np.ndarray:
    matrix = np.atleast_2d(np.asarray(con.build(_DeclaredValues(values, context)), dtype=float))
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ShapeMismatch(f"{context} builds a non-square matrix of shape {matrix.shape}")
    return matrix


def _complete(p: ConicProgram, assignment: Mapping[str, Any]) -> Dict[str, Any]:
    missing = [name for name in p.var_names if name not in assignment]
    if missing:
        raise MissingVariable(f"assignment lacks {', '.join(missing)}")
    return {v.name: v.coerce(assignment[v.name]) for v in p.vars}


def constraint_violations(p: ConicProgram, assignment: Mapping[str, Any]) -> Dict[str, float]:
    """
    Eigenvalue violation of every constraint; 0 where satisfied.

    psd: max(0, margin - lambda_min(F)); nsd: max(0, margin + lambda_max(F)).
    """
    values = _complete(p, assignment)
    out = {}
    for con in p.constraints:
        lo, hi = eig_extremes(_evaluate(con, values, f"constraint {con.name}"))
        margin = p.margins.get(con.name, 0.0)
        gap = margin - lo if con.sense == "psd" else margin + hi
        out[con.name] = max(0.0, float(gap))
    return out


def check_assignment(p: ConicProgram, assignment: Mapping[str, Any]) -> float:
    """
    Worst eigenvalue violation over all constraints (0 if all hold).

    Raises:
        MissingVariable: a declared variable has no value in the assignment
    """
    violations = constraint_violations(p, assignment)
    return max(violations.values(), default=0.0)


_INFEASIBLE = {cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE}
_SOLVED = {cp.OPTIMAL, cp.OPTIMAL_INACCURATE}


def solve(p: ConicProgram, tol: float = CERT_TOL, solver: Optional[str] = None) -> SolverReport:
    """
    Solve the program with CVXPY and certify the result independently.

    Args:
        p: Program to solve
        tol: Largest accepted eigenvalue violation of the returned assignment
        solver: Backend name; detected with dependencies.get_solver() when omitted

    Returns:
        SolverReport with status Optimal and max_violation <= tol

    Raises:
        Infeasible: the backend certified infeasibility
        NumericalFailure: anything else (no certificate, violation above tol,
                          backend crash)
    """
    backend = get_solver(solver)
    variables = {v.name: v.cvxpy_variable() for v in p.vars}
    constraints = []
    for con in p.constraints:
        expr = con.build(_DeclaredValues(variables, f"constraint {con.name}"))
        if not isinstance(expr, cp.Expression):
            expr = cp.Constant(np.atleast_2d(np.asarray(expr, dtype=float)))
        sym = 0.5 * (expr + expr.T)
        dim = sym.shape[0]
        margin = p.margins.get(con.name, 0.0)
        if con.sense == "psd":
            constraints.append(sym >> margin * np.eye(dim))
        else:
            constraints.append(sym << -margin * np.eye(dim))
    objective = p.objective.evaluate(variables) if p.objective.terms else cp.Constant(0.0)
    problem = cp.Problem(cp.Minimize(objective), constraints)

    debug_print(f"Solving {p.name}: {len(p.vars)} variables, {len(p.constraints)} LMIs, backend {backend}")
    try:
        problem.solve(solver=backend, verbose=utils.DEBUG)
    except cp.SolverError as exc:
        report = SolverReport(SolverStatus.NUMERICAL_FAILURE, {}, float("nan"), float("inf"),
                              solver=backend, backend_status="solver_error")
        raise NumericalFailure(f"{p.name}: backend {backend} failed: {exc}", report) from exc

    stats = problem.solver_stats
    solve_time = float(stats.solve_time) if stats is not None and stats.solve_time is not None else 0.0
    status = str(problem.status)
    debug_print(f"{p.name}: backend status {status}, objective {problem.value}")
    if status in _INFEASIBLE:
        report = SolverReport(SolverStatus.INFEASIBLE, {}, float("inf"), float("inf"),
                              solver=backend, backend_status=status, solve_time=solve_time)
        raise Infeasible(f"{p.name} is infeasible ({status})", report)
    if status not in _SOLVED or any(v.value is None for v in variables.values()):
        report = SolverReport(SolverStatus.NUMERICAL_FAILURE, {}, float("nan"), float("inf"),
                              solver=backend, backend_status=status, solve_time=solve_time)
        raise NumericalFailure(f"{p.name}: backend returned {status}", report)

    assignment = {v.name: v.coerce(variables[v.name].value) for v in p.vars}
    violation = check_assignment(p, assignment)
    objective_value = float(p.objective.evaluate(assignment)) if p.objective.terms else 0.0
    report = SolverReport(SolverStatus.OPTIMAL, assignment, objective_value, violation,
                          solver=backend, backend_status=status, solve_time=solve_time)
    if violation > tol:
        report.status = SolverStatus.NUMERICAL_FAILURE
        raise NumericalFailure(f"{p.name}: returned point violates the LMIs by {violation:.3e} > {tol:.1e}",
                               report)
    return report


def standard_form(p: ConicProgram) -> dict:
    """
    Vectorized standard form: F_j(x) = F_j0 + sum_i x_i F_ji for every LMI j.

    Coordinates are the free entries of each variable (upper triangle for
    symmetric ones). Coefficient matrices are stored in coordinate (COO)
    format as [row, col, value] triples.
    """
    zero = p.zero_assignment()
    coords = []
    layout = []
    offset = 0
    for v in p.vars:
        layout.append({"name": v.name, "shape": list(v.shape), "structure": v.structure.value,
                       "offset": offset, "size": v.size})
        coords.extend((v, i) for i in range(v.size))
        offset += v.size

    def coo(matrix: np.ndarray) -> list:
        m = sparse.coo_matrix(np.where(np.abs(matrix) > 1e-15, matrix, 0.0))
        return [[int(r), int(c), float(x)] for r, c, x in zip(m.row, m.col, m.data)]

    cost = np.zeros(offset)
    for k, (v, i) in enumerate(coords):
        weight = dict(p.objective.terms).get(v.name)
        if weight is not None:
            unit = v.unit(i)
            cost[k] = weight * float(np.trace(np.atleast_2d(unit)))

    blocks = []
    for con in p.constraints:
        base = _evaluate(con, zero, f"constraint {con.name}")
        coefficients = []
        for k, (v, i) in enumerate(coords):
            unit_point = dict(zero)
            unit_point[v.name] = v.unit(i)
            delta = _evaluate(con, unit_point, f"constraint {con.name}") - base
            entries = coo(delta)
            if entries:
                coefficients.append({"coordinate": k, "entries": entries})
        blocks.append({"name": con.name, "dim": base.shape[0], "sense": con.sense,
                       "strict": con.strict, "margin": p.margins.get(con.name, 0.0),
                       "constant": coo(base), "coefficients": coefficients})
    return {"program": p.name, "n_coordinates": offset, "variables": layout,
            "objective": cost.tolist(), "constraints": blocks}


def dump_standard_form(p: ConicProgram, path: str) -> None:
    """Write standard_form(p) as JSON (used by --dump-sdp)."""
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(standard_form(p), handle, indent=1, sort_keys=True)
    debug_print(f"Standard form of {p.name} written to {path}")


def variables_from_flat(p: ConicProgram, x: Sequence[float]) -> Dict[str, Any]:
    """Inverse of the coordinate layout used by standard_form."""
    x = np.asarray(x, dtype=float)
    values = {}
    offset = 0
    for v in p.vars:
        value: Any = v.zero()
        for i in range(v.size):
            value = value + x[offset + i] * v.unit(i)
        values[v.name] = value
        offset += v.size
    return values
