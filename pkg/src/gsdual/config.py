"""
Scenario configuration: TOML loading, validation, CLI overrides.

A scenario file has the tables

    [system]       A, B, sigma_w                     hidden truth, only the simulator sees A, B
    [performance]  C, D, D_w, gamma | Q_p, S_p, R_p, gamma_budget (optional)
    [exploration]  Q, R, N0, T, initial_input_std, x0
    [confidence]   delta
    [grid]         eps, t_e (multiples of sigma_w^2), lambda_s, lambda_u, mode, max_sweeps
    [design]       schedule (false drops the gain-scheduling term K_s)
    [validation]   n_trials, horizon, boundary_fraction, coverage_trials,
                   pipeline_runs, frozen_lmi_samples
    [run]          seed, out, jobs, solver

Matrices are row-major nested arrays. Precedence is CLI flag > file > default.

Functions:
    load_config(path) -> ScenarioConfig
    parse_config(data, source) -> ScenarioConfig
    apply_overrides(cfg, ...) -> ScenarioConfig
    parse_grid_override(text) -> (key, values)
    bundled_scenario() -> str
"""

import os
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from gsdual.constants import DEFAULT_GRIDS, MIN_COVERAGE_TRIALS
from gsdual.errors import ConfigError, GsdualError
from gsdual.matrix_kit import is_definite
from gsdual.plant import LtiSystem, PerfChannel
from gsdual.utils import debug_print

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

GRID_KEYS = ("eps", "t_e", "lambda_s", "lambda_u")
GRID_MODES = ("grid", "coordinate")


@dataclass(frozen=True)
class GridSpec:
    """Hyperparameter grids; t_e values are multiples of sigma_w^2."""
    eps: Tuple[float, ...] = DEFAULT_GRIDS["eps"]
    t_e: Tuple[float, ...] = DEFAULT_GRIDS["t_e"]
    lambda_s: Tuple[float, ...] = DEFAULT_GRIDS["lambda_s"]
    lambda_u: Tuple[float, ...] = DEFAULT_GRIDS["lambda_u"]
    mode: str = "grid"
    max_sweeps: int = 3

    @property
    def size(self) -> int:
        return len(self.eps) * len(self.t_e) * len(self.lambda_s) * len(self.lambda_u)

    def to_dict(self) -> dict:
        return {"eps": list(self.eps), "t_e": list(self.t_e), "lambda_s": list(self.lambda_s),
                "lambda_u": list(self.lambda_u), "mode": self.mode, "max_sweeps": self.max_sweeps}


@dataclass(frozen=True)
class ValidationSettings:
    n_trials: int = 200
    horizon: int = 400
    boundary_fraction: float = 0.5
    coverage_trials: int = 0
    pipeline_runs: int = 0
    frozen_lmi_samples: int = 200

    def to_dict(self) -> dict:
        return {"n_trials": self.n_trials, "horizon": self.horizon,
                "boundary_fraction": self.boundary_fraction, "coverage_trials": self.coverage_trials,
                "pipeline_runs": self.pipeline_runs, "frozen_lmi_samples": self.frozen_lmi_samples}


@dataclass(frozen=True)
class ScenarioConfig:
    system: LtiSystem
    perf: PerfChannel
    Q: np.ndarray
    R: np.ndarray
    N0: int
    T: int
    delta: float
    initial_input_std: float = 1.0
    x0: Optional[np.ndarray] = None
    gamma: Optional[float] = None
    gamma_budget: Optional[float] = None
    grid: GridSpec = field(default_factory=GridSpec)
    schedule: bool = True
    validation: ValidationSettings = field(default_factory=ValidationSettings)
    seed: int = 0
    out: str = "gsdual-out"
    jobs: int = 1
    solver: Optional[str] = None
    source: str = ""

    @property
    def n_x(self) -> int:
        return self.system.n_x

    @property
    def n_u(self) -> int:
        return self.system.n_u

    @property
    def initial_state(self) -> np.ndarray:
        return np.zeros(self.n_x) if self.x0 is None else np.asarray(self.x0, dtype=float)

    def to_dict(self) -> dict:
        """Echo of the validated configuration (written into report.json)."""
        perf = {"C": self.perf.C.tolist(), "D": self.perf.D.tolist(), "D_w": self.perf.D_w.tolist(),
                "Q_p": self.perf.Q_p.tolist(), "S_p": self.perf.S_p.tolist(), "R_p": self.perf.R_p.tolist()}
        if self.gamma is not None:
            perf["gamma"] = self.gamma
        if self.gamma_budget is not None:
            perf["gamma_budget"] = self.gamma_budget
        return {
            "system": {"A": self.system.A.tolist(), "B": self.system.B.tolist(), "sigma_w": self.system.sigma_w},
            "performance": perf,
            "exploration": {"Q": self.Q.tolist(), "R": self.R.tolist(), "N0": self.N0, "T": self.T,
                            "initial_input_std": self.initial_input_std,
                            "x0": self.initial_state.tolist()},
            "confidence": {"delta": self.delta},
            "grid": self.grid.to_dict(),
            "design": {"schedule": self.schedule},
            "validation": self.validation.to_dict(),
            "run": {"seed": self.seed, "jobs": self.jobs, "solver": self.solver or ""},
        }


def _table(data: Dict[str, Any], name: str, required: bool = True) -> Dict[str, Any]:
    value = data.get(name)
    if value is None:
        if required:
            raise ConfigError(name, "missing table")
        return {}
    if not isinstance(value, dict):
        raise ConfigError(name, "must be a table")
    return value


def _matrix(table: Dict[str, Any], key: str, path: str, shape: Optional[Tuple[int, int]] = None,
            default: Any = None) -> np.ndarray:
    if key not in table:
        if default is None:
            raise ConfigError(path, "missing")
        return np.asarray(default, dtype=float)
    try:
        arr = np.atleast_2d(np.asarray(table[key], dtype=float))
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, f"not a numeric matrix ({exc})") from None
    if arr.ndim != 2:
        raise ConfigError(path, f"must be a 2-D array, got {arr.ndim} dimensions")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(path, "contains NaN or inf")
    if shape is not None and arr.shape != shape:
        # a column vector given as a flat list
        if arr.shape == (1, shape[0]) and shape[1] == 1:
            arr = arr.T
        else:
            raise ConfigError(path, f"expected shape {shape}, got {arr.shape}")
    return arr


def _number(table: Dict[str, Any], key: str, path: str, default: Any = None,
            kind: type = float) -> Any:
    if key not in table:
        if default is None:
            raise ConfigError(path, "missing")
        return default
    value = table[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"must be a number, got {value!r}")
    if kind is int:
        if float(value) != int(value):
            raise ConfigError(path, f"must be an integer, got {value}")
        return int(value)
    return float(value)


def _grid(values: Any, path: str) -> Tuple[float, ...]:
    if not isinstance(values, (list, tuple)) or not values:
        raise ConfigError(path, "must be a non-empty list of positive numbers")
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
            raise ConfigError(path, f"grid values must be positive numbers, got {v!r}")
        out.append(float(v))
    return tuple(out)


def _perf(table: Dict[str, Any], n_x: int, n_u: int) -> Tuple[PerfChannel, Optional[float]]:
    C = _matrix(table, "C", "performance.C")
    if C.shape[1] != n_x:
        raise ConfigError("performance.C", f"must have {n_x} columns, got {C.shape[1]}")
    n_z = C.shape[0]
    D = _matrix(table, "D", "performance.D", (n_z, n_u))
    D_w = _matrix(table, "D_w", "performance.D_w", (n_z, n_x), default=np.zeros((n_z, n_x)))
    if "gamma" in table:
        gamma = _number(table, "gamma", "performance.gamma")
        if not gamma > 0:
            raise ConfigError("performance.gamma", "must be positive")
        if any(k in table for k in ("Q_p", "S_p", "R_p")):
            raise ConfigError("performance", "give either gamma or Q_p/S_p/R_p, not both")
        return PerfChannel.l2_gain(gamma, C, D, D_w), gamma
    Q_p = _matrix(table, "Q_p", "performance.Q_p", (n_x, n_x))
    S_p = _matrix(table, "S_p", "performance.S_p", (n_x, n_z), default=np.zeros((n_x, n_z)))
    R_p = _matrix(table, "R_p", "performance.R_p", (n_z, n_z))
    if not np.allclose(Q_p, Q_p.T) or not np.allclose(R_p, R_p.T):
        raise ConfigError("performance", "Q_p and R_p must be symmetric")
    if not is_definite(R_p, "pos", 0.0):
        raise ConfigError("performance.R_p", "must be positive definite")
    return PerfChannel(C=C, D=D, D_w=D_w, Q_p=Q_p, S_p=S_p, R_p=R_p), None


def parse_config(data: Dict[str, Any], source: str = "") -> ScenarioConfig:
    """
    Validate a parsed TOML document into a ScenarioConfig.

    Raises:
        ConfigError: naming the first offending field
    """
    sys_t = _table(data, "system")
    A = _matrix(sys_t, "A", "system.A")
    if A.shape[0] != A.shape[1]:
        raise ConfigError("system.A", f"must be square, got {A.shape}")
    n_x = A.shape[0]
    B = _matrix(sys_t, "B", "system.B")
    if B.shape[0] != n_x:
        if B.shape == (1, n_x):
            B = B.T
        else:
            raise ConfigError("system.B", f"must have {n_x} rows, got {B.shape}")
    n_u = B.shape[1]
    sigma_w = _number(sys_t, "sigma_w", "system.sigma_w")
    if not sigma_w > 0:
        raise ConfigError("system.sigma_w", "must be positive")
    try:
        system = LtiSystem(A=A, B=B, sigma_w=sigma_w)
    except GsdualError as exc:
        raise ConfigError("system", str(exc)) from None

    perf, gamma = _perf(_table(data, "performance"), n_x, n_u)
    gamma_budget = _table(data, "performance").get("gamma_budget")
    if gamma_budget is not None:
        gamma_budget = _number(_table(data, "performance"), "gamma_budget", "performance.gamma_budget")
        if not gamma_budget > 0:
            raise ConfigError("performance.gamma_budget", "must be positive")
        if gamma is None:
            raise ConfigError("performance.gamma_budget", "needs the L2 shorthand (gamma)")

    ex = _table(data, "exploration")
    Q = _matrix(ex, "Q", "exploration.Q", (n_x, n_x), default=np.eye(n_x))
    R = _matrix(ex, "R", "exploration.R", (n_u, n_u), default=np.eye(n_u))
    if not np.allclose(Q, Q.T) or not is_definite(Q, "psd"):
        raise ConfigError("exploration.Q", "must be symmetric positive semidefinite")
    if not np.allclose(R, R.T) or not is_definite(R, "pos", 0.0):
        raise ConfigError("exploration.R", "must be symmetric positive definite")
    N0 = _number(ex, "N0", "exploration.N0", kind=int)
    T = _number(ex, "T", "exploration.T", kind=int)
    if N0 < 1:
        raise ConfigError("exploration.N0", "must be at least 1")
    if T < 1:
        raise ConfigError("exploration.T", "must be at least 1")
    input_std = _number(ex, "initial_input_std", "exploration.initial_input_std", default=1.0)
    if not input_std > 0:
        raise ConfigError("exploration.initial_input_std", "must be positive")
    x0 = None
    if "x0" in ex:
        x0 = np.asarray(ex["x0"], dtype=float).reshape(-1)
        if x0.size != n_x:
            raise ConfigError("exploration.x0", f"must have {n_x} entries")

    delta = _number(_table(data, "confidence"), "delta", "confidence.delta")
    if not 0.0 < delta < 1.0:
        raise ConfigError("confidence.delta", f"must lie in (0, 1), got {delta}")

    g = _table(data, "grid", required=False)
    grid = GridSpec(**{k: _grid(g[k], f"grid.{k}") for k in GRID_KEYS if k in g})
    mode = g.get("mode", "grid")
    if mode not in GRID_MODES:
        raise ConfigError("grid.mode", f"must be one of {GRID_MODES}, got {mode!r}")
    max_sweeps = _number(g, "max_sweeps", "grid.max_sweeps", default=3, kind=int)
    if max_sweeps < 1:
        raise ConfigError("grid.max_sweeps", "must be at least 1")
    grid = replace(grid, mode=mode, max_sweeps=max_sweeps)

    schedule = _table(data, "design", required=False).get("schedule", True)
    if not isinstance(schedule, bool):
        raise ConfigError("design.schedule", f"must be true or false, got {schedule!r}")

    v = _table(data, "validation", required=False)
    defaults = ValidationSettings()
    validation = ValidationSettings(
        n_trials=_number(v, "n_trials", "validation.n_trials", defaults.n_trials, int),
        horizon=_number(v, "horizon", "validation.horizon", defaults.horizon, int),
        boundary_fraction=_number(v, "boundary_fraction", "validation.boundary_fraction",
                                  defaults.boundary_fraction),
        coverage_trials=_number(v, "coverage_trials", "validation.coverage_trials",
                                defaults.coverage_trials, int),
        pipeline_runs=_number(v, "pipeline_runs", "validation.pipeline_runs", defaults.pipeline_runs, int),
        frozen_lmi_samples=_number(v, "frozen_lmi_samples", "validation.frozen_lmi_samples",
                                   defaults.frozen_lmi_samples, int),
    )
    if validation.n_trials < 1:
        raise ConfigError("validation.n_trials", "must be at least 1")
    if validation.horizon < 2:
        raise ConfigError("validation.horizon", "must be at least 2")
    if not 0.0 <= validation.boundary_fraction <= 1.0:
        raise ConfigError("validation.boundary_fraction", "must lie in [0, 1]")
    for name in ("coverage_trials", "pipeline_runs", "frozen_lmi_samples"):
        if getattr(validation, name) < 0:
            raise ConfigError(f"validation.{name}", "must be non-negative")
    if 0 < validation.coverage_trials < MIN_COVERAGE_TRIALS:
        raise ConfigError("validation.coverage_trials", f"must be 0 (off) or at least {MIN_COVERAGE_TRIALS}")

    run = _table(data, "run", required=False)
    seed = _number(run, "seed", "run.seed", default=0, kind=int)
    if seed < 0:
        raise ConfigError("run.seed", "must be non-negative")
    jobs = _number(run, "jobs", "run.jobs", default=1, kind=int)
    if jobs < 1:
        raise ConfigError("run.jobs", "must be at least 1")
    solver = run.get("solver") or None
    out = str(run.get("out", "gsdual-out"))

    debug_print(f"Config {source or '<dict>'}: n_x={n_x}, n_u={n_u}, n_z={perf.n_z}, grid size {grid.size}")
    return ScenarioConfig(system=system, perf=perf, Q=Q, R=R, N0=N0, T=T, delta=delta,
                          initial_input_std=input_std, x0=x0, gamma=gamma, gamma_budget=gamma_budget,
                          grid=grid, schedule=schedule, validation=validation, seed=seed, out=out,
                          jobs=jobs, solver=solver, source=source)


def load_config(path: str) -> ScenarioConfig:
    """
    Read and validate a TOML scenario file.

    Raises:
        ConfigError: file missing, not TOML, or a field is invalid
    """
    debug_print(f"Loading config: {path}")
    if not os.path.isfile(path):
        raise ConfigError("--config", f"file not found: {path}")
    try:
        with open(path, "rb") as handle:
            data = tomllib.load(handle)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("--config", f"{path} is not valid TOML: {exc}") from None
    return parse_config(data, source=path)


def parse_grid_override(text: str) -> Tuple[str, Tuple[float, ...]]:
    """
    Parse a --grid-override argument 'KEY=v1,v2,...'.

    Usage:
        parse_grid_override("lambda_s=0.1,1,10")  # ('lambda_s', (0.1, 1.0, 10.0))
    """
    if "=" not in text:
        raise ConfigError("--grid-override", f"expected KEY=CSV, got {text!r}")
    key, _, csv = text.partition("=")
    key = key.strip()
    if key not in GRID_KEYS:
        raise ConfigError("--grid-override", f"unknown grid key {key!r}; expected one of {GRID_KEYS}")
    try:
        values = [float(item) for item in csv.split(",") if item.strip()]
    except ValueError:
        raise ConfigError(f"--grid-override {key}", f"values must be numbers, got {csv!r}") from None
    return key, _grid(values, f"--grid-override {key}")


def apply_overrides(cfg: ScenarioConfig, seed: Optional[int] = None, out: Optional[str] = None,
                    jobs: Optional[int] = None, solver: Optional[str] = None,
                    grid_overrides: Sequence[str] = (), schedule: Optional[bool] = None) -> ScenarioConfig:
    """Apply CLI flags on top of the file values."""
    changes: Dict[str, Any] = {}
    if seed is not None:
        if seed < 0:
            raise ConfigError("--seed", "must be non-negative")
        changes["seed"] = int(seed)
    if out:
        changes["out"] = out
    if jobs is not None:
        if jobs < 1:
            raise ConfigError("--jobs", "must be at least 1")
        changes["jobs"] = int(jobs)
    if solver:
        changes["solver"] = solver
    if schedule is not None:
        changes["schedule"] = schedule
    if grid_overrides:
        grid_changes: Dict[str, Tuple[float, ...]] = {}
        for text in grid_overrides:
            key, values = parse_grid_override(text)
            grid_changes[key] = values
        changes["grid"] = replace(cfg.grid, **grid_changes)
    return replace(cfg, **changes) if changes else cfg


def bundled_scenario() -> str:
    """Filesystem path of the bundled desk example (package data)."""
    return str(resources.files("gsdual") / "scenarios" / "desk.toml")


def scenario_names() -> List[str]:
    return sorted(p.name for p in (resources.files("gsdual") / "scenarios").iterdir()
                  if p.name.endswith(".toml"))
