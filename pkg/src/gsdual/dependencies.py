"""
Dependency management for gsdual.

This module checks which conic solvers CVXPY can reach:
    - MOSEK: preferred when licensed
    - CLARABEL: interior-point, ships with CVXPY
    - SCS: first-order fallback, lower accuracy

Functions:
    check_solver(name: str) -> bool
        Check if CVXPY reports the solver as installed

    get_solver(requested: Optional[str] = None) -> str
        Return the requested solver, or the first installed one in preference order

    check_dependencies(requested: Optional[str] = None) -> str
        CLI-level check; prints a red error and exits if no solver is usable

Flow:
    1. cli.main() calls check_dependencies(--solver)
    2. sdp_core.solve() calls get_solver() for every program it hands to CVXPY
"""

from typing import Optional

import cvxpy as cp

from gsdual.constants import SOLVER_PREFERENCE, ExitCode
from gsdual.errors import ConfigError, NumericalFailure
from gsdual.output import print_error, print_warning
from gsdual.utils import debug_print


def check_solver(name: str) -> bool:
    """
    Check if a conic solver is installed for CVXPY.

    Args:
        name: Solver name as CVXPY spells it (e.g. 'CLARABEL', 'SCS')

    Returns:
        True if cvxpy.installed_solvers() lists it
    """
    installed = cp.installed_solvers()
    found = name.upper() in installed
    debug_print(f"Solver '{name}' {'found' if found else 'not found'} (installed: {', '.join(installed)})")
    return found


def get_solver(requested: Optional[str] = None) -> str:
    """
    Detect the SDP backend (prefers MOSEK, then CLARABEL, then SCS).

    Args:
        requested: Explicit solver name (--solver / [run] solver); honoured if installed

    Raises:
        ConfigError: the requested solver is not installed
        NumericalFailure: none of the supported solvers is installed
    """
    if requested:
        if check_solver(requested):
            return requested.upper()
        raise ConfigError("run.solver", f"solver '{requested}' is not installed for CVXPY")
    for name in SOLVER_PREFERENCE:
        if check_solver(name):
            debug_print(f"Selected solver: {name}")
            return name
    raise NumericalFailure(f"none of {', '.join(SOLVER_PREFERENCE)} is installed; "
                           "install one, e.g. 'pip install clarabel'")


def check_dependencies(requested: Optional[str] = None) -> str:
    """
    Verify that an SDP backend is usable before any stage runs.

    Returns:
        The solver name that will be used

    Flow:
        1. Resolve the solver with get_solver()
        2. Warn when only the first-order fallback (SCS) is available
        3. On failure print a red error and exit with the config exit code
    """
    try:
        solver = get_solver(requested)
    except (ConfigError, NumericalFailure) as exc:
        print_error(str(exc), ExitCode.CONFIG)
        raise  # unreachable, print_error exits
    if solver == "SCS":
        print_warning("Only SCS is available; certificates may need looser tolerances")
    return solver
