"""
Command-line interface for gsdual.

This module provides the main CLI entry point and handles:
    - Argument parsing (--config, --stage, --seed, --out, --jobs, ...)
    - Config loading and CLI overrides
    - Dispatch to the stage commands
    - Mapping of errors to exit codes

Functions:
    exit_code_for(exc: BaseException) -> int
        Exit code of an error family (see constants.ExitCode)

    show_help() -> None
        Display help message

    show_version() -> None
        Display version information

    main(argv: Optional[List[str]] = None) -> None
        Main entry point for the application

Flow:
    1. Parse command-line arguments
    2. Handle --help, --version flags
    3. Configure logging and signal handlers
    4. Load the scenario (bundled desk example when --config is omitted)
    5. Apply CLI overrides
    6. Check the SDP backend
    7. Run the requested stage (default: full)
    8. Exit 0, or print a red error and exit with the family's code
"""

import os
import sys
from typing import List, Optional

from gsdual.commands import COMMANDS, STAGES
from gsdual.config import apply_overrides, bundled_scenario, load_config
from gsdual.constants import ExitCode, __version__
from gsdual.dependencies import check_dependencies
from gsdual.errors import (CertificationFailed, ConfigError, GsdualError, IllPosed, InfeasibleError,
                           NumericalError, PerformanceViolation, StageDependencyError, StageError)
from gsdual.output import print_error
from gsdual import utils
from gsdual.utils import debug_print


def exit_code_for(exc: BaseException) -> int:
    """
    Exit code for an error, looking through StageError wrappers.

    Returns:
        2 config / stage dependency, 3 infeasible, 4 ill-posed / certification /
        performance violation, 5 numerical, 1 anything else
    """
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, (ConfigError, StageDependencyError)):
        return int(ExitCode.CONFIG)
    if isinstance(exc, InfeasibleError):
        return int(ExitCode.INFEASIBLE)
    if isinstance(exc, (IllPosed, CertificationFailed, PerformanceViolation)):
        return int(ExitCode.ILL_POSED)
    if isinstance(exc, NumericalError):
        return int(ExitCode.NUMERICAL)
    return 1


def show_help() -> None:
    """
    Display help message.

    Shows usage information, options, stages, examples and exit codes.
    """
    prog = os.path.basename(sys.argv[0]) or "gsdual"
    help_text = f"""
gsdual - Robust dual control by gain scheduling

Usage: {prog} [OPTIONS]

Identifies a linear system from random data, designs an exploration
controller together with a gain-scheduled robust controller, explores,
re-estimates and validates the final gain.

Options:
  --help, -h              Show this help message
  --version, -V           Show version info
  --config PATH           Scenario TOML file (default: bundled desk example)
  --out DIR               Output directory for artifacts
  --seed N                Root seed; every random stream is derived from it
  --stage NAME            estimate | design | explore | validate | full (default)
  --grid-override K=CSV   Replace one line-search grid, e.g. lambda_s=0.1,1,10
                          (repeatable; t_e values are multiples of sigma_w^2)
  --jobs N                Worker processes for the line search and Monte Carlo
  --solver NAME           SDP backend (MOSEK, CLARABEL, SCS)
  --no-schedule           Design without the gain-scheduling term (K_s = 0)
  --dump-sdp PREFIX       Write the standard form of the solved SDPs as JSON
  --verbose, --debug      Enable verbose debug output

Examples:
  {prog}                                     # Full pipeline on the desk example
  {prog} --config plant.toml --seed 7        # Own scenario, fixed seed
  {prog} --stage design --jobs 8             # Re-run only the design stage
  {prog} --grid-override eps=0.5,1,2         # Narrower epsilon grid
  {prog} --no-schedule                     # Robust design without scheduling

Exit codes:
  0 success, 2 configuration or missing artifact, 3 infeasible,
  4 ill-posed / certification failure, 5 numerical failure, 130 interrupted

Dependencies:
  - numpy, scipy  : Linear algebra and statistics
  - cvxpy         : SDP modelling, with CLARABEL, SCS or MOSEK as backend
"""
    print(help_text)


def show_version() -> None:
    """Display version information."""
    print(f"gsdual version {__version__}")


def main(argv: Optional[List[str]] = None) -> None:
    """
    Main entry point for the application.

    Command-Line Arguments:
        see show_help()

    Flow:
        1. Parse arguments
        2. Set DEBUG flag if --verbose/--debug provided
        3. Handle --help, --version flags
        4. Load config and apply overrides
        5. Check solver availability
        6. Dispatch the stage and exit with its code
    """
    import argparse

    # add_help=False: --help prints the custom help text
    parser = argparse.ArgumentParser(add_help=False)

    parser.add_argument('--help', '-h', action='store_true')
    parser.add_argument('--version', '-V', action='store_true')
    parser.add_argument('--verbose', '--debug', dest='verbose', action='store_true')
    parser.add_argument('--config', type=str, default=None)
    parser.add_argument('--out', type=str, default=None)
    parser.add_argument('--seed', type=int, default=None)
    parser.add_argument('--stage', type=str, default='full', choices=STAGES + ('full',))
    parser.add_argument('--grid-override', dest='grid_override', action='append', default=[])
    parser.add_argument('--jobs', type=int, default=None)
    parser.add_argument('--solver', type=str, default=None)
    parser.add_argument('--dump-sdp', dest='dump_sdp', type=str, default=None)
    parser.add_argument('--no-schedule', dest='schedule', action='store_false', default=None)

    # unknown: ignored arguments, reported in debug mode
    args, unknown = parser.parse_known_args(argv)

    # Set the global DEBUG flag and the log handler
    utils.configure_logging(bool(args.verbose))
    if utils.DEBUG:
        debug_print(f"argv: {sys.argv if argv is None else argv}")
        debug_print(f"python: {sys.version}")
        debug_print(f"cwd: {os.getcwd()}")
        if unknown:
            debug_print(f"ignored arguments: {unknown}")

    # Early-exit flags
    if args.help:
        show_help()
        return
    if args.version:
        show_version()
        return

    # Interrupts drop half-written artifacts and exit with 130
    utils.install_signal_handlers()

    # Load the scenario and apply CLI overrides (flag > file > default)
    try:
        path = args.config or bundled_scenario()
        debug_print(f"Scenario file: {path}")
        cfg = load_config(path)
        cfg = apply_overrides(cfg, seed=args.seed, out=args.out, jobs=args.jobs,
                              solver=args.solver, grid_overrides=args.grid_override,
                              schedule=args.schedule)
    except ConfigError as exc:
        print_error(f"Invalid configuration: {exc}", exit_code_for(exc))
        return

    # Resolve the SDP backend once; exits with the config code if none is usable
    solver = check_dependencies(cfg.solver)
    debug_print(f"Using SDP backend {solver}")

    # Run the stage; library errors become exit codes here and nowhere else
    debug_print(f"Running stage '{args.stage}' with seed {cfg.seed}, output {cfg.out}")
    try:
        code = COMMANDS[args.stage](cfg, args)
    except GsdualError as exc:
        print_error(str(exc), exit_code_for(exc))
        return
    except KeyboardInterrupt:
        print_error("Interrupted", int(ExitCode.INTERRUPTED))
        return
    sys.exit(code)
