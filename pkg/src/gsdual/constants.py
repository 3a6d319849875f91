"""
Constants and configuration for gsdual.

This module contains all application-wide constants including:
    - Version information
    - ANSI color codes for terminal output
    - Exit codes per error family
    - Numerical tolerances and default hyperparameter grids

Variables:
    __version__: Application version string (e.g., "1.0.0")
    __author__: Author name
    __license__: License identifier (GPL-3.0-or-later)
    Colors: Class containing ANSI escape codes for colored terminal output
    ExitCode: Process exit codes returned by the CLI, one per error family
    DEFAULT_TOL: Margin used to certify strict matrix inequalities
    PSD_CLAMP: Relative threshold below which negative eigenvalues are clamped
    DEFAULT_GRIDS: Line-search grids for (eps, t_e, lambda_s, lambda_u)
"""

from enum import IntEnum

__version__ = "0.4.0"
__author__ = "gsdual contributors"
__license__ = "GPL-3.0-or-later"


class Colors:
    """
    ANSI color codes for terminal output.

    Usage:
        print(f"{Colors.RED}Error message{Colors.RESET}")
        print(f"{Colors.GREEN}Success message{Colors.RESET}")
    """
    RED = '\033[91m'      # Red text - used for errors
    GREEN = '\033[92m'    # Green text - used for success messages
    YELLOW = '\033[93m'   # Yellow text - used for warnings
    BLUE = '\033[94m'     # Blue text - used for info messages
    MAGENTA = '\033[95m'  # Magenta text - used for debug messages
    CYAN = '\033[96m'     # Cyan text - used for stage summaries
    RESET = '\033[0m'     # Reset to default terminal color
    BOLD = '\033[1m'      # Bold text formatting


class ExitCode(IntEnum):
    """Process exit codes; one per error family."""
    OK = 0
    CONFIG = 2
    INFEASIBLE = 3
    ILL_POSED = 4
    NUMERICAL = 5
    INTERRUPTED = 130


# Strict LMIs M < 0 are certified as M <= -DEFAULT_TOL * I
DEFAULT_TOL = 1e-7

# Eigenvalues in [-PSD_CLAMP * ||M||, 0) count as zero for square roots and sampling
PSD_CLAMP = 1e-9

# Condition-number cap for blocks that get inverted (Schur complements, gains)
COND_CAP = 1e12

# Tolerance of the credibility-region membership test E^T D E <= I
REGION_TOL = 1e-9

# Tolerance used by the independent certificate checker after every solve
CERT_TOL = 1e-6

# Exploration noise seed used in the robust LQR pre-step, in units of sigma_w^2
K0_SIGMA_SCALE = 1e-3

# Fraction of the total disturbance energy allowed in the last 10% of a
# validation trajectory before the truncation is considered too short
TAIL_ENERGY_TOL = 1e-6

# Fewest data-generation repeats for a reported coverage frequency
MIN_COVERAGE_TRIALS = 100

# Relative covariance discrepancy above which the a-posteriori check is flagged
ASSUMPTION2_FLAG = 0.5

# Line-search grids; t_e values are multiples of sigma_w^2
DEFAULT_GRIDS = {
    "eps": (0.25, 0.5, 1.0, 2.0, 4.0),
    "t_e": (0.1, 0.3, 1.0, 3.0),
    "lambda_s": (1e-2, 1e-1, 1.0, 1e1, 1e2),
    "lambda_u": (1e-2, 1e-1, 1.0, 1e1, 1e2),
}

# Default epsilon grid for Young-inequality containment checks
EPS_GRID = (0.25, 0.5, 1.0, 2.0, 4.0)

# Preferred SDP backends, most accurate first
SOLVER_PREFERENCE = ("MOSEK", "CLARABEL", "SCS")

# Artifact file names written to the output directory
ARTIFACTS = {
    "estimate": "estimate.json",
    "initial_data": "initial_data.json",
    "initial_csv": "initial_trajectory.csv",
    "design": "design.json",
    "solver_status": "solver_status.csv",
    "exploration": "exploration.json",
    "exploration_data": "exploration_data.json",
    "exploration_csv": "exploration_trajectory.csv",
    "validation": "validation.json",
    "validation_csv": "validation.csv",
    "report": "report.json",
    "timings": "timings.json",
}
