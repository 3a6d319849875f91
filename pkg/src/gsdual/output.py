"""
Output formatting and user messages for gsdual.

All user-facing messages go through these functions for consistent styling.
Library modules never print; stages in commands.py and the CLI do.

Functions:
    print_error(message: str, code: int = 1) -> None
        Print error message in red and exit with the given code

    print_warning(message: str) -> None
        Print warning message in yellow (non-fatal)

    print_success(message: str) -> None
        Print success message in green

    print_info(message: str) -> None
        Print informational message in blue

    print_summary(stage: str, message: str) -> None
        Print the one-line summary every stage emits
"""

import sys

from gsdual.constants import Colors
from gsdual.utils import cleanup_temp_files


def print_error(message: str, code: int = 1) -> None:
    """
    Print error message in red and exit the program.

    Args:
        message: Error message to display
        code: Process exit code (see constants.ExitCode)

    Flow:
        1. Print red error message with ❌ emoji to stderr
        2. Clean up half-written artifacts
        3. Exit program with `code`
    """
    print(f"{Colors.RED}❌ {message}{Colors.RESET}", file=sys.stderr)
    cleanup_temp_files()
    sys.exit(code)


def print_warning(message: str) -> None:
    """Print warning message in yellow (non-fatal)."""
    print(f"{Colors.YELLOW}⚠ {message}{Colors.RESET}", file=sys.stderr)


def print_success(message: str) -> None:
    """Print success message in green."""
    print(f"{Colors.GREEN}✅ {message}{Colors.RESET}")


def print_info(message: str) -> None:
    """Print informational message in blue."""
    print(f"{Colors.BLUE}ℹ {message}{Colors.RESET}")


def print_summary(stage: str, message: str) -> None:
    """
    Print the one-line summary of a finished stage.

    Usage:
        print_summary("design", "tr(Y_e)=0.412 at eps=1, t_e=0.01, ...")
        # Output: ✅ [design] tr(Y_e)=0.412 at eps=1, t_e=0.01, ...
    """
    print(f"{Colors.GREEN}✅ {Colors.CYAN}[{stage}]{Colors.RESET} {message}")
