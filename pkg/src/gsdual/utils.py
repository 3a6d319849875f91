"""
Utility functions for gsdual.

This module provides utility functions for:
    - Debug logging with timestamps (backed by the `logging` package)
    - Deterministic random stream splitting from one root seed
    - Temporary artifact tracking and cleanup
    - Signal handling for graceful shutdown

Global Variables:
    temp_files: List[str] - Partially written artifacts (tmp files awaiting rename)
                          Removed on exit or interrupt
    DEBUG: bool - Global debug flag that enables verbose logging
                 Set via --verbose/--debug CLI flag

Functions:
    configure_logging(debug: bool) -> None
        Install the gsdual log handler and set the DEBUG flag

    debug_print(message: str) -> None
        Log a debug message with timestamp when DEBUG is enabled

    stream_key(stage: str) -> int
        Stable integer key for a stage name (independent of PYTHONHASHSEED)

    spawn_rng(root_seed: int, stage: str, index: int = 0) -> np.random.Generator
        Independent generator for (stage, index) derived from the root seed

    cleanup_temp_files() -> None
        Remove all tracked temporary files

    install_signal_handlers() -> None
        Register cleanup on normal exit and on SIGINT/SIGTERM

Flow:
    1. cli.main() calls configure_logging() and install_signal_handlers()
    2. Every stage asks spawn_rng(seed, "<stage>", i) for its own stream, so
       running stages one by one or chained gives identical draws
    3. artifacts.py registers tmp files in temp_files until they are renamed
"""

import atexit
import logging
import os
import signal
import sys
import zlib
from typing import List

import numpy as np

from gsdual.constants import Colors, ExitCode

# temp_files: artifacts being written; each entry is removed again once renamed
temp_files: List[str] = []

# DEBUG: set to True via --verbose/--debug in cli.py
DEBUG = False

logger = logging.getLogger("gsdual")


class _DebugFormatter(logging.Formatter):
    """Formats records as '[DEBUG <timestamp>] message' in magenta."""

    def format(self, record: logging.LogRecord) -> str:
        ts = self.formatTime(record, '%Y-%m-%d %H:%M:%S')
        return f"{Colors.MAGENTA}[DEBUG {ts}] {record.getMessage()}{Colors.RESET}"


def configure_logging(debug: bool) -> None:
    """
    Install the gsdual log handler and set the global DEBUG flag.

    Safe to call more than once; only one handler is ever attached.

    Args:
        debug: Enable debug output
    """
    global DEBUG
    DEBUG = bool(debug)
    if not any(getattr(h, "_gsdual", False) for h in logger.handlers):
        handler = logging.StreamHandler(sys.stdout)
        handler.setFormatter(_DebugFormatter())
        handler._gsdual = True  # type: ignore[attr-defined]
        logger.addHandler(handler)
        logger.propagate = False
    logger.setLevel(logging.DEBUG if DEBUG else logging.WARNING)


def debug_print(message: str) -> None:
    """
    Log a debug message with timestamp when DEBUG is enabled.

    Args:
        message: Debug message to print

    Usage:
        debug_print("Solving grid point 3/500")
        # Output (if DEBUG=True): [DEBUG 2023-11-06 14:30:45] Solving grid point 3/500
    """
    if DEBUG:
        logger.debug(message)


def stream_key(stage: str) -> int:
    """Stable 32-bit key for a stage name (crc32, not the salted builtin hash)."""
    return zlib.crc32(stage.encode("utf-8"))


def spawn_rng(root_seed: int, stage: str, index: int = 0) -> np.random.Generator:
    """
    Independent random generator for one (stage, index) pair.

    Streams are derived with numpy's SeedSequence using the root seed as
    entropy and (stage key, index) as spawn key, so draws of one stage never
    depend on how many draws another stage made, nor on scheduling order.

    Args:
        root_seed: Root seed of the run (--seed)
        stage: Stage name, e.g. "initial", "explore", "validate"
        index: Trial or grid index within the stage

    Returns:
        A numpy Generator (PCG64)
    """
    seq = np.random.SeedSequence(entropy=int(root_seed), spawn_key=(stream_key(stage), int(index)))
    return np.random.default_rng(seq)


def cleanup_temp_files() -> None:
    """
    Remove all tracked temporary files.

    Errors during deletion are ignored so that cleanup never masks the
    error that triggered it.
    """
    debug_print(f"Cleanup starting for {len(temp_files)} temp file(s)")
    for temp_file in list(temp_files):
        try:
            if os.path.exists(temp_file):
                os.unlink(temp_file)
                debug_print(f"Removed temp file: {temp_file}")
        except OSError as e:
            debug_print(f"Error removing temp file: {temp_file} - {e}")
        temp_files.remove(temp_file)


def signal_handler(signum, frame) -> None:
    """
    Handle SIGINT/SIGTERM: drop half-written artifacts, then exit.

    Args:
        signum: Signal number
        frame: Current stack frame (unused)
    """
    signal_name = signal.Signals(signum).name if hasattr(signal, 'Signals') else f"signal {signum}"
    debug_print(f"Signal handler called: {signal_name} (signum={signum})")
    cleanup_temp_files()
    sys.exit(int(ExitCode.INTERRUPTED))


def install_signal_handlers() -> None:
    """Register cleanup on normal exit and on SIGINT/SIGTERM."""
    atexit.register(cleanup_temp_files)
    signal.signal(signal.SIGINT, signal_handler)
    signal.signal(signal.SIGTERM, signal_handler)
    debug_print("Registered atexit handler and signal handlers: SIGINT, SIGTERM")
