"""
gsdual - Robust dual control by gain scheduling

This package identifies an uncertain linear system, designs an exploration
controller jointly with a gain-scheduled robust controller by semidefinite
programming, explores, re-estimates and resolves the final state feedback.

Package Structure:
    - constants: Version, colors, exit codes, numeric defaults
    - utils: Debug logging, seeded random streams, cleanup
    - output: User-facing messages
    - errors: Exception hierarchy
    - dependencies: SDP backend detection
    - matrix_kit: Block matrices and definiteness tests
    - plant: Systems, policies, simulation
    - estimate: Least squares and credibility regions
    - uncertainty: Ellipsoidal uncertainty sets
    - sdp_core: Conic program representation and CVXPY adapter
    - lmi_blocks: Matrix inequalities of the design
    - synthesis: Design pipeline
    - validate: Independent checks
    - config: Scenario files
    - artifacts: Output directory files
    - commands: Stage commands
    - cli: Command-line interface

Usage:
    from gsdual import main
    main()
"""

from gsdual.constants import __author__, __license__, __version__

# Import main entry point for easy access
from gsdual.cli import main

__all__ = ["main", "__version__", "__author__", "__license__"]
