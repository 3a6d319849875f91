#!/usr/bin/env python3
"""
gsdual - Robust dual control by gain scheduling

SPDX-License-Identifier: GPL-3.0-or-later

Entry point for running from a source checkout without installing.
"""

import sys
from pathlib import Path

# Add src/ to path if running from project root
src_path = Path(__file__).parent / "src"
if src_path.exists() and str(src_path) not in sys.path:
    sys.path.insert(0, str(src_path))

from gsdual.cli import main

from gsdual.constants import __version__, __author__, __license__

if __name__ == '__main__':
    main()
