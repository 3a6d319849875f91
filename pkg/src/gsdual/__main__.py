"""
Entry point for running gsdual as a module.

Usage:
    python -m gsdual [OPTIONS]
    python -m gsdual --stage design --seed 3
"""

from gsdual.cli import main

if __name__ == '__main__':
    main()
