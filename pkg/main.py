"""gibbsfluct — Main entry point.

Dispatches to the orchestrator's subcommands.

Usage:
    python main.py simulate --config configs/strauss.toml --out runs/strauss
    python main.py analyze --out runs/strauss
    python main.py bounds c_d --dim 2
"""

import sys

from orchestrator import main

if __name__ == "__main__":
    sys.exit(main())
