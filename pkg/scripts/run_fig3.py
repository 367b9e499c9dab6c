"""Figure 3 experiment at desk scale (pass --paper-scale for the full setting)."""

import sys

from _common import main

if __name__ == "__main__":
    sys.exit(main("fig3"))
