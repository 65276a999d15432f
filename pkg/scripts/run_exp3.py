"""Experiment 3: constellation shaping with the point-set loss at a fixed 10 dB."""

import sys

from _common import main

if __name__ == "__main__":
    sys.exit(main("exp3-shape", __doc__, target="ring"))
