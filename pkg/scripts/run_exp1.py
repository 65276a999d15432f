"""Experiment 1: message B rides on the unused Q rail of BPSK (32/32 bits)."""

import sys

from _common import main

if __name__ == "__main__":
    sys.exit(main("exp1-bpsk", __doc__))
