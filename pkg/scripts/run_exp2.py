"""Experiment 2: QPSK 256/4 with the MSE auxiliary keeping the signal QPSK-like."""

import sys

from _common import main

if __name__ == "__main__":
    sys.exit(main("exp2-qpsk-mse", __doc__))
