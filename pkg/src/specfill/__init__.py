"""Learned spectral filling: hide a second message inside a fixed BPSK/QPSK signal."""

__version__ = "0.1.0"
