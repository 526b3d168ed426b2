"""Numerical privacy accounting for composed, subsampled mechanisms."""

__version__ = "0.1.0"
