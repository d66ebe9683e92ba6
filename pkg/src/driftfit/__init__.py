"""Drift estimation for discretely observed jump diffusions with a
jump-filtered least-squares contrast."""

__version__ = "0.1.0"
