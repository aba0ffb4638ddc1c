"""Numerical laboratory for higher-order parabolic systems with rough coefficients."""

__version__ = "0.1.0"
