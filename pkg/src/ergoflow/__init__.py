"""Continuous-time polynomial ergodic averages: flows, quadrature and diagnostics."""

__version__ = "0.1.0"
