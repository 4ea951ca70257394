"""Time-varying barrier-Lyapunov adaptive control for Euler-Lagrange systems."""

__version__ = "0.1.0"
