"""Asymptotic error distribution laboratory for the accelerated exponential Euler scheme."""

__version__ = "1.0.0"
