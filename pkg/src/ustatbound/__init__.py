"""Gaussian-approximation bounds for vectors of Poisson U-statistics."""

__version__ = "0.1.0"
