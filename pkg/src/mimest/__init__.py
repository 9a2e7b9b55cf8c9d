"""Mutual-information estimation with marginal-preserving copula references."""

__version__ = "0.1.0"
