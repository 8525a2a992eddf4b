"""Partially retargeted balancing weights for causal effect estimation."""

__version__ = "0.1.0"
