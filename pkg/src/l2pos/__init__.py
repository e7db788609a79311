"""Numerical checks of partial positivity via twisted L² estimates for ∂̄."""

__version__ = "0.1.0"
