"""Numerical laboratory for an acid-mediated tumor invasion model."""

from .model import ModelParams, StateKind, SteadyState

__all__ = ["ModelParams", "StateKind", "SteadyState"]
__version__ = "0.1.0"
