"""Importance weighting for distribution shift via warm-started projected gradient descent."""

from .numerics import ContractError, EvaluationError, Rng

__version__ = "0.1.0"
__all__ = ["ContractError", "EvaluationError", "Rng", "__version__"]
