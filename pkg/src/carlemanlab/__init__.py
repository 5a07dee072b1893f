"""Numerical laboratory for Carleman estimates of higher-order evolution operators."""
from ._accel import backend
from .polycalc import OperatorSymbol, Ode1Operator, Polynomial

__version__ = "0.1.0"

__all__ = ["OperatorSymbol", "Ode1Operator", "Polynomial", "backend", "__version__"]
