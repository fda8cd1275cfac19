"""Numerical and exact tools for the spectrum of the partial theta function."""
from __future__ import annotations

__version__ = "0.1.0"

from .errors import ThetaLabError

__all__ = ["ThetaLabError", "__version__"]
