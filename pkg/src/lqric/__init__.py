"""Riccati equations, optimal state feedback and coprime factorizations for LTI systems."""

__version__ = "0.1.0"

from .errors import LqricError
from .system import Domain, StateSpaceSystem

__all__ = ["Domain", "LqricError", "StateSpaceSystem", "__version__"]
