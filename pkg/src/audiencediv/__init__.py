"""Audience partisan diversity as a reliability signal for news recommendation."""

from .errors import ComputationError, InputError

__version__ = "0.1.0"

__all__ = ["ComputationError", "InputError", "__version__"]
