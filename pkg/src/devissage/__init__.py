"""Workbench for l-primary devissage computations on singular surface models."""

from .errors import DevissageError

__version__ = "0.1.0"

__all__ = ["DevissageError", "__version__"]
