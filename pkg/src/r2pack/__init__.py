"""Ranked-reward self-play solver for 2D/3D single-bin packing."""

__version__ = "0.1.0"

from .kernels import BACKEND

__all__ = ["BACKEND", "__version__"]
