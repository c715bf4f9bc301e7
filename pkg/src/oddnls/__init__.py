"""Numerical laboratory for odd solutions of the focusing supercritical 1D NLS."""

from .grid import Field, Grid
from .soliton import GroundStateParams

__all__ = ["Field", "Grid", "GroundStateParams"]
__version__ = "0.1.0"
