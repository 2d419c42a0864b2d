"""Numerical laboratory for transverse (in)stability of line solitary waves of gKP-I."""
from .errors import KPLabError
from .spectral import Field2D, Grid1D, Grid2D

__version__ = "0.1.0"

__all__ = ["Field2D", "Grid1D", "Grid2D", "KPLabError", "__version__"]
