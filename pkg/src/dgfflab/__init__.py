"""Simulation laboratory for the planar discrete Gaussian free field."""

from dgfflab.constants import ALPHA, G, Constants, constants

__version__ = "0.1.0"

__all__ = ["ALPHA", "G", "Constants", "constants", "__version__"]
