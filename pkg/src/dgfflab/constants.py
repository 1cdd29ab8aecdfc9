"""Normalization constants of the square-lattice DGFF."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Constants:
    g: float = 2.0 / math.pi
    alpha: float = math.sqrt(2.0 * math.pi)
    c_star_convention: float = 1.0


G = 2.0 / math.pi
ALPHA = math.sqrt(2.0 * math.pi)
SQRT_G = math.sqrt(G)
# slope of the triangular-lattice potential kernel
TAU = math.sqrt(3.0) / math.pi
EULER_GAMMA = 0.57721566490153286061


def constants() -> Constants:
    return Constants()
