"""Potential kernels of the simple random walk on the square and triangular lattices.

The square-lattice kernel satisfies a(0) = 0 and (1/4) sum_{y~x} a(y) - a(x) = 1{x=0}.
Three independent evaluation routes are provided:

* exact: McCrea-Whipple recursion in Q + Q/pi (every value is r0 + r1/pi with
  rational r0, r1), evaluated in high precision;
* integral: a one-dimensional Fourier integral, accurate to ~1e-13 at any range;
* asymptotic: g log|x| + c0 for |x| beyond 1e6, with c0 fitted on [1e3, 1e4].
"""

from __future__ import annotations

import math
import warnings
from fractions import Fraction
from functools import lru_cache

import mpmath
import numpy as np
from scipy import integrate

from dgfflab.constants import G

EXACT_MAX = 48
ASYMPTOTIC_RADIUS = 1.0e6

_exact_table: dict[tuple[int, int], tuple[Fraction, Fraction]] = {}
_exact_size = -1


def _extend_exact(M: int) -> None:
    """Fill a(x, y) for 0 <= y <= x <= M (values as (r0, r1) meaning r0 + r1/pi)."""
    global _exact_size
    if M <= _exact_size:
        return
    T = _exact_table
    zero = Fraction(0)

    def get(x, y):
        x, y = abs(x), abs(y)
        if y > x:
            x, y = y, x
        return T[(x, y)]

    # diagonal: a(n, n) = (4/pi) sum_{k<=n} 1/(2k-1)
    acc = zero
    T[(0, 0)] = (zero, zero)
    for n in range(1, M + 1):
        acc += Fraction(1, 2 * n - 1)
        T[(n, n)] = (zero, 4 * acc)
    T[(1, 0)] = (Fraction(1), zero)
    # offset one: harmonicity at (n, n)
    for n in range(1, M):
        a = T[(n, n)]
        b = T[(n, n - 1)]
        T[(n + 1, n)] = (2 * a[0] - b[0], 2 * a[1] - b[1])
    # offset d >= 2: harmonicity at (y+d-1, y)
    for d in range(2, M + 1):
        for y in range(0, M - d + 1):
            x = y + d
            p = get(x - 1, y)
            q = get(x - 2, y)
            r = get(x - 1, y + 1)
            s = get(x - 1, y - 1)
            T[(x, y)] = (4 * p[0] - q[0] - r[0] - s[0], 4 * p[1] - q[1] - r[1] - s[1])
    _exact_size = M


def potential_kernel_exact(x: int, y: int) -> tuple[Fraction, Fraction]:
    """(r0, r1) with a(x, y) = r0 + r1/pi, from the exact recursion."""
    x, y = abs(int(x)), abs(int(y))
    if y > x:
        x, y = y, x
    _extend_exact(max(x, 8))
    return _exact_table[(x, y)]


def _eval_exact(r0: Fraction, r1: Fraction) -> float:
    big = max(abs(r0.numerator), abs(r1.numerator), 1)
    dps = 30 + len(str(big))
    with mpmath.workdps(dps):
        v = mpmath.mpf(r0.numerator) / r0.denominator + (mpmath.mpf(r1.numerator) / r1.denominator) / mpmath.pi
        return float(v)


@lru_cache(maxsize=None)
def _exact_float(x: int, y: int) -> float:
    return _eval_exact(*potential_kernel_exact(x, y))


def exact_table(M: int) -> np.ndarray:
    """Float array A[i, j] = a(i, j) for 0 <= i, j <= M (exact route)."""
    out = np.empty((M + 1, M + 1))
    for i in range(M + 1):
        for j in range(i + 1):
            out[i, j] = out[j, i] = _exact_float(i, j)
    return out


def _panel_quad(f, cut: float, freq: float, rtol: float) -> float:
    """Integrate f over [0, pi] with panels resolving the oscillation on [0, cut]."""
    pts = np.linspace(0.0, cut, int(min(400, 8 + 2 * freq * cut / math.pi)) + 1)
    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in zip(pts[:-1], pts[1:]):
            total += integrate.quad(f, a, b, epsabs=1e-15, epsrel=rtol, limit=200)[0]
        if cut < math.pi:
            total += integrate.quad(f, cut, math.pi, epsabs=1e-15, epsrel=rtol, limit=400)[0]
    return total


def potential_kernel_integral(x: int, y: int) -> float:
    """a(x) = (1/pi) int_0^pi 2(1 - cos(x1 t) e^{-|x2| s}) / sinh s dt, cosh s = 2 - cos t."""
    x1, x2 = abs(int(x)), abs(int(y))
    if x1 > x2:
        x1, x2 = x2, x1
    if x2 == 0:
        return 0.0

    def f(t):
        s = math.acosh(2.0 - math.cos(t)) if t > 1e-8 else t
        if s == 0.0:
            return 2.0 * x2
        a = x2 * s
        num = -math.expm1(-a) + math.exp(-a) * 2.0 * math.sin(x1 * t / 2.0) ** 2
        return 2.0 * num / math.sinh(s)

    cut = min(math.pi, 80.0 / x2)
    return _panel_quad(f, cut, x1, 1e-13) / math.pi


@lru_cache(maxsize=1)
def fitted_c0() -> float:
    """Least-squares constant of a(x) - g log|x| over |x| in [1e3, 1e4]."""
    rng = np.random.default_rng(12345)
    res = []
    for r in np.geomspace(1e3, 1e4, 12):
        th = rng.uniform(0, math.pi / 4)
        x1, x2 = int(round(r * math.cos(th))), int(round(r * math.sin(th)))
        res.append(potential_kernel_integral(x1, x2) - G * math.log(math.hypot(x1, x2)))
    return float(np.mean(res))


def potential_kernel(x, y: int | None = None) -> float:
    """Square-lattice potential kernel a(x) for x in Z^2.

    Exact recursion for max(|x1|, |x2|) <= EXACT_MAX, Fourier integral up to
    |x| = 1e6, and the fitted logarithmic asymptotic beyond.
    """
    if y is None:
        x, y = x
    x, y = abs(int(x)), abs(int(y))
    if max(x, y) <= EXACT_MAX:
        return _exact_float(max(x, y), min(x, y))
    r = math.hypot(x, y)
    if r > ASYMPTOTIC_RADIUS:
        return G * math.log(r) + fitted_c0()
    return potential_kernel_integral(x, y)


class PotentialKernelTable:
    """Vectorized lookup of a(dx, dy) for a bounded range of differences."""

    def __init__(self, M: int):
        self.M = int(M)
        if self.M <= EXACT_MAX:
            self.table = exact_table(self.M)
        else:
            t = exact_table(EXACT_MAX)
            full = np.empty((self.M + 1, self.M + 1))
            for i in range(self.M + 1):
                for j in range(i + 1):
                    v = t[i, j] if i <= EXACT_MAX else potential_kernel(i, j)
                    full[i, j] = full[j, i] = v
            self.table = full

    def __call__(self, dx, dy) -> np.ndarray:
        return self.table[np.abs(dx), np.abs(dy)]


# ---------------------------------------------------------------------------
# triangular lattice, basis e1 = (1, 0), e2 = (1/2, sqrt(3)/2)


def triangular_potential_kernel(m: int, n: int) -> float:
    """a_T(m e1 + n e2), normalized by a_T(0) = 0 and a_T(neighbor) = 1."""
    m, n = int(m), int(n)
    if m == 0 and n == 0:
        return 0.0
    # reflect so that |n| carries the exponentially damped direction
    if n < 0:
        m, n = -m, -n
    X = m + n / 2.0

    def f(t):
        A = 3.0 - math.cos(t)
        B = 2.0 * math.cos(t / 2.0)
        disc = math.sqrt(max(A * A - B * B, 0.0))
        if disc < 1e-300:
            return 1.5 * n  # finite limit at t -> 0
        rho = (A - disc) / B if B != 0.0 else 0.0
        decay = rho**n
        num = 1.0 - math.cos(X * t) * decay
        return 3.0 * num / disc

    cut = min(math.pi, 80.0 / max(n, 1))
    return _panel_quad(f, cut, max(abs(X), n, 1.0), 1e-12) / math.pi


def fit_log_slope(radii, values) -> float:
    """Least-squares slope of values against log(radii)."""
    lr = np.log(np.asarray(radii, float))
    v = np.asarray(values, float)
    A = np.column_stack([lr, np.ones_like(lr)])
    return float(np.linalg.lstsq(A, v, rcond=None)[0][0])
