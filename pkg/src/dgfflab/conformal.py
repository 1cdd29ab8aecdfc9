"""Continuum potential theory: harmonic measure, Green function, conformal radius.

Normalization: G^D is the integral kernel of (-1/4 Laplacian)^{-1} with Dirichlet
condition, so G^D(x, y) = -g log|x - y| + O(1) as y -> x.

Two independent routes are implemented for every quantity:

* conformal closed forms on discs, axis-aligned rectangles (Jacobi sn onto the
  upper half-plane) and equilateral triangles (Schwarz-Christoffel map from the
  disc), extended to disjoint unions of such shapes componentwise;
* Poisson-kernel quadrature: the exit distribution of Brownian motion (analytic
  on the disc, a sine series on rectangles, the lattice limit elsewhere)
  integrated against log|z - y|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize, special

from dgfflab.constants import G
from dgfflab.domain import ContinuumDomain, Disc, Polygon, Rectangle, discretize
from dgfflab.errors import (
    MethodUnsupported,
    ParameterOutOfDisc,
    PointOutsideDomain,
    QuadratureUnconverged,
)


def _cplx(x) -> np.ndarray:
    a = np.asarray(x)
    if np.iscomplexobj(a):
        return a.astype(complex)
    a = a.astype(float)
    if a.ndim >= 1 and a.shape[-1] == 2:
        return a[..., 0] + 1j * a[..., 1]
    return a.astype(complex)


# ---------------------------------------------------------------------------
# Mobius automorphisms of the unit disc


@dataclass(frozen=True)
class Mobius:
    """f(z) = e^{i theta} (z - a) / (1 - conj(a) z)."""

    a: complex
    theta: float = 0.0

    def __post_init__(self):
        if abs(self.a) >= 1:
            raise ParameterOutOfDisc(f"|a| = {abs(self.a)} must be < 1")

    def __call__(self, z):
        z = _cplx(z)
        return np.exp(1j * self.theta) * (z - self.a) / (1 - np.conj(self.a) * z)

    def derivative(self, z):
        z = _cplx(z)
        a = self.a
        return np.exp(1j * self.theta) * (1 - abs(a) ** 2) / (1 - np.conj(a) * z) ** 2

    def inverse(self, w):
        w = _cplx(w) * np.exp(-1j * self.theta)
        return (w + self.a) / (1 + np.conj(self.a) * w)

    def image_of_disc(self, c: complex, r: float) -> Disc:
        """Image of the disc |z - c| < r (closure inside the unit disc)."""
        pts = c + r * np.exp(1j * np.array([0.0, 2 * math.pi / 3, 4 * math.pi / 3]))
        w = self(pts)
        # circumcircle of three image points
        ax, ay = w[0].real, w[0].imag
        bx, by = w[1].real, w[1].imag
        cx, cy = w[2].real, w[2].imag
        d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
        ux = ((ax**2 + ay**2) * (by - cy) + (bx**2 + by**2) * (cy - ay) + (cx**2 + cy**2) * (ay - by)) / d
        uy = ((ax**2 + ay**2) * (cx - bx) + (bx**2 + by**2) * (ax - cx) + (cx**2 + cy**2) * (bx - ax)) / d
        return Disc(float(ux), float(uy), float(abs(w[0] - (ux + 1j * uy))))


def mobius(a, theta: float = 0.0) -> Mobius:
    return Mobius(complex(*a) if np.ndim(a) else complex(a), float(theta))


# ---------------------------------------------------------------------------
# closed-form maps for primitive shapes


def _disc_green_coords(u, v):
    return G * np.log(np.abs(1 - np.conj(u) * v) / np.abs(u - v))


class _DiscMap:
    """Conformal data of the disc |z - c| < R."""

    def __init__(self, s: Disc):
        self.c = complex(s.cx, s.cy)
        self.R = float(s.r)

    def contains(self, z):
        return np.abs(z - self.c) < self.R

    def coords(self, z):
        return (z - self.c) / self.R

    green_coords = staticmethod(lambda u, v: _disc_green_coords(u, v))

    def green(self, x, y):
        return _disc_green_coords(self.coords(x), self.coords(y))

    def rad(self, x):
        return (self.R**2 - np.abs(x - self.c) ** 2) / self.R


def _sn_cn_dn_complex(z, m):
    """Jacobi elliptic functions of complex argument via addition formulas."""
    u = np.real(z)
    v = np.imag(z)
    s, c, d, _ = special.ellipj(u, m)
    s1, c1, d1, _ = special.ellipj(v, 1.0 - m)
    den = c1**2 + m * s**2 * s1**2
    sn = (s * d1 + 1j * c * d * s1 * c1) / den
    cn = (c * c1 - 1j * s * d * s1 * d1) / den
    dn = (d * c1 * d1 - 1j * m * s * c * s1) / den
    return sn, cn, dn


@lru_cache(maxsize=128)
def _modulus_for_aspect(ratio: float) -> float:
    """Parameter m with K(1-m) / (2 K(m)) = ratio (height / width)."""

    def f(q):
        # K(m) = ellipkm1(1 - m), with m = expit(q) and 1 - m = expit(-q)
        m, m1 = special.expit(q), special.expit(-q)
        return math.log(special.ellipkm1(m) / (2 * special.ellipkm1(m1))) - math.log(ratio)

    q = optimize.brentq(f, -40.0, 40.0, xtol=1e-14, maxiter=500)
    return float(special.expit(q))


class _RectangleMap:
    """Jacobi sn maps (-K, K) x (0, K') onto the upper half-plane."""

    def __init__(self, s: Rectangle):
        self.x0, self.y0 = s.x0, s.y0
        w, h = s.x1 - s.x0, s.y1 - s.y0
        self.m = _modulus_for_aspect(h / w)
        self.K = float(special.ellipk(self.m))
        self.lam = 2 * self.K / w
        self.box = s

    def contains(self, z):
        s = self.box
        return (z.real > s.x0) & (z.real < s.x1) & (z.imag > s.y0) & (z.imag < s.y1)

    def _s(self, z):
        zeta = self.lam * (z - complex(self.x0, self.y0)) - self.K
        sn, cn, dn = _sn_cn_dn_complex(zeta, self.m)
        return sn, cn * dn * self.lam

    def coords(self, z):
        return self._s(z)[0]

    @staticmethod
    def green_coords(sx, sy):
        return G * np.log(np.abs((sx - np.conj(sy)) / (sx - sy)))

    def green(self, x, y):
        return self.green_coords(self.coords(x), self.coords(y))

    def rad(self, x):
        s, ds = self._s(x)
        return 2 * s.imag / np.abs(ds)


class _TriangleMap:
    """F(w) = w 2F1(1/3, 2/3; 4/3; w^3) maps the unit disc onto an equilateral triangle."""

    F1 = math.gamma(1 / 3) ** 2 / (3 * math.gamma(2 / 3))

    def __init__(self, s: Polygon):
        v = np.array(s.vertices)
        self.center = complex(*v.mean(axis=0))
        # affine factor sending the reference triangle (vertex at F(1)) to this one
        self.scale = (complex(*v[0]) - self.center) / self.F1
        self.poly = s

    @staticmethod
    def F(w):
        return w * special.hyp2f1(1 / 3, 2 / 3, 4 / 3, w**3)

    @staticmethod
    def dF(w):
        return (1 - w**3) ** (-2 / 3)

    def contains(self, z):
        pts = np.column_stack([np.real(z).ravel(), np.imag(z).ravel()])
        return self.poly.contains_open(pts).reshape(np.shape(z))

    def inverse(self, z):
        """Preimage in the unit disc by continuation from 0 plus Newton polishing."""
        target = (np.asarray(z, complex) - self.center) / self.scale
        flat = target.ravel()
        w = np.zeros_like(flat)
        with np.errstate(divide="ignore", invalid="ignore"):
            for t in np.linspace(0.1, 1.0, 10):
                goal = t * flat
                for _ in range(30):
                    step = (self.F(w) - goal) / self.dF(w)
                    w = w - step
                    r = np.abs(w)
                    w = np.where(r >= 1, w / r * (0.5 + 0.5 * np.minimum(r, 1.0)) * 0.999, w)
                    if np.max(np.abs(step), initial=0.0) < 1e-15:
                        break
        res = np.abs(self.F(w) - flat)
        if np.any(res > 1e-10 * np.maximum(1.0, np.abs(flat))):
            raise QuadratureUnconverged("Schwarz-Christoffel inverse did not converge")
        return w.reshape(target.shape)

    def coords(self, z):
        return self.inverse(z)

    green_coords = staticmethod(lambda u, v: _disc_green_coords(u, v))

    def green(self, x, y):
        return _disc_green_coords(self.inverse(x), self.inverse(y))

    def rad(self, x):
        w = self.inverse(x)
        return np.abs(self.scale) * np.abs(self.dF(w)) * (1 - np.abs(w) ** 2)


def component_map(shape):
    """Closed-form conformal data for a primitive shape, or None."""
    if isinstance(shape, Disc):
        return _DiscMap(shape)
    if isinstance(shape, Rectangle):
        return _RectangleMap(shape)
    if isinstance(shape, Polygon) and shape.is_equilateral_triangle:
        return _TriangleMap(shape)
    return None


def has_closed_form(D: ContinuumDomain) -> bool:
    return not D.holes and D.shrink == 0.0 and all(component_map(c) is not None for c in D.components)


@lru_cache(maxsize=64)
def _maps(D: ContinuumDomain):
    return tuple(component_map(c) for c in D.components)


def _component_ids(D: ContinuumDomain, z: np.ndarray) -> np.ndarray:
    pts = np.column_stack([z.real.ravel(), z.imag.ravel()])
    return D.component_index(pts).reshape(z.shape)


# ---------------------------------------------------------------------------
# harmonic measure


@dataclass(frozen=True)
class BoundaryMeasure:
    """Weighted boundary sample approximating the exit distribution from x."""

    source: tuple
    points: np.ndarray
    weights: np.ndarray
    method: str

    def integrate(self, f) -> float:
        z = self.points[:, 0] + 1j * self.points[:, 1]
        return float(np.sum(self.weights * f(z)))

    def total(self) -> float:
        return float(self.weights.sum())


def poisson_kernel_disc(center: complex, R: float, x: complex, z):
    """Density of harmonic measure on the circle |z - c| = R w.r.t. arc length."""
    xp = (x - center) / R
    zp = (np.asarray(z) - center) / R
    return (1 - abs(xp) ** 2) / (2 * math.pi * R * np.abs(zp - xp) ** 2)


def _disc_nodes(c: complex, R: float, x: complex, min_nodes: int = 512):
    dist = 1 - abs((x - c) / R)
    M = int(min(2**21, max(min_nodes, 2 ** math.ceil(math.log2(60.0 / max(dist, 1e-12))))))
    th = 2 * math.pi * np.arange(M) / M
    z = c + R * np.exp(1j * th)
    w = poisson_kernel_disc(c, R, x, z) * (2 * math.pi * R / M)
    return z, w


def _rectangle_sides(s: Rectangle):
    """(a, b, local(z) -> (s, t), point(s)) for the four sides, each seen as the bottom side."""
    w, h = s.x1 - s.x0, s.y1 - s.y0
    return [
        (w, h, lambda z: (z.real - s.x0, z.imag - s.y0), lambda u: (s.x0 + u) + 1j * s.y0),
        (w, h, lambda z: (z.real - s.x0, s.y1 - z.imag), lambda u: (s.x0 + u) + 1j * s.y1),
        (h, w, lambda z: (z.imag - s.y0, z.real - s.x0), lambda u: s.x0 + 1j * (s.y0 + u)),
        (h, w, lambda z: (z.imag - s.y0, s.x1 - z.real), lambda u: s.x1 + 1j * (s.y0 + u)),
    ]


def _gl_nodes(a: float, n_panels: int, order: int = 16):
    g, gw = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, a, n_panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * g[None, :]).ravel()
    weights = (half[:, None] * gw[None, :]).ravel()
    return nodes, weights


def _rect_series_terms(a: float, b: float, s1: float, s2: float, tol: float = 1e-17):
    """Mode weights (2/a) sin(k pi s1/a) sinh(k pi (b - s2)/a) / sinh(k pi b / a)."""
    kmax = int(min(200_000, max(64, math.ceil(-math.log(tol) * a / (math.pi * max(s2, 1e-12))))))
    k = np.arange(1, kmax + 1)
    q = k * math.pi / a
    # sinh ratio computed stably as exp(-q s2) (1 - e^{-2q(b-s2)}) / (1 - e^{-2 q b})
    ratio = np.exp(-q * s2) * (-np.expm1(-2 * q * (b - s2))) / (-np.expm1(-2 * q * b))
    return k, (2.0 / a) * np.sin(q * s1) * ratio


def rectangle_harmonic_measure(s: Rectangle, x: complex, panels: int = 64) -> BoundaryMeasure:
    pts, wts = [], []
    for a, b, local, point in _rectangle_sides(s):
        s1, s2 = local(np.asarray(x))
        nodes, qw = _gl_nodes(a, panels)
        k, coef = _rect_series_terms(a, b, float(s1), float(s2))
        dens = np.zeros_like(nodes)
        for i0 in range(0, len(k), 4096):
            kk = k[i0 : i0 + 4096]
            dens += np.sin(np.outer(nodes, kk) * math.pi / a) @ coef[i0 : i0 + 4096]
        z = point(nodes)
        pts.append(np.column_stack([z.real, z.imag]))
        wts.append(dens * qw)
    return BoundaryMeasure(tuple(np.atleast_1d([x.real, x.imag])), np.vstack(pts), np.concatenate(wts), "rectangle_series")


def _rectangle_log_integral(s: Rectangle, x: complex, y: complex) -> float:
    """int Pi(x, dz) log|z - y| on a rectangle by sine-coefficient quadrature."""
    total = 0.0
    for a, b, local, point in _rectangle_sides(s):
        s1, s2 = (float(v) for v in local(np.asarray(x)))
        t1, t2 = (float(v) for v in local(np.asarray(y)))
        k, coef = _rect_series_terms(a, b, s1, s2)
        # sine coefficients of u -> log|point(u) - y| decay like exp(-k pi t2 / a)
        kcut = int(min(len(k), max(64, math.ceil(40 * a / (math.pi * max(t2, 1e-12))))))
        k, coef = k[:kcut], coef[:kcut]
        n_pan = int(min(4096, max(32, math.ceil(8 * a / max(min(t2, s2), 1e-9)))))
        nodes, qw = _gl_nodes(a, n_pan)
        f = np.log(np.abs(point(nodes) - y)) * qw
        for i0 in range(0, len(k), 2048):
            kk = k[i0 : i0 + 2048]
            mom = np.sin(np.outer(kk, nodes) * math.pi / a) @ f
            total += float(coef[i0 : i0 + 2048] @ mom)
    return total


def lattice_harmonic_measure(D: ContinuumDomain, x, N: int) -> BoundaryMeasure:
    from dgfflab.potential import harmonic_measure_discrete

    L = discretize(D, N)
    xv = np.rint(np.asarray(x, float) * N).astype(int)
    row = harmonic_measure_discrete(L, tuple(xv))
    return BoundaryMeasure(tuple(np.asarray(x, float)), row.boundary / N, row.probabilities, f"lattice_limit({N})")


def continuum_harmonic_measure(D: ContinuumDomain, x, method: str = "auto", N: int = 512) -> BoundaryMeasure:
    """Exit distribution of Brownian motion from D started at x."""
    xz = complex(*np.asarray(x, float))
    if not D.contains(np.array([[xz.real, xz.imag]]))[0]:
        raise PointOutsideDomain(f"{x} is not in the domain")
    comp = D.components[D.component_index(np.array([[xz.real, xz.imag]]))[0]]
    single = not D.holes and D.shrink == 0.0
    if method == "auto":
        method = "disc_analytic" if single and isinstance(comp, Disc) else (
            "rectangle_series" if single and isinstance(comp, Rectangle) else "lattice_limit"
        )
    if method == "disc_analytic":
        if not (single and isinstance(comp, Disc)):
            raise MethodUnsupported("disc_analytic needs a disc")
        z, w = _disc_nodes(comp.center, comp.r, xz)
        return BoundaryMeasure((xz.real, xz.imag), np.column_stack([z.real, z.imag]), w, "disc_analytic")
    if method == "rectangle_series":
        if not (single and isinstance(comp, Rectangle)):
            raise MethodUnsupported("rectangle_series needs a rectangle")
        return rectangle_harmonic_measure(comp, xz)
    if method == "lattice_limit":
        return lattice_harmonic_measure(D, (xz.real, xz.imag), N)
    raise MethodUnsupported(f"unknown method {method!r}")


def poisson_log_integral(
    D: ContinuumDomain, x, y, method: str = "auto", N: int = 256, tol: float = 1e-2
) -> float:
    """int Pi^D(x, dz) log|z - y| by quadrature of the harmonic measure."""
    xz = complex(*np.asarray(x, float))
    yz = complex(*np.asarray(y, float))
    p = np.array([[xz.real, xz.imag]])
    if not D.contains(p)[0]:
        raise PointOutsideDomain(f"{x} is not in the domain")
    comp = D.components[D.component_index(p)[0]]
    clean = not D.holes and D.shrink == 0.0
    if method == "auto":
        method = "disc_analytic" if clean and isinstance(comp, Disc) else (
            "rectangle_series" if clean and isinstance(comp, Rectangle) else "lattice_limit"
        )
    if method == "disc_analytic" and clean and isinstance(comp, Disc):
        z, w = _disc_nodes(comp.center, comp.r, xz)
        dist = abs(yz - comp.center)
        if dist > 0.5 * comp.r:
            zz, ww = _disc_nodes(comp.center, comp.r, xz, min_nodes=int(min(2**21, 64 / max(1 - dist / comp.r, 1e-9))))
            z, w = zz, ww
        return float(np.sum(w * np.log(np.abs(z - yz))))
    if method == "rectangle_series" and clean and isinstance(comp, Rectangle):
        return _rectangle_log_integral(comp, xz, yz)
    if method != "lattice_limit" and method != "disc_analytic" and method != "rectangle_series":
        raise MethodUnsupported(f"unknown method {method!r}")
    # lattice limit with one Richardson step, converged when N and 2N agree
    vals = []
    for n in (N, 2 * N):
        hm = lattice_harmonic_measure(D, (xz.real, xz.imag), n)
        vals.append(hm.integrate(lambda z: np.log(np.abs(z - yz))))
    if abs(vals[1] - vals[0]) > tol:
        raise QuadratureUnconverged(f"lattice quadrature N={N} vs {2 * N} differ by {abs(vals[1] - vals[0]):.3g}")
    return 2 * vals[1] - vals[0]


# ---------------------------------------------------------------------------
# Green function, binding covariance, conformal radius


def continuum_green(D: ContinuumDomain, x, y, method: str = "conformal") -> np.ndarray:
    """G^D(x, y) for x != y (vectorized over broadcastable point arrays)."""
    xz = _cplx(x)
    yz = _cplx(y)
    xz, yz = np.broadcast_arrays(xz, yz)
    if method == "quadrature" or not has_closed_form(D):
        out = np.empty(xz.shape)
        for idx in np.ndindex(xz.shape):
            a, b = xz[idx], yz[idx]
            ia = D.component_index(np.array([[a.real, a.imag]]))[0]
            ib = D.component_index(np.array([[b.real, b.imag]]))[0]
            if ia < 0 or ib < 0:
                raise PointOutsideDomain("point outside the domain")
            if ia != ib:
                out[idx] = 0.0
                continue
            I = poisson_log_integral(D, (a.real, a.imag), (b.real, b.imag))
            out[idx] = -G * math.log(abs(a - b)) + G * I
        return out
    maps = _maps(D)
    ia = _component_ids(D, xz)
    ib = _component_ids(D, yz)
    if np.any(ia < 0) or np.any(ib < 0):
        raise PointOutsideDomain("point outside the domain")
    out = np.zeros(xz.shape)
    for k, mp in enumerate(maps):
        sel = (ia == k) & (ib == k)
        if np.any(sel):
            out[sel] = mp.green(xz[sel], yz[sel])
    return out


def green_matrix_closed(D: ContinuumDomain, pts) -> np.ndarray:
    """Matrix G^D(z_i, z_j) off the diagonal (diagonal set to nan), one map evaluation per point."""
    z = _cplx(pts).ravel()
    if not has_closed_form(D):
        raise MethodUnsupported("green_matrix_closed needs closed-form components")
    ids = _component_ids(D, z)
    if np.any(ids < 0):
        raise PointOutsideDomain("point outside the domain")
    out = np.zeros((len(z), len(z)))
    for k, mp in enumerate(_maps(D)):
        sel = np.nonzero(ids == k)[0]
        if len(sel) == 0:
            continue
        u = mp.coords(z[sel])
        with np.errstate(divide="ignore", invalid="ignore"):
            out[np.ix_(sel, sel)] = mp.green_coords(u[:, None], u[None, :])
    np.fill_diagonal(out, np.nan)
    return out


def binding_cov_matrix(D: ContinuumDomain, Dt: ContinuumDomain, pts) -> np.ndarray:
    """Matrix C^{D, Dt}(z_i, z_j) over distinct points via the closed forms."""
    z = _cplx(pts).ravel()
    with np.errstate(invalid="ignore"):
        # coincident points give inf - inf; they are overwritten below
        C = green_matrix_closed(D, z) - green_matrix_closed(Dt, z)
    d = G * (np.log(conformal_radius(D, z)) - np.log(conformal_radius(Dt, z)))
    same = np.abs(z[:, None] - z[None, :]) < 1e-14
    C[same] = np.broadcast_to(d[:, None], C.shape)[same]
    return 0.5 * (C + C.T)


def conformal_radius(D: ContinuumDomain, x, method: str = "conformal", N: int = 256) -> np.ndarray:
    """rad_D(x) = exp int Pi^D(x, dz) log|z - x|."""
    xz = _cplx(x)
    if method == "quadrature" or not has_closed_form(D):
        out = np.empty(xz.shape)
        for idx in np.ndindex(xz.shape):
            a = xz[idx]
            out[idx] = math.exp(poisson_log_integral(D, (a.real, a.imag), (a.real, a.imag), N=N))
        return out
    ids = _component_ids(D, xz)
    if np.any(ids < 0):
        raise PointOutsideDomain("point outside the domain")
    out = np.zeros(xz.shape)
    for k, mp in enumerate(_maps(D)):
        sel = ids == k
        if np.any(sel):
            out[sel] = mp.rad(xz[sel])
    return out


def binding_cov(D: ContinuumDomain, Dt: ContinuumDomain | None, x, y, method: str = "conformal") -> np.ndarray:
    """C^{D, Dt}(x, y) = G^D(x, y) - G^{Dt}(x, y), finite on the diagonal.

    ``conformal`` uses the closed forms, with diagonal g log(rad_D / rad_Dt);
    ``quadrature`` integrates both harmonic measures against log|z - y|.
    """
    xz, yz = np.broadcast_arrays(_cplx(x), _cplx(y))
    if Dt is None or Dt == D:
        return np.zeros(xz.shape)
    pts = np.column_stack([xz.real.ravel(), xz.imag.ravel()])
    qts = np.column_stack([yz.real.ravel(), yz.imag.ravel()])
    if not (np.all(Dt.contains(pts)) and np.all(Dt.contains(qts))):
        raise PointOutsideDomain("binding covariance needs points inside the subdomain")
    if method == "quadrature":
        out = np.empty(xz.shape)
        for idx in np.ndindex(xz.shape):
            a, b = xz[idx], yz[idx]
            same = Dt.component_index(np.array([[a.real, a.imag], [b.real, b.imag]]))
            I_D = poisson_log_integral(D, (a.real, a.imag), (b.real, b.imag))
            if same[0] == same[1]:
                I_t = poisson_log_integral(Dt, (a.real, a.imag), (b.real, b.imag))
                out[idx] = G * (I_D - I_t)
            else:
                # G^{Dt} vanishes across components
                out[idx] = -G * math.log(abs(a - b)) + G * I_D
        return out
    diag = np.abs(xz - yz) < 1e-14
    out = np.empty(xz.shape)
    if np.any(diag):
        out[diag] = G * (np.log(conformal_radius(D, xz[diag])) - np.log(conformal_radius(Dt, xz[diag])))
    off = ~diag
    if np.any(off):
        out[off] = continuum_green(D, xz[off], yz[off]) - continuum_green(Dt, xz[off], yz[off])
    return out


@dataclass
class DensityField:
    """psi^D = rad_D^2 (with c_* = 1) on cell centers of a rectangular grid."""

    centers: np.ndarray
    values: np.ndarray
    cell_area: float
    shape: tuple = ()

    def integral(self, mask=None) -> float:
        v = self.values if mask is None else self.values[np.asarray(mask, bool)]
        return float(v.sum() * self.cell_area)


def grid_cells(bbox, n: int | tuple):
    """Cell centers of an n x n (or nx x ny) grid over bbox = (x0, x1, y0, y1)."""
    nx, ny = (n, n) if np.isscalar(n) else n
    x0, x1, y0, y1 = bbox
    hx = (x1 - x0) / nx
    hy = (y1 - y0) / ny
    xs = x0 + hx * (np.arange(nx) + 0.5)
    ys = y0 + hy * (np.arange(ny) + 0.5)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()]), hx * hy, (nx, ny)


def psi(D: ContinuumDomain, x, method: str = "conformal") -> np.ndarray:
    """psi^D(x) = 1_D(x) rad_D(x)^2."""
    pts = np.asarray(x, float).reshape(-1, 2)
    inside = D.contains(pts)
    out = np.zeros(len(pts))
    if np.any(inside):
        out[inside] = conformal_radius(D, pts[inside], method=method) ** 2
    return out


def conformal_radius_psi(D: ContinuumDomain, n: int | tuple = 32, bbox=None, method: str = "conformal") -> DensityField:
    centers, area, shape = grid_cells(bbox or D.bounding_box, n)
    return DensityField(centers, psi(D, centers, method), area, shape)


def psi_integral(D: ContinuumDomain, order: int = 48) -> float:
    """int_D psi^D by tensor Gauss-Legendre on each rectangle or disc component."""
    total = 0.0
    g, w = np.polynomial.legendre.leggauss(order)
    for c in D.components:
        if isinstance(c, Rectangle):
            xs = c.x0 + (c.x1 - c.x0) * (g + 1) / 2
            ys = c.y0 + (c.y1 - c.y0) * (g + 1) / 2
            X, Y = np.meshgrid(xs, ys, indexing="ij")
            W = np.outer(w, w) * (c.x1 - c.x0) * (c.y1 - c.y0) / 4
            total += float(np.sum(W * conformal_radius(ContinuumDomain((c,)), X + 1j * Y) ** 2))
        elif isinstance(c, Disc):
            # radial Gauss-Legendre, exact angular trapezoid (integrand polynomial in r)
            r = c.r * (g + 1) / 2
            total += float(np.sum(w * c.r / 2 * 2 * math.pi * r * ((c.r**2 - r**2) / c.r) ** 2))
        else:
            raise MethodUnsupported("psi_integral supports rectangles and discs")
    return total


def psi_cell_integrals(D: ContinuumDomain, cells: int = 4, bbox=None, order: int = 24) -> np.ndarray:
    """(cells, cells) array of int_cell psi^D over a uniform partition of bbox."""
    x0, x1, y0, y1 = bbox or D.bounding_box
    g, w = np.polynomial.legendre.leggauss(order)
    hx, hy = (x1 - x0) / cells, (y1 - y0) / cells
    out = np.zeros((cells, cells))
    for i in range(cells):
        xs = x0 + hx * (i + (g + 1) / 2)
        for j in range(cells):
            ys = y0 + hy * (j + (g + 1) / 2)
            X, Y = np.meshgrid(xs, ys, indexing="ij")
            pts = np.column_stack([X.ravel(), Y.ravel()])
            W = np.outer(w, w).ravel() * hx * hy / 4
            out[i, j] = float(W @ psi(D, pts))
    return out
