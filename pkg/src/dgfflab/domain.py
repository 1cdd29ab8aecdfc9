"""Continuum domains, their lattice discretizations and interior approximations.

A :class:`ContinuumDomain` is a finite union of pairwise-disjoint open
primitive shapes (rectangles, discs, simple polygons) minus finitely many
closed holes.  Its lattice version at scale ``N`` is the maximal vertex set

    D_N = {x in Z^2 : d_inf(x/N, D^c) > 1/N},

decided exactly: floating-point margins that fall inside a small tie band are
re-evaluated in rational arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np

from dgfflab.errors import (
    EmptyDiscretization,
    EmptyInterior,
    InvalidDomain,
    NoTriangles,
)

_TIE = 1e-9


def _as_points(x) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, 2)
    return pts


# ---------------------------------------------------------------------------
# low-level geometry (vectorized over the first argument)


def _point_segment_dist(p: np.ndarray, a, b) -> np.ndarray:
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    d = b - a
    dd = float(d @ d)
    if dd == 0.0:
        return np.hypot(*(p - a).T)
    t = np.clip(((p - a) @ d) / dd, 0.0, 1.0)
    q = a + t[:, None] * d
    return np.hypot(*(p - q).T)


def _cross(o, a, b):
    return (a[..., 0] - o[..., 0]) * (b[..., 1] - o[..., 1]) - (a[..., 1] - o[..., 1]) * (
        b[..., 0] - o[..., 0]
    )


def _segments_intersect(A: np.ndarray, B: np.ndarray, c, d) -> np.ndarray:
    """Closed-segment intersection test of segments A[i]B[i] with the segment cd."""
    c = np.broadcast_to(np.asarray(c, float), A.shape)
    d = np.broadcast_to(np.asarray(d, float), A.shape)
    d1 = _cross(c, d, A)
    d2 = _cross(c, d, B)
    d3 = _cross(A, B, c)
    d4 = _cross(A, B, d)
    proper = (d1 * d2 < 0) & (d3 * d4 < 0)

    def on_seg(p, q, r):
        return (
            (np.minimum(p[..., 0], q[..., 0]) <= r[..., 0])
            & (r[..., 0] <= np.maximum(p[..., 0], q[..., 0]))
            & (np.minimum(p[..., 1], q[..., 1]) <= r[..., 1])
            & (r[..., 1] <= np.maximum(p[..., 1], q[..., 1]))
        )

    touch = (
        ((d1 == 0) & on_seg(c, d, A))
        | ((d2 == 0) & on_seg(c, d, B))
        | ((d3 == 0) & on_seg(A, B, c))
        | ((d4 == 0) & on_seg(A, B, d))
    )
    return proper | touch


def _segment_segment_dist(A: np.ndarray, B: np.ndarray, c, d) -> np.ndarray:
    c = np.asarray(c, float)
    d = np.asarray(d, float)
    out = np.minimum(
        np.minimum(_point_segment_dist(A, c, d), _point_segment_dist(B, c, d)),
        np.minimum(_seg_point(c, A, B), _seg_point(d, A, B)),
    )
    out[_segments_intersect(A, B, c, d)] = 0.0
    return out


def _seg_point(p, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Distance from one point p to each segment A[i]B[i]."""
    p = np.asarray(p, float)
    D = B - A
    dd = np.einsum("ij,ij->i", D, D)
    safe = np.where(dd > 0, dd, 1.0)
    t = np.clip(np.einsum("ij,ij->i", p - A, D) / safe, 0.0, 1.0)
    t = np.where(dd > 0, t, 0.0)
    q = A + t[:, None] * D
    return np.hypot(*(p - q).T)


def _dinf_point_segment(p: np.ndarray, a, b) -> np.ndarray:
    """ell-infinity distance from points p to the segment ab.

    max(|u(t)|, |v(t)|) is convex piecewise linear in t, so its minimum sits at an
    endpoint or at a breakpoint u=0, v=0, u=v, u=-v.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    u0 = a[0] - p[:, 0]
    v0 = a[1] - p[:, 1]
    du, dv = b - a
    cands = [np.zeros(len(p)), np.ones(len(p))]
    with np.errstate(divide="ignore", invalid="ignore"):
        for num, den in ((-u0, du), (-v0, dv), (v0 - u0, du - dv), (-(u0 + v0), du + dv)):
            if den != 0:
                cands.append(np.clip(num / den, 0.0, 1.0))
    best = np.full(len(p), np.inf)
    for t in cands:
        best = np.minimum(best, np.maximum(np.abs(u0 + t * du), np.abs(v0 + t * dv)))
    return best


def _point_in_polygon(p: np.ndarray, verts: np.ndarray) -> np.ndarray:
    x, y = p[:, 0], p[:, 1]
    inside = np.zeros(len(p), dtype=bool)
    n = len(verts)
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        cond = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= cond & (x < xint)
    return inside


# exact scalar predicates on Fractions -------------------------------------


def _fr(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


def _exact_point_in_polygon(px, py, verts) -> bool:
    inside = False
    n = len(verts)
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        if (y1 > py) != (y2 > py):
            xint = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            if px < xint:
                inside = not inside
    return inside


def _exact_segment_meets_box(a, b, lo, hi) -> bool:
    """Liang-Barsky on the closed box [lo, hi] in exact arithmetic."""
    t0, t1 = Fraction(0), Fraction(1)
    for k in range(2):
        d = b[k] - a[k]
        for p, q in ((-d, a[k] - lo[k]), (d, hi[k] - a[k])):
            if p == 0:
                if q < 0:
                    return False
            else:
                r = q / p
                if p < 0:
                    t0 = max(t0, r)
                else:
                    t1 = min(t1, r)
                if t0 > t1:
                    return False
    return True


# ---------------------------------------------------------------------------
# primitives


@dataclass(frozen=True)
class Rectangle:
    x0: float
    x1: float
    y0: float
    y1: float
    kind = "rectangle"

    def __post_init__(self):
        if not (self.x0 <= self.x1 and self.y0 <= self.y1):
            raise InvalidDomain(f"rectangle with inverted bounds: {self}")

    @property
    def bbox(self):
        return (self.x0, self.x1, self.y0, self.y1)

    @property
    def diameter(self) -> float:
        return math.hypot(self.x1 - self.x0, self.y1 - self.y0)

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def as_polygon(self) -> "Polygon":
        return Polygon(((self.x0, self.y0), (self.x1, self.y0), (self.x1, self.y1), (self.x0, self.y1)))

    def contains_open(self, p):
        return (p[:, 0] > self.x0) & (p[:, 0] < self.x1) & (p[:, 1] > self.y0) & (p[:, 1] < self.y1)

    def contains_closed(self, p):
        return (p[:, 0] >= self.x0) & (p[:, 0] <= self.x1) & (p[:, 1] >= self.y0) & (p[:, 1] <= self.y1)

    def dinf_inside(self, p):
        return np.minimum.reduce([p[:, 0] - self.x0, self.x1 - p[:, 0], p[:, 1] - self.y0, self.y1 - p[:, 1]])

    def dinf_to(self, p):
        dx = np.maximum.reduce([self.x0 - p[:, 0], p[:, 0] - self.x1, np.zeros(len(p))])
        dy = np.maximum.reduce([self.y0 - p[:, 1], p[:, 1] - self.y1, np.zeros(len(p))])
        return np.maximum(dx, dy)

    def exact_box_inside(self, px, py, r) -> bool:
        return (
            _fr(self.x0) < px - r
            and px + r < _fr(self.x1)
            and _fr(self.y0) < py - r
            and py + r < _fr(self.y1)
        )

    def exact_box_disjoint(self, px, py, r) -> bool:
        return (
            px + r < _fr(self.x0)
            or px - r > _fr(self.x1)
            or py + r < _fr(self.y0)
            or py - r > _fr(self.y1)
        )

    def edges(self):
        return self.as_polygon().edges()

    def seg_dist_inside(self, A, B):
        return self.as_polygon().seg_dist_inside(A, B)

    def seg_dist_to(self, A, B):
        return self.as_polygon().seg_dist_to(A, B)

    def to_dict(self):
        return {"kind": "rectangle", "params": [self.x0, self.x1, self.y0, self.y1]}


@dataclass(frozen=True)
class Disc:
    cx: float
    cy: float
    r: float
    kind = "disc"

    def __post_init__(self):
        if not self.r > 0:
            raise InvalidDomain(f"disc radius must be positive: {self}")

    @property
    def center(self) -> complex:
        return complex(self.cx, self.cy)

    @property
    def bbox(self):
        return (self.cx - self.r, self.cx + self.r, self.cy - self.r, self.cy + self.r)

    @property
    def diameter(self) -> float:
        return 2 * self.r

    @property
    def area(self) -> float:
        return math.pi * self.r**2

    def contains_open(self, p):
        return (p[:, 0] - self.cx) ** 2 + (p[:, 1] - self.cy) ** 2 < self.r**2

    def contains_closed(self, p):
        return (p[:, 0] - self.cx) ** 2 + (p[:, 1] - self.cy) ** 2 <= self.r**2

    def dinf_inside(self, p):
        A = np.abs(p[:, 0] - self.cx)
        B = np.abs(p[:, 1] - self.cy)
        disc = (A + B) ** 2 - 2 * (A**2 + B**2 - self.r**2)
        out = (-(A + B) + np.sqrt(np.maximum(disc, 0.0))) / 2
        return np.where(A**2 + B**2 < self.r**2, out, -1.0)

    def dinf_to(self, p):
        A = np.abs(p[:, 0] - self.cx)
        B = np.abs(p[:, 1] - self.cy)
        r1 = np.maximum(A, B) - self.r
        disc = (A + B) ** 2 - 2 * (A**2 + B**2 - self.r**2)
        r2 = ((A + B) - np.sqrt(np.maximum(disc, 0.0))) / 2
        out = np.where(r1 >= np.minimum(A, B), r1, r2)
        return np.where(A**2 + B**2 <= self.r**2, 0.0, out)

    def exact_box_inside(self, px, py, r) -> bool:
        cx, cy, R = _fr(self.cx), _fr(self.cy), _fr(self.r)
        return all(
            (px + sx * r - cx) ** 2 + (py + sy * r - cy) ** 2 < R * R for sx in (-1, 1) for sy in (-1, 1)
        )

    def exact_box_disjoint(self, px, py, r) -> bool:
        cx, cy, R = _fr(self.cx), _fr(self.cy), _fr(self.r)
        dx = max(abs(px - cx) - r, Fraction(0))
        dy = max(abs(py - cy) - r, Fraction(0))
        return dx * dx + dy * dy > R * R

    def seg_dist_inside(self, A, B):
        c = np.array([self.cx, self.cy])
        ra = np.hypot(*(A - c).T)
        rb = np.hypot(*(B - c).T)
        return np.where(ra < self.r, np.maximum(self.r - np.maximum(ra, rb), 0.0), 0.0)

    def seg_dist_to(self, A, B):
        c = np.array([self.cx, self.cy])
        return np.maximum(_seg_point(c, A, B) - self.r, 0.0)

    def to_dict(self):
        return {"kind": "disc", "params": [self.cx, self.cy, self.r]}


@dataclass(frozen=True)
class Polygon:
    vertices: tuple
    kind = "polygon"

    def __post_init__(self):
        v = tuple((float(a), float(b)) for a, b in self.vertices)
        if len(v) < 3:
            raise InvalidDomain("polygon needs at least three vertices")
        object.__setattr__(self, "vertices", v)

    @cached_property
    def _v(self) -> np.ndarray:
        return np.array(self.vertices, float)

    @property
    def bbox(self):
        v = self._v
        return (v[:, 0].min(), v[:, 0].max(), v[:, 1].min(), v[:, 1].max())

    @property
    def diameter(self) -> float:
        v = self._v
        return float(np.max(np.hypot(*(v[:, None, :] - v[None, :, :]).transpose(2, 0, 1))))

    @property
    def area(self) -> float:
        x, y = self._v.T
        return abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))) / 2

    def edges(self):
        v = self.vertices
        return [(v[i], v[(i + 1) % len(v)]) for i in range(len(v))]

    def _on_boundary(self, p):
        on = np.zeros(len(p), bool)
        # same predicate as the distance route, so contains and dist > 0 agree
        for a, b in self.edges():
            on |= _segment_segment_dist(p, p, a, b) == 0.0
        return on

    def contains_open(self, p):
        return _point_in_polygon(p, self._v) & ~self._on_boundary(p)

    def contains_closed(self, p):
        return _point_in_polygon(p, self._v) | self._on_boundary(p)

    def _dinf_boundary(self, p):
        best = np.full(len(p), np.inf)
        for a, b in self.edges():
            best = np.minimum(best, _dinf_point_segment(p, a, b))
        return best

    def dinf_inside(self, p):
        return np.where(self.contains_open(p), self._dinf_boundary(p), -1.0)

    def dinf_to(self, p):
        return np.where(self.contains_closed(p), 0.0, self._dinf_boundary(p))

    def _exact_verts(self):
        return [(_fr(a), _fr(b)) for a, b in self.vertices]

    def exact_box_inside(self, px, py, r) -> bool:
        verts = self._exact_verts()
        if not _exact_point_in_polygon(px, py, verts):
            return False
        lo, hi = (px - r, py - r), (px + r, py + r)
        n = len(verts)
        return not any(_exact_segment_meets_box(verts[i], verts[(i + 1) % n], lo, hi) for i in range(n))

    def exact_box_disjoint(self, px, py, r) -> bool:
        verts = self._exact_verts()
        if _exact_point_in_polygon(px, py, verts):
            return False
        lo, hi = (px - r, py - r), (px + r, py + r)
        n = len(verts)
        return not any(_exact_segment_meets_box(verts[i], verts[(i + 1) % n], lo, hi) for i in range(n))

    def seg_dist_inside(self, A, B):
        best = np.full(len(A), np.inf)
        for a, b in self.edges():
            best = np.minimum(best, _segment_segment_dist(A, B, a, b))
        return np.where(self.contains_open(A), best, 0.0)

    def seg_dist_to(self, A, B):
        best = np.full(len(A), np.inf)
        for a, b in self.edges():
            best = np.minimum(best, _segment_segment_dist(A, B, a, b))
        return np.where(self.contains_closed(A), 0.0, best)

    @property
    def is_equilateral_triangle(self) -> bool:
        if len(self.vertices) != 3:
            return False
        v = self._v
        s = [np.hypot(*(v[i] - v[(i + 1) % 3])) for i in range(3)]
        return max(s) - min(s) < 1e-12 * max(s)

    def to_dict(self):
        return {"kind": "polygon", "params": [list(v) for v in self.vertices]}


Shape = Rectangle | Disc | Polygon


def shape_from_dict(spec: dict) -> Shape:
    kind = spec.get("kind")
    params = spec.get("params")
    if kind == "rectangle":
        return Rectangle(*map(float, params))
    if kind == "disc":
        return Disc(*map(float, params))
    if kind == "polygon":
        return Polygon(tuple(tuple(p) for p in params))
    raise InvalidDomain(f"unknown shape kind {kind!r}")


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContinuumDomain:
    """Open bounded planar set: union of disjoint open shapes minus closed holes.

    ``shrink`` > 0 encodes a Euclidean delta-interior of the base set.
    """

    components: tuple
    holes: tuple = ()
    shrink: float = 0.0
    min_boundary_diameter: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "holes", tuple(self.holes))
        if not self.components:
            raise InvalidDomain("domain needs at least one component")
        for s in self.components:
            if isinstance(s, Rectangle) and (s.x0 == s.x1 or s.y0 == s.y1):
                raise InvalidDomain(f"degenerate rectangle component {s}")
        for s in self.components + self.holes:
            if s.diameter < self.min_boundary_diameter:
                raise InvalidDomain(f"boundary component of diameter {s.diameter} below minimum")

    @classmethod
    def from_dict(cls, spec: dict) -> "ContinuumDomain":
        try:
            comps = [shape_from_dict(s) for s in spec["shapes"]]
        except KeyError as exc:
            raise InvalidDomain("domain spec needs a 'shapes' list") from exc
        holes = [shape_from_dict(s) for s in spec.get("holes", [])]
        return cls(tuple(comps), tuple(holes))

    def to_dict(self) -> dict:
        out = {"shapes": [c.to_dict() for c in self.components], "holes": [h.to_dict() for h in self.holes]}
        if self.shrink:
            out["shrink"] = self.shrink
        return out

    # simple constructors
    @classmethod
    def unit_square(cls) -> "ContinuumDomain":
        return cls((Rectangle(0.0, 1.0, 0.0, 1.0),))

    @classmethod
    def rectangle(cls, x0, x1, y0, y1) -> "ContinuumDomain":
        return cls((Rectangle(x0, x1, y0, y1),))

    @classmethod
    def disc(cls, cx=0.0, cy=0.0, r=1.0) -> "ContinuumDomain":
        return cls((Disc(cx, cy, r),))

    @classmethod
    def polygon(cls, vertices) -> "ContinuumDomain":
        return cls((Polygon(tuple(vertices)),))

    @property
    def bounding_box(self):
        bb = np.array([c.bbox for c in self.components])
        return (bb[:, 0].min(), bb[:, 1].max(), bb[:, 2].min(), bb[:, 3].max())

    @property
    def is_primitive(self) -> bool:
        """Single shape, no holes, no shrink."""
        return len(self.components) == 1 and not self.holes and self.shrink == 0.0

    def area(self, resolution: int = 2048) -> float:
        if not self.holes and self.shrink == 0.0:
            return float(sum(c.area for c in self.components))
        x0, x1, y0, y1 = self.bounding_box
        h = max(x1 - x0, y1 - y0) / resolution
        xs = np.arange(x0 + h / 2, x1, h)
        ys = np.arange(y0 + h / 2, y1, h)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return float(self.contains(np.column_stack([X.ravel(), Y.ravel()])).sum() * h * h)

    def translate_scale(self, shift=(0.0, 0.0), scale=1.0) -> "ContinuumDomain":
        a, b = shift

        def tr(s):
            if isinstance(s, Rectangle):
                return Rectangle(a + scale * s.x0, a + scale * s.x1, b + scale * s.y0, b + scale * s.y1)
            if isinstance(s, Disc):
                return Disc(a + scale * s.cx, b + scale * s.cy, scale * s.r)
            return Polygon(tuple((a + scale * x, b + scale * y) for x, y in s.vertices))

        return ContinuumDomain(
            tuple(tr(s) for s in self.components),
            tuple(tr(s) for s in self.holes),
            self.shrink * scale,
            self.min_boundary_diameter,
        )

    # -- membership and distances ------------------------------------------

    def component_index(self, x) -> np.ndarray:
        """Index of the component containing each point (-1 if outside D)."""
        p = _as_points(x)
        inside = self.contains(p)
        idx = np.full(len(p), -1)
        for i, c in enumerate(self.components):
            idx[inside & c.contains_open(p)] = i
        return idx

    def contains(self, x) -> np.ndarray:
        p = _as_points(x)
        if self.shrink > 0:
            return self.dist_to_complement(p) > 0
        inc = np.zeros(len(p), bool)
        for c in self.components:
            inc |= c.contains_open(p)
        for h in self.holes:
            inc &= ~h.contains_closed(p)
        return inc

    def seg_dist_to_complement(self, A, B) -> np.ndarray:
        """Euclidean distance from each segment A[i]B[i] to the complement of the base set."""
        A = _as_points(A)
        B = _as_points(B)
        best = np.zeros(len(A))
        for c in self.components:
            best = np.maximum(best, c.seg_dist_inside(A, B))
        for h in self.holes:
            best = np.minimum(best, h.seg_dist_to(A, B))
        return best - self.shrink

    def dist_to_complement(self, x) -> np.ndarray:
        """Euclidean distance to D^c; zero or negative outside D."""
        p = _as_points(x)
        return self.seg_dist_to_complement(p, p)

    def dinf_to_complement(self, x) -> np.ndarray:
        """ell-infinity distance to D^c (non-positive outside D)."""
        p = _as_points(x)
        if self.shrink > 0:
            raise NotImplementedError("use box_inside for shrunken domains")
        best = np.full(len(p), -1.0)
        for c in self.components:
            best = np.maximum(best, c.dinf_inside(p))
        for h in self.holes:
            best = np.minimum(best, h.dinf_to(p))
        return best

    def exact_box_inside(self, px: Fraction, py: Fraction, r: Fraction) -> bool:
        """Closed ell-infinity ball of radius r about (px, py) lies in D (exact)."""
        if not any(c.exact_box_inside(px, py, r) for c in self.components):
            return False
        return all(h.exact_box_disjoint(px, py, r) for h in self.holes)

    def box_inside(self, centers: np.ndarray, r: float) -> np.ndarray:
        """Closed ell-infinity balls B(centers[i], r) lie in D."""
        p = _as_points(centers)
        if self.shrink == 0.0:
            return self.dinf_to_complement(p) > r
        ok = self.contains(p)
        for dx0, dy0, dx1, dy1 in ((-1, -1, 1, -1), (1, -1, 1, 1), (1, 1, -1, 1), (-1, 1, -1, -1)):
            A = p + r * np.array([dx0, dy0])
            B = p + r * np.array([dx1, dy1])
            ok &= self.seg_dist_to_complement(A, B) > 0
        return ok


# ---------------------------------------------------------------------------
# lattice domains


@dataclass(frozen=True, eq=False)
class LatticeDomain:
    """Finite set of Z^2 vertices stored as a boolean mask on a bounding box."""

    N: int
    mask: np.ndarray
    origin: tuple = (0, 0)
    source: ContinuumDomain | None = field(default=None, repr=False)

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        object.__setattr__(self, "mask", m)
        object.__setattr__(self, "origin", (int(self.origin[0]), int(self.origin[1])))
        m.setflags(write=False)

    @classmethod
    def from_vertices(cls, vertices, N: int = 1, source=None) -> "LatticeDomain":
        v = np.asarray(list(vertices), dtype=np.int64).reshape(-1, 2)
        if len(v) == 0:
            raise EmptyDiscretization("no vertices")
        lo = v.min(axis=0)
        hi = v.max(axis=0)
        mask = np.zeros(tuple(hi - lo + 1), bool)
        mask[v[:, 0] - lo[0], v[:, 1] - lo[1]] = True
        return cls(N, mask, tuple(lo), source)

    @classmethod
    def box(cls, x0: int, x1: int, y0: int, y1: int, N: int = 1) -> "LatticeDomain":
        """All vertices with x0 <= x <= x1 and y0 <= y <= y1."""
        return cls(N, np.ones((x1 - x0 + 1, y1 - y0 + 1), bool), (x0, y0))

    def __len__(self) -> int:
        return self.size

    @cached_property
    def size(self) -> int:
        return int(self.mask.sum())

    @cached_property
    def vertices(self) -> np.ndarray:
        v = np.argwhere(self.mask) + np.array(self.origin)
        v.setflags(write=False)
        return v

    @cached_property
    def index_grid(self) -> np.ndarray:
        """Dense index of each vertex on the (padded by one) bounding box; -1 elsewhere."""
        g = np.full((self.mask.shape[0] + 2, self.mask.shape[1] + 2), -1, dtype=np.int64)
        g[1:-1, 1:-1][self.mask] = np.arange(self.size)
        return g

    def index_of(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.int64).reshape(-1, 2)
        i = pts[:, 0] - self.origin[0] + 1
        j = pts[:, 1] - self.origin[1] + 1
        g = self.index_grid
        ok = (i >= 0) & (i < g.shape[0]) & (j >= 0) & (j < g.shape[1])
        out = np.full(len(pts), -1, dtype=np.int64)
        out[ok] = g[i[ok], j[ok]]
        return out

    def contains_vertex(self, pts) -> np.ndarray:
        return self.index_of(pts) >= 0

    @cached_property
    def neighbor_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """(i, j) index pairs of nearest-neighbor vertices inside the domain, both orders."""
        g = self.index_grid
        rows, cols = [], []
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            a = g[1:-1, 1:-1]
            b = g[1 + di : g.shape[0] - 1 + di, 1 + dj : g.shape[1] - 1 + dj]
            sel = (a >= 0) & (b >= 0)
            rows.append(a[sel])
            cols.append(b[sel])
        return np.concatenate(rows), np.concatenate(cols)

    @cached_property
    def outer_boundary(self) -> np.ndarray:
        """Vertices outside the domain with a neighbor inside (sorted)."""
        pad = np.pad(self.mask, 1)
        nb = np.zeros_like(pad)
        nb[1:, :] |= pad[:-1, :]
        nb[:-1, :] |= pad[1:, :]
        nb[:, 1:] |= pad[:, :-1]
        nb[:, :-1] |= pad[:, 1:]
        out = nb & ~pad
        v = np.argwhere(out) + np.array(self.origin) - 1
        v.setflags(write=False)
        return v

    @cached_property
    def inner_boundary(self) -> np.ndarray:
        pad = np.pad(self.mask, 1)
        full = pad[:-2, 1:-1] & pad[2:, 1:-1] & pad[1:-1, :-2] & pad[1:-1, 2:]
        v = np.argwhere(self.mask & ~full) + np.array(self.origin)
        v.setflags(write=False)
        return v

    @cached_property
    def is_box(self) -> bool:
        return bool(self.mask.all())

    def connected_components(self) -> list["LatticeDomain"]:
        from scipy import ndimage

        lab, n = ndimage.label(self.mask)
        out = []
        for k in range(1, n + 1):
            sub = lab == k
            ii, jj = np.nonzero(sub)
            out.append(
                LatticeDomain(
                    self.N,
                    sub[ii.min() : ii.max() + 1, jj.min() : jj.max() + 1],
                    (self.origin[0] + ii.min(), self.origin[1] + jj.min()),
                    self.source,
                )
            )
        return out

    def subdomain(self, keep: np.ndarray) -> "LatticeDomain":
        """Sub-lattice-domain from a boolean selector over ``vertices``."""
        return LatticeDomain.from_vertices(self.vertices[np.asarray(keep, bool)], self.N, None)

    def is_subset_of(self, other: "LatticeDomain") -> bool:
        return bool(np.all(other.contains_vertex(self.vertices)))

    def scaled_positions(self) -> np.ndarray:
        return self.vertices / float(self.N)


def discretize(domain: ContinuumDomain, N: int) -> LatticeDomain:
    """Maximal lattice approximation {x : d_inf(x/N, D^c) > 1/N}."""
    if N < 2:
        raise ValueError("N must be at least 2")
    x0, x1, y0, y1 = domain.bounding_box
    i0, i1 = math.floor(x0 * N), math.ceil(x1 * N)
    j0, j1 = math.floor(y0 * N), math.ceil(y1 * N)
    I, J = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1), indexing="ij")
    pts = np.column_stack([I.ravel(), J.ravel()]) / N
    r = 1.0 / N
    if domain.shrink == 0.0:
        margin = domain.dinf_to_complement(pts) - r
        keep = margin > _TIE
        for k in np.nonzero(np.abs(margin) <= _TIE)[0]:
            px = Fraction(int(I.ravel()[k]), N)
            py = Fraction(int(J.ravel()[k]), N)
            keep[k] = domain.exact_box_inside(px, py, Fraction(1, N))
    else:
        keep = domain.box_inside(pts, r)
    mask = keep.reshape(I.shape)
    if not mask.any():
        raise EmptyDiscretization(f"no lattice vertex satisfies the containment test at N={N}")
    ii, jj = np.nonzero(mask)
    sub = mask[ii.min() : ii.max() + 1, jj.min() : jj.max() + 1]
    return LatticeDomain(N, sub, (i0 + ii.min(), j0 + jj.min()), domain)


# ---------------------------------------------------------------------------
# interior approximations


def delta_interior(domain: ContinuumDomain, delta: float) -> ContinuumDomain:
    """{x in D : d(x, D^c) > delta}; closed form for single discs/rectangles."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    if domain.is_primitive:
        s = domain.components[0]
        if isinstance(s, Disc):
            if s.r <= delta:
                raise EmptyInterior(f"disc of radius {s.r} has empty {delta}-interior")
            return ContinuumDomain((Disc(s.cx, s.cy, s.r - delta),))
        if isinstance(s, Rectangle):
            if min(s.x1 - s.x0, s.y1 - s.y0) <= 2 * delta:
                raise EmptyInterior("rectangle too thin for the requested interior")
            return ContinuumDomain((Rectangle(s.x0 + delta, s.x1 - delta, s.y0 + delta, s.y1 - delta),))
    out = ContinuumDomain(domain.components, domain.holes, domain.shrink + delta, domain.min_boundary_diameter)
    if out.area(resolution=512) == 0.0:
        raise EmptyInterior(f"{delta}-interior is empty")
    return out


def square_tiling(domain: ContinuumDomain, n: int) -> ContinuumDomain:
    """Union of x_i + (4^-n, 2^-n - 4^-n)^2 over dyadic squares of side 2^-n inside D."""
    if n < 1:
        raise ValueError("n must be at least 1")
    side = 2.0**-n
    gap = 4.0**-n
    if side - 2 * gap <= 0:
        raise EmptyInterior(f"shrunk dyadic squares are empty at n={n}")
    x0, x1, y0, y1 = domain.bounding_box
    I, J = np.meshgrid(
        np.arange(math.floor(x0 / side), math.ceil(x1 / side)),
        np.arange(math.floor(y0 / side), math.ceil(y1 / side)),
        indexing="ij",
    )
    corners = np.column_stack([I.ravel(), J.ravel()]) * side
    centers = corners + side / 2
    # open dyadic square inside D  <=>  d_inf(center, D^c) >= side/2
    if domain.shrink == 0.0:
        inside = domain.dinf_to_complement(centers) >= side / 2 - 1e-15
    else:
        inside = domain.box_inside(centers, side / 2 * (1 - 1e-12))
    squares = tuple(
        Rectangle(cx + gap, cx + side - gap, cy + gap, cy + side - gap) for cx, cy in corners[inside]
    )
    if not squares:
        raise EmptyInterior(f"no dyadic square of side 2^-{n} fits in the domain")
    return ContinuumDomain(squares)


def interior_approximations(domain: ContinuumDomain, mode: str, value) -> ContinuumDomain:
    if mode == "delta_interior":
        return delta_interior(domain, float(value))
    if mode == "square_tiling":
        return square_tiling(domain, int(value))
    raise ValueError(f"unknown interior approximation mode {mode!r}")


# ---------------------------------------------------------------------------
# triangulations


@dataclass(frozen=True, eq=False)
class TriangularPartition:
    """Equilateral triangles of side 1/K inside D; the n_K far-from-boundary ones first."""

    K: int
    delta: float
    orientation: float
    triangles: np.ndarray  # (m_K, 3, 2) vertex coordinates
    centers: np.ndarray  # (m_K, 2)
    near_count: int  # n_K
    lattice_ids: np.ndarray  # (m_K, 3) (a, b, up) cell labels
    domain: ContinuumDomain | None = None

    @property
    def total_count(self) -> int:
        return len(self.triangles)

    @property
    def shrunk_triangles(self) -> np.ndarray:
        c = self.centers[:, None, :]
        return c + (1 - self.delta) * (self.triangles - c)

    @property
    def side(self) -> float:
        return 1.0 / self.K

    def as_domain(self) -> ContinuumDomain:
        return ContinuumDomain(tuple(Polygon(tuple(map(tuple, t))) for t in self.triangles))

    def triangle_index(self, x) -> np.ndarray:
        """Triangle containing each point in its open interior (-1 if none)."""
        p = _as_points(x)
        out = np.full(len(p), -1)
        for i, t in enumerate(self.triangles):
            out[_point_in_polygon(p, t) & (out < 0)] = i
        return out


def _segment_enters_open_triangle(a, b, tri, cen) -> bool:
    """Cyrus-Beck clip of segment ab against the open triangle."""
    t0, t1 = 0.0, 1.0
    d = b - a
    for k in range(3):
        p0, p1 = tri[k], tri[(k + 1) % 3]
        nrm = np.array([-(p1 - p0)[1], (p1 - p0)[0]])
        if np.dot(nrm, cen - p0) < 0:
            nrm = -nrm
        nn = np.linalg.norm(nrm)
        num = np.dot(nrm, a - p0)
        den = np.dot(nrm, d)
        if abs(den) <= 1e-14 * nn * max(1.0, np.linalg.norm(d)):
            if num <= 1e-12 * nn:
                return False
            continue
        r = -num / den
        if den > 0:
            t0 = max(t0, r)
        else:
            t1 = min(t1, r)
    return t1 - t0 > 1e-12


def _triangle_inside(domain: ContinuumDomain, tri: np.ndarray) -> bool:
    """Open triangle lies in D.

    If no boundary segment meets the open triangle, the triangle is entirely on
    one side, which the centroid decides.
    """
    cen = tri.mean(axis=0)

    def poly_edges(s):
        return (s.as_polygon() if isinstance(s, Rectangle) else s).edges()

    def enters(s):
        return any(
            _segment_enters_open_triangle(np.array(a), np.array(b), tri, cen) for a, b in poly_edges(s)
        )

    ok = False
    for c in domain.components:
        if isinstance(c, Disc):
            ok = bool(np.all((tri[:, 0] - c.cx) ** 2 + (tri[:, 1] - c.cy) ** 2 <= c.r**2 * (1 + 1e-12)))
        else:
            ok = bool(c.contains_open(cen[None])[0]) and not enters(c)
        if ok:
            break
    if not ok:
        return False
    A = tri
    B = tri[[1, 2, 0]]
    for h in domain.holes:
        if isinstance(h, Disc):
            c = np.array([h.cx, h.cy])
            if _point_in_polygon(c[None], tri)[0] or _seg_point(c, A, B).min() < h.r:
                return False
        elif enters(h) or bool(h.contains_closed(cen[None])[0]):
            return False
    if domain.shrink > 0:
        return bool(domain.seg_dist_to_complement(A, B).min() >= 0)
    return True


def triangulate(
    domain: ContinuumDomain, K: int, delta: float, orientation: float = 0.0
) -> TriangularPartition:
    """Triangles of the mesh-1/K triangular grid (rotated by ``orientation``) inside D."""
    if K < 1:
        raise ValueError("K must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    h = 1.0 / K
    rot = np.array([[math.cos(orientation), -math.sin(orientation)], [math.sin(orientation), math.cos(orientation)]])
    e1 = rot @ np.array([h, 0.0])
    e2 = rot @ np.array([h / 2, h * math.sqrt(3) / 2])
    x0, x1, y0, y1 = domain.bounding_box
    corners = np.array([[x0, y0], [x0, y1], [x1, y0], [x1, y1]])
    Minv = np.linalg.inv(np.column_stack([e1, e2]))
    ab = corners @ Minv.T
    a_lo, a_hi = math.floor(ab[:, 0].min()) - 1, math.ceil(ab[:, 0].max()) + 1
    b_lo, b_hi = math.floor(ab[:, 1].min()) - 1, math.ceil(ab[:, 1].max()) + 1
    tris, ids = [], []
    bbox_pad = h
    for a in range(a_lo, a_hi + 1):
        for b in range(b_lo, b_hi + 1):
            p = a * e1 + b * e2
            for up, t in (
                (1, np.array([p, p + e1, p + e2])),
                (0, np.array([p + e1, p + e1 + e2, p + e2])),
            ):
                c = t.mean(axis=0)
                if not (x0 - bbox_pad <= c[0] <= x1 + bbox_pad and y0 - bbox_pad <= c[1] <= y1 + bbox_pad):
                    continue
                if _triangle_inside(domain, t):
                    tris.append(t)
                    ids.append((a, b, up))
    if not tris:
        raise NoTriangles(f"no triangle of side 1/{K} fits in the domain")
    tris = np.array(tris)
    ids = np.array(ids)
    A = tris.reshape(-1, 2)
    B = tris[:, [1, 2, 0], :].reshape(-1, 2)
    dist = domain.seg_dist_to_complement(A, B).reshape(-1, 3).min(axis=1)
    far = dist >= delta
    order = np.concatenate([np.nonzero(far)[0], np.nonzero(~far)[0]])
    tris = tris[order]
    return TriangularPartition(
        K=K,
        delta=delta,
        orientation=orientation,
        triangles=tris,
        centers=tris.mean(axis=1),
        near_count=int(far.sum()),
        lattice_ids=ids[order],
        domain=domain,
    )


def lebesgue_deficit(domain: ContinuumDomain, inner: ContinuumDomain, resolution: int = 2048) -> float:
    return domain.area(resolution) - inner.area(resolution)


__all__: Sequence[str] = [
    "Rectangle",
    "Disc",
    "Polygon",
    "ContinuumDomain",
    "LatticeDomain",
    "TriangularPartition",
    "discretize",
    "delta_interior",
    "square_tiling",
    "interior_approximations",
    "triangulate",
]
