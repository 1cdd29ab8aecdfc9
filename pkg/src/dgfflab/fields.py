"""Exact Gaussian samplers: the DGFF, Gibbs-Markov pieces, binding fields, triangular field.

Every sampler is a pure function of its inputs and an :class:`RngStream`.
Streams are counter-based (Philox keyed by master seed and stream id), so a
replica is reproducible independently of scheduling.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.fft import dstn

from dgfflab.conformal import binding_cov
from dgfflab.domain import ContinuumDomain, LatticeDomain
from dgfflab.errors import (
    DenseLimitExceeded,
    InsufficientSamples,
    KernelNotPSD,
    MethodUnsupported,
    NotSubdomain,
)
from dgfflab.potential import (
    CovKernel,
    green_columns,
    green_matrix,
    harmonic_extension,
    harmonic_measure_matrix,
    laplacian_solver,
)

DENSE_LIMIT = 10_000
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Counter-based stream keyed by (master seed, stream id)."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        object.__setattr__(self, "stream", int(self.stream) & _MASK64)

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def spawn(self, stream: int) -> "RngStream":
        return RngStream(self.seed, stream)

    def normals(self, size, dtype=np.float64) -> np.ndarray:
        return self.generator().standard_normal(size, dtype=dtype)


@dataclass(eq=False)
class FieldSample:
    """One realization of a centered Gaussian field over a vertex or point list."""

    domain: object
    values: np.ndarray
    seed: int | None = None
    stream: int | None = None
    points: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values)

    @property
    def provenance(self) -> tuple:
        return (self.seed, self.stream)

    def as_grid(self) -> np.ndarray:
        """Values on the bounding-box grid of a lattice domain (NaN off the domain)."""
        L = self.domain
        out = np.full(L.mask.shape, np.nan, dtype=self.values.dtype)
        out[L.mask] = self.values
        return out


# ---------------------------------------------------------------------------
# rectangles: explicit sine eigenbasis


def box_eigenvalues(m: int, n: int, dtype=np.float64) -> np.ndarray:
    """Eigenvalues 1 - (cos(j pi/(m+1)) + cos(k pi/(n+1)))/2 of I - P on an m x n box."""
    cj = np.cos(np.pi * np.arange(1, m + 1) / (m + 1))
    ck = np.cos(np.pi * np.arange(1, n + 1) / (n + 1))
    return (1.0 - 0.5 * (cj[:, None] + ck[None, :])).astype(dtype)


class BoxSampler:
    """Sine-transform sampler for the DGFF on a full lattice rectangle."""

    def __init__(self, shape: tuple[int, int], dtype=np.float64):
        self.shape = tuple(int(s) for s in shape)
        self.dtype = np.dtype(dtype)
        self.scale = (1.0 / np.sqrt(box_eigenvalues(*self.shape))).astype(self.dtype)
        self.inv_lam = (self.scale.astype(np.float64)) ** 2

    def from_normals(self, xi: np.ndarray) -> np.ndarray:
        return dstn(xi * self.scale, type=1, norm="ortho", workers=1)

    def sample_grid(self, rng: RngStream) -> np.ndarray:
        return self.from_normals(rng.normals(self.shape, self.dtype))

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """(I - P)^{-1} rhs on the box (rhs of shape shape or shape + (k,))."""
        axes = (0, 1)
        c = dstn(rhs, type=1, norm="ortho", axes=axes)
        lam = self.inv_lam if rhs.ndim == 2 else self.inv_lam[..., None]
        return dstn(c * lam, type=1, norm="ortho", axes=axes)


def box_green_columns(L: LatticeDomain, sources) -> np.ndarray:
    """Columns of G_L for a full rectangle L by two sine transforms."""
    if not L.is_box:
        raise MethodUnsupported("box_green_columns needs a full rectangle")
    idx = L.index_of(sources)
    bs = BoxSampler(L.mask.shape)
    rhs = np.zeros(L.mask.shape + (len(idx),))
    V = L.vertices[idx] - np.array(L.origin)
    rhs[V[:, 0], V[:, 1], np.arange(len(idx))] = 1.0
    out = bs.solve(rhs)
    return out.reshape(-1, len(idx))  # box vertices are in row-major order


# ---------------------------------------------------------------------------
# dense factor cache


_factor_cache: "weakref.WeakKeyDictionary[LatticeDomain, np.ndarray]" = weakref.WeakKeyDictionary()


def _dense_factor(L: LatticeDomain, dense_limit: int) -> np.ndarray:
    if L.size > dense_limit:
        raise DenseLimitExceeded(f"{L.size} vertices exceed the dense limit {dense_limit}")
    F = _factor_cache.get(L)
    if F is None:
        F = green_matrix(L).factor()
        _factor_cache[L] = F
    return F


# ---------------------------------------------------------------------------
# the DGFF


def sample_dgff(
    L: LatticeDomain,
    method: str = "auto",
    rng: RngStream | None = None,
    U: LatticeDomain | None = None,
    dense_limit: int = DENSE_LIMIT,
    dtype=np.float64,
) -> FieldSample:
    """Exact sample of N(0, G_L).

    Methods: ``cholesky`` (dense), ``sine_transform`` (full rectangles),
    ``gibbs_markov`` (h^U + phi^{L,U} with U given), ``embedding`` (a box
    field minus its harmonic extension from outside L), ``auto``.
    """
    rng = rng or RngStream(0, 0)
    if method == "auto":
        method = "sine_transform" if L.is_box else ("cholesky" if L.size <= dense_limit else "embedding")
    if method == "cholesky":
        F = _dense_factor(L, dense_limit)
        vals = F @ rng.normals(L.size)
    elif method == "sine_transform":
        if not L.is_box:
            raise MethodUnsupported("sine_transform needs a full lattice rectangle")
        vals = BoxSampler(L.mask.shape, dtype).sample_grid(rng).ravel()
    elif method == "gibbs_markov":
        if U is None:
            raise MethodUnsupported("gibbs_markov needs a subdomain U")
        vals = GibbsMarkovSampler(L, U).sample(rng)
    elif method == "embedding":
        vals = EmbeddingSampler(L).sample(rng)
    else:
        raise MethodUnsupported(f"unknown method {method!r}")
    return FieldSample(L, vals, rng.seed, rng.stream)


def _sub_rng(rng: RngStream, k: int) -> RngStream:
    # independent sub-streams for the pieces of a composite sample
    return RngStream(rng.seed ^ (0x9E3779B97F4A7C15 * (k + 1) & _MASK64), rng.stream)


class EmbeddingSampler:
    """h^L = h^S - (harmonic extension into L of h^S on S minus L), S the bounding box."""

    def __init__(self, L: LatticeDomain):
        self.L = L
        self.S = LatticeDomain(L.N, np.ones(L.mask.shape, bool), L.origin)
        self.box = BoxSampler(L.mask.shape)
        self.solver = laplacian_solver(L)

    def sample(self, rng: RngStream) -> np.ndarray:
        hS = self.box.sample_grid(rng).ravel()
        ext = harmonic_extension(self.S, self.L, hS, self.solver)
        inL = self.S.index_of(self.L.vertices)
        return hS[inL] - ext


class GibbsMarkovSampler:
    """h^L = h^U + phi^{L,U}: exact law of h^L on L minus U, harmonic extension, independent h^U."""

    def __init__(self, L: LatticeDomain, U: LatticeDomain, dense_limit: int = DENSE_LIMIT):
        if not U.is_subset_of(L):
            raise NotSubdomain("U must be a subset of L")
        self.L, self.U = L, U
        inU = U.contains_vertex(L.vertices)
        self.outside = L.vertices[~inU]
        self.out_idx = np.nonzero(~inU)[0]
        self.u_idx = L.index_of(U.vertices)
        if len(self.outside) > dense_limit:
            raise DenseLimitExceeded("too many vertices outside U for the dense cross covariance")
        if len(self.outside):
            if L.is_box:
                cols = box_green_columns(L, self.outside)
            else:
                cols = green_columns(L, self.outside)
            C = cols[self.out_idx]
            self.F = CovKernel(self.outside, 0.5 * (C + C.T)).factor()
        else:
            self.F = np.zeros((0, 0))
        self.components = U.connected_components()
        self.samplers = [
            (c, BoxSampler(c.mask.shape) if c.is_box else None, U.index_of(c.vertices)) for c in self.components
        ]
        if all(bs is not None for _, bs, _ in self.samplers):
            self.solver = self._box_solve
        else:
            self.solver = laplacian_solver(U)

    def _box_solve(self, rhs: np.ndarray) -> np.ndarray:
        # I - P on U is block diagonal over its components
        out = np.zeros(rhs.shape)
        for c, bs, idx in self.samplers:
            shape = c.mask.shape + rhs.shape[1:]
            out[idx] = bs.solve(rhs[idx].reshape(shape)).reshape((len(idx),) + rhs.shape[1:])
        return out

    def sample_bulk(self, rng: RngStream) -> np.ndarray:
        bulk = np.zeros(self.U.size)
        for k, (c, bs, idx) in enumerate(self.samplers):
            r = _sub_rng(rng, 2 + k)
            if bs is not None:
                bulk[idx] = bs.sample_grid(r).ravel()
            else:
                bulk[idx] = sample_dgff(c, "auto", r).values
        return bulk

    def sample(self, rng: RngStream) -> np.ndarray:
        vals = np.zeros(self.L.size)
        if len(self.out_idx):
            vals[self.out_idx] = self.F @ _sub_rng(rng, 0).normals(len(self.out_idx))
        phi_u = harmonic_extension(self.L, self.U, vals, self.solver)
        vals[self.u_idx] = phi_u + self.sample_bulk(_sub_rng(rng, 1))
        return vals


def gibbs_markov_decompose(h: FieldSample, U: LatticeDomain) -> tuple[FieldSample, FieldSample]:
    """Split h on V into (phi^{V,U}, h - phi): phi equals h off U and is harmonic in U."""
    V = h.domain
    if not U.is_subset_of(V):
        raise NotSubdomain("U must be a subset of the field's domain")
    u_idx = V.index_of(U.vertices)
    phi = np.array(h.values, dtype=float, copy=True)
    phi[u_idx] = harmonic_extension(V, U, h.values)
    bulk = np.zeros_like(phi)
    bulk[u_idx] = h.values[u_idx] - phi[u_idx]
    return FieldSample(V, phi, h.seed, h.stream), FieldSample(V, bulk, h.seed, h.stream)


def gibbs_markov_covariance(V: LatticeDomain, U: LatticeDomain) -> np.ndarray:
    """Cov(phi^{V,U}) on U x U as H_U G_V H_U^T over the outer boundary of U inside V."""
    if not U.is_subset_of(V):
        raise NotSubdomain("U must be a subset of V")
    B, H = harmonic_measure_matrix(U)
    inV = V.index_of(B)
    keep = inV >= 0
    GV = green_matrix(V).matrix
    Gb = GV[np.ix_(inV[keep], inV[keep])]
    Hk = H[:, keep]
    return Hk @ Gb @ Hk.T


# ---------------------------------------------------------------------------
# batched sampling


def sample_batch(sampler, rng: RngStream, replicas: int, start: int = 0) -> np.ndarray:
    """Stack ``replicas`` draws using stream ids start, start+1, ..."""
    rows = [np.asarray(sampler(rng.spawn(start + k))) for k in range(replicas)]
    return np.vstack(rows)


def sample_gaussian(kernel: CovKernel, rng: RngStream, size: int | None = None) -> np.ndarray:
    """Draw(s) from N(0, kernel.matrix) through the cached factor."""
    F = kernel.factor()
    if size is None:
        return F @ rng.normals(kernel.n)
    return (F @ rng.normals((kernel.n, size))).T


# ---------------------------------------------------------------------------
# continuum binding field


def binding_kernel(D: ContinuumDomain, Dt: ContinuumDomain, points, method: str = "conformal") -> CovKernel:
    pts = np.asarray(points, float).reshape(-1, 2)
    z = pts[:, 0] + 1j * pts[:, 1]
    C = binding_cov(D, Dt, z[:, None], z[None, :], method=method)
    C = 0.5 * (C + C.T)
    K = CovKernel(pts, C)
    w0 = K.min_eigenvalue() if K.n else 0.0
    if w0 < -K.psd_tolerance:
        raise KernelNotPSD(f"binding kernel indefinite (min eigenvalue {w0:.3e}); increase quadrature resolution")
    return K


def sample_binding_field(
    D: ContinuumDomain, Dt: ContinuumDomain, points, rng: RngStream, kernel: CovKernel | None = None
) -> FieldSample:
    """Centered Gaussian field with covariance C^{D, Dt} at the given points."""
    pts = np.asarray(points, float).reshape(-1, 2)
    if Dt == D:
        return FieldSample(D, np.zeros(len(pts)), rng.seed, rng.stream, pts)
    K = kernel or binding_kernel(D, Dt, pts)
    return FieldSample(Dt, sample_gaussian(K, rng), rng.seed, rng.stream, pts)


def discrete_binding_variance(V: LatticeDomain, U: LatticeDomain, x) -> tuple[float, float]:
    """Var phi^{V,U}(x) by two routes: G_V(x,x) - G_U(x,x), and w^T G_V w with w = H_U(x, .)."""
    from dgfflab.potential import harmonic_measure_discrete

    x = tuple(int(c) for c in x)
    gV = green_columns(V, [x])
    gU = green_columns(U, [x])
    d1 = float(gV[V.index_of([x])[0], 0] - gU[U.index_of([x])[0], 0])
    row = harmonic_measure_discrete(U, x)
    idx = V.index_of(row.boundary)
    keep = idx >= 0
    w = np.zeros(V.size)
    w[idx[keep]] = row.probabilities[keep]
    solve = laplacian_solver(V)
    d2 = float(w @ solve(w))
    return d1, d2


# ---------------------------------------------------------------------------
# triangular lattice

_TRI_NB = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1))
_E1 = np.array([1.0, 0.0])
_E2 = np.array([0.5, math.sqrt(3) / 2])


@dataclass(eq=False)
class TriangularPatch:
    """Vertices m e1 + n e2 (scaled by 1/K) of a triangular-lattice region.

    Interior vertices are those with all six neighbors in the patch; the rest
    form the inner boundary on which the walk is killed.
    """

    K: int
    coords: np.ndarray  # (n, 2) integer (m, n)
    interior: np.ndarray = field(init=False)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.int64).reshape(-1, 2)
        keys = {tuple(c) for c in self.coords}
        self.interior = np.array(
            [all((c[0] + a, c[1] + b) in keys for a, b in _TRI_NB) for c in self.coords], dtype=bool
        )

    @classmethod
    def triangle(cls, side: int, K: int = 1) -> "TriangularPatch":
        pts = [(m, n) for m in range(side + 1) for n in range(side + 1 - m)]
        return cls(K, np.array(pts))

    @classmethod
    def hexagon(cls, radius: int, K: int = 1) -> "TriangularPatch":
        pts = [
            (m, n)
            for m in range(-radius, radius + 1)
            for n in range(-radius, radius + 1)
            if max(abs(m), abs(n), abs(m + n)) <= radius
        ]
        return cls(K, np.array(pts))

    @classmethod
    def from_domain(cls, D: ContinuumDomain, K: int) -> "TriangularPatch":
        x0, x1, y0, y1 = D.bounding_box
        nlo, nhi = math.floor(y0 * K * 2 / math.sqrt(3)) - 1, math.ceil(y1 * K * 2 / math.sqrt(3)) + 1
        pts = []
        for n in range(nlo, nhi + 1):
            mlo = math.floor(x0 * K - n / 2) - 1
            mhi = math.ceil(x1 * K - n / 2) + 1
            m = np.arange(mlo, mhi + 1)
            xy = (m[:, None] * _E1 + n * _E2) / K
            ok = D.contains(xy) if len(xy) else np.zeros(0, bool)
            pts.extend((int(a), n) for a in m[ok])
        return cls(K, np.array(pts))

    @property
    def positions(self) -> np.ndarray:
        return (self.coords[:, :1] * _E1 + self.coords[:, 1:] * _E2) / self.K

    @property
    def interior_coords(self) -> np.ndarray:
        return self.coords[self.interior]

    def green(self) -> np.ndarray:
        """G_K = (I - P)^{-1} on interior vertices, P the six-neighbor walk."""
        ic = self.interior_coords
        index = {tuple(c): k for k, c in enumerate(ic)}
        rows, cols = [], []
        for k, c in enumerate(ic):
            for a, b in _TRI_NB:
                j = index.get((c[0] + a, c[1] + b))
                if j is not None:
                    rows.append(k)
                    cols.append(j)
        n = len(ic)
        A = sp.identity(n, format="csc") - sp.csc_matrix((np.full(len(rows), 1 / 6), (rows, cols)), shape=(n, n))
        if n == 0:
            return np.zeros((0, 0))
        Gm = spla.splu(A).solve(np.eye(n))
        return 0.5 * (Gm + Gm.T)

    def covariance(self) -> CovKernel:
        return CovKernel(self.positions[self.interior], (2 / math.sqrt(3)) * self.green())


def sample_triangular_field(
    patch: TriangularPatch, rng: RngStream, dense_limit: int = DENSE_LIMIT, kernel: CovKernel | None = None
) -> FieldSample:
    """Mean-zero Gaussian on interior vertices with covariance (2/sqrt 3) G_K."""
    if int(patch.interior.sum()) > dense_limit:
        raise DenseLimitExceeded("triangular patch exceeds the dense limit")
    K = kernel or patch.covariance()
    return FieldSample(patch, sample_gaussian(K, rng), rng.seed, rng.stream, K.points)


# ---------------------------------------------------------------------------


def empirical_covariance(samples) -> CovKernel:
    """Unbiased sample covariance with normal-theory standard errors per entry.

    Accepts a list of FieldSample or an array of shape (replicas, points).
    """
    if isinstance(samples, np.ndarray):
        X = np.asarray(samples, float)
        pts = np.arange(X.shape[1])
    else:
        samples = list(samples)
        if len(samples) < 2:
            raise InsufficientSamples("need at least two samples")
        X = np.vstack([np.asarray(s.values, float) for s in samples])
        p0 = samples[0].points
        pts = p0 if p0 is not None else getattr(samples[0].domain, "vertices", np.arange(X.shape[1]))
    n = X.shape[0]
    if n < 2:
        raise InsufficientSamples("need at least two samples")
    Xc = X - X.mean(axis=0)
    S = Xc.T @ Xc / (n - 1)
    d = np.diag(S)
    se = np.sqrt((S**2 + np.outer(d, d)) / (n - 1))
    return CovKernel(pts, S, stderr=se, nsamples=n)


def covariance_z(emp: CovKernel, target: np.ndarray) -> np.ndarray:
    """Entrywise (empirical - target) / stderr, the stderr evaluated under the target."""
    T = np.asarray(target, float)
    if emp.nsamples is None:
        return (emp.matrix - T) / emp.stderr
    d = np.diag(T)
    se = np.sqrt((T**2 + np.outer(d, d)) / (emp.nsamples - 1))
    return (emp.matrix - T) / se
