"""Discrete potential theory on lattice domains.

Green functions of the simple random walk killed on exiting a
:class:`~dgfflab.domain.LatticeDomain`, discrete harmonic measure, and the
:class:`CovKernel` container used by every Gaussian sampler.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from dgfflab.domain import LatticeDomain
from dgfflab.errors import KernelNotPSD, SingularSystem, VertexOutsideDomain
from dgfflab.kernel import PotentialKernelTable

_SPLU_LIMIT = 40_000


@dataclass(eq=False)
class CovKernel:
    """Symmetric PSD matrix over an ordered list of points, with a cached factor."""

    points: np.ndarray
    matrix: np.ndarray
    psd_tolerance: float | None = None
    stderr: np.ndarray | None = None
    nsamples: int | None = None
    _factor: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        M = np.asarray(self.matrix, float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("covariance matrix must be square")
        self.matrix = M
        self.points = np.asarray(self.points)
        if self.psd_tolerance is None:
            self.psd_tolerance = 1e-8 * max(float(np.trace(M)), 1e-300)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def symmetrize(self) -> "CovKernel":
        self.matrix = 0.5 * (self.matrix + self.matrix.T)
        return self

    def min_eigenvalue(self) -> float:
        if self.n == 0:
            return 0.0
        return float(sla.eigvalsh(self.matrix, subset_by_index=[0, 0])[0])

    def factor(self) -> np.ndarray:
        """Lower factor F with F F^T = matrix (Cholesky, eigen fallback for singular PSD)."""
        if self._factor is not None:
            return self._factor
        M = self.matrix
        if np.max(np.abs(M - M.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(M), initial=0.0)):
            raise KernelNotPSD("matrix is not symmetric")
        try:
            F = np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            w, V = np.linalg.eigh(0.5 * (M + M.T))
            if w[0] < -self.psd_tolerance:
                raise KernelNotPSD(f"smallest eigenvalue {w[0]:.3e} below -{self.psd_tolerance:.3e}")
            F = V * np.sqrt(np.clip(w, 0.0, None))
        self._factor = F
        return F


@dataclass(frozen=True)
class HarmonicMeasureRow:
    source: tuple
    boundary: np.ndarray
    probabilities: np.ndarray

    def total(self) -> float:
        return float(self.probabilities.sum())


def transition_operator(L: LatticeDomain) -> sp.csr_matrix:
    """I - P restricted to L (P the simple random walk kernel)."""
    i, j = L.neighbor_pairs
    n = L.size
    P = sp.csr_matrix((np.full(len(i), 0.25), (i, j)), shape=(n, n))
    return (sp.identity(n, format="csr") - P).tocsc()


def laplacian_solver(L: LatticeDomain):
    """Factorized solver for (I - P) x = b on L."""
    A = transition_operator(L)
    if L.size <= _SPLU_LIMIT:
        lu = spla.splu(A)
        return lu.solve
    return _amg_solver(A)


def _amg_solver(A, rtol: float = 1e-12):
    import pyamg

    ml = pyamg.smoothed_aggregation_solver(A.tocsr(), symmetry="symmetric")
    M = ml.aspreconditioner()

    def solve(b):
        b = np.asarray(b, float)
        if b.ndim == 1:
            x, info = spla.cg(A, b, rtol=rtol, M=M, maxiter=2000)
            if info != 0:
                raise SingularSystem(f"CG failed to converge (info={info})")
            return x
        return np.column_stack([solve(b[:, k]) for k in range(b.shape[1])])

    return solve


def outer_coupling(L: LatticeDomain) -> tuple[np.ndarray, sp.csr_matrix]:
    """Outer boundary vertices and the one-step matrix P[x, z] for x in L, z in dL."""
    B = L.outer_boundary
    bidx = {tuple(z): k for k, z in enumerate(B)}
    rows, cols = [], []
    for k, v in enumerate(L.vertices):
        for d in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            z = (v[0] + d[0], v[1] + d[1])
            c = bidx.get(z)
            if c is not None:
                rows.append(k)
                cols.append(c)
    P = sp.csr_matrix((np.full(len(rows), 0.25), (rows, cols)), shape=(L.size, len(B)))
    return B, P


def _green_direct(L: LatticeDomain) -> np.ndarray:
    n = L.size
    solve = laplacian_solver(L)
    G = solve(np.eye(n))
    return 0.5 * (G + G.T)


def harmonic_measure_matrix(L: LatticeDomain) -> tuple[np.ndarray, np.ndarray]:
    """H[x, z] for all x in L, z in the outer boundary, from (I - P_LL) H = P_{L, dL}."""
    B, P = outer_coupling(L)
    solve = laplacian_solver(L)
    H = solve(P.toarray())
    return B, np.asarray(H)


def _green_boundary(L: LatticeDomain) -> np.ndarray:
    """G(x, y) = -a(x - y) + sum_z H(x, z) a(y - z)."""
    B, H = harmonic_measure_matrix(L)
    V = L.vertices
    span = np.ptp(np.vstack([V, B]), axis=0).max() + 1
    a = PotentialKernelTable(int(span))
    dVV = V[:, None, :] - V[None, :, :]
    dBV = B[:, None, :] - V[None, :, :]
    G = -a(dVV[..., 0], dVV[..., 1]) + H @ a(dBV[..., 0], dBV[..., 1])
    return 0.5 * (G + G.T)


def green_matrix(L: LatticeDomain, mode: str = "direct_solve") -> CovKernel:
    """Green function of the walk killed upon exiting L, as a dense kernel."""
    if L.size < 1:
        raise SingularSystem("empty lattice domain")
    if mode == "direct_solve":
        G = _green_direct(L)
    elif mode == "boundary_representation":
        G = _green_boundary(L)
    else:
        raise ValueError(f"unknown green_matrix mode {mode!r}")
    if not np.all(np.isfinite(G)):
        raise SingularSystem("non-finite Green function")
    return CovKernel(L.vertices, G)


def green_columns(L: LatticeDomain, sources, solver=None) -> np.ndarray:
    """Columns G_L(., y) for the given source vertices (shape (|L|, len(sources)))."""
    idx = L.index_of(sources)
    if np.any(idx < 0):
        raise VertexOutsideDomain("source vertex outside the domain")
    solve = solver or laplacian_solver(L)
    rhs = np.zeros((L.size, len(idx)))
    rhs[idx, np.arange(len(idx))] = 1.0
    return np.asarray(solve(rhs)).reshape(L.size, len(idx))


def harmonic_measure_discrete(L: LatticeDomain, x) -> HarmonicMeasureRow:
    """Exit distribution H_L(x, .) via H(x, z) = (1/4) sum_{y in L, y ~ z} G(x, y)."""
    x = tuple(int(c) for c in np.asarray(x).ravel())
    k = L.index_of([x])[0]
    if k < 0:
        raise VertexOutsideDomain(f"{x} is not a vertex of the domain")
    g = green_columns(L, [x])[:, 0]
    B, P = outer_coupling(L)
    probs = np.asarray(P.T @ g).ravel()
    return HarmonicMeasureRow(x, B, probs)


def harmonic_extension(L: LatticeDomain, U: LatticeDomain, values_outside: np.ndarray, solver=None) -> np.ndarray:
    """Discrete-harmonic extension into U of boundary data given on L minus U.

    ``values_outside`` is indexed like the vertices of L (entries on U ignored);
    returns the extended values on U (ordered like U.vertices).
    """
    B, P = outer_coupling(U)
    idx = L.index_of(B)
    data = np.zeros(len(B))
    inside = idx >= 0
    vals = np.asarray(values_outside)
    if vals.ndim == 1:
        data[inside] = vals[idx[inside]]
        rhs = P @ data
    else:
        data = np.zeros((len(B), vals.shape[1]))
        data[inside] = vals[idx[inside]]
        rhs = P @ data
    solve = solver or laplacian_solver(U)
    return np.asarray(solve(rhs))


def binding_covariance_discrete(V: LatticeDomain, U: LatticeDomain, points=None) -> CovKernel:
    """Cov(phi^{V,U}) = G_V - G_U on U (or on the given U-vertices) via the Green representation."""
    pts = U.vertices if points is None else np.asarray(points).reshape(-1, 2)
    if not np.all(V.contains_vertex(pts)):
        raise VertexOutsideDomain("points outside V")
    GV = green_columns(V, pts)[V.index_of(pts)]
    inU = U.index_of(pts)
    GU = np.zeros_like(GV)
    ok = np.nonzero(inU >= 0)[0]
    if len(ok):
        cols = green_columns(U, pts[ok])
        GU[np.ix_(ok, ok)] = cols[inU[ok]]
    C = GV - GU
    return CovKernel(pts, 0.5 * (C + C.T))
