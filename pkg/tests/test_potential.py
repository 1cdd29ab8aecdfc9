import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dgfflab.constants import ALPHA, EULER_GAMMA, G, constants
from dgfflab.domain import LatticeDomain
from dgfflab.errors import KernelNotPSD, SingularSystem, VertexOutsideDomain
from dgfflab.kernel import (
    exact_table,
    fit_log_slope,
    fitted_c0,
    potential_kernel,
    potential_kernel_exact,
    potential_kernel_integral,
    triangular_potential_kernel,
)
from dgfflab.potential import (
    CovKernel,
    binding_covariance_discrete,
    green_matrix,
    harmonic_extension,
    harmonic_measure_discrete,
)

DOMINO = LatticeDomain.from_vertices([(0, 0), (1, 0)])
SINGLE = LatticeDomain.from_vertices([(0, 0)])


# -- constants ---------------------------------------------------------------


def test_constants():
    c = constants()
    assert c.g == pytest.approx(0.636620, abs=1e-6)
    assert c.alpha == pytest.approx(2.506628, abs=1e-6)
    assert abs(c.alpha - math.sqrt(2 * math.pi)) < 1e-14
    assert c.alpha**2 * c.g == pytest.approx(4.0, abs=1e-14)
    assert c.c_star_convention == 1.0
    assert ALPHA == c.alpha and G == c.g


# -- potential kernel --------------------------------------------------------


def test_potential_kernel_small_values():
    assert potential_kernel(0, 0) == 0.0
    assert potential_kernel(1, 0) == pytest.approx(1.0, abs=1e-15)
    assert potential_kernel(1, 1) == pytest.approx(4 / math.pi, abs=1e-12)


def test_potential_kernel_classical_values():
    # closed forms of the planar walk: a(2,0) = 4 - 8/pi, a(2,1) = 8/pi - 1, a(2,2) = 16/(3 pi)
    assert potential_kernel(2, 0) == pytest.approx(4 - 8 / math.pi, abs=1e-12)
    assert potential_kernel(2, 1) == pytest.approx(8 / math.pi - 1, abs=1e-12)
    assert potential_kernel(2, 2) == pytest.approx(16 / (3 * math.pi), abs=1e-12)
    r0, r1 = potential_kernel_exact(2, 2)
    assert r0 == 0 and r1 * 3 == 16


def test_exact_table_is_harmonic_off_origin():
    A = exact_table(20)
    full = np.zeros((41, 41))
    for i in range(-20, 21):
        for j in range(-20, 21):
            full[i + 20, j + 20] = A[abs(i), abs(j)]
    lap = 0.25 * (full[2:, 1:-1] + full[:-2, 1:-1] + full[1:-1, 2:] + full[1:-1, :-2]) - full[1:-1, 1:-1]
    delta = np.zeros_like(lap)
    delta[19, 19] = 1.0
    assert np.max(np.abs(lap - delta)) < 1e-10


@pytest.mark.parametrize("xy", [(7, 3), (20, 0), (33, 17), (48, 48)])
def test_integral_route_matches_recursion(xy):
    assert potential_kernel_integral(*xy) == pytest.approx(potential_kernel(*xy), abs=1e-11)


def test_asymptotic_constant():
    # a(x) - g log|x| -> (2 gamma + 3 log 2) / pi
    c0 = (2 * EULER_GAMMA + 3 * math.log(2)) / math.pi
    assert fitted_c0() == pytest.approx(c0, abs=1e-7)
    v = potential_kernel_integral(300, 400)
    assert v - G * math.log(500) == pytest.approx(c0, abs=1e-6)
    far = potential_kernel(3_000_000, 4_000_000)
    assert far == pytest.approx(G * math.log(5e6) + c0, abs=1e-7)


def test_log_slope():
    radii = np.geomspace(100, 1000, 10)
    vals = [potential_kernel(int(round(r)), 0) for r in radii]
    assert abs(fit_log_slope(radii, vals) / G - 1) < 0.01


def test_triangular_kernel():
    assert triangular_potential_kernel(0, 0) == 0.0
    for m, n in [(1, 0), (0, 1), (-1, 1), (1, -1)]:
        assert triangular_potential_kernel(m, n) == pytest.approx(1.0, abs=1e-9)
    radii = np.geomspace(50, 500, 8)
    vals = [triangular_potential_kernel(int(round(r)), 0) for r in radii]
    assert abs(fit_log_slope(radii, vals) / (math.sqrt(3) / math.pi) - 1) < 0.02


# -- Green functions ---------------------------------------------------------


def test_green_singleton_and_domino():
    for mode in ("direct_solve", "boundary_representation"):
        assert green_matrix(SINGLE, mode).matrix == pytest.approx(np.array([[1.0]]), abs=1e-12)
        assert np.allclose(green_matrix(DOMINO, mode).matrix, np.array([[16, 4], [4, 16]]) / 15, atol=1e-10)


masks = st.lists(st.booleans(), min_size=64, max_size=64).filter(any)


@given(masks)
def test_green_modes_agree_and_basic_properties(bits):
    m = np.array(bits).reshape(8, 8)
    L = LatticeDomain.from_vertices(np.argwhere(m))
    G1 = green_matrix(L).matrix
    G2 = green_matrix(L, "boundary_representation").matrix
    assert np.max(np.abs(G1 - G2)) < 1e-8
    assert np.max(np.abs(G1 - G1.T)) < 1e-12
    assert np.all(np.diag(G1) >= 1 - 1e-12)


def test_green_unknown_mode():
    with pytest.raises(ValueError):
        green_matrix(SINGLE, "bogus")


# -- harmonic measure --------------------------------------------------------


def _row_dict(row):
    return {tuple(int(c) for c in b): p for b, p in zip(row.boundary, row.probabilities)}


def test_harmonic_measure_singleton():
    d = _row_dict(harmonic_measure_discrete(SINGLE, (0, 0)))
    assert len(d) == 4 and all(v == pytest.approx(0.25) for v in d.values())


def test_harmonic_measure_domino():
    d = _row_dict(harmonic_measure_discrete(DOMINO, (0, 0)))
    for z in [(-1, 0), (0, 1), (0, -1)]:
        assert d[z] == pytest.approx(4 / 15, abs=1e-12)
    for z in [(2, 0), (1, 1), (1, -1)]:
        assert d[z] == pytest.approx(1 / 15, abs=1e-12)


@given(st.integers(0, 9), st.integers(0, 9))
def test_harmonic_measure_sums_to_one(i, j):
    L = LatticeDomain.box(0, 9, 0, 9)
    row = harmonic_measure_discrete(L, (i, j))
    assert np.all(row.probabilities >= 0)
    assert abs(row.total() - 1) < 1e-10


def test_harmonic_measure_outside():
    with pytest.raises(VertexOutsideDomain):
        harmonic_measure_discrete(SINGLE, (5, 5))


def test_harmonic_extension_reproduces_linear_function():
    V = LatticeDomain.box(0, 9, 0, 9)
    U = LatticeDomain.box(2, 7, 2, 7)
    f = lambda v: 2.0 * v[:, 0] - 0.5 * v[:, 1] + 1.0  # noqa: E731
    ext = harmonic_extension(V, U, f(V.vertices))
    assert np.allclose(ext, f(U.vertices), atol=1e-9)


# -- binding covariance (discrete) and Gibbs-Markov at matrix level ----------


def test_discrete_binding_covariance_identity():
    V = LatticeDomain.box(0, 15, 0, 15)
    U = LatticeDomain.box(4, 11, 4, 11)
    C = binding_covariance_discrete(V, U).matrix
    GV = green_matrix(V).matrix
    GU = green_matrix(U).matrix
    iu = V.index_of(U.vertices)
    assert np.max(np.abs(GV[np.ix_(iu, iu)] - GU - C)) < 1e-8
    assert np.linalg.eigvalsh(C).min() > -1e-10


# -- CovKernel ---------------------------------------------------------------


def test_covkernel_factor_and_validation(rng):
    A = rng.normal(size=(6, 6))
    M = A @ A.T + 0.1 * np.eye(6)
    K = CovKernel(np.arange(6), M)
    F = K.factor()
    assert np.linalg.norm(F @ F.T - M) / np.linalg.norm(M) < 1e-8
    with pytest.raises(KernelNotPSD):
        CovKernel(np.arange(2), np.array([[1.0, 2.0], [2.0, 1.0]])).factor()
    with pytest.raises(ValueError):
        CovKernel(np.arange(2), np.ones((2, 3)))
    # singular PSD falls back to an eigen factor
    v = np.ones((3, 1))
    S = CovKernel(np.arange(3), v @ v.T)
    Fs = S.factor()
    assert np.allclose(Fs @ Fs.T, v @ v.T, atol=1e-10)


def test_empty_green():
    with pytest.raises((SingularSystem, Exception)):
        green_matrix(LatticeDomain(1, np.zeros((1, 1), bool)))
