import math

import numpy as np
import pytest

from dgfflab.conformal import continuum_green, conformal_radius_psi, psi_integral
from dgfflab.constants import EULER_GAMMA, G
from dgfflab.domain import ContinuumDomain, Polygon, Rectangle, triangulate
from dgfflab.errors import (
    CovarianceNotOrdered,
    GridMismatch,
    InsufficientReplicas,
    InsufficientSamples,
    UnsupportedDomainShape,
)
from dgfflab.fields import RngStream
from dgfflab.lqg import (
    derivative_martingale_measure,
    girsanov_check,
    kahane_check,
    kahane_expectation_1pt,
    lemma_consistency,
    median_of_means,
    positivity_margin,
    sample_phi_t,
    sample_seneta_heyde,
    seneta_heyde_measure,
    synthetic_cauchy_masses,
    t_ladder_diagnostic,
    tail_estimators,
    truncated_green,
)
from dgfflab.potential import CovKernel

SQUARE = ContinuumDomain.unit_square()
DISC = ContinuumDomain.disc()


# -- truncated kernel --------------------------------------------------------


def test_far_pair_at_t0():
    k = truncated_green(SQUARE, [(0.05, 0.05), (0.95, 0.95)], 0.0)
    assert k.matrix[0, 1] < 1e-3
    assert k.tail_bound < 1e-8


def test_t0_variances_small():
    psi = conformal_radius_psi(SQUARE, 6)
    assert np.all(truncated_green(SQUARE, psi.centers, 0.0).variance < 0.1)


def test_monotone_in_t():
    pts = conformal_radius_psi(SQUARE, 5).centers
    mats = [truncated_green(SQUARE, pts, t).matrix for t in (0.0, 1.0, 2.0, 3.0)]
    for a, b in zip(mats, mats[1:]):
        assert np.all(b >= a - 1e-12)


@pytest.mark.parametrize("D, x, y", [(SQUARE, (0.5, 0.5), (0.5, 0.6)), (DISC, (0.0, 0.0), (0.5, 0.0))])
def test_converges_to_continuum_green(D, x, y):
    k = truncated_green(D, [x, y], 6.0)
    assert abs(k.matrix[0, 1] - float(continuum_green(D, x, y))) < 0.01


def test_diagonal_normalization():
    # small-s heat kernel 1/(pi s) e^{-r^2/s} gives G_t(x, x) = g t + g log rad(x) + gamma/pi + o(1)
    k = truncated_green(DISC, [(0.0, 0.0)], 5.0)
    assert k.variance[0] == pytest.approx(G * 5.0 + EULER_GAMMA / math.pi, abs=1e-3)
    assert truncated_green(SQUARE, [(0.5, 0.5)], 6.0).variance[0] / 6.0 == pytest.approx(G, rel=0.1)


def test_kernel_psd_and_symmetric():
    k = truncated_green(SQUARE, conformal_radius_psi(SQUARE, 6).centers, 2.0)
    assert np.allclose(k.matrix, k.matrix.T)
    assert np.linalg.eigvalsh(k.matrix).min() > -1e-10


def test_unsupported_shape():
    tri = ContinuumDomain((Polygon(((0, 0), (1, 0), (0, 1))),))
    with pytest.raises(UnsupportedDomainShape):
        truncated_green(tri, [(0.3, 0.2)], 1.0)


# -- phi_t and M_t -----------------------------------------------------------


def test_phi_variance_at_centre():
    k = truncated_green(SQUARE, [(0.5, 0.5), (0.25, 0.5)], 2.0)
    n = 100_000
    x = sample_phi_t(k, RngStream(1), n)[:, 0]
    v = k.variance[0]
    assert abs(x.var(ddof=1) - v) < 4 * v * math.sqrt(2 / (n - 1))


def test_phi_determinism():
    k = truncated_green(SQUARE, [(0.5, 0.5), (0.25, 0.5)], 2.0)
    a = sample_phi_t(k, RngStream(4, 2))
    assert np.array_equal(a.values, sample_phi_t(k, RngStream(4, 2)).values)
    assert a.provenance == (4, 2)


def test_mean_mass_and_positivity():
    psi = conformal_radius_psi(SQUARE, 8)
    k = truncated_green(SQUARE, psi.centers, 1.0)
    M = sample_seneta_heyde(k, psi, RngStream(2), 10_000)
    assert np.all(M.masses >= 0) and np.all(np.isfinite(M.masses))
    target = math.sqrt(k.t) * float(np.sum(psi.values) * psi.cell_area)
    est, se = median_of_means(M.total())
    assert abs(est - target) < 4 * se
    # the grid Riemann sum approximates the psi integral
    assert target == pytest.approx(math.sqrt(k.t) * psi_integral(SQUARE), rel=0.05)


def test_seneta_heyde_grid_mismatch():
    psi = conformal_radius_psi(SQUARE, 4)
    k = truncated_green(SQUARE, psi.centers[:5], 1.0)
    with pytest.raises(GridMismatch):
        seneta_heyde_measure(np.zeros(5), k, psi)


def test_t_ladder_runs():
    psi = conformal_radius_psi(SQUARE, 6)
    mask = np.all(np.abs(psi.centers - 0.5) < 0.25, axis=1)
    meds, rel = t_ladder_diagnostic(SQUARE, 6, [1.0, 2.0, 3.0], mask, 2000, seed=1, psi=psi)
    assert meds.shape == (3,) and np.all(meds > 0) and rel.shape == (2,)


# -- Girsanov ----------------------------------------------------------------


def _small_setup(t=1.0, n=6):
    psi = conformal_radius_psi(SQUARE, n)
    return truncated_green(SQUARE, psi.centers, t), psi


def test_girsanov_lambda_zero():
    k, psi = _small_setup()
    r = girsanov_check(k, psi, 7, 0.0, 20_000, seed=1)
    assert r.estimate["rhs"] == 1.0
    assert abs(r.estimate["lhs"] - 1) < 4 * r.stderr["lhs"]


def test_girsanov_decreasing_in_lambda():
    k, psi = _small_setup()
    lams = [0.1, 1.0, 10.0, 1000.0]
    reps = [girsanov_check(k, psi, 7, lam, 20_000, seed=2) for lam in lams]
    rhs = [r.estimate["rhs"] for r in reps]
    lhs = [r.estimate["lhs"] for r in reps]
    assert all(a > b for a, b in zip(rhs, rhs[1:])) and all(a > b for a, b in zip(lhs, lhs[1:]))
    assert rhs[-1] < 0.05
    assert all(r.passed for r in reps)


def test_girsanov_needs_replicas():
    k, psi = _small_setup()
    with pytest.raises(InsufficientReplicas):
        girsanov_check(k, psi, 0, 0.5, 1)


# -- tail estimators ---------------------------------------------------------


def test_planted_cauchy_tail():
    m = synthetic_cauchy_masses(np.random.default_rng(1), 200_000, c=2.0)
    ts = [5.0, 20.0, 80.0]
    rep = tail_estimators(m, "cauchy_tail", {"thresholds": ts, "planted": np.full(3, 2.0)})
    assert rep.passed
    with pytest.raises(InsufficientSamples):
        tail_estimators(m[:100], "cauchy_tail")


def test_laplace_tail_needs_samples():
    k, psi = _small_setup()
    M = sample_seneta_heyde(k, psi, RngStream(1), 100)
    with pytest.raises(InsufficientSamples):
        tail_estimators(M, "laplace_tail")


# -- Kahane ------------------------------------------------------------------


def test_kahane_identical_kernels():
    C = CovKernel(np.zeros((2, 2)), np.array([[1.0, 0.3], [0.3, 1.0]]))
    assert kahane_check(C, C, 1.0, 20_000, seed=1).passed


def test_kahane_one_point_against_quadrature():
    hi = CovKernel(np.zeros((1, 2)), np.array([[2.0]]))
    lo = CovKernel(np.zeros((1, 2)), np.array([[1.0]]))
    r = kahane_check(hi, lo, 1.0, 100_000, seed=2)
    q_hi, q_lo = kahane_expectation_1pt(2.0, 1.0), kahane_expectation_1pt(1.0, 1.0)
    assert q_hi > q_lo and r.passed and r.estimate["difference"] > 0
    assert abs(r.estimate["hi"] - q_hi) < 3 * r.stderr["hi"]
    assert abs(r.estimate["lo"] - q_lo) < 3 * r.stderr["lo"]
    # Gauss-Hermite oracle for the quadrature itself
    z, w = np.polynomial.hermite_e.hermegauss(200)
    gh = float(np.sum(w * np.exp(-np.exp(math.sqrt(2.0) * z - 1.0))) / math.sqrt(2 * math.pi))
    assert q_hi == pytest.approx(gh, abs=1e-10)


@pytest.mark.parametrize("sigma", [0.1, 1.0, 10.0])
def test_kahane_three_points(sigma):
    base = np.array([[1.0, 0.4, 0.2], [0.4, 1.0, 0.4], [0.2, 0.4, 1.0]])
    u = np.array([0.5, 0.8, 0.3])
    lo = CovKernel(np.zeros((3, 2)), base)
    hi = CovKernel(np.zeros((3, 2)), base + np.outer(u, u))
    assert kahane_check(hi, lo, sigma, 50_000, seed=3).passed
    with pytest.raises(CovarianceNotOrdered):
        kahane_check(lo, hi, sigma, 100)


# -- derivative martingale ---------------------------------------------------


@pytest.fixture(scope="module")
def dm_setup():
    # one cached binding kernel shared by the derivative-martingale tests
    return triangulate(DISC, 4, 0.1), {}


def test_dm_zero_oscillation_kills_measure(dm_setup):
    P, cache = dm_setup
    M = derivative_martingale_measure(DISC, P, 0.0, RngStream(1), kernel_cache=cache)
    assert np.all(M.masses == 0) and M.meta["events"] == 0


def test_dm_positive_at_moderate_r(dm_setup):
    P, cache = dm_setup
    totals = [derivative_martingale_measure(DISC, P, 2.0, RngStream(7, k), kernel_cache=cache) for k in range(50)]
    assert np.mean([m.total() > 0 for m in totals]) > 0.5
    for m in totals:
        assert m.meta["negative_factor_nodes"] == 0
        assert np.all(np.isfinite(m.masses))


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="the truncation event forces max Phi <= 2 sqrt(g) log 4 - 6 < -3.7, rarely met at K=4")
def test_dm_positive_probability_at_r6(dm_setup):
    P, cache = dm_setup
    pos = [derivative_martingale_measure(DISC, P, 6.0, RngStream(11, k), kernel_cache=cache).total() > 0 for k in range(1000)]
    assert np.mean(pos) > 0.5


def test_positivity_margin():
    # alpha g = 2 sqrt(g): at Var = g log K the margin is exactly R
    K, R = 8, 1.5
    assert positivity_margin(R, K, np.array([G * math.log(K)])) == pytest.approx(R)


# -- binding consistency -----------------------------------------------------


def test_lemma_consistency_identical_domains():
    pairs = np.array([[[0.3, 0.3], [0.6, 0.4]], [[0.5, 0.5], [0.5, 0.7]]])
    assert lemma_consistency(SQUARE, SQUARE, pairs, 2.0) < 1e-10


def test_lemma_consistency_decreasing():
    Dt = ContinuumDomain((Rectangle(0, 0.5, 0, 1), Rectangle(0.5, 1, 0, 1)))
    pairs = np.array([[[0.25, 0.5], [0.3, 0.6]], [[0.7, 0.4], [0.8, 0.5]], [[0.25, 0.25], [0.75, 0.75]]])
    eps = [lemma_consistency(SQUARE, Dt, pairs, t) for t in (1.0, 2.0, 4.0)]
    assert eps[0] > eps[1] > eps[2] and eps[2] < 0.05
