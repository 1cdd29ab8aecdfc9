import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from dgfflab.constants import ALPHA, G
from dgfflab.domain import ContinuumDomain, LatticeDomain, Rectangle, discretize
from dgfflab.errors import DomainError, InsufficientExceedances, InsufficientReplicas, WindowEmpty
from dgfflab.extremes import (
    ExtremalPointSet,
    StatReport,
    ball_offsets,
    box_campaign,
    centering,
    cox_tail_prediction,
    default_radius,
    extract_local_maxima,
    extremal_statistics,
    gm_consistency_test,
    local_maxima_grid,
    merge_campaigns,
    synthetic_cox_maxima,
    synthetic_ppp_heights,
    truncated_exponential_mle,
)
from dgfflab.fields import FieldSample, RngStream, sample_dgff

SQRT_G = math.sqrt(G)


# -- centering ---------------------------------------------------------------


def test_centering_values():
    # direct evaluation of 2 sqrt(g) ln N - (3/4) sqrt(g) ln ln N
    assert centering(1024) == pytest.approx(9.902457, abs=1e-6)
    assert centering(3) == pytest.approx(1.696852, abs=1e-6)
    assert centering(1024) == pytest.approx(2 * SQRT_G * math.log(1024) - 0.75 * SQRT_G * math.log(math.log(1024)))


def test_centering_gap():
    N = 2**16
    gap = centering(2 * N) - centering(N)
    exact = 2 * SQRT_G * math.log(2) - 0.75 * SQRT_G * math.log(math.log(2 * N) / math.log(N))
    assert gap == pytest.approx(exact, abs=1e-12)
    gaps = [centering(2 * n) - centering(n) for n in (2**8, 2**12, 2**16, 2**24)]
    assert all(abs(a - 2 * SQRT_G * math.log(2)) > abs(b - 2 * SQRT_G * math.log(2)) for a, b in zip(gaps, gaps[1:]))


def test_centering_domain():
    with pytest.raises(DomainError):
        centering(1)
    with pytest.warns(RuntimeWarning):
        centering(2)
    with pytest.raises(DomainError):
        centering(2, strict=True)


def test_default_radius():
    assert default_radius(512) == 4 and default_radius(16) == 2 and default_radius(81) == 3


# -- local maxima ------------------------------------------------------------


def test_ball_sizes():
    assert len(ball_offsets(2)) == 13
    assert len(ball_offsets(1)) == 5
    assert len(ball_offsets(2, "inf")) == 25


def test_center_peak():
    grid = np.array([[0.1, 0.2, 0.0], [0.3, 5.0, 0.4], [0.0, 0.2, 0.1]])
    L = LatticeDomain.box(1, 3, 1, 3, N=4)
    pts = extract_local_maxima(FieldSample(L, grid.ravel()), 1, m_N=0.0)
    verts = {tuple(v) for v in pts.vertices}
    assert (2, 2) in verts
    # remaining atoms dominate their own radius-1 balls
    for (i, j), h in zip(pts.vertices - 1, pts.heights):
        for di, dj in ball_offsets(1):
            a, b = i + di, j + dj
            if 0 <= a < 3 and 0 <= b < 3:
                assert grid[i, j] >= grid[a, b]
    assert pts.argmax == (2, 2) and pts.max_height == 5.0


def test_constant_field_all_vertices():
    L = LatticeDomain.box(0, 4, 0, 4, N=8)
    assert len(extract_local_maxima(FieldSample(L, np.ones(25)), 2)) == 25


def test_floor_path_matches_filter_path(rng):
    g = rng.normal(size=(40, 40))
    full = {tuple(x) for x in local_maxima_grid(g, 3)}
    high = {tuple(x) for x in local_maxima_grid(g, 3, floor=1.0)}
    assert high == {x for x in full if g[x] >= 1.0}


@given(st.integers(0, 10_000), st.sampled_from([1, 2, 3.5]))
def test_point_set_invariants(seed, r):
    L = LatticeDomain.box(0, 23, 0, 23, N=32)
    h = sample_dgff(L, "sine_transform", RngStream(seed))
    pts = extract_local_maxima(h, r)
    V = pts.vertices
    d = np.sqrt(((V[:, None, :] - V[None, :, :]) ** 2).sum(-1))
    np.fill_diagonal(d, np.inf)
    assert np.all(d > r)
    assert tuple(pts.argmax) in {tuple(v) for v in V}
    assert np.all(np.isfinite(pts.heights))
    assert np.all((pts.positions >= 0) & (pts.positions <= 1))


def test_threshold_level_set():
    L = LatticeDomain.box(0, 9, 0, 9, N=16)
    h = sample_dgff(L, "sine_transform", RngStream(1))
    mN = centering(16)
    pts = extract_local_maxima(h, 1, threshold=1.0)
    assert len(pts.level_set) == int(np.sum(h.values >= mN - 1.0))


# -- estimators on synthetic data ---------------------------------------------


def test_truncated_exponential_mle_on_ppp():
    rng = np.random.default_rng(3)
    h = synthetic_ppp_heights(rng, 20_000, -1.0, 1.5)
    b, se = truncated_exponential_mle(h, -1.0, 1.5)
    assert abs(b - ALPHA) < 3 * se


def test_intensity_profile_report():
    rng = np.random.default_rng(4)
    h = synthetic_ppp_heights(rng, 5000, -1.0, 1.5)
    rep = extremal_statistics(h, "intensity_profile", {"z_tol": 3})
    assert rep.passed and rep.stderr > 0
    with pytest.raises(WindowEmpty):
        extremal_statistics(np.array([5.0]), "intensity_profile")
    with pytest.raises(InsufficientExceedances):
        extremal_statistics(h[:10], "intensity_profile")


def test_cox_prediction_by_quadrature():
    # P(max > t) = 1 - int_0^1 exp(-s/u) du, s = c e^{-alpha t}/alpha
    for t, c in [(1.5, 1.0), (2.0, 2.0), (2.5, 0.5)]:
        s = c * math.exp(-ALPHA * t) / ALPHA
        p = integrate.quad(lambda u: -math.expm1(-s / u), 0, 1, epsabs=1e-15)[0]
        assert cox_tail_prediction(t, c) == pytest.approx(math.exp(ALPHA * t) / t * p, rel=1e-9)
    assert cox_tail_prediction(np.array([1.5, 2.0, 2.5])) == pytest.approx([1.358, 1.268, 1.214], abs=1e-3)
    # P(max > t) = s (ln(1/s) + 1 - gamma) + O(s^2), so the ratio tends to c
    t = 40.0
    lead = 1 + (math.log(ALPHA) + 1 - np.euler_gamma) / (ALPHA * t)
    assert cox_tail_prediction(t, 1.0) == pytest.approx(lead, rel=1e-9)


def test_tail_ratio_on_cox_maxima():
    rng = np.random.default_rng(5)
    m = synthetic_cox_maxima(rng, 400_000, c=1.0)
    ts = [1.5, 2.0, 2.5]
    rep = extremal_statistics(m, "tail_ratio", {"thresholds": ts, "planted": cox_tail_prediction(ts, 1.0)})
    assert rep.passed
    assert extremal_statistics(m, "tail_ratio", {"thresholds": ts}).passed


def test_argmax_density_uniform():
    rng = np.random.default_rng(6)
    pos = rng.random((20_000, 2))
    rep = extremal_statistics(pos, "argmax_density", {"psi_cells": np.ones((4, 4))})
    assert rep.passed
    assert np.allclose(rep.estimate["cell_ratio"], 1, atol=0.15)


def test_max_law_stability_and_level_set_modes(rng):
    a, b = rng.normal(size=5000), rng.normal(size=5000)
    assert extremal_statistics([a, b], "max_law_stability").passed
    assert not extremal_statistics([a, b + 1], "max_law_stability").passed
    sets = [np.array([[0, 0], [9, 9]]), np.array([[0, 0]])]
    assert extremal_statistics(sets, "separation", {"N": 64, "r": 2}).estimate == 0.5
    assert extremal_statistics(sets, "level_set_size").estimate["mean"] == 1.5
    with pytest.raises(ValueError):
        extremal_statistics(a, "bogus")


def test_stat_report_schema():
    r = StatReport("x", {"N": 4}, np.float64(1.5), np.array([0.1]), 0.2, np.bool_(True))
    d = r.to_dict()
    assert set(d) == {"estimator", "params", "estimate", "stderr", "tolerance", "pass"}
    assert StatReport.from_dict(d).to_dict() == d
    assert str(r).startswith("[PASS] x")


# -- Gibbs-Markov pipeline and campaigns -------------------------------------


def test_gm_consistency_identical_domains():
    D = ContinuumDomain.unit_square()
    reps = gm_consistency_test(D, D, 32, replicas=40, seed=1)
    reports = reps if isinstance(reps, list) else [reps]
    assert all(r.passed for r in reports)
    with pytest.raises(InsufficientReplicas):
        gm_consistency_test(D, D, 32, replicas=5)


def test_gm_consistency_two_halves():
    D = ContinuumDomain.unit_square()
    Dt = ContinuumDomain((Rectangle(0, 0.5, 0, 1), Rectangle(0.5, 1, 0, 1)))
    res = gm_consistency_test(
        D, Dt, 32, functionals=({"kind": "max"}, {"kind": "count_above", "level": -2.0}), replicas=100, seed=3
    )
    reports = res if isinstance(res, list) else [res]
    assert all(r.passed for r in reports)


def test_box_campaign_batching_invariance():
    full = box_campaign(32, 20, seed=4, floor=-1.0)
    parts = merge_campaigns([box_campaign(32, 8, seed=4, start=0), box_campaign(32, 12, seed=4, start=8)])
    assert np.array_equal(full.max_heights, parts.max_heights)
    assert np.array_equal(full.atom_heights, parts.atom_heights)
    assert full.replicas == 20
    # every replica's maximum is among its atoms when it clears the floor
    for k in range(20):
        if full.max_heights[k] >= -1.0:
            assert np.isclose(full.atom_heights[full.atom_replica == k].max(), full.max_heights[k], atol=1e-5)


def test_campaign_matches_extraction():
    c = box_campaign(32, 3, seed=7, dtype=np.float64, floor=-50.0)
    L = discretize(ContinuumDomain.unit_square(), 32)
    from dgfflab.fields import BoxSampler

    grid = BoxSampler(L.mask.shape).sample_grid(RngStream(7, 1))
    pts = extract_local_maxima(FieldSample(L, grid.ravel()), default_radius(32))
    assert np.allclose(np.sort(c.atom_heights[c.atom_replica == 1]), np.sort(pts.heights))
    assert isinstance(pts, ExtremalPointSet)
