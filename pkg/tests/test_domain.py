import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dgfflab.domain import (
    ContinuumDomain,
    Disc,
    LatticeDomain,
    Polygon,
    Rectangle,
    delta_interior,
    discretize,
    interior_approximations,
    lebesgue_deficit,
    square_tiling,
    triangulate,
)
from dgfflab.errors import EmptyDiscretization, EmptyInterior, InvalidDomain, NoTriangles

SQ = ContinuumDomain.unit_square()
DISC = ContinuumDomain.disc()
TRI = ContinuumDomain.polygon([(0.0, 0.0), (1.0, 0.0), (0.5, math.sqrt(3) / 2)])


def exact_dinf_ok(D, v, N):
    return D.exact_box_inside(Fraction(int(v[0]), N), Fraction(int(v[1]), N), Fraction(1, N))


# -- continuum domains -------------------------------------------------------


def test_from_dict_round_trip():
    spec = {"shapes": [{"kind": "rectangle", "params": [0, 1, 0, 2]}, {"kind": "disc", "params": [3, 0, 0.5]}]}
    D = ContinuumDomain.from_dict(spec)
    assert len(D.components) == 2
    assert ContinuumDomain.from_dict(D.to_dict()).to_dict() == D.to_dict()


def test_invalid_domains():
    with pytest.raises(InvalidDomain):
        ContinuumDomain(())
    with pytest.raises(InvalidDomain):
        ContinuumDomain((Rectangle(0, 0, 0, 1),))
    with pytest.raises(InvalidDomain):
        ContinuumDomain((Disc(0, 0, 1e-9),))
    with pytest.raises(InvalidDomain):
        ContinuumDomain.from_dict({"shapes": [{"kind": "annulus", "params": [0]}]})


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_contains_iff_positive_distance(x, y):
    for D in (SQ, DISC, TRI):
        inside = bool(D.contains([(x, y)])[0])
        d = float(D.dist_to_complement([(x, y)])[0])
        assert inside == (d > 0)


# -- discretization ----------------------------------------------------------


def test_discretize_square_N4_strict_rule():
    # the strict d_inf test leaves only the centre vertex at N=4
    L = discretize(SQ, 4)
    assert [tuple(v) for v in L.vertices] == [(2, 2)]


def test_discretize_square_N8():
    L = discretize(SQ, 8)
    assert L.is_box and L.size == 25 and tuple(L.origin) == (2, 2)


def test_discretize_square_N2_empty():
    with pytest.raises(EmptyDiscretization):
        discretize(SQ, 2)


@pytest.mark.parametrize("D", [SQ, DISC, TRI], ids=["square", "disc", "triangle"])
@pytest.mark.parametrize("N", [8, 13, 32])
def test_discretization_invariants(D, N):
    L = discretize(D, N)
    assert all(exact_dinf_ok(D, v, N) for v in L.vertices)
    ob = {tuple(v) for v in L.outer_boundary}
    assert not ob & {tuple(v) for v in L.vertices}
    idx = L.index_of(L.vertices)
    assert np.array_equal(np.sort(idx), np.arange(L.size))


@given(
    st.floats(-1, 1), st.floats(-1, 1), st.floats(0.2, 1.5), st.floats(0.2, 1.5), st.integers(4, 24)
)
def test_rectangle_discretization_is_maximal(x0, y0, w, h, N):
    D = ContinuumDomain.rectangle(x0, x0 + w, y0, y0 + h)
    try:
        L = discretize(D, N)
        got = {tuple(v) for v in L.vertices}
    except EmptyDiscretization:
        got = set()
    want = {
        (i, j)
        for i in range(math.floor(x0 * N) - 1, math.ceil((x0 + w) * N) + 2)
        for j in range(math.floor(y0 * N) - 1, math.ceil((y0 + h) * N) + 2)
        if exact_dinf_ok(D, (i, j), N)
    }
    assert got == want


@pytest.mark.parametrize("D", [SQ, DISC], ids=["square", "disc"])
def test_riemann_sum_property(D):
    L = discretize(D, 512)
    assert abs(L.size / 512**2 / D.area() - 1) < 0.02


def test_components_two_steps_apart():
    D = ContinuumDomain((Rectangle(0, 1, 0, 0.5), Rectangle(0, 1, 0.5, 1)))
    L = discretize(D, 16)
    comps = L.connected_components()
    assert len(comps) == 2
    a, b = comps[0].vertices, comps[1].vertices
    d = np.abs(a[:, None, :] - b[None, :, :]).sum(axis=2).min()
    assert d >= 2


def test_dilation_bookkeeping():
    # S_K discretized at N equals S_1 discretized at N K, up to the index shift
    for K, N in [(2, 8), (4, 16), (3, 10)]:
        big = discretize(ContinuumDomain.rectangle(0, K, 0, K), N)
        small = discretize(SQ, N * K)
        assert {tuple(v) for v in big.vertices} == {tuple(v) for v in small.vertices}


def test_lattice_box_and_from_vertices():
    L = LatticeDomain.box(0, 2, 0, 1)
    assert L.size == 6 and L.is_box
    M = LatticeDomain.from_vertices([(0, 0), (1, 0)])
    assert M.size == 2 and not LatticeDomain.from_vertices([(0, 0), (1, 1)]).is_box
    with pytest.raises(EmptyDiscretization):
        LatticeDomain.from_vertices([])


# -- interior approximations -------------------------------------------------


def test_delta_interior_disc():
    D = delta_interior(DISC, 0.25)
    assert isinstance(D.components[0], Disc) and D.components[0].r == pytest.approx(0.75)


def test_delta_interior_empty():
    with pytest.raises(EmptyInterior):
        delta_interior(DISC, 1.0)


def test_square_tiling_deficits():
    # n=1 shrinks to empty squares; n=2 and n=3 follow 1 - (1 - 2^{1-n})^2
    with pytest.raises(EmptyInterior):
        square_tiling(SQ, 1)
    assert lebesgue_deficit(SQ, square_tiling(SQ, 2)) == pytest.approx(0.75, abs=1e-9)
    assert lebesgue_deficit(SQ, square_tiling(SQ, 3)) == pytest.approx(0.4375, abs=1e-9)


def test_square_tiling_subset_and_monotone():
    defs = []
    for n in (2, 3, 4, 5):
        T = square_tiling(DISC, n)
        pts = np.array([c.bbox for c in T.components])
        corners = np.concatenate([pts[:, [0, 2]], pts[:, [1, 3]], pts[:, [0, 3]], pts[:, [1, 2]]])
        assert np.all(np.hypot(corners[:, 0], corners[:, 1]) <= 1 + 1e-12)
        defs.append(lebesgue_deficit(DISC, T, resolution=1024))
    assert all(a > b for a, b in zip(defs, defs[1:]))


def test_delta_interior_deficit_monotone():
    defs = [lebesgue_deficit(TRI, delta_interior(TRI, d), resolution=512) for d in (0.1, 0.05, 0.02, 0.01)]
    assert all(a > b for a, b in zip(defs, defs[1:])) and defs[-1] < 0.1


def test_interior_approximations_dispatch():
    assert interior_approximations(DISC, "delta_interior", 0.5).components[0].r == pytest.approx(0.5)
    with pytest.raises(ValueError):
        interior_approximations(DISC, "bogus", 1)


# -- triangulations ----------------------------------------------------------


def test_triangulate_unit_triangle_K1():
    P = triangulate(TRI, 1, 0.1)
    assert P.total_count == 1 and P.near_count == 0
    s = P.shrunk_triangles[0]
    assert np.linalg.norm(s[1] - s[0]) == pytest.approx(0.9)


def _check_partition(P, D):
    assert P.near_count <= P.total_count
    assert np.all(D.dist_to_complement(P.triangles.reshape(-1, 2)) >= -1e-12)
    assert np.all(D.contains(P.centers))
    # shrunk triangles concentric and inside their parents
    S = P.shrunk_triangles
    assert np.allclose(S.mean(axis=1), P.centers)
    assert len({tuple(x) for x in P.lattice_ids.tolist()}) == P.total_count
    cen_d = D.dist_to_complement(P.centers)
    assert np.all(cen_d > 0)
    far = P.triangles[: P.near_count].reshape(-1, 2)
    assert np.all(D.dist_to_complement(far) >= P.delta - 1e-12)


def test_triangulate_disc_K2():
    P = triangulate(DISC, 2, 0.1)
    assert P.total_count > 0
    _check_partition(P, DISC)


@pytest.mark.parametrize("theta", [0.0, math.pi / 7])
@pytest.mark.parametrize("K", [3, 6])
def test_triangulate_invariants(theta, K):
    for D in (DISC, SQ):
        _check_partition(triangulate(D, K, 0.1, theta), D)


def test_triangulate_too_coarse():
    with pytest.raises(NoTriangles):
        triangulate(ContinuumDomain.disc(r=0.1), 1, 0.1)


def test_polygon_shape():
    P = Polygon(((0, 0), (2, 0), (0, 2)))
    assert P.area == pytest.approx(2.0)
