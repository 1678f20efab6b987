import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trapwave import hyperbolic as hyp
from trapwave.errors import (
    CapacityError,
    ContractViolation,
    DataInsufficiencyError,
    InvalidIsometryError,
    InvalidPointError,
)

from oracles import delta_bisection

coord = st.floats(-3.0, 3.0, allow_nan=False)
height = st.floats(0.05, 20.0, allow_nan=False)


def h2_points():
    return st.builds(hyp.HPoint.h2, coord, height)


def h3_points():
    return st.builds(hyp.HPoint.h3, coord, coord, height)


# ---------------------------------------------------------------------------
# points and distances
# ---------------------------------------------------------------------------


def test_distance_vertical_h2():
    assert hyp.hyp_distance(hyp.HPoint.h2(0, 1), hyp.HPoint.h2(0, 2)) == pytest.approx(math.log(2), abs=1e-15)


def test_distance_vertical_h3():
    d = hyp.hyp_distance(hyp.HPoint.h3(0, 0, 1), hyp.HPoint.h3(0, 0, math.e))
    assert d == pytest.approx(1.0, abs=1e-14)


def test_distance_matches_cosh_formula():
    a, b = hyp.HPoint.h2(0.3, 0.7), hyp.HPoint.h2(-1.2, 2.5)
    ch = 1 + ((0.3 + 1.2) ** 2 + (0.7 - 2.5) ** 2) / (2 * 0.7 * 2.5)
    assert hyp.hyp_distance(a, b) == pytest.approx(math.acosh(ch), rel=1e-14)


def test_distance_zero_iff_equal():
    a = hyp.HPoint.h3(0.1, -0.2, 0.3)
    assert hyp.hyp_distance(a, a) == 0.0
    assert hyp.hyp_distance(a, hyp.HPoint.h3(0.1, -0.2, 0.3 + 1e-9)) > 0


def test_distance_dimension_mismatch():
    with pytest.raises(ContractViolation):
        hyp.hyp_distance(hyp.HPoint.h2(0, 1), hyp.HPoint.h3(0, 0, 1))


@pytest.mark.parametrize("coords", [(0.0, 0.0), (0.0, -1.0), (math.nan, 1.0), (0.0, math.inf)])
def test_invalid_points(coords):
    with pytest.raises(InvalidPointError):
        hyp.HPoint(2, coords)


def test_point_dimension_checked():
    with pytest.raises(ContractViolation):
        hyp.HPoint(4, (0, 0, 0, 1))


@settings(max_examples=200, deadline=None)
@given(h2_points(), h2_points())
def test_symmetry_h2(a, b):
    assert hyp.hyp_distance(a, b) == hyp.hyp_distance(b, a)


@settings(max_examples=200, deadline=None)
@given(h3_points(), h3_points(), h3_points())
def test_triangle_inequality_h3(a, b, c):
    assert hyp.hyp_distance(a, c) <= hyp.hyp_distance(a, b) + hyp.hyp_distance(b, c) + 1e-10


@pytest.mark.parametrize("dim", [2, 3])
def test_triangle_inequality_1000_triples(dim):
    rng = np.random.default_rng(11)
    worst = -math.inf
    for _ in range(1000):
        a, b, c = (hyp.random_point(rng, dim, 2.0) for _ in range(3))
        worst = max(worst, hyp.hyp_distance(a, c) - hyp.hyp_distance(a, b) - hyp.hyp_distance(b, c))
    assert worst <= 1e-10


# ---------------------------------------------------------------------------
# isometries
# ---------------------------------------------------------------------------


def test_identity_action():
    p = hyp.HPoint.h3(0.4, -0.1, 2.0)
    q = hyp.apply_isometry(hyp.Isometry.identity(3), p)
    assert q.coords == pytest.approx(p.coords, abs=1e-15)


def test_dilation_on_i():
    g = hyp.Isometry(2, np.diag([math.exp(0.5), math.exp(-0.5)]))
    q = hyp.apply_isometry(g, hyp.HPoint.h2(0, 1))
    assert q.coords == pytest.approx((0.0, math.e), abs=1e-14)


@pytest.mark.parametrize("dim", [2, 3])
def test_isometry_invariance_random(dim):
    rng = np.random.default_rng(5 + dim)
    worst = 0.0
    for _ in range(1000):
        g = hyp.random_isometry(rng, dim)
        a, b = hyp.random_point(rng, dim), hyp.random_point(rng, dim)
        d0 = hyp.hyp_distance(a, b)
        d1 = hyp.hyp_distance(hyp.apply_isometry(g, a), hyp.apply_isometry(g, b))
        worst = max(worst, abs(d1 - d0))
    assert worst < 1e-10


def test_isometry_invariance_hyperbolic_generators_100_pairs():
    rng = np.random.default_rng(3)
    G = hyp.schottky_pair(dim=3)
    for _ in range(100):
        a, b = hyp.random_point(rng, 3), hyp.random_point(rng, 3)
        for g in G.generators:
            assert g.is_hyperbolic()
            d = hyp.hyp_distance(hyp.apply_isometry(g, a), hyp.apply_isometry(g, b))
            assert d == pytest.approx(hyp.hyp_distance(a, b), abs=1e-12)


def test_singular_matrix_rejected():
    with pytest.raises(InvalidIsometryError):
        hyp.Isometry.from_matrix(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(InvalidIsometryError):
        hyp.Isometry(2, np.array([[2.0, 0.0], [0.0, 2.0]]))


def test_negative_determinant_rejected():
    with pytest.raises(InvalidIsometryError):
        hyp.Isometry.from_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))


def test_group_op():
    rng = np.random.default_rng(0)
    for dim in (2, 3):
        g, h = hyp.random_isometry(rng, dim), hyp.random_isometry(rng, dim)
        e = hyp.group_op(g, hyp.group_op(g, mode="invert"))
        assert np.allclose(e.matrix, np.eye(2), atol=1e-12)
        assert hyp.group_op(hyp.Isometry.identity(dim), h) == h
        gh = hyp.group_op(g, h)
        det = gh.matrix[0, 0] * gh.matrix[1, 1] - gh.matrix[0, 1] * gh.matrix[1, 0]
        assert abs(det - 1) < 1e-12


def test_translation_length_of_dilation():
    assert hyp.Isometry.dilation(2.7).translation_length() == pytest.approx(2.7, rel=1e-14)
    assert hyp.Isometry.dilation(2.7, 3).translation_length() == pytest.approx(2.7, rel=1e-14)


# ---------------------------------------------------------------------------
# groups
# ---------------------------------------------------------------------------


def test_groupspec_json_roundtrip():
    for G in (hyp.cyclic_group(1.5, 3), hyp.schottky_pair()):
        obj = json.loads(json.dumps(G.to_json()))
        H = hyp.GroupSpec.from_json(obj)
        assert (H.kind, H.dim) == (G.kind, G.dim)
        assert H.basepoint.coords == G.basepoint.coords
        assert all(np.allclose(a.matrix, b.matrix, atol=1e-14) for a, b in zip(G.generators, H.generators))


def test_overlapping_schottky_rejected():
    with pytest.raises(ContractViolation):
        hyp.schottky_pair(0.5, 0.5, 0.5)


def test_non_hyperbolic_generator_rejected():
    with pytest.raises(ContractViolation):
        hyp.GroupSpec("cyclic", (hyp.Isometry.identity(2),))


def test_cyclic_orbit_on_axis():
    ell = 1.7
    G = hyp.cyclic_group(ell)
    els = hyp.enumerate_orbit(G, 3.5 * ell)
    assert len(els) == 6
    assert [e.displacement for e in els] == pytest.approx([ell, ell, 2 * ell, 2 * ell, 3 * ell, 3 * ell], abs=1e-12)


def test_orbit_empty_below_min_displacement():
    G = hyp.schottky_pair()
    assert hyp.enumerate_orbit(G, 0.5 * G.min_displacement()) == []


def test_orbit_invariants():
    G = hyp.schottky_pair()
    els = hyp.enumerate_orbit(G, 20.0)
    disp = np.array([e.displacement for e in els])
    assert np.all(np.diff(disp) >= 0)
    words = [e.word for e in els]
    assert len(set(words)) == len(words)
    for w in words:
        assert all(a ^ 1 != b for a, b in zip(w, w[1:]))
    e = G.basepoint
    for el in els[:: max(1, len(els) // 50)]:
        assert hyp.hyp_distance(e, hyp.apply_isometry(el.element, e)) == pytest.approx(el.displacement, abs=1e-10)


def _brute_force_displacements(G, max_len):
    """Displacements of all reduced words up to ``max_len`` letters."""
    letters = G.letters().real if G.dim == 2 else G.letters()
    e = G.basepoint
    y0 = e.height
    mats = letters.copy()
    last = np.arange(len(letters))
    out = []
    for length in range(1, max_len + 1):
        if length > 1:
            nxt, lab = [], []
            for k in range(len(letters)):
                keep = last != (k ^ 1)
                nxt.append(mats[keep] @ letters[k])
                lab.append(np.full(int(keep.sum()), k))
            mats, last = np.concatenate(nxt), np.concatenate(lab)
        # conjugating by z -> y0 z moves the basepoint to i, where 2 cosh r = a^2 + b^2 + c^2 + d^2
        a, b, c, d = mats[:, 0, 0], mats[:, 0, 1] / y0, mats[:, 1, 0] * y0, mats[:, 1, 1]
        ch = 0.5 * (a * a + b * b + c * c + d * d)
        out.append(np.arccosh(np.maximum(ch, 1.0)))
    return np.concatenate(out)


def test_schottky_counts_match_exhaustive_words():
    G = hyp.schottky_pair()
    disp = _brute_force_displacements(G, 12)
    for R in (10.0, 20.0, 30.0):
        assert len(hyp.enumerate_orbit(G, R)) == int(np.count_nonzero(disp <= R))


def test_capacity_error():
    with pytest.raises(CapacityError) as info:
        hyp.enumerate_orbit(hyp.schottky_pair(), 30.0, cap=100)
    assert info.value.cap == 100


def test_basepoint_inside_isometric_circle_rejected():
    G = hyp.schottky_pair()
    with pytest.raises(ContractViolation):
        hyp.GroupSpec("schottky", G.generators, hyp.HPoint.h2(-1.5, 0.2))


# ---------------------------------------------------------------------------
# Poincare series
# ---------------------------------------------------------------------------


def test_cyclic_poincare_geometric_series():
    ell = 1.3
    G = hyp.cyclic_group(ell)
    e = G.basepoint
    limit = 1 + 2 * math.exp(-ell) / (1 - math.exp(-ell))
    prev = 0.0
    for K in (3, 6, 12, 30):
        R = (K + 0.5) * ell
        v, tail = hyp.poincare_partial_sum(G, 1.0, e, e, R)
        exact_tail = 2 * math.exp(-(K + 1) * ell) / (1 - math.exp(-ell))
        assert v + exact_tail == pytest.approx(limit, abs=1e-10)
        assert tail >= exact_tail * (1 - 1e-12)
        assert v >= prev
        prev = v


def test_poincare_s_zero_counts():
    G = hyp.cyclic_group(2.0)
    e = G.basepoint
    v, tail = hyp.poincare_partial_sum(G, 0.0, e, e, 9.0)
    assert v == 1 + len(hyp.enumerate_orbit(G, 9.0))
    assert math.isinf(tail)


def test_schottky_tail_decreases():
    G = hyp.schottky_pair()
    e = G.basepoint
    s = 0.6
    v8, t8 = hyp.poincare_partial_sum(G, s, e, e, 8.0)
    v12, t12 = hyp.poincare_partial_sum(G, s, e, e, 12.0)
    assert math.isfinite(t8) and math.isfinite(t12)
    assert t12 < t8
    assert v12 >= v8
    assert v12 - v8 <= t8


@settings(max_examples=25, deadline=None)
@given(st.floats(0.3, 2.0), st.floats(5.0, 14.0), st.floats(0.0, 4.0))
def test_poincare_monotone_in_R(s, R, dR):
    G = hyp.schottky_pair()
    e = G.basepoint
    assert hyp.poincare_partial_sum(G, s, e, e, R + dR)[0] >= hyp.poincare_partial_sum(G, s, e, e, R)[0]


# ---------------------------------------------------------------------------
# critical exponent
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("dim", [2, 3])
def test_delta_cyclic_exact_zero(dim):
    assert hyp.estimate_delta(hyp.cyclic_group(1.0, dim), 10.0) == (0.0, 0.0)


def test_delta_insufficient_data():
    with pytest.raises(DataInsufficiencyError) as info:
        hyp.estimate_delta(hyp.schottky_pair(), 12.0)
    assert info.value.required == 50


def test_delta_schottky_vs_bisection():
    G = hyp.schottky_pair()
    d, e = hyp.estimate_delta(G, 30.0)
    b, eb = delta_bisection(G, 30.0)
    assert 0.2 < d < 0.4
    assert abs(d - b) <= 2 * math.hypot(e, eb)


def test_delta_self_consistent_under_range_growth():
    G = hyp.schottky_pair()
    d1, e1 = hyp.estimate_delta(G, 26.0)
    d2, e2 = hyp.estimate_delta(G, 39.0, cap=10 ** 6)
    assert abs(d1 - d2) <= math.hypot(e1, e2)
