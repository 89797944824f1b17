import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from whitney_w2p import build_domain, cusp_spec, decompose, flat_spec
from whitney_w2p.whitney import (AnchorNotInFamily, DilatedBox, DyadicCube, TargetNotInFamily,
                                 UnitSquare, WhitneyDecomposition, brute_force_selection,
                                 family_offset)


def _as_set(dec):
    return {(int(g), tuple(int(v) for v in k)) for g, k in zip(dec.gens, dec.idx)}


def _box_dist(lo_a, hi_a, lo_b, hi_b):
    gap = np.maximum(np.maximum(lo_a - hi_b, lo_b - hi_a), 0.0)
    return np.sqrt((gap**2).sum(axis=-1))


def _band_oracle(dec, ar, s0, rows):
    """Float re-derivation of the band index from closed-box distances."""
    lo, hi = dec.boxes()
    d = _box_dist(lo[rows], hi[rows], lo[ar], hi[ar])
    j = np.zeros(len(rows), dtype=int)
    far = d > 2.0 ** (-s0 + 5)
    j[far] = np.ceil(np.log2(d[far]) + s0 - 5 - 1e-12).astype(int)
    return j


# ----------------------------------------------------------- selection

def test_unit_square_matches_brute_force():
    sq = UnitSquare()
    dec = decompose(sq, 6)
    assert _as_set(dec) == brute_force_selection(sq, 6)


def test_cusp_matches_brute_force(cusp):
    dom = build_domain(cusp_spec(0.5, delta=2.0**-8))
    dec = decompose(dom, 6)
    assert _as_set(dec) == brute_force_selection(dom, 6, extent=(-1, 1))


@pytest.mark.parametrize("alpha", [None, 0.5])
def test_distance_bounds(flat, cusp, alpha):
    dom = flat if alpha is None else cusp(alpha)
    dec = decompose(dom, 9)
    rep = dec.check_distance_bounds()
    assert rep.violations == 0
    assert 1.0 <= rep.min_ratio and rep.max_ratio <= 4.0


def test_no_selected_cube_touches_the_boundary(flat_dec):
    lo, hi = flat_dec.boxes()
    assert np.all(flat_dec.domain.box_distance(lo, hi) > 0)


def test_hand_built_violation_is_reported(flat):
    # generation-3 cube sitting on the flat graph: dist 0 < d
    dec = WhitneyDecomposition(flat, 4, np.array([3]), np.array([[0, 0]]), np.array([0.0]))
    rep = dec.check_distance_bounds()
    assert rep.violations == 1 and rep.min_ratio < 1


def test_disjointness(flat_dec, cusp_dec):
    assert flat_dec.check_disjoint() == 0
    assert cusp_dec.check_disjoint() == 0


def test_nested_pair_counts_as_overlap(flat):
    dec = WhitneyDecomposition(flat, 5, np.array([2, 3]), np.array([[0, 1], [0, 2]]),
                               np.array([0.5, 0.5]))
    assert dec.check_disjoint() == 1


def test_canonical_order_independent_of_input(flat_dec):
    perm = np.random.default_rng(0).permutation(len(flat_dec))
    other = WhitneyDecomposition(flat_dec.domain, flat_dec.s_max, flat_dec.gens[perm],
                                 flat_dec.idx[perm], flat_dec.dist[perm])
    assert np.array_equal(other.gens, flat_dec.gens) and np.array_equal(other.idx, flat_dec.idx)


# ------------------------------------------------------------- overlap

def test_overlap_bound_two_dimensional(flat_dec, cusp_dec):
    assert 1 <= flat_dec.check_overlap_bound() <= 144
    assert 1 <= cusp_dec.check_overlap_bound() <= 144


def test_single_cube_overlap_is_one(flat):
    dec = WhitneyDecomposition(flat, 4, np.array([2]), np.array([[0, 1]]), np.array([0.5]))
    assert dec.check_overlap_bound() == 1


def test_overlap_bound_three_dimensional():
    dom = build_domain(flat_spec(dim=3, delta=2.0**-6))
    dec = decompose(dom, 5)
    assert dec.check_distance_bounds().violations == 0
    assert dec.check_overlap_bound() <= 1728


def test_overlap_against_float_count(flat):
    dec = decompose(flat, 6)
    lo, hi = dec.boxes()
    side = dec.sides()[:, None]
    dlo, dhi = lo - side / 10, hi + side / 10
    rng = np.random.default_rng(1)
    P = rng.uniform([-0.9, 0.0], [0.9, 0.9], size=(3000, 2))
    inside = (P[:, None, :] >= dlo[None]) & (P[:, None, :] <= dhi[None])
    brute = int(inside.all(axis=2).sum(axis=1).max())
    assert brute <= dec.check_overlap_bound()


# ---------------------------------------------------------- dilations

@given(g=st.integers(0, 30), k=st.lists(st.integers(-2**20, 2**20), min_size=2, max_size=3))
def test_dilated_box_is_exact(g, k):
    cube = DyadicCube(g, tuple(v % (2**g) if g else 0 for v in k))
    box = cube.dilated()
    assert box.denominator == 5 * 2 ** (g + 1)
    assert box.side() == Fraction(6, 5) / 2**g
    lo, hi = box.corners()
    for a, b, m in zip(lo, hi, cube.index):
        assert (a + b) / 2 == Fraction(2 * m + 1, 2 ** (g + 1))   # centre of the cube itself
        assert b - a == box.side()


def test_dilated_box_contains_cube_and_margin():
    box = DilatedBox.of(DyadicCube(2, (1, 3)))
    assert box.contains((0.25, 0.75)) and box.contains((0.5, 1.0))
    assert box.contains((0.25 - 0.025, 0.75)) and not box.contains((0.25 - 0.0251, 0.75))


@given(g=st.integers(1, 20), k=st.tuples(st.integers(0, 2**20), st.integers(0, 2**20)))
def test_parent_contains_child(g, k):
    c = DyadicCube(g, (k[0] % 2**g, k[1] % 2**g))
    par = c.parent()
    assert par.contains_cube(c)
    assert all(c.contains_cube(ch) for ch in c.children())
    lo, hi = c.lo, c.hi
    assert np.all(par.lo <= lo) and np.all(hi <= par.hi)


@given(g=st.integers(1, 12), a=st.tuples(st.integers(0, 4095), st.integers(0, 4095)),
       b=st.tuples(st.integers(0, 4095), st.integers(0, 4095)))
def test_same_generation_cubes_have_disjoint_interiors(g, a, b):
    m = 2**g
    ca, cb = DyadicCube(g, (a[0] % m, a[1] % m)), DyadicCube(g, (b[0] % m, b[1] % m))
    overlap = np.all(np.minimum(ca.hi, cb.hi) - np.maximum(ca.lo, cb.lo) > 0)
    assert overlap == (ca == cb)


# --------------------------------------------------------------- cover

def test_cover_of_inner_region(flat, cusp):
    for dom in (flat, cusp(0.6)):
        dec = decompose(dom, 8)
        rep = dec.check_cover_containment(1.0)
        assert rep.uncovered == 0 and rep.covered > 0
    rep = decompose(cusp(0.6), 8).check_cover_containment(0.75)
    assert rep.uncovered == 0


def test_collar_nodes_are_excluded(cusp_dec):
    rep = cusp_dec.check_cover_containment(1.0)
    assert rep.collar_skipped > 0
    assert rep.probes == rep.covered + rep.uncovered + rep.collar_skipped + rep.outside


def test_in_omega_against_float_geometry(cusp_dec):
    dec = cusp_dec
    dom = dec.domain
    rows = np.arange(len(dec))
    exact = dec.dilated_in_omega(rows, 0.25)
    lo, hi = dec.boxes()
    s = dec.sides()[:, None]
    dlo, dhi = lo - s / 10, hi + s / 10
    far = np.maximum(np.abs(dlo), np.abs(dhi))
    in_ball = (far**2).sum(1) < 1 / 16
    t = np.linspace(0, 1, 65)
    above = np.array([np.all(dlo[i, 1] > dom.phi(dlo[i, 0] + t * (dhi[i, 0] - dlo[i, 0])))
                      for i in rows])
    assert np.array_equal(exact, in_ball & above)


# ------------------------------------------------------ diameter sums

def test_diameter_sums_small_generations_empty(flat_dec):
    ds = flat_dec.sum_diameters(1.5)
    assert ds.sums[0] == 0.0 and ds.sums[1] == 0.0


def test_diameter_sum_slope_flat(flat):
    ds = decompose(flat, 10).sum_diameters(1.5)
    assert ds.slope == pytest.approx(-0.5, abs=0.2)
    assert ds.decay_holds and ds.s_star is not None


def test_volume_sum_bounded_by_region(flat_dec):
    ds = flat_dec.sum_diameters(2.0)
    # Σ d² = 2 Σ |Q| over disjoint cubes inside Ω_{1/4}, a half disk
    assert ds.cumulative[-1] <= 2 * math.pi / 32 * (1 + 1e-12)


def test_nonpositive_q_rejected(flat_dec):
    with pytest.raises(ValueError):
        flat_dec.sum_diameters(0.0)


# ------------------------------------------------------------ families

def test_family_offset():
    assert [family_offset(n) for n in (1, 2, 3, 4, 5)] == [0, 1, 1, 1, 2]


def test_family_definition(cusp_dec):
    dec = cusp_dec
    e = family_offset(2)
    for s in range(0, dec.s_max - e + 1):
        rows = dec.family_rows(s)
        d = dec.diameters()[rows]
        assert np.all((2.0 ** (-s - 1) < d) & (d <= 2.0**-s))
        cand = np.nonzero(dec.gens == s + e)[0]
        assert np.array_equal(rows, cand[dec.dilated_in_omega(cand, 0.25)])


def _anchors(dec, k=3):
    out = []
    for s0 in range(0, dec.s_max):
        rows = dec.family_rows(s0)
        if len(rows):
            out += [int(r) for r in rows[np.linspace(0, len(rows) - 1, min(k, len(rows))).astype(int)]]
    return out


def test_band_partition_and_oracle(cusp_dec):
    dec = cusp_dec
    for ar in _anchors(dec):
        assert dec.band_partition_violations(ar) == 0
        _, s0 = dec.anchor_row(ar)
        rows = dec.all_family_rows()
        want = _band_oracle(dec, ar, s0, rows)
        fam = dec.families()[rows]
        for j in np.unique(want):
            for s in np.unique(fam):
                got = dec.family_Fsj_rows(ar, int(s), int(j))
                assert np.array_equal(np.sort(got), np.sort(rows[(want == j) & (fam == s)]))


def test_emptiness_ranges(flat_dec, cusp_dec):
    for dec in (flat_dec, cusp_dec):
        for ar in _anchors(dec):
            assert dec.emptiness_violations(ar) == 0
            _, s0 = dec.anchor_row(ar)
            assert len(dec.family_Fsj_rows(ar, s0, s0 + 1)) == 0
            for j in range(0, s0 + 1):
                for s in range(0, s0 - j - 6):
                    assert len(dec.family_Fsj_rows(ar, s, j)) == 0


def test_family_measure_matches_enumeration(flat_dec):
    dec = flat_dec
    ar = int(dec.family_rows(4)[0])
    s0 = 4
    for s in range(2, 7):
        for j in range(0, 3):
            meas, bound, ratio = dec.family_measure(ar, s, j)
            rows = dec.family_rows(s)
            jb = _band_oracle(dec, ar, s0, rows)
            want = float(np.sum(dec.sides()[rows[jb == j]] ** 2))
            assert meas == pytest.approx(want, abs=1e-15)
            assert bound == 2.0 ** ((-s0 + j) - s)
            assert ratio == pytest.approx(want / bound)


def test_family_measure_empty_band(flat_dec):
    ar = int(flat_dec.family_rows(4)[0])
    meas, _, ratio = flat_dec.family_measure(ar, 4, 9)
    assert meas == 0.0 and ratio == 0.0


def test_reverse_count_matches_enumeration(cusp_dec):
    dec = cusp_dec
    targets = dec.family_rows(5)[:5]
    for tr in targets:
        for s0 in range(2, 6):
            anchors = dec.family_rows(s0)
            for j in range(0, s0 + 1):
                direct = sum(int(tr) in set(dec.family_Fsj_rows(int(a), 5, j).tolist())
                             for a in anchors)
                assert dec.reverse_count(int(tr), s0, j) == direct


def test_reverse_count_out_of_range(cusp_dec):
    tr = int(cusp_dec.family_rows(4)[0])
    assert cusp_dec.reverse_count(tr, 40, 0) == 0


def test_family_errors(flat_dec):
    non_member = int(np.nonzero(~np.isin(np.arange(len(flat_dec)), flat_dec.all_family_rows()))[0][0])
    with pytest.raises(AnchorNotInFamily):
        flat_dec.family_measure(non_member, 3, 0)
    with pytest.raises(TargetNotInFamily):
        flat_dec.reverse_count(non_member, 3, 0)


# --------------------------------------------------------------- dumps

def test_dump_jsonl(tmp_path, flat_dec):
    p = tmp_path / "cubes.jsonl"
    flat_dec.dump_jsonl(p)
    rows = [json.loads(line) for line in p.read_text().splitlines()]
    assert len(rows) == len(flat_dec)
    assert set(rows[0]) == {"s", "index", "d", "dist_to_F"}
    assert rows[0]["d"] == pytest.approx(math.sqrt(2) * 2.0 ** -rows[0]["s"])


def test_locate_half_open(flat_dec):
    dec = flat_dec
    lo, hi = dec.boxes()
    rows = dec.locate_rows(lo[:50])
    assert np.array_equal(rows, np.arange(50))


def test_s_max_too_small(flat):
    with pytest.raises(ValueError):
        decompose(flat, 3)
