import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from whitney_w2p import build_domain, cusp_spec, flat_spec, table_spec
from whitney_w2p.geometry import (BallNotContained, EmptySamples, SeminormViolation,
                                  load_domain_spec, shipped_specs)


def _brute_dist_to_F(dom, lo, hi, m=400):
    """dist(box, F) by dense sampling of the graph, the unit circle and the
    box boundary.  Upper bound that converges to the true value."""
    t = np.linspace(-1, 1, 20 * m + 1)
    graph = np.stack([t, dom.phi(t)], 1)
    graph = graph[np.hypot(*graph.T) <= 1]
    th = np.linspace(0, 2 * np.pi, 40 * m, endpoint=False)
    circ = np.stack([np.cos(th), np.sin(th)], 1)
    F = np.concatenate([graph, circ])
    s = np.linspace(0, 1, m + 1)
    edges = np.concatenate([
        np.stack([lo[0] + s * (hi[0] - lo[0]), np.full_like(s, lo[1])], 1),
        np.stack([lo[0] + s * (hi[0] - lo[0]), np.full_like(s, hi[1])], 1),
        np.stack([np.full_like(s, lo[0]), lo[1] + s * (hi[1] - lo[1])], 1),
        np.stack([np.full_like(s, hi[0]), lo[1] + s * (hi[1] - lo[1])], 1)])
    d = np.sqrt(((edges[:, None, :] - F[None, :, :]) ** 2).sum(-1))
    return float(d.min())


# ------------------------------------------------------------- building

def test_cusp_lipschitz_quotient(cusp):
    assert cusp(0.6).lipschitz_constant() == pytest.approx(1.6, abs=1e-3)


def test_seminorm_violation_on_steep_samples():
    spec = table_spec([0.0, 0.5], delta=0.25, alpha=1.0, K=1.0)
    with pytest.raises(SeminormViolation):
        build_domain(spec)


def test_empty_samples_rejected():
    with pytest.raises(EmptySamples):
        build_domain(table_spec(np.zeros(0), delta=0.25, alpha=1.0, K=1.0))


def test_phi_must_vanish_at_origin():
    s = np.full(9, 0.1)
    with pytest.raises(ValueError):
        build_domain(table_spec(s, delta=0.25, alpha=1.0, K=1.0))


def test_spec_file_roundtrip(tmp_path):
    p = tmp_path / "d.json"
    p.write_text(json.dumps({"dim": 2, "kind": "cusp", "alpha": 0.5, "delta": 2.0**-8}))
    dom = build_domain(load_domain_spec(p))
    assert dom.phi(0.5) == pytest.approx(0.5**1.5, rel=1e-3)


def test_shipped_specs_build():
    specs = shipped_specs(delta=2.0**-8)
    for name, spec in specs.items():
        dom = build_domain(spec)
        assert dom.lipschitz_constant() <= spec.seminorm_K, name
        assert float(dom.phi(0.0)) == 0.0


# ---------------------------------------------------------- membership

def test_contains_examples(flat, cusp):
    pts = np.array([[0.0, 0.5], [0.0, 0.0], [0.5, 0.2]])
    assert cusp(0.6).contains(pts).tolist() == [True, False, False]
    assert flat.contains(np.array([[0.0, 0.5], [0.0, -0.1], [0.0, 1.0]])).tolist() == [True, False, False]


@given(x=st.floats(-0.95, 0.95), y=st.floats(-1, 1), dy=st.floats(0, 0.5))
def test_contains_monotone_on_vertical_rays(cusp, x, y, dy):
    dom = cusp(0.6)
    a = np.array([[x, y]])
    b = np.array([[x, y + dy]])
    if dom.contains(a)[0] and np.hypot(x, y + dy) < 1:
        assert dom.contains(b)[0]


# ------------------------------------------------------------ distances

def test_box_distance_nearer_circle_than_graph(flat):
    lo, hi = np.array([[-0.1, 0.4]]), np.array([[0.1, 0.6]])
    assert flat.box_distance(lo, hi)[0] == pytest.approx(1 - math.hypot(0.1, 0.6), abs=1e-12)
    assert flat.box_distance(lo, hi)[0] == pytest.approx(0.39172, abs=1e-5)
    assert flat.graph_distance(lo, hi, np.array([9.0]))[0] == pytest.approx(0.4, abs=1e-12)


def test_box_distance_near_circle(flat):
    d = flat.box_distance(np.array([[-0.05, 0.85]]), np.array([[0.05, 0.95]]))[0]
    assert d == pytest.approx(0.04869, abs=1e-5)


def test_box_touching_boundary_has_zero_distance(flat, cusp):
    lo, hi = np.array([[-0.05, -0.05]]), np.array([[0.05, 0.05]])
    assert flat.box_distance(lo, hi)[0] == 0.0
    assert cusp(0.6).box_distance(lo, hi)[0] == 0.0


@given(cx=st.floats(-0.5, 0.5), cy=st.floats(0.05, 0.7), w=st.floats(0.01, 0.1))
def test_box_distance_matches_brute_force(cusp, cx, cy, w):
    dom = cusp(0.6)
    lo, hi = np.array([cx - w, cy]), np.array([cx + w, cy + w])
    if np.any(~dom.contains(np.array([[cx - w, cy], [cx + w, cy], [cx - w, cy + w], [cx + w, cy + w]]))):
        return
    fast = float(dom.box_distance(lo[None], hi[None])[0])
    brute = _brute_dist_to_F(dom, lo, hi, m=150)
    # sampling only over-estimates; its error is at most one sample gap
    assert fast <= brute + 1e-12
    assert brute - fast <= 0.02


def test_point_graph_distance_flat(flat):
    pts = np.array([[0.3, 0.2], [-0.5, 0.01]])
    assert flat.point_graph_distance(pts) == pytest.approx([0.2, 0.01], abs=1e-12)


# --------------------------------------------------------------- collar

def _strip_area(r, d):
    # |{|x| < r, 0 < y ≤ d} ∩ B_r(0)| for d ≤ r
    return d * math.sqrt(r * r - d * d) + r * r * math.asin(d / r)


@pytest.mark.parametrize("r,d", [(0.25, 0.05), (0.5, 0.0625), (0.125, 0.03125)])
def test_collar_measure_flat_matches_analytic(flat, r, d):
    meas, ratio = flat.boundary_collar_measure([0.0, 0.0], r, d)
    assert meas == pytest.approx(_strip_area(r, d), rel=0.02)
    assert ratio == pytest.approx(meas / (r * d))


def test_collar_away_from_boundary_is_empty(flat):
    assert flat.boundary_collar_measure([0.0, 0.3], 0.1, 0.01) == (0.0, 0.0)


def test_collar_ball_outside_universe(flat):
    with pytest.raises(BallNotContained):
        flat.boundary_collar_measure([0.0, 0.8], 0.5, 0.01)


def test_collar_ratio_bounded_on_cusp(cusp):
    dom = cusp(0.6)
    K = dom.spec.seminorm_K
    ratios = [dom.boundary_collar_measure([0.0, 0.0], 0.25, d)[1] for d in (0.04, 0.02, 0.01)]
    assert max(ratios) <= 2 * (K + 1)
    assert min(ratios) > 0


@given(t=st.floats(-0.4, 0.4), d=st.sampled_from([2.0**-k for k in range(3, 7)]))
def test_collar_ratio_bounded_everywhere(cusp, t, d):
    dom = cusp(0.5)
    c = [t, float(dom.phi(t))]
    _, ratio = dom.boundary_collar_measure(c, 0.125, min(d, 0.125))
    assert 0 < ratio <= 2 * (dom.spec.seminorm_K + 1)


def test_three_dimensional_flat_box_distance():
    dom = build_domain(flat_spec(dim=3, delta=2.0**-5))
    lo, hi = np.array([[-0.1, -0.1, 0.2]]), np.array([[0.1, 0.1, 0.3]])
    assert dom.box_distance(lo, hi)[0] == pytest.approx(0.2, abs=1e-12)
