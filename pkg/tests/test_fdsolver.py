import math
import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from whitney_w2p.fdsolver import (CUT, EXTERIOR, INTERIOR, SNAPPED, DegenerateArm, DiscreteField,
                                  ResolutionTooCoarse, SparseSystem, assemble_poisson, build_grid,
                                  second_differences, solve)


def _bisect_arm(dom, x, y, dx, dy, h, iters=60):
    """Distance from an inside node to ∂Ω along (dx, dy), or h if none."""
    def inside(t):
        return bool(dom.contains(np.array([[x + dx * t, y + dy * t]]))[0])
    if inside(h):
        return h
    a, b = 0.0, h
    for _ in range(iters):
        m = 0.5 * (a + b)
        a, b = (m, b) if inside(m) else (a, m)
    return a


# ---------------------------------------------------------------- grid

def test_flat_classification(flat, grid_of):
    G = grid_of(flat, 1 / 16)
    X, Y = G.coords()
    N = G.n
    j0 = N // 2                      # row y = 0
    assert np.all(G.kind[:, j0] == EXTERIOR)
    row = G.kind[1:-1, j0 + 1]
    inside = np.hypot(X[1:-1, j0 + 1], Y[1:-1, j0 + 1]) < 1
    assert np.all(row[inside] == CUT)
    assert np.allclose(G.arms[1:-1, j0 + 1, 3][inside], 1 / 16)
    assert np.all(G.hits[1:-1, j0 + 1, 3][inside])
    deep = (np.hypot(X, Y) < 0.8) & (Y > 0.1)
    assert np.all(G.kind[deep] == INTERIOR)


def test_cusp_arms_match_bisection(cusp, grid_of):
    dom = cusp(0.6)
    G = grid_of(dom, 1 / 64)
    h = G.h
    I, J = np.nonzero(G.kind == CUT)
    rng = np.random.default_rng(0)
    for t in rng.choice(len(I), size=60, replace=False):
        i, j = I[t], J[t]
        for a, (dx, dy) in enumerate(((1, 0), (-1, 0), (0, 1), (0, -1))):
            arm = G.arms[i, j, a]
            assert 0 < arm <= h
            if G.hits[i, j, a]:
                assert arm == pytest.approx(_bisect_arm(dom, G.x[i], G.x[j], dx, dy, h), abs=1e-12)


def test_snapped_nodes_warn(cusp):
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        G = build_grid(cusp(0.9), 1 / 128)
    if (G.kind == SNAPPED).any():
        assert any(issubclass(w.category, DegenerateArm) for w in rec)


def test_grid_preconditions(flat):
    with pytest.raises(ValueError):
        build_grid(flat, 0.03)
    with pytest.raises(ValueError):
        build_grid(flat, 2.0**-12)       # finer than the interpolant allows


class _Nowhere:
    dim = 2
    delta = 2.0**-8

    def contains(self, pts):
        return np.zeros(np.asarray(pts).shape[:-1], dtype=bool)


def test_resolution_too_coarse():
    with pytest.raises(ResolutionTooCoarse):
        build_grid(_Nowhere(), 1 / 16)


def test_grid_dump(tmp_path, flat, grid_of):
    G = grid_of(flat, 1 / 16)
    G.dump_csv(tmp_path / "g.csv")
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0].split(",") == ["i", "j", "x", "y", "kind", "thetaE", "thetaW", "thetaN", "thetaS"]
    assert len(lines) - 1 == int((G.kind != EXTERIOR).sum())


# ------------------------------------------------------------- matrix

@pytest.mark.parametrize("which", ["flat", "cusp"])
def test_m_matrix(flat, cusp, grid_of, which):
    dom = flat if which == "flat" else cusp(0.6)
    G = grid_of(dom, 1 / 32)
    S = assemble_poisson(G, 0.0)
    A = S.matrix.tocsr()
    d = A.diagonal()
    off = A - sp.diags(d)
    assert np.all(d > 0)
    assert off.data.max(initial=0.0) <= 0
    rs = np.asarray(A.sum(axis=1)).ravel()
    assert rs.min() >= -1e-9 * d.max()
    cut = (G.kind == CUT)[G.unknown]
    assert np.all(rs[cut] > 0)


def test_flat_system_symmetry_flag(flat, grid_of):
    S = assemble_poisson(grid_of(flat, 1 / 16), 1.0)
    A = S.matrix
    assert S.symmetric == (abs(A - A.T).max() <= 1e-12 * A.diagonal().max())


def test_nonfinite_source_rejected(flat, grid_of):
    with pytest.raises(ValueError):
        assemble_poisson(grid_of(flat, 1 / 16), lambda x, y: np.where(x > 0, np.nan, 0.0))


# -------------------------------------------------------------- solves

@pytest.mark.parametrize("which", ["flat", "bump", "cusp"])
def test_affine_data_reproduced(flat, bump, cusp, grid_of, which):
    dom = {"flat": flat, "bump": bump, "cusp": cusp(0.6)}[which]
    G = grid_of(dom, 1 / 32)
    g = lambda x, y: 0.3 - 1.5 * x + 2.0 * y  # noqa: E731
    u = solve(assemble_poisson(G, 0.0, g))
    X, Y = G.coords()
    err = np.abs(u.as_array() - g(X, Y))[G.unknown]
    assert err.max() <= 1e-10


def test_smooth_solution_order(bump, grid_of):
    ue = lambda x, y: np.exp(x) * np.sin(y + 0.5)  # noqa: E731
    errs = []
    hs = [1 / 16, 1 / 32, 1 / 64]
    for h in hs:
        G = grid_of(bump, h)
        u = solve(assemble_poisson(G, 0.0, ue), method="direct")
        X, Y = G.coords()
        errs.append(np.abs(u.as_array() - ue(X, Y))[G.unknown].max())
    order = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert order >= 1.8
    assert errs[0] / errs[1] >= 3 and errs[1] / errs[2] >= 3


def test_sign_of_solution(flat, grid_of):
    G = grid_of(flat, 1 / 32)
    assert np.all(solve(assemble_poisson(G, -1.0)).values > 0)
    assert np.all(solve(assemble_poisson(G, 1.0)).values < 0)


@settings(max_examples=15)
@given(a=st.floats(0.0, 2.0), b=st.floats(-1.0, 1.0), c=st.floats(0.0, 1.0))
def test_maximum_principle(cusp, grid_of, a, b, c):
    G = grid_of(cusp(0.5), 1 / 16)
    f = lambda x, y: -a * (1.0 + b * x) ** 2  # noqa: E731
    g = lambda x, y: c * (1.0 + x * x)  # noqa: E731
    u = solve(assemble_poisson(G, f, g), method="direct")
    assert u.values.min() >= -1e-12


def test_zero_rhs_gives_zero(flat, grid_of):
    u = solve(assemble_poisson(grid_of(flat, 1 / 16), 0.0))
    assert np.all(u.values == 0.0)


@given(s=st.floats(-3, 3), t=st.floats(-3, 3))
@settings(max_examples=10)
def test_linearity(flat, grid_of, s, t):
    G = grid_of(flat, 1 / 16)
    f1 = lambda x, y: 1.0 + x  # noqa: E731
    f2 = lambda x, y: y * y  # noqa: E731
    u1 = solve(assemble_poisson(G, f1), method="direct").values
    u2 = solve(assemble_poisson(G, f2), method="direct").values
    u = solve(assemble_poisson(G, lambda x, y: s * f1(x, y) + t * f2(x, y)), method="direct").values
    assert np.allclose(u, s * u1 + t * u2, atol=1e-10 * (1 + abs(s) + abs(t)))


def test_one_unknown_system():
    S = SparseSystem(None, sp.csr_matrix(np.array([[4.0]])), np.array([2.0]), np.zeros(1),
                     None, True)
    for m in ("auto", "cg", "direct"):
        assert solve(S, method=m).values[0] == pytest.approx(0.5, abs=1e-12)


def test_cg_matches_dense_oracle():
    n = 18                                   # 324 unknowns
    T = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    A = (sp.kron(sp.eye(n), T) + sp.kron(T, sp.eye(n))).tocsr()
    b = np.random.default_rng(3).normal(size=n * n)
    S = SparseSystem(None, A, b, np.zeros(n * n), None, True)
    dense = np.linalg.solve(A.toarray(), b)
    for m in ("cg", "bicgstab", "direct"):
        assert np.abs(solve(S, tol=1e-12, method=m).values - dense).max() <= 1e-8


def test_unknown_method(flat, grid_of):
    with pytest.raises(ValueError):
        solve(assemble_poisson(grid_of(flat, 1 / 16), 1.0), method="gmres")


# ------------------------------------------------------------ Hessian

@pytest.mark.parametrize("stencil", ["interior", "cut"])
def test_hessian_of_affine_vanishes(cusp, grid_of, stencil):
    G = grid_of(cusp(0.6), 1 / 32)
    g = lambda x, y: 1.0 - x + 0.25 * y  # noqa: E731
    u = solve(assemble_poisson(G, 0.0, g), method="direct")
    H = second_differences(u, stencil=stencil)
    assert H.mask.any()
    assert np.nanmax(np.abs(H.norm())) <= 1e-8


@pytest.mark.parametrize("stencil", ["interior", "cut"])
def test_hessian_of_xy(flat, grid_of, stencil):
    G = grid_of(flat, 1 / 32)
    X, Y = G.coords()
    U = np.where(G.unknown, X * Y, np.nan)
    u = DiscreteField(G, (X * Y)[G.unknown], lambda x, y: x * y)
    H = second_differences(u if stencil == "cut" else U, grid=G, stencil=stencil)
    m = H.mask
    assert np.allclose(H.dxy[m], 1.0, atol=1e-9)
    assert np.allclose(H.dxx[m], 0.0, atol=1e-9) and np.allclose(H.dyy[m], 0.0, atol=1e-9)


def test_interior_mask_shrinks_by_one_layer(flat, grid_of):
    G = grid_of(flat, 1 / 16)
    H = second_differences(DiscreteField(G, np.zeros(G.n_unknowns)), stencil="interior")
    assert H.mask.sum() < (G.kind == INTERIOR).sum()
    assert not (H.mask & (G.kind == CUT)).any()


def test_cut_hessian_exact_for_quadratic(bump, grid_of):
    G = grid_of(bump, 1 / 32)
    g = lambda x, y: x * x - y * y + 0.5 * x * y  # noqa: E731
    u = solve(assemble_poisson(G, 0.0, g), method="direct")
    H = second_differences(u, stencil="cut")
    m = H.mask
    assert np.abs(H.dxx[m] - 2).max() < 1e-7
    assert np.abs(H.dyy[m] + 2).max() < 1e-7
    assert np.abs(H.dxy[m] - 0.5).max() < 1e-7


def test_field_scaling_and_dump(tmp_path, flat, grid_of):
    G = grid_of(flat, 1 / 16)
    u = solve(assemble_poisson(G, 1.0))
    v = u.scaled(3.0)
    assert np.allclose(v.values, 3 * u.values)
    u.dump_csv(tmp_path / "u.csv")
    assert len((tmp_path / "u.csv").read_text().splitlines()) == G.n_unknowns + 1
    assert math.isnan(u.as_array()[0, 0])
