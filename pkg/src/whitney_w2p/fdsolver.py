"""Shortley–Weller finite differences for Δu = f in Ω₁, u = g on ∂Ω₁ (n = 2).

Nodes sit at (-1 + i h, -1 + j h) and arrays are indexed ``[i, j]`` (x first).
Each inside node has four arms; an arm is shortened to the first boundary
crossing along the grid line.  Vertical arms meet the graph exactly at
φ(x_i) because h is a multiple of the sample spacing; horizontal arms scan
the samples between the two nodes and interpolate inside the crossing
sub-cell; circle crossings are analytic.

The discrete operator at a node with arms hE, hW, hN, hS is

    L_h u = 2/(hE+hW) [(u_E-u)/hE + (u_W-u)/hW] + 2/(hN+hS) [(u_N-u)/hN + (u_S-u)/hS]

and the assembled matrix is A = -L_h restricted to unknowns, with boundary
values moved to the right-hand side.  A is an M-matrix; it is symmetric
only when no arm is shortened.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "EXTERIOR",
    "INTERIOR",
    "CUT",
    "SNAPPED",
    "Grid",
    "SparseSystem",
    "DiscreteField",
    "HessianField",
    "ResolutionTooCoarse",
    "NoConvergence",
    "DegenerateArm",
    "build_grid",
    "assemble_poisson",
    "solve",
    "second_differences",
    "cut_second_differences",
    "hessian_mask",
    "DEGENERATE_FRACTION",
]

EXTERIOR, INTERIOR, CUT, SNAPPED = 0, 1, 2, 3
DEGENERATE_FRACTION = 1e-3
# arm order: E, W, N, S
_DIRS = ((1, 0), (-1, 0), (0, 1), (0, -1))


class ResolutionTooCoarse(ValueError):
    pass


class NoConvergence(RuntimeError):
    pass


class DegenerateArm(UserWarning):
    """Raised as a warning category; degenerate arms are merged into the
    boundary by snapping the node to its Dirichlet value."""


@dataclass(eq=False)
class Grid:
    domain: object
    h: float
    x: np.ndarray
    kind: np.ndarray          # (N+1, N+1) node classes
    arms: np.ndarray          # (N+1, N+1, 4) arm lengths, 0 outside
    bpoint: np.ndarray        # (N+1, N+1, 4, 2) boundary endpoint when arm hits ∂Ω
    hits: np.ndarray          # (N+1, N+1, 4) arm ends on the boundary
    unknown: np.ndarray = field(init=False, repr=False)
    number: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.unknown = (self.kind == INTERIOR) | (self.kind == CUT)
        self.number = np.full(self.kind.shape, -1, dtype=np.int64)
        self.number[self.unknown] = np.arange(int(self.unknown.sum()))

    @property
    def n(self) -> int:
        return len(self.x) - 1

    @property
    def n_unknowns(self) -> int:
        return int(self.unknown.sum())

    def coords(self):
        return np.meshgrid(self.x, self.x, indexing="ij")

    def node_points(self, mask=None) -> np.ndarray:
        X, Y = self.coords()
        m = self.unknown if mask is None else mask
        return np.stack([X[m], Y[m]], axis=1)

    def dump_csv(self, path) -> None:
        """(i, j, x, y, kind, θE, θW, θN, θS) for every inside node."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "x", "y", "kind", "thetaE", "thetaW", "thetaN", "thetaS"])
            for i, j in zip(*np.nonzero(self.kind != EXTERIOR)):
                w.writerow([i, j, self.x[i], self.x[j], int(self.kind[i, j]),
                            *[repr(float(v)) for v in self.arms[i, j]]])


def _check_h(h: float, delta: float) -> int:
    m = -math.log2(h)
    if abs(m - round(m)) > 1e-12 or round(m) < 2:
        raise ValueError("h must be 2^-m with m ≥ 2")
    if h < 4 * delta * (1 - 1e-12):
        raise ValueError("h must be at least 4 times the sample spacing")
    return int(round(2.0 / h))


def build_grid(domain, h: float) -> Grid:
    """Classify nodes and compute Shortley–Weller arm lengths exactly."""
    if domain.dim != 2:
        raise ValueError("the solver supports n = 2 only")
    N = _check_h(h, domain.delta)
    x = -1.0 + h * np.arange(N + 1)
    X, Y = np.meshgrid(x, x, indexing="ij")
    inside = domain.contains(np.stack([X, Y], axis=-1))
    if not inside.any():
        raise ResolutionTooCoarse(f"no interior nodes at h={h}")
    ratio = int(round(h / domain.delta))
    s = domain.samples
    arms = np.zeros(X.shape + (4,))
    hits = np.zeros(X.shape + (4,), dtype=bool)
    bpt = np.zeros(X.shape + (4, 2))
    I, J = np.nonzero(inside)
    xi, yj = x[I], x[J]
    # vertical arms
    circ = np.sqrt(np.maximum(0.0, 1.0 - xi * xi))
    top = circ
    bottom = np.maximum(s[I * ratio], -circ)
    tn = np.minimum(top - yj, h)
    ts = np.minimum(yj - bottom, h)
    hn = (top - yj) <= h
    hs = (yj - bottom) <= h
    # horizontal arms: boundary crossing of the graph inside the sub-samples
    circx = np.sqrt(np.maximum(0.0, 1.0 - yj * yj))
    te, he, ex = _horizontal(s, I, yj, ratio, +1, domain.delta, h)
    tw, hw, wx = _horizontal(s, I, yj, ratio, -1, domain.delta, h)
    ce = circx - xi
    cw = xi + circx
    ue = ce < te
    te = np.where(ue, ce, te)
    he = he | (ce <= h)
    te = np.minimum(te, h)
    uw = cw < tw
    tw = np.where(uw, cw, tw)
    hw = hw | (cw <= h)
    tw = np.minimum(tw, h)
    arms[I, J] = np.stack([te, tw, tn, ts], axis=1)
    hits[I, J] = np.stack([he, hw, hn, hs], axis=1)
    for a, (t, hit) in enumerate(((te, he), (tw, hw), (tn, hn), (ts, hs))):
        dx, dy = _DIRS[a]
        bpt[I, J, a, 0] = xi + dx * t
        bpt[I, J, a, 1] = yj + dy * t
    # an arm of full length whose neighbour is outside still ends on ∂Ω
    for a, (dx, dy) in enumerate(_DIRS):
        ii, jj = I + dx, J + dy
        ok = (ii >= 0) & (ii <= N) & (jj >= 0) & (jj <= N)
        nb_in = np.zeros(len(I), dtype=bool)
        nb_in[ok] = inside[ii[ok], jj[ok]]
        full = arms[I, J, a] >= h
        hits[I, J, a] = ~(full & nb_in)
    kind = np.where(inside, INTERIOR, EXTERIOR)
    cut = hits[I, J].any(axis=1)
    kind[I[cut], J[cut]] = CUT
    degenerate = np.zeros_like(inside)
    degenerate[I, J] = (arms[I, J] < DEGENERATE_FRACTION * h).any(axis=1)
    kind[degenerate] = SNAPPED
    # neighbours of snapped nodes see them as boundary points at distance h
    for i, j in zip(*np.nonzero(degenerate)):
        for a, (dx, dy) in enumerate(_DIRS):
            ii, jj = i - dx, j - dy
            if (0 <= ii <= N and 0 <= jj <= N and inside[ii, jj] and not degenerate[ii, jj]
                    and not hits[ii, jj, a]):
                arms[ii, jj, a] = h
                hits[ii, jj, a] = True
                bpt[ii, jj, a] = (x[i], x[j])
                kind[ii, jj] = CUT
    if degenerate.any():
        warnings.warn(f"{int(degenerate.sum())} node(s) with arms below "
                      f"{DEGENERATE_FRACTION}h snapped to the boundary", DegenerateArm)
    g = Grid(domain, h, x, kind, arms, bpt, hits)
    if g.n_unknowns == 0:
        raise ResolutionTooCoarse(f"no interior nodes at h={h}")
    return g


def _horizontal(s, I, y, ratio, sign, delta, h):
    """Distance along ±x from node column I at height y to the first point
    where the polyline reaches y, capped at h (plus whether it was hit)."""
    base = I * ratio
    k = np.arange(ratio + 1)
    cols = base[:, None] + sign * k[None, :]
    valid = (cols >= 0) & (cols < len(s))
    vals = np.where(valid, s[np.clip(cols, 0, len(s) - 1)], -np.inf)
    above = vals >= y[:, None]
    first = np.where(above.any(axis=1), above.argmax(axis=1), ratio + 1)
    hit = first <= ratio
    t = np.full(len(I), np.inf)
    m = hit & (first > 0)
    if m.any():
        r = np.nonzero(m)[0]
        f1 = first[r]
        z0 = vals[r, f1 - 1]
        z1 = vals[r, f1]
        frac = (y[r] - z0) / (z1 - z0)
        t[r] = ((f1 - 1) + frac) * delta
    t[hit & (first == 0)] = 0.0
    return t, hit & (t <= h), None


@dataclass(eq=False)
class SparseSystem:
    grid: Grid
    matrix: sp.csr_matrix
    rhs: np.ndarray
    boundary: np.ndarray      # (N_unknowns,) contribution of Dirichlet data
    coeffs: np.ndarray        # (N_unknowns, 4) neighbour couplings c_E..c_S
    symmetric: bool
    g: object = None
    _lu: object = field(default=None, repr=False)

    @property
    def node_to_unknown(self) -> np.ndarray:
        return self.grid.number

    def with_rhs(self, f) -> "SparseSystem":
        """Same matrix and boundary data with a new source term."""
        fv = _sample(self.grid, f)
        out = SparseSystem(self.grid, self.matrix, -fv + self.boundary, self.boundary,
                           self.coeffs, self.symmetric, self.g)
        out._lu = self._lu
        return out

    def factor(self):
        if self._lu is None:
            self._lu = spla.splu(self.matrix.tocsc())
        return self._lu

    def apply_laplacian(self, values: np.ndarray) -> np.ndarray:
        """L_h u at every unknown for a full unknown vector (boundary
        data included)."""
        return -(self.matrix @ values) + self.boundary


def _sample(grid: Grid, f) -> np.ndarray:
    m = grid.unknown
    if f is None:
        return np.zeros(grid.n_unknowns)
    if callable(f):
        X, Y = grid.coords()
        return np.asarray(f(X[m], Y[m]), dtype=float) * np.ones(int(m.sum()))
    f = np.asarray(f, dtype=float)
    if f.shape == grid.kind.shape:
        return f[m]
    if f.shape == (grid.n_unknowns,):
        return f
    if f.ndim == 0:
        return np.full(grid.n_unknowns, float(f))
    raise ValueError("f must be callable, scalar, a full node array or an unknown vector")


def assemble_poisson(grid: Grid, f, g=None) -> SparseSystem:
    """Shortley–Weller system for Δu = f, u = g on the boundary.

    ``f``: callable f(x, y), scalar, or node array; ``g``: callable g(x, y)
    (default 0)."""
    gfun = (lambda x, y: np.zeros_like(x)) if g is None else g
    fv = _sample(grid, f)
    if not np.all(np.isfinite(fv)):
        raise ValueError("f must be finite at every unknown")
    I, J = np.nonzero(grid.unknown)
    arms = grid.arms[I, J]
    hE, hW, hN, hS = arms.T
    c = np.stack([2.0 / ((hE + hW) * hE), 2.0 / ((hE + hW) * hW),
                  2.0 / ((hN + hS) * hN), 2.0 / ((hN + hS) * hS)], axis=1)
    diag = c.sum(axis=1)
    rows, cols, vals = [np.arange(len(I))], [np.arange(len(I))], [diag]
    bnd = np.zeros(len(I))
    N = grid.n
    for a, (dx, dy) in enumerate(_DIRS):
        hit = grid.hits[I, J, a]
        ii = np.clip(I + dx, 0, N)
        jj = np.clip(J + dy, 0, N)
        nb = grid.number[ii, jj]
        inner = ~hit & (nb >= 0)
        rows.append(np.nonzero(inner)[0])
        cols.append(nb[inner])
        vals.append(-c[inner, a])
        b = hit
        if b.any():
            bp = grid.bpoint[I[b], J[b], a]
            bnd[b] += c[b, a] * np.asarray(gfun(bp[:, 0], bp[:, 1]), dtype=float)
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(len(I), len(I)))
    asym = abs(A - A.T)
    symmetric = asym.nnz == 0 or float(asym.max()) <= 1e-12 * float(diag.max())
    return SparseSystem(grid, A, -fv + bnd, bnd, c, symmetric, gfun)


@dataclass(eq=False)
class DiscreteField:
    grid: Grid
    values: np.ndarray
    g: object = None
    iterations: int = 0
    residual: float = 0.0

    def as_array(self) -> np.ndarray:
        """Full node array: unknown values, g at snapped nodes, NaN outside."""
        out = np.full(self.grid.kind.shape, np.nan)
        out[self.grid.unknown] = self.values
        sn = self.grid.kind == SNAPPED
        if sn.any():
            X, Y = self.grid.coords()
            gv = self.g(X[sn], Y[sn]) if self.g is not None else 0.0
            out[sn] = gv
        return out

    def scaled(self, lam: float) -> "DiscreteField":
        g = self.g
        gl = None if g is None else (lambda x, y: lam * g(x, y))
        return DiscreteField(self.grid, lam * self.values, gl, self.iterations, self.residual)

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "value"])
            for (i, j), v in zip(zip(*np.nonzero(self.grid.unknown)), self.values):
                w.writerow([i, j, repr(float(v))])


def solve(system: SparseSystem, tol: float = 1e-10, method: str = "auto") -> DiscreteField:
    """Solve A u = b to relative residual ``tol``.

    ``auto`` uses Jacobi-preconditioned CG for symmetric systems and a cached
    sparse LU factorisation otherwise; ``cg`` and ``bicgstab`` force the
    iterative paths (iteration cap 50·√N)."""
    A, b = system.matrix, system.rhs
    N = A.shape[0]
    bn = float(np.linalg.norm(b))
    if bn == 0.0:
        return DiscreteField(system.grid, np.zeros(N), system.g)
    if method == "auto":
        method = "cg" if system.symmetric else "direct"
    cap = int(math.ceil(50 * math.sqrt(N)))
    its = 0
    if method == "direct":
        u = system.factor().solve(b)
    elif method in ("cg", "bicgstab"):
        dinv = 1.0 / A.diagonal()
        M = spla.LinearOperator(A.shape, matvec=lambda v: dinv * v, dtype=float)
        count = [0]

        def cb(_):
            count[0] += 1

        solver = spla.cg if method == "cg" else spla.bicgstab
        u, info = solver(A, b, rtol=tol, atol=0.0, maxiter=cap, M=M, callback=cb)
        its = count[0]
        if info != 0:
            raise NoConvergence(f"{method} did not converge in {cap} iterations")
    else:
        raise ValueError(f"unknown method {method!r}")
    res = float(np.linalg.norm(A @ u - b)) / bn
    if res > max(tol, 1e-14) * 10:
        raise NoConvergence(f"relative residual {res:.2e} exceeds {tol:.1e}")
    return DiscreteField(system.grid, u, system.g, its, res)


@dataclass(eq=False)
class HessianField:
    grid: Grid
    dxx: np.ndarray
    dxy: np.ndarray
    dyy: np.ndarray
    mask: np.ndarray

    def norm(self) -> np.ndarray:
        """Pointwise Frobenius norm (NaN off the mask)."""
        v = np.sqrt(self.dxx**2 + 2 * self.dxy**2 + self.dyy**2)
        return np.where(self.mask, v, np.nan)

    def tensor(self, i: int, j: int) -> np.ndarray:
        return np.array([[self.dxx[i, j], self.dxy[i, j]], [self.dxy[i, j], self.dyy[i, j]]])


def hessian_mask(grid: Grid) -> np.ndarray:
    """Nodes whose 3×3 stencil is available: centre INTERIOR and all eight
    neighbours unknowns."""
    u = grid.unknown
    m = grid.kind == INTERIOR
    out = np.zeros_like(m)
    c = m[1:-1, 1:-1].copy()
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            c &= u[1 + di:u.shape[0] - 1 + di, 1 + dj:u.shape[1] - 1 + dj]
    out[1:-1, 1:-1] = c
    return out


def second_differences(field: DiscreteField | np.ndarray, grid: Grid | None = None,
                       stencil: str = "interior") -> HessianField:
    """Centred second differences on the valid stencil mask.

    ``stencil="cut"`` switches to :func:`cut_second_differences`, which also
    covers CUT nodes through the shortened arms."""
    if stencil == "cut":
        if not isinstance(field, DiscreteField):
            raise TypeError("the cut stencil needs a DiscreteField")
        return cut_second_differences(field)
    if stencil != "interior":
        raise ValueError(f"unknown stencil {stencil!r}")
    if isinstance(field, DiscreteField):
        grid = field.grid
        U = field.as_array()
    else:
        U = np.asarray(field, dtype=float)
    h = grid.h
    mask = hessian_mask(grid)
    dxx = np.full(U.shape, np.nan)
    dyy = np.full(U.shape, np.nan)
    dxy = np.full(U.shape, np.nan)
    C = U[1:-1, 1:-1]
    with np.errstate(invalid="ignore"):
        dxx[1:-1, 1:-1] = (U[2:, 1:-1] - 2 * C + U[:-2, 1:-1]) / h**2
        dyy[1:-1, 1:-1] = (U[1:-1, 2:] - 2 * C + U[1:-1, :-2]) / h**2
        dxy[1:-1, 1:-1] = (U[2:, 2:] - U[2:, :-2] - U[:-2, 2:] + U[:-2, :-2]) / (4 * h**2)
    for a in (dxx, dyy, dxy):
        a[~mask] = np.nan
    return HessianField(grid, dxx, dxy, dyy, mask)


def _arm_values(field: DiscreteField):
    """Neighbour value along each arm: unknown value or boundary data."""
    grid = field.grid
    U = field.as_array()
    N = grid.n
    I, J = np.nonzero(grid.unknown)
    vals = np.zeros((len(I), 4))
    g = field.g if field.g is not None else (lambda x, y: np.zeros_like(x))
    for a, (dx, dy) in enumerate(_DIRS):
        hit = grid.hits[I, J, a]
        ii = np.clip(I + dx, 0, N)
        jj = np.clip(J + dy, 0, N)
        v = U[ii, jj]
        if hit.any():
            bp = grid.bpoint[I[hit], J[hit], a]
            v = v.copy()
            v[hit] = g(bp[:, 0], bp[:, 1])
        vals[:, a] = v
    return I, J, U, vals


def cut_second_differences(field: DiscreteField) -> HessianField:
    """Hessian at every unknown node using the Shortley–Weller arms.

    Pure second derivatives use the nonuniform three-point formula along each
    axis; the mixed term differentiates the nonuniform first derivative across
    the axis whose two neighbours are both unknowns.  All formulas are exact
    for quadratics."""
    grid = field.grid
    I, J, U, vals = _arm_values(field)
    arms = grid.arms[I, J]
    hE, hW, hN, hS = arms.T
    u0 = U[I, J]
    uE, uW, uN, uS = vals.T
    dxx = 2.0 / (hE + hW) * ((uE - u0) / hE + (uW - u0) / hW)
    dyy = 2.0 / (hN + hS) * ((uN - u0) / hN + (uS - u0) / hS)
    ux = (hW / (hE * (hE + hW))) * (uE - u0) + (hE / (hW * (hE + hW))) * (u0 - uW)
    uy = (hS / (hN * (hN + hS))) * (uN - u0) + (hN / (hS * (hN + hS))) * (u0 - uS)
    UX = np.full(U.shape, np.nan)
    UY = np.full(U.shape, np.nan)
    UX[I, J] = ux
    UY[I, J] = uy
    h = grid.h
    N = grid.n
    ew = ~grid.hits[I, J, 0] & ~grid.hits[I, J, 1]
    ns = ~grid.hits[I, J, 2] & ~grid.hits[I, J, 3]
    ip, im = np.clip(I + 1, 0, N), np.clip(I - 1, 0, N)
    jp, jm = np.clip(J + 1, 0, N), np.clip(J - 1, 0, N)
    dxy_ew = (UY[ip, J] - UY[im, J]) / (2 * h)
    dxy_ns = (UX[I, jp] - UX[I, jm]) / (2 * h)
    dxy = np.where(ew, dxy_ew, np.where(ns, dxy_ns, np.nan))
    both = ew & ns
    dxy = np.where(both, 0.5 * (dxy_ew + dxy_ns), dxy)
    shape = U.shape
    out = [np.full(shape, np.nan) for _ in range(3)]
    for arr, v in zip(out, (dxx, dxy, dyy)):
        arr[I, J] = v
    mask = np.zeros(shape, dtype=bool)
    mask[I, J] = np.isfinite(dxy)
    for arr in out:
        arr[~mask] = np.nan
    return HessianField(grid, out[0], out[1], out[2], mask)
