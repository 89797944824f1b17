"""Discrete norms and the measured constants of the W^{2,p} estimates.

Everything here is post-processing of solved fields: region L^p norms,
Green's-type bound ratios, boundary C^{1,α} decay fits, per-cube Hessian
scaling, the u = v + w split with its band-localised pieces, and the
cube-sum arithmetic used for fully nonlinear aggregation.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .fdsolver import (EXTERIOR, DiscreteField, Grid, HessianField, SparseSystem,
                       second_differences, solve)
from .whitney import WhitneyDecomposition, family_offset

__all__ = [
    "ZeroDenominator", "TooFewNodes", "NoEligibleCubes", "EmptyFamily", "CubeTooSmall",
    "ExponentOutOfRange", "ExponentPair", "NormReport", "EstimateReport", "AffineFit",
    "SlopeReport", "KernelReport", "VWSplit", "Ball", "CubeUnion", "BoxUnion", "NodeMask",
    "lp_norm", "per_cube_norms", "greens_solution", "greens_bound_check", "random_cube_pairs",
    "kernel_integral_bound", "ball_kernel_ratio", "affine_fit_decay", "per_cube_hessian_scaling",
    "estimate_constant", "vw_split", "lemma42_check", "lemma42_cells", "band_locality_check", "band_cells", "lemma42_sweep",
    "trend_verdict", "aggregate_fully_nonlinear", "beta_exponent", "zero_boundary",
]

PASS, FAIL, INDETERMINATE = "PASS", "FAIL", "INDETERMINATE"


class ZeroDenominator(ValueError):
    """A region entering a denominator has zero measure."""


class TooFewNodes(ValueError):
    pass


class NoEligibleCubes(ValueError):
    pass


class EmptyFamily(ValueError):
    pass


class CubeTooSmall(ValueError):
    pass


class ExponentOutOfRange(ValueError):
    pass


# ------------------------------------------------------------------ types

@dataclass(frozen=True)
class ExponentPair:
    p: float

    def __post_init__(self):
        if not (1.0 < self.p < math.inf):
            raise ValueError("p must lie in (1, ∞)")

    @property
    def conjugate(self) -> float:
        return self.p / (self.p - 1.0)


@dataclass(frozen=True)
class NormReport:
    region: str
    p: float
    value: float
    count: int
    h: float


@dataclass
class EstimateReport:
    """One measured left/right pair; ``ratio`` is the observed constant."""

    estimate_id: str
    left: float
    right: float
    alpha: float | None = None
    p: float | None = None
    h: float | None = None
    p0: float | None = None
    s0: int | None = None
    s: int | None = None
    j: int | None = None
    ceiling: float | None = None
    verdict: str = ""
    extras: dict = field(default_factory=dict)
    ratio: float = field(init=False)

    def __post_init__(self):
        self.ratio = self.left / self.right if self.right > 0 else math.nan
        if not self.verdict:
            self.verdict = self._judge()

    def _judge(self) -> str:
        if not self.right > 0:
            return INDETERMINATE
        if not math.isfinite(self.ratio):
            return FAIL
        if self.ceiling is not None and self.ratio > self.ceiling:
            return FAIL
        return PASS

    CSV_FIELDS = ("estimate_id", "alpha", "p", "p0", "h", "s0", "s", "j",
                  "left", "right", "ratio", "verdict")

    def row(self) -> dict:
        out = {}
        for k in self.CSV_FIELDS:
            v = getattr(self, k)
            out[k] = "" if v is None else (repr(float(v)) if isinstance(v, float) else v)
        return out


@dataclass
class AffineFit:
    x0: np.ndarray
    value: float
    gradient: np.ndarray
    gamma: float
    radii: np.ndarray
    sups: np.ndarray
    exact: bool = False

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.gradient))

    def __call__(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return self.value + (pts - self.x0) @ self.gradient


@dataclass
class SlopeReport:
    slope: float
    theory: float
    generations: list
    medians: list
    counts: list
    degenerate: bool = False

    @property
    def deviation(self) -> float:
        return self.slope - self.theory


@dataclass
class KernelReport:
    integral: float
    measure: float
    ratio: float


# ---------------------------------------------------------------- regions

def _inside(grid: Grid) -> np.ndarray:
    return grid.kind != EXTERIOR


@dataclass(frozen=True)
class Ball:
    """Ω_r(c) = Ω ∩ B_r(c), membership by node centre."""

    r: float
    center: tuple = (0.0, 0.0)

    @property
    def label(self) -> str:
        c = "" if not any(self.center) else f"@({self.center[0]:g},{self.center[1]:g})"
        return f"Omega_{self.r:g}{c}"

    def mask(self, grid: Grid) -> np.ndarray:
        X, Y = grid.coords()
        c = self.center
        return _inside(grid) & ((X - c[0]) ** 2 + (Y - c[1]) ** 2 < self.r**2)


@dataclass(frozen=True)
class BoxUnion:
    """Union of disjoint boxes [lo, hi), membership by node centre."""

    lo: np.ndarray
    hi: np.ndarray
    label: str = "boxes"

    def measure(self) -> float:
        return float(np.prod(self.hi - self.lo, axis=1).sum())

    def mask(self, grid: Grid) -> np.ndarray:
        out = np.zeros(grid.kind.shape, dtype=bool)
        h, N = grid.h, grid.n
        # node i sits at -1 + i h; dyadic corners make these divisions exact
        a = np.clip(np.ceil((self.lo + 1.0) / h).astype(np.int64), 0, N + 1)
        b = np.clip(np.ceil((self.hi + 1.0) / h).astype(np.int64), 0, N + 1)
        for (i0, j0), (i1, j1) in zip(a, b):
            out[i0:i1, j0:j1] = True
        return out & _inside(grid)


@dataclass(frozen=True)
class CubeUnion:
    """Union of selected Whitney cubes, located through the decomposition."""

    dec: WhitneyDecomposition
    rows: tuple
    label: str = "cubes"

    def measure(self) -> float:
        r = np.asarray(self.rows, dtype=np.int64)
        return float(np.sum(self.dec.sides()[r] ** self.dec.dim))

    def mask(self, grid: Grid) -> np.ndarray:
        ins = _inside(grid)
        X, Y = grid.coords()
        pts = np.stack([X[ins], Y[ins]], 1)
        rows = self.dec.locate_rows(pts)
        out = np.zeros(ins.shape, dtype=bool)
        out[ins] = np.isin(rows, np.asarray(self.rows, dtype=np.int64))
        return out

    def boxes(self) -> BoxUnion:
        r = np.asarray(self.rows, dtype=np.int64)
        lo, hi = self.dec.boxes()
        return BoxUnion(lo[r], hi[r], self.label)


@dataclass(frozen=True)
class NodeMask:
    nodes: np.ndarray
    label: str = "mask"

    def mask(self, grid: Grid) -> np.ndarray:
        return np.asarray(self.nodes, dtype=bool) & _inside(grid)


def _region_mask(region, grid: Grid) -> tuple[np.ndarray, str]:
    if region is None:
        return _inside(grid), "Omega_1"
    if isinstance(region, np.ndarray):
        return region.astype(bool) & _inside(grid), "mask"
    return region.mask(grid), region.label


def _fast_mask(region, grid: Grid) -> np.ndarray:
    # cube unions become box slices: same half-open membership, no point location
    if isinstance(region, CubeUnion):
        region = region.boxes()
    return region.mask(grid)


def _values(field) -> tuple[np.ndarray, np.ndarray, Grid]:
    if isinstance(field, HessianField):
        v = field.norm()
        return v, field.mask, field.grid
    if isinstance(field, DiscreteField):
        v = field.as_array()
        return v, np.isfinite(v), field.grid
    raise TypeError("expected a DiscreteField or HessianField")


# ------------------------------------------------------------------ norms

def lp_norm(field, region, p: float, grid: Grid | None = None) -> NormReport:
    """(Σ |v|^p h²)^{1/p} over nodes of ``region`` where ``field`` is valid.

    ``field`` may also be a full node array, in which case ``grid`` is
    required and non-finite entries are skipped."""
    ExponentPair(p)
    if isinstance(field, np.ndarray):
        if grid is None:
            raise ValueError("a raw array needs its grid")
        v, valid = field, np.isfinite(field)
    else:
        v, valid, grid = _values(field)
    m, label = _region_mask(region, grid)
    m = m & valid
    cnt = int(m.sum())
    if cnt == 0:
        return NormReport(label, p, 0.0, 0, grid.h)
    a = np.abs(v[m])
    top = float(a.max())
    # factor out the max so |v|^p cannot under- or overflow
    val = 0.0 if top == 0.0 else top * float(np.sum((a / top) ** p) * grid.h**2) ** (1.0 / p)
    return NormReport(label, p, val, cnt, grid.h)


def per_cube_norms(dec: WhitneyDecomposition, field, p: float,
                   region=None) -> tuple[np.ndarray, np.ndarray]:
    """L^p norm and node count of ``field`` over every selected cube."""
    v, valid, grid = _values(field)
    m = valid.copy()
    if region is not None:
        m &= _region_mask(region, grid)[0]
    X, Y = grid.coords()
    rows = dec.locate_rows(np.stack([X[m], Y[m]], 1))
    ok = rows >= 0
    acc = np.zeros(len(dec))
    cnt = np.zeros(len(dec), dtype=np.int64)
    a = np.abs(v[m][ok])
    top = float(a.max(initial=0.0)) or 1.0
    np.add.at(acc, rows[ok], (a / top) ** p * grid.h**2)
    np.add.at(cnt, rows[ok], 1)
    return top * acc ** (1.0 / p), cnt


def zero_boundary(system: SparseSystem, rhs_nodes: np.ndarray | None = None) -> SparseSystem:
    """Copy of ``system`` with homogeneous Dirichlet data and source
    ``rhs_nodes`` (full node array, default 0); shares the factorisation."""
    grid = system.grid
    fv = np.zeros(grid.n_unknowns) if rhs_nodes is None else np.asarray(rhs_nodes)[grid.unknown]
    zero = np.zeros(grid.n_unknowns)
    return dataclasses.replace(system, rhs=-fv, boundary=zero, g=None)


def _sample_nodes(grid: Grid, f) -> np.ndarray:
    X, Y = grid.coords()
    if callable(f):
        out = np.asarray(f(X, Y), dtype=float) * np.ones(X.shape)
    else:
        out = np.full(X.shape, float(f)) if np.ndim(f) == 0 else np.asarray(f, dtype=float)
    return np.where(_inside(grid), out, 0.0)


# --------------------------------------------------------- Green's bound

def greens_solution(system: SparseSystem, D, f=1.0, tol: float = 1e-10) -> tuple[DiscreteField, np.ndarray]:
    """Solve Δu = f χ_D with zero boundary data; returns (u, f χ_D nodes)."""
    grid = system.grid
    fD = _sample_nodes(grid, f) * _fast_mask(D, grid)
    u = solve(zero_boundary(system, fD), tol=tol,
              method="direct" if not system.symmetric else "auto")
    return u, fD


def greens_bound_check(system: SparseSystem, D, E, p: float, f=1.0,
                       solution: tuple | None = None, n: int = 2) -> EstimateReport:
    """‖u‖_{L^p(E)} / (|E|^{2/(np)} |D|^{2/(np′)} ‖f‖_{L^p(D)}) for Δu = fχ_D."""
    q = ExponentPair(p).conjugate
    mE, mD = E.measure(), D.measure()
    if mE <= 0 or mD <= 0:
        raise ZeroDenominator("D and E must have positive measure")
    u, fD = solution if solution is not None else greens_solution(system, D, f)
    grid = system.grid
    left = lp_norm(u, _fast_mask(E, grid), p).value
    fn = lp_norm(fD, _fast_mask(D, grid), p, grid=grid).value
    right = mE ** (2.0 / (n * p)) * mD ** (2.0 / (n * q)) * fn
    return EstimateReport("Lem3.1", left, right, p=p, h=grid.h,
                          extras={"measure_D": mD, "measure_E": mE})


def random_cube_pairs(dec: WhitneyDecomposition, rng: np.random.Generator, count: int,
                      min_side: float, max_cubes: int = 3) -> list[tuple[CubeUnion, CubeUnion]]:
    """``count`` seeded (D, E) pairs, each a union of 1..max_cubes selected
    cubes of side ≥ min_side."""
    pool = np.nonzero(dec.sides() >= min_side)[0]
    if len(pool) == 0:
        raise NoEligibleCubes(f"no cubes of side ≥ {min_side}")
    out = []
    for _ in range(count):
        pick = []
        for _ in range(2):
            k = int(rng.integers(1, max_cubes + 1))
            pick.append(tuple(sorted(int(r) for r in rng.choice(pool, size=min(k, len(pool)),
                                                                replace=False))))
        out.append((CubeUnion(dec, pick[0], "D"), CubeUnion(dec, pick[1], "E")))
    return out


# ------------------------------------------------------- kernel integral

def ball_kernel_ratio() -> float:
    """∫_{B_R(x)} |x−y|^{-1} dy / |B_R|^{2/3} = 2πR² / ((4π/3)R³)^{2/3}."""
    return 2.0 * math.pi / (4.0 * math.pi / 3.0) ** (2.0 / 3.0)


def kernel_integral_bound(D, x, eta: float = 1.0 / 64, bbox=None) -> KernelReport:
    """Midpoint quadrature of ∫_D |x−y|^{-1} dy over voxels of side ``eta``.

    ``D`` is a BoxUnion in ℝ³ or an indicator callable (then ``bbox`` =
    (lo, hi) is required).  The voxel lattice has ``x`` as a vertex, so no
    midpoint coincides with the singularity."""
    x = np.asarray(x, dtype=float)
    if isinstance(D, BoxUnion):
        lo, hi = D.lo.min(axis=0), D.hi.max(axis=0)
        lo_b, hi_b = D.lo, D.hi

        def ind(P):
            m = np.zeros(len(P), dtype=bool)
            for a, b in zip(lo_b, hi_b):
                m |= np.all((P >= a) & (P < b), axis=1)
            return m
    else:
        if bbox is None:
            raise ValueError("an indicator needs a bounding box")
        lo, hi = (np.asarray(v, dtype=float) for v in bbox)
        ind = D
    k0 = np.floor((lo - x) / eta).astype(int)
    k1 = np.ceil((hi - x) / eta).astype(int)
    ax = [x[i] + eta * (np.arange(k0[i], k1[i]) + 0.5) for i in range(3)]
    total, count = 0.0, 0
    YY, ZZ = np.meshgrid(ax[1], ax[2], indexing="ij")
    yz = np.stack([YY.ravel(), ZZ.ravel()], 1)
    for cx in ax[0]:
        P = np.column_stack([np.full(len(yz), cx), yz])
        m = ind(P)
        if m.any():
            r = np.linalg.norm(P[m] - x, axis=1)
            total += float(np.sum(1.0 / r))
            count += int(m.sum())
    if count == 0:
        raise ZeroDenominator("D contains no voxel centres")
    integral = total * eta**3
    meas = count * eta**3
    return KernelReport(integral, meas, integral / meas ** (2.0 / 3.0))


# --------------------------------------------------------- C^{1,α} decay

def affine_fit_decay(u: DiscreteField, x0, radii, weight_power: float = 0.0) -> AffineFit:
    """Fit the tangent affine function at a boundary point and the decay
    exponent of sup_{Ω_ρ(x₀)} |u − l|.

    l(x₀) is pinned to the Dirichlet value; the gradient is the
    r^{-weight_power}-weighted least-squares fit over the nodes of the innermost
    annulus [ρ_min/2, ρ_min).  The sup runs over the closure of Ω_ρ(x₀):
    nodes plus graph points sampled at the interpolant's spacing, where u
    equals its boundary data."""
    grid = u.grid
    dom = grid.domain
    x0 = np.asarray(x0, dtype=float)
    radii = np.sort(np.asarray(radii, dtype=float))
    if len(np.unique(radii)) < 2:
        raise ValueError("need at least two distinct radii")
    if radii[0] < 8 * grid.h * (1 - 1e-12):
        raise ValueError("radii must be at least 8h")
    if abs(x0[1] - float(dom.phi(x0[0]))) > 1e-12 or np.hypot(*x0) >= 0.5:
        raise ValueError("x0 must be a graph point with |x0| < 1/2")
    g = u.g if u.g is not None else (lambda a, b: np.zeros_like(a))
    U = u.as_array()
    X, Y = grid.coords()
    ok = np.isfinite(U)
    P = np.stack([X[ok], Y[ok]], 1) - x0
    V = U[ok]
    r = np.hypot(P[:, 0], P[:, 1])
    val = float(g(np.array([x0[0]]), np.array([x0[1]]))[0])
    ann = (r >= radii[0] / 2) & (r < radii[0])
    if ann.sum() < 3:
        raise TooFewNodes(f"{int(ann.sum())} nodes in the innermost annulus")
    A = P[ann]
    b = V[ann] - val
    if weight_power:
        w = r[ann] ** (-0.5 * weight_power)
        A, b = A * w[:, None], b * w
    grad = np.linalg.lstsq(A, b, rcond=None)[0]
    rmax = radii[-1]
    t = np.arange(math.floor((x0[0] - rmax + 1) / dom.delta),
                  math.ceil((x0[0] + rmax + 1) / dom.delta) + 1) * dom.delta - 1.0
    t = t[(t >= -1) & (t <= 1)]
    B = np.stack([t, dom.phi(t)], 1)
    GB = np.asarray(g(B[:, 0], B[:, 1]), dtype=float)
    B = B - x0
    rb = np.hypot(B[:, 0], B[:, 1])
    res = np.abs(V - val - P @ grad)
    resb = np.abs(GB - val - B @ grad)
    sups = np.array([max(res[r < rho].max(initial=0.0), resb[rb < rho].max(initial=0.0))
                     for rho in radii])
    scale = max(float(np.abs(V[r < rmax]).max(initial=0.0)), 1e-300)
    if np.all(sups <= 1e-10 * scale):
        return AffineFit(x0, val, grad, math.inf, radii, sups, exact=True)
    pos = sups > 0
    if pos.sum() < 2:
        raise TooFewNodes("residual vanishes on all but one radius")
    gamma = float(np.polyfit(np.log(radii[pos]), np.log(sups[pos]), 1)[0])
    return AffineFit(x0, val, grad, gamma, radii, sups)


# --------------------------------------------------- per-cube Hessians

def _box_origin_distance(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    gap = np.maximum(np.maximum(lo, -hi), 0.0)
    return np.sqrt((gap**2).sum(axis=1))


def per_cube_hessian_scaling(dec: WhitneyDecomposition, hessian: HessianField, p: float,
                             alpha: float, cone: float | None = None,
                             normalize: float | None = None,
                             family_only: bool = True) -> SlopeReport:
    """Regress per-generation medians of log ‖D²u‖_{L^p(Q_k)} on log d_k.

    Cubes need d_k ≥ 8h, at least one valid node, and (by default) Q̃ ⊂ Ω_{1/4}.
    ``cone = λ`` further keeps cubes with dist(Q_k, 0) ≤ λ d_k; ``normalize``
    divides every norm by the given ‖u‖_{L^p(Ω₁)}."""
    ExponentPair(p)
    n = dec.dim
    theory = n / p + alpha - 1.0
    h = hessian.grid.h
    norms, cnt = per_cube_norms(dec, hessian, p)
    if normalize is not None:
        norms = norms / normalize
    diam = dec.diameters()
    sel = (diam >= 8 * h) & (cnt > 0)
    if family_only:
        fam = np.zeros(len(dec), dtype=bool)
        fam[dec.all_family_rows()] = True
        sel &= fam
    if cone is not None:
        lo, hi = dec.boxes()
        sel &= _box_origin_distance(lo, hi) <= cone * diam
    if not sel.any():
        raise NoEligibleCubes("no cube passes the size and placement filters")
    gens = sorted(int(g) for g in np.unique(dec.gens[sel]))
    meds, counts = [], []
    for g in gens:
        m = sel & (dec.gens == g)
        meds.append(float(np.median(norms[m])))
        counts.append(int(m.sum()))
    logd = np.array([math.log(math.sqrt(n) * 2.0**-g) for g in gens])
    if len(gens) < 2 or not all(v > 0 for v in meds):
        return SlopeReport(math.nan, theory, gens, meds, counts, degenerate=True)
    y = np.log(meds)
    xc = logd - logd.mean()
    slope = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    return SlopeReport(slope, theory, gens, meds, counts)


# ------------------------------------------------------ interior estimate

_VARIANTS = {"harmonic": ("Thm3.4", 1.0 / 12), "poisson": ("Thm4.1", 1.0 / 24)}


def estimate_constant(u: DiscreteField, f, p: float, variant: str = "poisson",
                      stencil: str = "cut", alpha: float | None = None) -> EstimateReport:
    """‖D²u‖_{L^p(Ω_r)} over ‖u‖_{L^p(Ω₁)} (+ ‖f‖_{L^p(Ω₁)} for ``poisson``)
    with r = 1/12 (harmonic) or 1/24 (poisson)."""
    if variant not in _VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    eid, r = _VARIANTS[variant]
    grid = u.grid
    H = second_differences(u, stencil=stencil)
    inner = lp_norm(H, Ball(r), p)
    if Ball(r).mask(grid).sum() == 0:
        raise ZeroDenominator(f"Ω_{r:g} holds no nodes")
    right = lp_norm(u, None, p).value
    if variant == "poisson":
        right += lp_norm(_sample_nodes(grid, f if f is not None else 0.0), None, p, grid=grid).value
    return EstimateReport(eid, inner.value, right, alpha=alpha, p=p, h=grid.h,
                          extras={"hessian_nodes": inner.count})


# ---------------------------------------------------------- u = v + w

class VWSplit:
    def __init__(self, u, v, w, inner, split_error, harmonic_residual, tol):
        self.u, self.v, self.w = u, v, w
        self.inner = inner
        self.split_error = split_error
        self.harmonic_residual = harmonic_residual
        self.tol = tol

    def __iter__(self):
        yield self.v
        yield self.w

    @property
    def passed(self) -> bool:
        return self.split_error <= 10 * self.tol and self.harmonic_residual <= 10 * self.tol


def inner_cube_nodes(dec: WhitneyDecomposition, grid: Grid, r: float = 0.25,
                     depth_cap: int = 40) -> np.ndarray:
    """Nodes lying in a cube Q of the full decomposition with Q̃ ⊂ Ω_r."""
    m = grid.unknown
    X, Y = grid.coords()
    gen, idx = dec.locate(np.stack([X[m], Y[m]], 1), depth_cap=depth_cap)
    good = np.zeros(len(gen), dtype=bool)
    for g in np.unique(gen[gen >= 0]):
        sel = np.nonzero(gen == g)[0]
        uk, inv = np.unique(idx[sel], axis=0, return_inverse=True)
        inv = inv.ravel()
        if g <= dec.s_max:
            rows = dec.find(int(g), uk)
            ok = dec.dilated_in_omega(rows, r)
        else:
            ok = _dilated_in_omega_cells(dec, int(g), uk, r)
        good[sel] = ok[inv]
    out = np.zeros(m.shape, dtype=bool)
    out[m] = good
    return out


def _dilated_in_omega_cells(dec: WhitneyDecomposition, g: int, idx: np.ndarray, r: float):
    side = 2.0**-g
    lo = idx * side
    d = math.sqrt(dec.dim) * side
    dist = dec.domain.box_distance(lo, lo + side, cap=np.full(len(idx), 5 * d))
    tmp = WhitneyDecomposition(dec.domain, g, np.full(len(idx), g), idx.copy(), dist)
    rows = tmp.find(g, idx)
    return tmp.dilated_in_omega(rows, r)


def vw_split(system: SparseSystem, f, dec: WhitneyDecomposition, tol: float = 1e-10,
             harmonic_radius: float = 1.0 / 12) -> VWSplit:
    """Split u into v (source off the Ω_{1/4} cubes, u's boundary data) and
    w (source on them, zero data); checks linearity and harmonicity of v."""
    grid = system.grid
    fn = _sample_nodes(grid, f)
    inner = inner_cube_nodes(dec, grid)
    fw = np.where(inner, fn, 0.0)
    fv = fn - fw
    method = "direct"
    u = solve(system.with_rhs(fn), tol=tol, method=method)
    v = solve(system.with_rhs(fv), tol=tol, method=method)
    w = solve(zero_boundary(system, fw), tol=tol, method=method)
    scale = max(float(np.abs(u.values).max(initial=0.0)), 1.0)
    err = float(np.abs(u.values - v.values - w.values).max(initial=0.0)) / scale
    lap = system.apply_laplacian(v.values)
    ball = Ball(harmonic_radius).mask(grid)[grid.unknown]
    rhs_scale = max(float(np.abs(system.with_rhs(fv).rhs).max(initial=0.0)), 1.0)
    res = float(np.abs(lap[ball] - fv[grid.unknown][ball]).max(initial=0.0)) / rhs_scale
    return VWSplit(u, v, w, inner, err, res, tol)


# -------------------------------------------------------------- Lemma 4.2

def beta_exponent(alpha: float, p: float, n: int = 2) -> float:
    q = ExponentPair(p).conjugate
    return alpha + n / p + 2.0 / (n * q) - 1.0


def lemma42_check(system: SparseSystem, f, dec: WhitneyDecomposition, anchor, s: int, j: int,
                  p: float, alpha: float, tol: float = 1e-10) -> EstimateReport:
    """‖D²w^{s,j}_k‖_{L^p(Q_k)} against 2^{-jβ-2m/(np′)} ‖f‖_{L^p(F^{s,j}_{Q_k})}.

    w solves Δw = f χ_{F^{s,j}_{Q_k}} with zero data.  For j ≥ 1 the extras
    record the band-locality set check and the harmonic residual of w on
    Ω_{2^{-s₀+j+3}}(y_k)."""
    grid = system.grid
    n = dec.dim
    ar, s0 = dec.anchor_row(anchor)
    side = float(dec.sides()[ar])
    if side < 8 * grid.h:
        raise CubeTooSmall(f"anchor side {side:g} < 8h = {8 * grid.h:g}")
    rows = dec.family_Fsj_rows(ar, s, j)
    if len(rows) == 0:
        raise EmptyFamily(f"F^{{{s},{j}}} is empty for this anchor")
    region = CubeUnion(dec, tuple(int(r) for r in rows), "F_sj")
    chi = region.mask(grid)
    if not chi.any():
        raise EmptyFamily(f"F^{{{s},{j}}} holds no grid nodes at h={grid.h:g}")
    fn = _sample_nodes(grid, f) * chi
    w = solve(zero_boundary(system, fn), tol=tol, method="direct")
    H = second_differences(w, stencil="cut")
    Q = CubeUnion(dec, (ar,), "Q_k")
    left = lp_norm(H, Q, p).value
    fnorm = lp_norm(fn, chi, p, grid=grid).value
    q = ExponentPair(p).conjugate
    m = s - s0
    beta = beta_exponent(alpha, p, n)
    right = 2.0 ** (-j * beta - 2.0 * m / (n * q)) * fnorm
    extras = {"beta": beta, "m": m, "rhs_nodes": int(chi.sum()), "anchor_row": int(ar)}
    if j >= 1:
        extras.update(_band_locality(system, dec, ar, s0, j, chi, fn, w))
    return EstimateReport("Lem4.2", left, right, alpha=alpha, p=p, h=grid.h,
                          s0=s0, s=s, j=j, extras=extras)


def _band_locality(system, dec, ar, s0, j, chi, fn, w) -> dict:
    grid = system.grid
    lo, hi = dec.boxes()
    yk, _ = grid.domain.nearest_graph_point(lo[ar], hi[ar])
    rho = 2.0 ** (-s0 + j + 3)
    ball = Ball(rho, (float(yk[0]), float(yk[1]))).mask(grid)
    lap = zero_boundary(system, fn).apply_laplacian(w.values)
    bm = ball[grid.unknown]
    scale = max(float(np.abs(fn).max()), 1.0)
    return {"y_k": (float(yk[0]), float(yk[1])), "band_overlap": int((ball & chi).sum()),
            "band_nodes": int(bm.sum()),
            "band_residual": float(np.abs(lap[bm] - fn[grid.unknown][bm]).max(initial=0.0)) / scale}


def band_locality_check(system: SparseSystem, f, dec: WhitneyDecomposition, anchor, s: int,
                        j: int, tol: float = 1e-10) -> dict:
    """For j ≥ 1: the source nodes of F^{s,j}_{Q_k} miss Ω_{2^{-s₀+j+3}}(y_k),
    and w^{s,j}_k is discrete-harmonic there.  No size condition on Q_k."""
    if j < 1:
        raise ValueError("band locality concerns j ≥ 1")
    grid = system.grid
    ar, s0 = dec.anchor_row(anchor)
    rows = dec.family_Fsj_rows(ar, s, j)
    chi = CubeUnion(dec, tuple(int(r) for r in rows)).mask(grid) if len(rows) else None
    if chi is None or not chi.any():
        raise EmptyFamily(f"F^{{{s},{j}}} holds no grid nodes")
    fn = _sample_nodes(grid, f) * chi
    w = solve(zero_boundary(system, fn), tol=tol, method="direct")
    out = _band_locality(system, dec, ar, s0, j, chi, fn, w)
    out.update(anchor_row=int(ar), s0=s0, s=s, j=j)
    return out


def band_cells(dec: WhitneyDecomposition, grid: Grid, max_cells: int = 12) -> list[tuple[int, int, int]]:
    """(anchor_row, s, j) with j ≥ 1 whose family has nodes at this h."""
    e = family_offset(dec.dim)
    svals = [s for s in range(0, dec.s_max - e + 1) if 2.0 ** -(s + e) >= grid.h]
    cells = []
    for s0 in range(0, dec.s_max - e + 1):
        anchors = dec.family_rows(s0)
        if len(anchors) == 0:
            continue
        ar = int(anchors[len(anchors) // 2])
        for j in range(1, s0 + 1):
            for s in svals:
                if s >= s0 - j - 6 and len(dec.family_Fsj_rows(ar, s, j)):
                    cells.append((ar, s, j))
    return cells if len(cells) <= max_cells else _spread(cells, max_cells)


def lemma42_cells(dec: WhitneyDecomposition, grid: Grid, max_cells: int = 40) -> list[tuple[int, int, int]]:
    """Deterministic (anchor_row, s, j) cells: anchors of side ≥ 8h, family
    cubes of side ≥ h, nonempty node sets; at most ``max_cells``."""
    e = family_offset(dec.dim)
    h = grid.h
    cells = []
    s_top = dec.s_max - e
    svals = [s for s in range(0, s_top + 1) if 2.0 ** -(s + e) >= h]
    for s0 in svals:
        if 2.0 ** -(s0 + e) < 8 * h:
            continue
        for ar in dec.family_rows(s0):
            for j in range(0, s0 + 1):
                for s in svals:
                    if s < s0 - j - 6:
                        continue
                    rows = dec.family_Fsj_rows(int(ar), s, j)
                    if len(rows):
                        cells.append((int(ar), s, j))
    return cells[:max_cells] if len(cells) <= max_cells else _spread(cells, max_cells)


def _spread(cells, k):
    pick = np.unique(np.linspace(0, len(cells) - 1, k).round().astype(int))
    return [cells[i] for i in pick]


def trend_verdict(reports: list[EstimateReport], limit: float = 0.25) -> tuple[str, dict]:
    """Bounded-constant rule: the max ratio per j and per |m| must not grow
    (fitted log₂ slopes ≤ ``limit``)."""
    good = [r for r in reports if r.verdict != INDETERMINATE and math.isfinite(r.ratio) and r.ratio > 0]
    if not good:
        return INDETERMINATE, {}
    info = {"max_ratio": max(r.ratio for r in good)}
    verdict = PASS
    for key, fn in (("j", lambda r: r.j), ("m", lambda r: abs(r.s - r.s0))):
        groups: dict = {}
        for r in good:
            groups.setdefault(fn(r), []).append(r.ratio)
        xs = sorted(groups)
        if len(xs) >= 2:
            slope = float(np.polyfit(xs, [math.log2(max(groups[x])) for x in xs], 1)[0])
        else:
            slope = 0.0
        info[f"slope_{key}"] = slope
        if slope > limit:
            verdict = FAIL
    return verdict, info


def lemma42_sweep(system: SparseSystem, f, dec: WhitneyDecomposition, p: float, alpha: float,
                  max_cells: int = 40, tol: float = 1e-10) -> tuple[list[EstimateReport], str, dict]:
    reports = [lemma42_check(system, f, dec, ar, s, j, p, alpha, tol)
               for ar, s, j in lemma42_cells(dec, system.grid, max_cells)]
    verdict, info = trend_verdict(reports)
    bands = [r.extras for r in reports if r.j and r.j >= 1]
    bands += [band_locality_check(system, f, dec, ar, s, j, tol)
              for ar, s, j in band_cells(dec, system.grid)]
    overlap = sum(b["band_overlap"] for b in bands)
    resid = max((b["band_residual"] for b in bands), default=0.0)
    info.update(band_probes=len(bands), band_overlap=overlap, band_residual=resid)
    if overlap or resid > 10 * tol or not bands:
        verdict = FAIL
    return reports, verdict, info


# ---------------------------------------------------- Thm 5.1 arithmetic

def aggregate_fully_nonlinear(per_cube, p: float, p0: float, alpha0: float,
                              n: int = 2) -> EstimateReport:
    """Per-cube constants C_k = ‖D²u‖_{L^p(Q)} / (d^{n/p+α₀−1} + ‖f‖_{L^p(Q̃)})
    and the Hölder/Young cube sum at exponent q.

    The report's ratio is max_k C_k; extras hold q, the aggregate
    Σ|Q|^{1−q/p}‖D²u‖^q, its chain bound with the running constant, and
    the reduced right side Σ(d^{n−(1−α₀)q} + d^n + ‖f‖^p)."""
    ExponentPair(p)
    if not (1.0 <= p0 <= p):
        raise ExponentOutOfRange("need 1 ≤ p0 ≤ p")
    if not (0.0 < alpha0 <= 1.0):
        raise ExponentOutOfRange("α₀ must lie in (0, 1]")
    if alpha0 > 1.0 - 1.0 / p:
        q = p
    else:
        if alpha0 < 1.0 and p0 >= 1.0 / (1.0 - alpha0):
            raise ExponentOutOfRange(f"p0={p0:g} ≥ 1/(1−α₀) = {1.0 / (1.0 - alpha0):g}")
        q = p0
    data = np.asarray(per_cube, dtype=float).reshape(-1, 3)
    if len(data) == 0:
        raise NoEligibleCubes("empty per-cube list")
    d, hn, fn = data.T
    a = n / p + alpha0 - 1.0
    den = d**a + fn
    C = hn / den
    k = int(np.argmax(C))
    vol = (d / math.sqrt(n)) ** n
    w = vol ** (1.0 - q / p)
    agg = float(np.sum(w * hn**q))
    chain = float(np.sum(w * (C[k] * den) ** q))
    reduced = float(np.sum(d ** (n - (1.0 - alpha0) * q) + d**n + fn**p))
    return EstimateReport("Thm5.1", float(hn[k]), float(den[k]), alpha=alpha0, p=p, p0=p0,
                          extras={"q": q, "aggregate": agg, "chain_bound": chain,
                                  "reduced_right": reduced, "cubes": len(d),
                                  "chain_ok": agg <= chain * (1 + 1e-12)})
