"""Hölder graph domains Ω₁ = {xⁿ > φ(x′)} ∩ B₁ with a piecewise-linear φ.

The boundary function is stored as uniformly spaced samples on [-1, 1]^{n-1};
every geometric query is exact for the piecewise-linear interpolant (a
polyline for n = 2, a triangulated surface for n = 3, each grid cell split
along its (0,0)-(1,1) diagonal).  Distances to the graph are computed by a
vectorised branch-and-bound over a dyadic min/max pyramid of the samples,
finished with exact segment/triangle distances at the leaves.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "GraphDomainSpec",
    "Domain",
    "SeminormViolation",
    "EmptySamples",
    "BallNotContained",
    "BoxOutsideUniverse",
    "flat_spec",
    "bump_spec",
    "cusp_spec",
    "table_spec",
    "spec_from_dict",
    "load_domain_spec",
    "build_domain",
    "shipped_specs",
    "CUSP_ALPHAS",
]

DEFAULT_DELTA = 2.0**-12
CUSP_ALPHAS = (0.3, 0.4, 0.5, 0.6, 0.75, 0.9)


class SeminormViolation(ValueError):
    pass


class EmptySamples(ValueError):
    pass


class BallNotContained(ValueError):
    pass


class BoxOutsideUniverse(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class GraphDomainSpec:
    """Sampled boundary graph.  ``samples[i]`` (or ``samples[i, j]`` for
    n = 3) is φ at ``origin + i*delta`` along each cross-section axis."""

    dim: int
    alpha: float
    samples: np.ndarray
    delta: float
    seminorm_K: float
    label: str = ""
    origin: float = -1.0
    kind: str = "table"


def _grid_1d(delta: float) -> np.ndarray:
    m = int(round(2.0 / delta))
    if not math.isclose(m * delta, 2.0, rel_tol=0, abs_tol=1e-15):
        raise ValueError(f"delta={delta} does not divide [-1, 1]")
    return -1.0 + delta * np.arange(m + 1)


def _cross_section(dim: int, delta: float):
    t = _grid_1d(delta)
    if dim == 2:
        return t, np.abs(t)
    if dim == 3:
        X, Y = np.meshgrid(t, t, indexing="ij")
        return (X, Y), np.hypot(X, Y)
    raise ValueError(f"dim must be 2 or 3, got {dim}")


def flat_spec(dim: int = 2, delta: float = DEFAULT_DELTA) -> GraphDomainSpec:
    _, r = _cross_section(dim, delta)
    return GraphDomainSpec(dim, 1.0, np.zeros_like(r), delta, 1.0,
                           label="flat" if dim == 2 else "flat3d", kind="flat")


def bump_spec(dim: int = 2, delta: float = DEFAULT_DELTA) -> GraphDomainSpec:
    _, r = _cross_section(dim, delta)
    phi = 0.2 * (1.0 - np.cos(np.pi * r))
    return GraphDomainSpec(dim, 1.0, phi, delta, 0.2 * np.pi * (1 + 1e-9),
                           label="bump", kind="bump")


def cusp_spec(alpha: float, dim: int = 2, delta: float = DEFAULT_DELTA) -> GraphDomainSpec:
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    _, r = _cross_section(dim, delta)
    phi = r ** (1.0 + alpha)
    rmax = 1.0 if dim == 2 else math.sqrt(2.0)
    K = (1.0 + alpha) * rmax**alpha * (1 + 1e-9)
    return GraphDomainSpec(dim, alpha, phi, delta, K,
                           label=f"cusp(alpha={alpha:g})", kind="cusp")


def table_spec(samples, delta: float, alpha: float, K: float, label: str = "table",
               origin: float = -1.0) -> GraphDomainSpec:
    arr = np.asarray(samples, dtype=float)
    dim = arr.ndim + 1
    return GraphDomainSpec(dim, alpha, arr, delta, K, label=label, origin=origin)


def spec_from_dict(d: dict) -> GraphDomainSpec:
    """Domain spec file schema: {dim, alpha, K, delta, kind, samples?, label}."""
    kind = d.get("kind", "flat")
    dim = int(d.get("dim", 2))
    delta = float(d.get("delta", DEFAULT_DELTA))
    if kind == "flat":
        spec = flat_spec(dim, delta)
    elif kind == "bump":
        spec = bump_spec(dim, delta)
    elif kind == "cusp":
        spec = cusp_spec(float(d["alpha"]), dim, delta)
    elif kind == "table":
        spec = table_spec(d["samples"], delta, float(d.get("alpha", 1.0)),
                          float(d.get("K", 1.0)), d.get("label", "table"),
                          float(d.get("origin", -1.0)))
    else:
        raise ValueError(f"unknown domain kind {kind!r}")
    overrides = {}
    if "label" in d:
        overrides["label"] = d["label"]
    if "K" in d and kind != "table":
        overrides["seminorm_K"] = float(d["K"])
    if "alpha" in d and kind in ("flat", "bump"):
        overrides["alpha"] = float(d["alpha"])
    if overrides:
        spec = GraphDomainSpec(**{**spec.__dict__, **overrides})
    return spec


def load_domain_spec(path) -> GraphDomainSpec:
    return spec_from_dict(json.loads(Path(path).read_text()))


def shipped_specs(delta: float = DEFAULT_DELTA) -> dict[str, GraphDomainSpec]:
    out = {"flat": flat_spec(2, delta), "bump": bump_spec(2, delta)}
    for a in CUSP_ALPHAS:
        s = cusp_spec(a, 2, delta)
        out[s.label] = s
    return out


# ---------------------------------------------------------------- primitives


def _pt_box(p, lo, hi):
    g = np.maximum(np.maximum(lo - p, p - hi), 0.0)
    return np.sqrt(np.einsum("...i,...i->...", g, g))


def _pt_seg(p, a, b):
    ab = b - a
    t = np.einsum("...i,...i->...", p - a, ab) / np.einsum("...i,...i->...", ab, ab)
    t = np.clip(t, 0.0, 1.0)[..., None]
    d = p - (a + t * ab)
    return np.sqrt(np.einsum("...i,...i->...", d, d))


def _seg_seg(p1, q1, p2, q2):
    """Distance between 3-D segments [p1,q1] and [p2,q2] (non-degenerate)."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = np.einsum("...i,...i->...", d1, d1)
    e = np.einsum("...i,...i->...", d2, d2)
    f = np.einsum("...i,...i->...", d2, r)
    c = np.einsum("...i,...i->...", d1, r)
    b = np.einsum("...i,...i->...", d1, d2)
    denom = a * e - b * b
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > 1e-300, np.clip((b * f - c * e) / denom, 0.0, 1.0), 0.0)
        t = (b * s + f) / e
        s = np.where(t < 0.0, np.clip(-c / a, 0.0, 1.0), np.where(t > 1.0, np.clip((b - c) / a, 0.0, 1.0), s))
        t = np.clip(t, 0.0, 1.0)
    dd = (p1 + s[..., None] * d1) - (p2 + t[..., None] * d2)
    return np.sqrt(np.einsum("...i,...i->...", dd, dd))


def _pt_tri(p, a, b, c):
    ab = b - a
    ac = c - a
    nrm = np.cross(ab, ac)
    nn = np.einsum("...i,...i->...", nrm, nrm)
    ap = p - a
    dist_plane = np.einsum("...i,...i->...", ap, nrm) / np.sqrt(nn)
    proj = p - (dist_plane / np.sqrt(nn))[..., None] * nrm
    # barycentric coordinates of the projection
    v0, v1, v2 = ab, ac, proj - a
    d00 = np.einsum("...i,...i->...", v0, v0)
    d01 = np.einsum("...i,...i->...", v0, v1)
    d11 = np.einsum("...i,...i->...", v1, v1)
    d20 = np.einsum("...i,...i->...", v2, v0)
    d21 = np.einsum("...i,...i->...", v2, v1)
    den = d00 * d11 - d01 * d01
    bv = (d11 * d20 - d01 * d21) / den
    bw = (d00 * d21 - d01 * d20) / den
    inside = (bv >= 0) & (bw >= 0) & (bv + bw <= 1)
    edge = np.minimum(np.minimum(_pt_seg(p, a, b), _pt_seg(p, b, c)), _pt_seg(p, c, a))
    return np.where(inside, np.abs(dist_plane), edge)


_CUBE_CORNERS = np.array([[(k >> i) & 1 for i in range(3)] for k in range(8)], dtype=float)
_CUBE_EDGES = np.array([(a, b) for a in range(8) for b in range(a + 1, 8)
                        if bin(a ^ b).count("1") == 1])


def _box_tri_dist(lo, hi, A, B, C):
    """Exact distance between disjoint boxes and triangles (all (N,3))."""
    corners = lo[:, None, :] + _CUBE_CORNERS[None] * (hi - lo)[:, None, :]
    d = np.minimum(np.minimum(_pt_box(A, lo, hi), _pt_box(B, lo, hi)), _pt_box(C, lo, hi))
    d = np.minimum(d, _pt_tri(corners, A[:, None], B[:, None], C[:, None]).min(axis=1))
    e0 = corners[:, _CUBE_EDGES[:, 0]]
    e1 = corners[:, _CUBE_EDGES[:, 1]]
    for P, Q in ((A, B), (B, C), (C, A)):
        d = np.minimum(d, _seg_seg(e0, e1, P[:, None], Q[:, None]).min(axis=1))
    return d


# ------------------------------------------------------------------- domain


def _pyramid(cell_max, cell_min, dim):
    """Dyadic max/min pyramids over the cell grid, padded to a power of two."""
    C = cell_max.shape[0]
    L = max(0, int(math.ceil(math.log2(C))))
    P = 2**L
    pad = [(0, P - C)] * (dim - 1)
    mx = [np.pad(cell_max, pad, constant_values=-np.inf)]
    mn = [np.pad(cell_min, pad, constant_values=np.inf)]
    for _ in range(L):
        a, b = mx[-1], mn[-1]
        if dim == 2:
            mx.append(np.maximum(a[0::2], a[1::2]))
            mn.append(np.minimum(b[0::2], b[1::2]))
        else:
            mx.append(np.maximum(np.maximum(a[0::2, 0::2], a[1::2, 0::2]),
                                 np.maximum(a[0::2, 1::2], a[1::2, 1::2])))
            mn.append(np.minimum(np.minimum(b[0::2, 0::2], b[1::2, 0::2]),
                                 np.minimum(b[0::2, 1::2], b[1::2, 1::2])))
    return mx, mn, L


@dataclass(eq=False)
class Domain:
    """Exact piecewise-linear graph domain inside the unit ball.

    Distances are exact for the interpolant up to rounding; the absolute
    error is below ``8 * eps * (1 + K)`` for coordinates of unit size.
    Instances are immutable after construction and safe to share.
    """

    spec: GraphDomainSpec
    _mx: list = field(init=False, repr=False)
    _mn: list = field(init=False, repr=False)
    _levels: int = field(init=False, repr=False)

    def __post_init__(self):
        s = self.spec.samples
        if self.dim == 2:
            cmax = np.maximum(s[:-1], s[1:])
            cmin = np.minimum(s[:-1], s[1:])
        else:
            q = np.stack([s[:-1, :-1], s[1:, :-1], s[:-1, 1:], s[1:, 1:]])
            cmax, cmin = q.max(axis=0), q.min(axis=0)
        self._mx, self._mn, self._levels = _pyramid(cmax, cmin, self.dim)
        self.samples.setflags(write=False)

    # basic accessors
    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def samples(self) -> np.ndarray:
        return self.spec.samples

    @property
    def delta(self) -> float:
        return self.spec.delta

    @property
    def ncells(self) -> int:
        return self.samples.shape[0] - 1

    @property
    def label(self) -> str:
        return self.spec.label

    def _local(self, xp):
        """Cell index and local coordinate in [0, 1] along each axis."""
        t = (np.asarray(xp, dtype=float) - self.spec.origin) / self.delta
        i = np.clip(np.floor(t).astype(np.int64), 0, self.ncells - 1)
        return i, np.clip(t - i, 0.0, 1.0)

    def phi(self, xp):
        """φ_PL at cross-section points; ``xp`` has shape (..., n-1) for
        n = 3 and (...) for n = 2."""
        if self.dim == 2:
            i, u = self._local(xp)
            s = self.samples
            return s[i] * (1.0 - u) + s[i + 1] * u
        xp = np.asarray(xp, dtype=float)
        i, u = self._local(xp[..., 0])
        j, v = self._local(xp[..., 1])
        return self._tri_eval(i, j, u, v)

    def _tri_eval(self, i, j, u, v):
        s = self.samples
        z00, z10, z01, z11 = s[i, j], s[i + 1, j], s[i, j + 1], s[i + 1, j + 1]
        lower = z00 + (z10 - z00) * u + (z11 - z10) * v
        upper = z00 + (z11 - z01) * u + (z01 - z00) * v
        return np.where(u >= v, lower, upper)

    def contains(self, points) -> np.ndarray:
        """Strict membership in Ω₁ (open set) for an array of points (..., n)."""
        p = np.asarray(points, dtype=float)
        inside_ball = np.einsum("...i,...i->...", p, p) < 1.0
        xp = p[..., 0] if self.dim == 2 else p[..., :-1]
        xp = np.clip(xp, -1.0, 1.0)
        return inside_ball & (p[..., -1] > self.phi(xp))

    # ------------------------------------------------------------ distances

    @staticmethod
    def ball_distance(lo, hi):
        """dist(box, {|x| ≥ 1}) for boxes (N, n); zero when a box leaves B₁."""
        far = np.maximum(np.abs(lo), np.abs(hi))
        return np.maximum(0.0, 1.0 - np.sqrt(np.einsum("ij,ij->i", far, far)))

    def box_distance(self, lo, hi, cap=None) -> np.ndarray:
        """dist(box, F) with F = ℝⁿ \\ Ω₁ for boxes given as corner arrays.

        With ``cap`` the result is min(cap, dist), which is much cheaper when
        only a threshold decision is needed."""
        lo = np.atleast_2d(np.asarray(lo, dtype=float))
        hi = np.atleast_2d(np.asarray(hi, dtype=float))
        c = self.ball_distance(lo, hi)
        if cap is not None:
            c = np.minimum(c, cap)
        return self.graph_distance(lo, hi, c)

    # dyadic-cube hooks used by the Whitney construction
    def root_cubes(self) -> np.ndarray:
        """Generation-0 cubes (side 1) covering [-1, 1]^n."""
        n = self.dim
        return np.array([[-1 + ((c >> a) & 1) for a in range(n)] for c in range(2**n)], dtype=np.int64)

    def cube_may_intersect(self, g: int, idx: np.ndarray) -> np.ndarray:
        """Conservative test that cubes of generation ``g`` meet Ω₁."""
        side = 2.0**-g
        lo = idx * side
        hi = lo + side
        near = np.clip(0.0, lo, hi)
        in_ball = np.einsum("ij,ij->i", near, near) < 1.0
        k = self.dim - 1
        lc = int(round(math.log2(self.ncells)))
        level = lc - 1 - g
        if level >= 0:
            blk = idx[:, :k] + 2**g
            ok = np.all((blk >= 0) & (blk < self._mn[level].shape[0]), axis=1)
            blk = np.clip(blk, 0, self._mn[level].shape[0] - 1)
            mn = self._mn[level][tuple(blk.T)]
        else:
            cell = np.floor((lo[:, :k] + 1.0) / self.delta).astype(np.int64)
            ok = np.all((cell >= 0) & (cell < self.ncells), axis=1)
            cell = np.clip(cell, 0, self.ncells - 1)
            mn = self._mn[0][tuple(cell.T)]
        return in_ball & ok & (hi[:, k] > mn)

    def dist_to_complement(self, lo, hi) -> float:
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        near = np.clip(0.0, lo, hi)
        if float(np.dot(near, near)) > 1.0:
            warnings.warn("box is disjoint from the closed unit ball", BoxOutsideUniverse)
        return float(self.box_distance(lo[None], hi[None])[0])

    def point_graph_distance(self, points, cap=None) -> np.ndarray:
        """Distance from points to the boundary graph (capped at ``cap``)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        c = np.full(len(p), np.inf) if cap is None else np.broadcast_to(cap, (len(p),)).astype(float)
        return self.graph_distance(p, p, c)

    def _block_range(self, level, b):
        """Cross-section extent of block(s) ``b`` (..., n-1) at ``level``."""
        size = 2**level
        lo_c = b * size
        hi_c = np.minimum((b + 1) * size, self.ncells)
        o, d = self.spec.origin, self.delta
        return o + lo_c * d, o + hi_c * d, lo_c, hi_c

    def graph_distance(self, lo, hi, cap) -> np.ndarray:
        """min(cap, dist(box, hypograph of φ_PL)) by branch-and-bound."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        best = np.array(cap, dtype=float, copy=True)
        N = len(lo)
        k = self.dim - 1
        box = np.nonzero(best > 0)[0]
        blk = np.zeros((len(box), k), dtype=np.int64)
        for level in range(self._levels, -1, -1):
            if len(box) == 0:
                return best
            bmax = self._mx[level][tuple(blk.T)]
            xlo, xhi, clo, chi = self._block_range(level, blk)
            blo, bhi = lo[box], hi[box]
            gap = np.maximum(np.maximum(xlo - bhi[:, :k], blo[:, :k] - xhi), 0.0)
            gz = np.maximum(blo[:, k] - bmax, 0.0)
            lb = np.sqrt(np.einsum("ij,ij->i", gap, gap) + gz * gz)
            lb[~np.isfinite(bmax)] = np.inf
            # upper bound from the sample nearest the box centre inside the block
            cen = 0.5 * (blo[:, :k] + bhi[:, :k])
            si = np.rint((cen - self.spec.origin) / self.delta).astype(np.int64)
            si = np.clip(si, clo, chi)
            si = np.minimum(si, self.ncells)
            sx = self.spec.origin + si * self.delta
            sz = self.samples[tuple(si.T)]
            rep = np.concatenate([sx, sz[:, None]], axis=1)
            ub = _pt_box(rep, blo, bhi)
            ub[~np.isfinite(bmax)] = np.inf
            np.minimum.at(best, box, ub)
            keep = lb < best[box]
            box, blk = box[keep], blk[keep]
            if level == 0:
                break
            nchild = 2**k
            offs = np.array([[(c >> a) & 1 for a in range(k)] for c in range(nchild)], dtype=np.int64)
            box = np.repeat(box, nchild)
            blk = (2 * np.repeat(blk, nchild, axis=0)) + np.tile(offs, (len(blk), 1))
            lim = self._mx[level - 1].shape[0]
            ok = np.all(blk < lim, axis=1)
            box, blk = box[ok], blk[ok]
        if len(box):
            chunk = 200_000
            for a in range(0, len(box), chunk):
                bb, cc = box[a:a + chunk], blk[a:a + chunk]
                d = self._leaf_distance(lo[bb], hi[bb], cc)
                np.minimum.at(best, bb, d)
        return best

    def _leaf_distance(self, lo, hi, cell):
        o, dl, s = self.spec.origin, self.delta, self.samples
        if self.dim == 2:
            c = cell[:, 0]
            xa = o + c * dl
            xb = xa + dl
            ya, yb = s[c], s[c + 1]
            c0 = np.maximum(lo[:, 0], xa)
            c1 = np.minimum(hi[:, 0], xb)
            ov = c0 <= c1
            f0 = ya + (yb - ya) * (c0 - xa) / dl
            f1 = ya + (yb - ya) * (c1 - xa) / dl
            hit = ov & (np.maximum(f0, f1) >= lo[:, 1])
            A = np.stack([xa, ya], axis=1)
            B = np.stack([xb, yb], axis=1)
            d = np.minimum(_pt_box(A, lo, hi), _pt_box(B, lo, hi))
            corners = np.stack([lo, np.stack([hi[:, 0], lo[:, 1]], 1), hi,
                                np.stack([lo[:, 0], hi[:, 1]], 1)], axis=1)
            d = np.minimum(d, _pt_seg(corners, A[:, None], B[:, None]).min(axis=1))
            return np.where(hit, 0.0, d)
        i, j = cell[:, 0], cell[:, 1]
        xi, yj = o + i * dl, o + j * dl
        u0 = np.clip((lo[:, 0] - xi) / dl, 0.0, 1.0)
        u1 = np.clip((hi[:, 0] - xi) / dl, 0.0, 1.0)
        v0 = np.clip((lo[:, 1] - yj) / dl, 0.0, 1.0)
        v1 = np.clip((hi[:, 1] - yj) / dl, 0.0, 1.0)
        ov = (lo[:, 0] <= xi + dl) & (hi[:, 0] >= xi) & (lo[:, 1] <= yj + dl) & (hi[:, 1] >= yj)
        cand = [(u0, v0), (u1, v0), (u0, v1), (u1, v1)]
        w0 = np.maximum(u0, v0)
        w1 = np.minimum(u1, v1)
        diag_ok = w0 <= w1
        zmax = np.full(len(i), -np.inf)
        for uu, vv in cand:
            zmax = np.maximum(zmax, self._tri_eval(i, j, uu, vv))
        for ww in (w0, w1):
            zmax = np.where(diag_ok, np.maximum(zmax, self._tri_eval(i, j, ww, ww)), zmax)
        hit = ov & (zmax >= lo[:, 2])
        P00 = np.stack([xi, yj, s[i, j]], 1)
        P10 = np.stack([xi + dl, yj, s[i + 1, j]], 1)
        P01 = np.stack([xi, yj + dl, s[i, j + 1]], 1)
        P11 = np.stack([xi + dl, yj + dl, s[i + 1, j + 1]], 1)
        d = np.full(len(i), np.inf)
        miss = ~hit
        if miss.any():
            m = miss
            d1 = _box_tri_dist(lo[m], hi[m], P00[m], P10[m], P11[m])
            d2 = _box_tri_dist(lo[m], hi[m], P00[m], P11[m], P01[m])
            d[m] = np.minimum(d1, d2)
        return np.where(hit, 0.0, d)

    def nearest_graph_point(self, lo, hi):
        """A point of the graph realising dist(box, graph); n = 2 only."""
        if self.dim != 2:
            raise NotImplementedError("nearest_graph_point supports n = 2")
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        d = float(self.graph_distance(lo[None], hi[None], np.array([np.inf]))[0])
        a = max(lo[0] - d - self.delta, -1.0)
        b = min(hi[0] + d + self.delta, 1.0)
        i0 = max(int(math.floor((a + 1.0) / self.delta)), 0)
        i1 = min(int(math.ceil((b + 1.0) / self.delta)), self.ncells)
        x = -1.0 + self.delta * np.arange(i0, i1 + 1)
        y = self.samples[i0:i1 + 1]
        A = np.stack([x[:-1], y[:-1]], 1)
        B = np.stack([x[1:], y[1:]], 1)
        # closest point of each segment to the box: minimise over a fine
        # parametrisation refined by exact projection of box corners
        corners = np.array([lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]])
        best, pt = np.inf, None
        for P in list(corners):
            ab = B - A
            t = np.clip(np.einsum("ij,ij->i", P - A, ab) / np.einsum("ij,ij->i", ab, ab), 0, 1)
            Q = A + t[:, None] * ab
            dq = _pt_box(Q, lo, hi)
            k = int(np.argmin(dq))
            if dq[k] < best:
                best, pt = dq[k], Q[k]
        for Q in (A, B):
            dq = _pt_box(Q, lo, hi)
            k = int(np.argmin(dq))
            if dq[k] < best:
                best, pt = dq[k], Q[k]
        return np.asarray(pt), float(best)

    # ------------------------------------------------------------- measures

    def lipschitz_constant(self) -> float:
        s, dl = self.samples, self.delta
        if self.dim == 2:
            return float(np.max(np.abs(np.diff(s))) / dl) if len(s) > 1 else 0.0
        gx1 = (s[1:, :-1] - s[:-1, :-1]) / dl
        gy1 = (s[1:, 1:] - s[1:, :-1]) / dl
        gx2 = (s[1:, 1:] - s[:-1, 1:]) / dl
        gy2 = (s[:-1, 1:] - s[:-1, :-1]) / dl
        return float(max(np.hypot(gx1, gy1).max(), np.hypot(gx2, gy2).max()))

    def holder_quotient(self, alpha: float | None = None) -> float:
        """max |Dφ(s) − Dφ(t)| / |s − t|^α over dyadic-lag sample pairs of
        the segment slopes (x-slopes along rows for n = 3)."""
        a = self.spec.alpha if alpha is None else alpha
        s, dl = self.samples, self.delta
        D = np.diff(s, axis=0) / dl
        best = 0.0
        lag = 1
        while lag < D.shape[0]:
            q = np.abs(D[lag:] - D[:-lag]).max() / (lag * dl) ** a
            best = max(best, float(q))
            lag *= 2
        return best

    def boundary_collar_measure(self, center, r: float, d: float, spacing: float | None = None):
        """|Ω_r(center) ∩ {dist(x, (∂Ω)₁) ≤ d}| by midpoint counting, and the
        ratio measure / (r^{n-1} d)."""
        c = np.asarray(center, dtype=float)
        if d <= 0:
            raise ValueError("d must be positive")
        if float(np.linalg.norm(c)) + r > 1.0 + 1e-12:
            raise BallNotContained(f"B_{r}({c.tolist()}) is not inside B_1")
        eps = min(d / 8.0, r / 32.0) if spacing is None else spacing
        n = self.dim
        m = int(math.ceil(2 * r / eps))
        t = (np.arange(m) + 0.5) * (2 * r / m) - r
        h = 2 * r / m
        grids = np.meshgrid(*([t] * n), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1) + c
        inb = np.einsum("ij,ij->i", pts - c, pts - c) < r * r
        pts = pts[inb]
        pts = pts[self.contains(pts)]
        if len(pts) == 0:
            return 0.0, 0.0
        dist = self.point_graph_distance(pts, cap=d * (1 + 1e-9) + 1e-15)
        meas = float(np.count_nonzero(dist <= d)) * h**n
        return meas, meas / (r ** (n - 1) * d)


def build_domain(spec: GraphDomainSpec) -> Domain:
    """Validate a spec and build the exact interpolant domain."""
    s = np.asarray(spec.samples, dtype=float)
    if s.size == 0:
        raise EmptySamples("no samples")
    if spec.dim not in (2, 3) or s.ndim != spec.dim - 1:
        raise ValueError("sample array rank does not match dim")
    if spec.dim == 3 and s.shape[0] != s.shape[1]:
        raise ValueError("3-D samples must be a square grid")
    if not np.all(np.isfinite(s)):
        raise ValueError("samples must be finite")
    spec = GraphDomainSpec(**{**spec.__dict__, "samples": s.copy()})
    if s.shape[0] > 1:
        probe = Domain.__new__(Domain)
        object.__setattr__(probe, "spec", spec)
        lip = Domain.lipschitz_constant(probe)
        if lip > spec.seminorm_K:
            raise SeminormViolation(f"Lipschitz quotient {lip:g} exceeds K={spec.seminorm_K:g}")
    t = spec.origin + spec.delta * np.arange(s.shape[0])
    if not (math.isclose(t[0], -1.0, abs_tol=1e-12) and math.isclose(t[-1], 1.0, abs_tol=1e-12)):
        raise ValueError("samples must cover [-1, 1] with origin -1")
    ncell = s.shape[0] - 1
    if ncell & (ncell - 1):
        raise ValueError("number of cells per axis must be a power of two")
    zero = s[ncell // 2] if spec.dim == 2 else s[ncell // 2, ncell // 2]
    if abs(zero) > 1e-14:
        raise ValueError("phi(0) must vanish")
    return Domain(spec)
