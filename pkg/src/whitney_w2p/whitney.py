"""Truncated Whitney decomposition with exact dyadic bookkeeping.

A dyadic cube of generation g and integer index k is the closed box
Π [k_i 2^-g, (k_i + 1) 2^-g].  The construction marks a cube when
dist(Q, F) ≥ diam(Q) and keeps marked cubes with no marked ancestor
(Stein's construction).  Every selected cube then satisfies
d ≤ dist(Q, F) < 4d: the lower bound is the mark rule, and the parent P of a
selected cube is unmarked, so dist(Q, F) ≤ dist(P, F) + diam(P) < 2·diam(P).

Truncating at generation s_max returns exactly the selected cubes of
generation ≤ s_max of the infinite decomposition.  A point x with
dist(x, F) ≥ 2·diam of a generation-s_max cube lies in a marked cube of
generation ≤ s_max, so the uncovered set is a collar of width below
4·√n·2^-s_max.

Dilated boxes Q̃ = (6/5)Q use integer corner numerators over the common
denominator 10·2^g, so containment and overlap tests are float-free.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = [
    "DyadicCube",
    "DilatedBox",
    "WhitneyDecomposition",
    "DistanceReport",
    "CoverReport",
    "DiameterSums",
    "AnchorNotInFamily",
    "TargetNotInFamily",
    "UnitSquare",
    "decompose",
    "family_offset",
    "brute_force_selection",
]


class AnchorNotInFamily(ValueError):
    pass


class TargetNotInFamily(ValueError):
    pass


def family_offset(n: int) -> int:
    """e with s = g - e: the family index of a generation-g cube, i.e. the
    integer s with 2^{-s-1} < √n·2^{-g} ≤ 2^{-s}."""
    e = 0
    while 4**e < n:
        e += 1
    return e


@dataclass(frozen=True, order=True)
class DyadicCube:
    generation: int
    index: tuple

    @property
    def dim(self) -> int:
        return len(self.index)

    @property
    def side(self) -> float:
        return 2.0**-self.generation

    @property
    def diameter(self) -> float:
        return math.sqrt(self.dim) * self.side

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.index, dtype=float) * self.side

    @property
    def hi(self) -> np.ndarray:
        return self.lo + self.side

    def parent(self) -> "DyadicCube":
        if self.generation == 0:
            raise ValueError("generation-0 cubes have no parent")
        return DyadicCube(self.generation - 1, tuple(k >> 1 for k in self.index))

    def children(self) -> list["DyadicCube"]:
        n = self.dim
        return [DyadicCube(self.generation + 1,
                           tuple(2 * k + ((c >> a) & 1) for a, k in enumerate(self.index)))
                for c in range(2**n)]

    def contains_cube(self, other: "DyadicCube") -> bool:
        if other.generation < self.generation:
            return False
        sh = other.generation - self.generation
        return all((k >> sh) == m for k, m in zip(other.index, self.index))

    def dilated(self) -> "DilatedBox":
        return DilatedBox.of(self)


@dataclass(frozen=True)
class DilatedBox:
    """(6/5)-dilation with corners lo_num/den, hi_num/den, den = 10·2^g."""

    generation: int
    lo_num: tuple
    hi_num: tuple

    @classmethod
    def of(cls, cube: DyadicCube) -> "DilatedBox":
        return cls(cube.generation, tuple(10 * k - 1 for k in cube.index),
                   tuple(10 * k + 11 for k in cube.index))

    @property
    def denominator(self) -> int:
        return 10 * 2**self.generation

    def corners(self) -> tuple[list[Fraction], list[Fraction]]:
        d = self.denominator
        return [Fraction(a, d) for a in self.lo_num], [Fraction(b, d) for b in self.hi_num]

    def center(self) -> list[Fraction]:
        d = self.denominator
        return [Fraction(a + b, 2 * d) for a, b in zip(self.lo_num, self.hi_num)]

    def side(self) -> Fraction:
        return Fraction(self.hi_num[0] - self.lo_num[0], self.denominator)

    def contains(self, point) -> bool:
        lo, hi = self.corners()
        return all(a <= Fraction(x) <= b for a, x, b in zip(lo, point, hi))


@dataclass
class DistanceReport:
    min_ratio: float
    max_ratio: float
    violations: int
    count: int

    @property
    def passed(self) -> bool:
        return self.violations == 0


@dataclass
class CoverReport:
    probes: int
    covered: int
    uncovered: int
    collar_skipped: int
    outside: int

    @property
    def passed(self) -> bool:
        return self.uncovered == 0


@dataclass
class DiameterSums:
    q: float
    generations: list
    sums: list
    cumulative: list
    slope: float | None
    s_star: int | None
    decay_holds: bool


class UnitSquare:
    """Interior of the open unit cube (0,1)^n, a fixture with F = ℝⁿ∖(0,1)ⁿ."""

    def __init__(self, dim: int = 2):
        self.dim = dim

    def root_cubes(self):
        return np.zeros((1, self.dim), dtype=np.int64)

    def cube_may_intersect(self, g, idx):
        return np.all((idx >= 0) & (idx < 2**g), axis=1)

    def box_distance(self, lo, hi, cap=None):
        lo = np.atleast_2d(lo)
        hi = np.atleast_2d(hi)
        d = np.maximum(np.minimum(lo, 1.0 - hi).min(axis=1), 0.0)
        return d if cap is None else np.minimum(d, cap)


def _keys(g: int, idx: np.ndarray) -> np.ndarray:
    """Injective int64 key of generation-g indices in [-2^g, 2^g)."""
    base = np.int64(2 ** (g + 1))
    shifted = idx.astype(np.int64) + np.int64(2**g)
    key = np.zeros(len(idx), dtype=np.int64)
    for a in range(idx.shape[1] - 1, -1, -1):
        key = key * base + shifted[:, a]
    return key


def _in_range(g: int, idx: np.ndarray) -> np.ndarray:
    return np.all((idx >= -(2**g)) & (idx < 2**g), axis=1)


def _ceil_log4(x: np.ndarray) -> np.ndarray:
    """Smallest t with 4^t ≥ x for positive integer arrays (exact)."""
    x = np.asarray(x, dtype=np.int64)
    t = np.ceil(np.log2(np.maximum(x, 1).astype(float)) / 2.0).astype(np.int64)
    for _ in range(2):
        t = np.where(np.left_shift(np.int64(1), 2 * t) < x, t + 1, t)
        t = np.where((t > 0) & (np.left_shift(np.int64(1), 2 * np.maximum(t - 1, 0)) >= x), t - 1, t)
    return t


@dataclass(eq=False)
class WhitneyDecomposition:
    """Selected cubes of generation ≤ s_max, stored as arrays.

    ``gens[i]``, ``idx[i]``: generation and integer index of cube i;
    ``dist[i]``: min(dist(Q_i, F), 5·d_i).  Cubes are ordered by
    (generation, key)."""

    domain: object
    s_max: int
    gens: np.ndarray
    idx: np.ndarray
    dist: np.ndarray
    _by_gen: dict = field(default_factory=dict, repr=False)
    _family_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._index()

    def _index(self):
        self._by_gen = {}
        order = np.lexsort((_keys_all(self.gens, self.idx), self.gens))
        self.gens, self.idx, self.dist = self.gens[order], self.idx[order], self.dist[order]
        keys = _keys_all(self.gens, self.idx)
        for g in np.unique(self.gens):
            rows = np.nonzero(self.gens == g)[0]
            self._by_gen[int(g)] = (keys[rows], rows)
        self._family_cache = {}

    @property
    def dim(self) -> int:
        return self.idx.shape[1] if self.idx.ndim == 2 else 0

    def __len__(self) -> int:
        return len(self.gens)

    @property
    def uncovered_collar_bound(self) -> float:
        return 4.0 * math.sqrt(self.dim) * 2.0**-self.s_max

    def cube(self, i: int) -> DyadicCube:
        return DyadicCube(int(self.gens[i]), tuple(int(v) for v in self.idx[i]))

    def cubes(self) -> list[DyadicCube]:
        return [self.cube(i) for i in range(len(self))]

    def sides(self) -> np.ndarray:
        return 2.0 ** -self.gens.astype(float)

    def diameters(self) -> np.ndarray:
        return math.sqrt(self.dim) * self.sides()

    def boxes(self):
        s = self.sides()[:, None]
        lo = self.idx * s
        return lo, lo + s

    def families(self) -> np.ndarray:
        return self.gens - family_offset(self.dim)

    def find(self, g: int, idx: np.ndarray) -> np.ndarray:
        """Row of the selected cube (g, idx[r]) or -1, vectorised."""
        idx = np.atleast_2d(idx)
        out = np.full(len(idx), -1, dtype=np.int64)
        if g not in self._by_gen or len(idx) == 0:
            return out
        keys, rows = self._by_gen[g]
        ok = _in_range(g, idx)
        q = _keys(g, idx[ok])
        pos = np.searchsorted(keys, q)
        pos = np.minimum(pos, len(keys) - 1)
        hit = keys[pos] == q
        res = np.full(len(q), -1, dtype=np.int64)
        res[hit] = rows[pos[hit]]
        out[ok] = res
        return out

    def row_of(self, cube: DyadicCube) -> int:
        return int(self.find(cube.generation, np.array([cube.index]))[0])

    # ------------------------------------------------------------ location

    def locate(self, points, depth_cap: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Half-open point location.

        Returns (gen, idx) of the cube of the infinite decomposition whose
        half-open box [k 2^-g, (k+1) 2^-g) holds each point; generations
        beyond s_max are resolved by direct marking down to ``depth_cap``.
        Unresolved points get generation -1."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        N, n = p.shape
        gen = np.full(N, -1, dtype=np.int64)
        idx = np.zeros((N, n), dtype=np.int64)
        todo = np.arange(N)
        for g in range(0, self.s_max + 1):
            if len(todo) == 0:
                break
            k = np.floor(p[todo] * 2.0**g).astype(np.int64)
            r = self.find(g, k)
            hit = r >= 0
            gen[todo[hit]] = g
            idx[todo[hit]] = k[hit]
            todo = todo[~hit]
        cap = self.s_max if depth_cap is None else depth_cap
        dom = self.domain
        for g in range(self.s_max + 1, cap + 1):
            if len(todo) == 0:
                break
            k = np.floor(p[todo] * 2.0**g).astype(np.int64)
            side = 2.0**-g
            lo = k * side
            diam = math.sqrt(n) * side
            d = dom.box_distance(lo, lo + side, cap=np.full(len(k), diam))
            hit = d >= diam
            gen[todo[hit]] = g
            idx[todo[hit]] = k[hit]
            todo = todo[~hit]
        return gen, idx

    def locate_rows(self, points) -> np.ndarray:
        """Row index of the selected cube holding each point (half-open), or -1."""
        g, k = self.locate(points)
        out = np.full(len(g), -1, dtype=np.int64)
        for gg in np.unique(g[g >= 0]):
            m = g == gg
            out[m] = self.find(int(gg), k[m])
        return out

    # ------------------------------------------------------- exact geometry

    def dilated_in_ball(self, rows, r) -> np.ndarray:
        """Q̃ ⊂ open ball B_r (exact integer test)."""
        rows = np.asarray(rows, dtype=np.int64)
        rf = Fraction(r)
        out = np.zeros(len(rows), dtype=bool)
        for g in np.unique(self.gens[rows]):
            m = self.gens[rows] == g
            k = self.idx[rows[m]]
            far = np.maximum(np.abs(10 * k - 1), np.abs(10 * k + 11))
            den = 10 * 2 ** int(g)
            if g <= 24:
                # Σ far² < r² den²  ⇔  Σ far² · q² < p² · den², all in int64
                sq = (far * far).sum(axis=1)
                lim = rf * rf * den * den
                fl = lim.numerator // lim.denominator
                exact = lim.denominator == 1
                out[m] = sq < fl if exact else sq <= fl
            else:
                sq = [int(v) for v in (far.astype(object) ** 2).sum(axis=1)]
                lim = rf * rf * den * den
                out[m] = [Fraction(v) < lim for v in sq]
        return out

    def dilated_above_graph(self, rows) -> np.ndarray:
        """Q̃ strictly above the graph; float test with an exact fallback."""
        dom = self.domain
        rows = np.asarray(rows, dtype=np.int64)
        if not hasattr(dom, "samples"):
            return np.ones(len(rows), dtype=bool)
        out = np.zeros(len(rows), dtype=bool)
        # Q̃ reaches side/10 beyond Q, i.e. at most diam/10 away from Q
        margin = self.dist[rows] > 0.2 * self.diameters()[rows]
        out[margin] = True
        for t, r in enumerate(rows):
            if margin[t]:
                continue
            box = DilatedBox.of(self.cube(int(r)))
            lo, hi = box.corners()
            top = _max_phi_float(dom, [float(v) for v in lo[:-1]], [float(v) for v in hi[:-1]])
            gap = float(lo[-1]) - top
            if gap > 1e-9:
                out[t] = True
            elif gap < -1e-9:
                out[t] = False
            else:
                out[t] = lo[-1] > _max_phi_exact(dom, lo[:-1], hi[:-1])
        return out

    def dilated_in_omega(self, rows, r) -> np.ndarray:
        """Exact test Q̃ ⊂ Ω_r = Ω₁ ∩ B_r."""
        rows = np.asarray(rows, dtype=np.int64)
        out = self.dilated_in_ball(rows, r)
        if out.any():
            sub = rows[out]
            out[np.nonzero(out)[0]] = self.dilated_above_graph(sub)
        return out

    # ---------------------------------------------------------------- checks

    def check_distance_bounds(self) -> DistanceReport:
        if len(self) == 0:
            return DistanceReport(float("nan"), float("nan"), 0, 0)
        ratio = self.dist / self.diameters()
        bad = int(np.count_nonzero((ratio < 1.0) | (ratio > 4.0)))
        return DistanceReport(float(ratio.min()), float(ratio.max()), bad, len(self))

    def check_disjoint(self) -> int:
        """Number of selected cubes with a selected proper ancestor or a
        duplicate (dyadic cubes overlap in interior iff nested)."""
        bad = 0
        for g in self._by_gen:
            kk = self._by_gen[g][0]
            bad += len(kk) - len(np.unique(kk))
        for g in sorted(self._by_gen):
            rows = self._by_gen[g][1]
            k = self.idx[rows]
            for a in range(g - 1, -1, -1):
                k = k >> 1
                bad += int(np.count_nonzero(self.find(a, k) >= 0))
        return bad

    def check_overlap_bound(self, probes: np.ndarray | None = None) -> int:
        """Max number of closed dilated boxes containing a probe point.

        Probes are cube corners, cube centres and dilated-box corners,
        handled as integers in units 1/(10·2^s_max)."""
        n, S = self.dim, self.s_max
        if len(self) == 0:
            return 0
        if probes is None:
            probes = self._overlap_probes()
        probes = np.unique(probes, axis=0)
        best = 0
        chunk = 200_000
        for a in range(0, len(probes), chunk):
            P = probes[a:a + chunk]
            count = np.zeros(len(P), dtype=np.int64)
            for g in self._by_gen:
                M = 2 ** (S - g)
                klo = -((-(P - 11 * M)) // (10 * M))
                khi = (P + M) // (10 * M)
                span = khi - klo + 1
                if np.all(span <= 0):
                    continue
                for c in range(2**n):
                    off = np.array([(c >> i) & 1 for i in range(n)], dtype=np.int64)
                    k = klo + off
                    ok = np.all(k <= khi, axis=1)
                    if not ok.any():
                        continue
                    r = self.find(g, k[ok])
                    cnt = np.zeros(len(P), dtype=np.int64)
                    cnt[np.nonzero(ok)[0]] = r >= 0
                    count += cnt
            best = max(best, int(count.max()))
        return best

    def _overlap_probes(self) -> np.ndarray:
        n, S = self.dim, self.s_max
        out = []
        corners = np.array([[(c >> i) & 1 for i in range(n)] for c in range(2**n)], dtype=np.int64)
        for g in self._by_gen:
            rows = self._by_gen[g][1]
            k = self.idx[rows]
            M = 2 ** (S - g)
            base = 10 * k * M
            for c in corners:
                out.append(base + 10 * M * c)
                out.append(base - M + 12 * M * c)
            out.append(base + 5 * M)
        return np.concatenate(out)

    def check_cover_containment(self, r: float, spacing_gen: int | None = None) -> CoverReport:
        """Sample Ω_{r/3} at points (i+½)·2^{-s_max-1}; each sample off the
        truncation collar must lie in a cube with Q̃ ⊂ Ω_r."""
        dom = self.domain
        n = self.dim
        G = self.s_max + 1 if spacing_gen is None else spacing_gen
        h = 2.0**-G
        rad = r / 3.0
        m = int(math.ceil(rad / h))
        t = (np.arange(-m, m) + 0.5) * h
        grids = np.meshgrid(*([t] * n), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        pts = pts[np.einsum("ij,ij->i", pts, pts) < rad * rad]
        inside = dom.contains(pts)
        outside = int(np.count_nonzero(~inside))
        pts = pts[inside]
        collar = 8.0 * math.sqrt(n) * 2.0**-self.s_max
        dist = dom.box_distance(pts, pts, cap=np.full(len(pts), collar * (1 + 1e-12)))
        skip = dist <= collar
        pts = pts[~skip]
        rows = self.locate_rows(pts)
        found = rows >= 0
        good = np.zeros(len(pts), dtype=bool)
        if found.any():
            ur, inv = np.unique(rows[found], return_inverse=True)
            ok = self.dilated_in_omega(ur, r)
            good[np.nonzero(found)[0]] = ok[inv]
        return CoverReport(len(pts) + int(skip.sum()) + outside, int(good.sum()),
                           int((~good).sum()), int(skip.sum()), outside)

    # -------------------------------------------------------------- families

    def family_rows(self, s: int) -> np.ndarray:
        """Rows of F^s (sorted)."""
        if s in self._family_cache:
            return self._family_cache[s]
        g = s + family_offset(self.dim)
        if g not in self._by_gen or s < 0:
            rows = np.zeros(0, dtype=np.int64)
        else:
            rows = self._by_gen[g][1]
            rows = rows[self.dilated_in_omega(rows, 0.25)]
        self._family_cache[s] = rows
        return rows

    def family_Fs(self, s: int) -> list[DyadicCube]:
        return [self.cube(int(r)) for r in self.family_rows(s)]

    def all_family_rows(self) -> np.ndarray:
        e = family_offset(self.dim)
        out = [self.family_rows(g - e) for g in sorted(self._by_gen) if g - e >= 0]
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)

    def anchor_row(self, anchor) -> tuple[int, int]:
        """(row, s₀) for an anchor cube, or AnchorNotInFamily."""
        cube = anchor if isinstance(anchor, DyadicCube) else self.cube(int(anchor))
        r = self.row_of(cube)
        s0 = cube.generation - family_offset(self.dim)
        if r < 0 or r not in set(self.family_rows(s0).tolist()):
            raise AnchorNotInFamily(f"{cube} is not in any F^s")
        return r, s0

    def box_sqdist(self, rows_a, row_b) -> tuple[np.ndarray, int]:
        """Squared closed-box distances in units 4^{-G}, G = s_max."""
        G = self.s_max
        ga, ka = self.gens[rows_a], self.idx[rows_a]
        gb, kb = int(self.gens[row_b]), self.idx[row_b]
        sa = np.left_shift(np.int64(1), (G - ga).astype(np.int64))[:, None]
        sb = np.int64(2 ** (G - gb))
        alo, ahi = ka * sa, (ka + 1) * sa
        blo, bhi = kb * sb, (kb + 1) * sb
        gap = np.maximum(np.maximum(blo - ahi, alo - bhi), 0)
        return (gap * gap).sum(axis=1), G

    def bands(self, anchor_row: int, s0: int, rows: np.ndarray) -> np.ndarray:
        """Band index j of each row relative to the anchor."""
        d2, G = self.box_sqdist(rows, anchor_row)
        e0 = G - s0 + 5
        t = _ceil_log4(np.maximum(d2, 1))
        j = np.where(d2 <= (np.int64(1) << (2 * e0)), 0, t - e0)
        return j.astype(np.int64)

    def family_Fsj_rows(self, anchor, s: int, j: int) -> np.ndarray:
        """Rows of F^{s,j}_{Q_k} from the band inequalities directly."""
        ar, s0 = self.anchor_row(anchor)
        rows = self.family_rows(s)
        if len(rows) == 0 or j < 0:
            return rows[:0]
        d2, G = self.box_sqdist(rows, ar)
        two = lambda e: Fraction(4) ** e  # noqa: E731
        if j == 0:
            keep = [Fraction(int(v)) <= two(G - s0 + 5) for v in d2]
        else:
            lo, hi = two(G - s0 + j + 4), two(G - s0 + j + 5)
            keep = [lo < int(v) <= hi for v in d2]
        return rows[np.asarray(keep, dtype=bool)]

    def family_Fsj(self, anchor, s: int, j: int) -> list[DyadicCube]:
        return [self.cube(int(r)) for r in self.family_Fsj_rows(anchor, s, j)]

    def family_measure(self, anchor, s: int, j: int) -> tuple[float, float, float]:
        """(|F^{s,j}|, 2^{(-s₀+j)(n-1)-s}, ratio)."""
        _, s0 = self.anchor_row(anchor)
        rows = self.family_Fsj_rows(anchor, s, j)
        n = self.dim
        meas = float(np.sum(self.sides()[rows] ** n)) if len(rows) else 0.0
        bound = 2.0 ** ((-s0 + j) * (n - 1) - s)
        return meas, bound, meas / bound

    def check_family_measure(self, anchor, s: int, j: int) -> float:
        return self.family_measure(anchor, s, j)[2]

    def reverse_count(self, target, s0: int, j: int) -> int:
        """#{Q_k ∈ F^{s₀} : target ∈ F^{s,j}_{Q_k}}."""
        cube = target if isinstance(target, DyadicCube) else self.cube(int(target))
        tr = self.row_of(cube)
        s = cube.generation - family_offset(self.dim)
        if tr < 0 or tr not in set(self.family_rows(s).tolist()):
            raise TargetNotInFamily(f"{cube} is not in any F^s")
        anchors = self.family_rows(s0)
        if len(anchors) == 0:
            return 0
        d2, G = self.box_sqdist(anchors, tr)
        if j == 0:
            ok = d2 <= 4 ** (G - s0 + 5)
        else:
            lo, hi = 4.0 ** (G - s0 + j + 4), 4.0 ** (G - s0 + j + 5)
            ok = (d2 > lo) & (d2 <= hi)
        return int(np.count_nonzero(ok))

    def check_reverse_count(self, target, s0: int, j: int) -> int:
        return self.reverse_count(target, s0, j)

    def band_partition_violations(self, anchor) -> int:
        """Members of ∪_s F^s not in exactly one band (for a fixed anchor)."""
        ar, s0 = self.anchor_row(anchor)
        bad = 0
        e = family_offset(self.dim)
        for g in sorted(self._by_gen):
            s = g - e
            rows = self.family_rows(s)
            if len(rows) == 0:
                continue
            hits = np.zeros(len(rows), dtype=np.int64)
            jb = self.bands(ar, s0, rows)
            for j in range(0, int(jb.max()) + 2):
                members = self.family_Fsj_rows(ar, s, j)
                hits += np.isin(rows, members)
            bad += int(np.count_nonzero(hits != 1))
        return bad

    def emptiness_violations(self, anchor) -> int:
        """Members found where F^{s,j} must be empty (j > s₀ or s < s₀-j-6)."""
        ar, s0 = self.anchor_row(anchor)
        rows = self.all_family_rows()
        if len(rows) == 0:
            return 0
        j = self.bands(ar, s0, rows)
        s = self.families()[rows]
        return int(np.count_nonzero((j > s0) | (s < s0 - j - 6)))

    # ------------------------------------------------------------ diam sums

    def sum_diameters(self, q: float, eps: float = 0.5) -> DiameterSums:
        if q <= 0:
            raise ValueError("q must be positive")
        n = self.dim
        e = family_offset(n)
        gens = list(range(0, self.s_max - e + 1))
        sums = []
        for s in gens:
            rows = self.family_rows(s)
            sums.append(float(np.sum(self.diameters()[rows] ** q)) if len(rows) else 0.0)
        cum = list(np.cumsum(sums))
        slope, s_star, decay = None, None, False
        if q > n - 1:
            nz = [(s, v) for s, v in zip(gens, sums) if v > 0]
            # regress on the upper half of the populated generations
            if len(nz) >= 3:
                tail = nz[len(nz) // 2 - 1:] if len(nz) >= 4 else nz
                xs = np.array([t[0] for t in tail], dtype=float)
                ys = np.log2([t[1] for t in tail])
                slope = float(np.polyfit(xs, ys, 1)[0])
            rate = 2.0 ** (-(q - n + 1)) * (1.0 + eps)
            for k in range(len(gens) - 1):
                ok = all(sums[i + 1] <= sums[i] * rate for i in range(k, len(gens) - 1)
                         if sums[i] > 0 or sums[i + 1] > 0)
                if ok and sums[k] > 0:
                    s_star, decay = gens[k], True
                    break
        return DiameterSums(q, gens, sums, cum, slope, s_star, decay)

    # ----------------------------------------------------------------- dumps

    def dump_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for i in range(len(self)):
                fh.write(json.dumps({"s": int(self.gens[i]), "index": [int(v) for v in self.idx[i]],
                                     "d": float(self.diameters()[i]),
                                     "dist_to_F": float(self.dist[i])}) + "\n")

    def generation_counts(self) -> dict[int, int]:
        return {g: len(v[1]) for g, v in sorted(self._by_gen.items())}


def _keys_all(gens: np.ndarray, idx: np.ndarray) -> np.ndarray:
    out = np.zeros(len(gens), dtype=np.int64)
    for g in np.unique(gens):
        m = gens == g
        out[m] = _keys(int(g), idx[m])
    return out


def _max_phi_float(dom, lo, hi) -> float:
    """max φ_PL over the closed projection box [lo, hi] (floats)."""
    dl, s = dom.delta, dom.samples
    lo = [max(v, -1.0) for v in lo]
    hi = [min(v, 1.0) for v in hi]
    if dom.dim == 2:
        a, b = lo[0], hi[0]
        i0 = int(math.ceil((a + 1.0) / dl))
        i1 = int(math.floor((b + 1.0) / dl))
        vals = [float(dom.phi(a)), float(dom.phi(b))]
        if i1 >= i0:
            vals.append(float(s[i0:i1 + 1].max()))
        return max(vals)
    pts = _box_candidates_3d(dom, lo, hi, float)
    return float(max(float(dom.phi(np.array(p))) for p in pts))


def _box_candidates_3d(dom, lo, hi, num):
    """Vertices of the rectangle's overlay with the triangulation."""
    dl = num(dom.delta) if num is not float else dom.delta
    one = num(1)
    pts = [(lo[0], lo[1]), (hi[0], lo[1]), (lo[0], hi[1]), (hi[0], hi[1])]
    ilo = math.ceil((lo[0] + one) / dl)
    ihi = math.floor((hi[0] + one) / dl)
    jlo = math.ceil((lo[1] + one) / dl)
    jhi = math.floor((hi[1] + one) / dl)
    xs = [-one + i * dl for i in range(ilo, ihi + 1)]
    ys = [-one + j * dl for j in range(jlo, jhi + 1)]
    for x in xs:
        pts += [(x, lo[1]), (x, hi[1])] + [(x, y) for y in ys]
    for y in ys:
        pts += [(lo[0], y), (hi[0], y)]
    # diagonal crossings of the four edges: x - y ≡ const (mod δ)
    for y0 in (lo[1], hi[1]):
        jj = math.floor((y0 + one) / dl)
        off = (y0 + one) - jj * dl
        for i in range(math.floor((lo[0] + one) / dl) - 1, ihi + 2):
            x = -one + i * dl + off
            if lo[0] <= x <= hi[0]:
                pts.append((x, y0))
    for x0 in (lo[0], hi[0]):
        ii = math.floor((x0 + one) / dl)
        off = (x0 + one) - ii * dl
        for j in range(math.floor((lo[1] + one) / dl) - 1, jhi + 2):
            y = -one + j * dl + off
            if lo[1] <= y <= hi[1]:
                pts.append((x0, y))
    return pts


def _phi_exact(dom, xp):
    """φ_PL at rational cross-section coordinates, in exact arithmetic."""
    dl = Fraction(dom.delta)
    s = dom.samples
    m = dom.ncells
    if dom.dim == 2:
        t = (Fraction(xp[0]) + 1) / dl
        i = min(max(math.floor(t), 0), m - 1)
        u = t - i
        return Fraction(float(s[i])) * (1 - u) + Fraction(float(s[i + 1])) * u
    tx = (Fraction(xp[0]) + 1) / dl
    ty = (Fraction(xp[1]) + 1) / dl
    i = min(max(math.floor(tx), 0), m - 1)
    j = min(max(math.floor(ty), 0), m - 1)
    u, v = tx - i, ty - j
    z = lambda a, b: Fraction(float(s[a, b]))  # noqa: E731
    if u >= v:
        return z(i, j) + (z(i + 1, j) - z(i, j)) * u + (z(i + 1, j + 1) - z(i + 1, j)) * v
    return z(i, j) + (z(i + 1, j + 1) - z(i, j + 1)) * u + (z(i, j + 1) - z(i, j)) * v


def _max_phi_exact(dom, lo, hi) -> Fraction:
    lo = [max(Fraction(v), Fraction(-1)) for v in lo]
    hi = [min(Fraction(v), Fraction(1)) for v in hi]
    if dom.dim == 2:
        dl = Fraction(dom.delta)
        i0 = math.ceil((lo[0] + 1) / dl)
        i1 = math.floor((hi[0] + 1) / dl)
        vals = [_phi_exact(dom, [lo[0]]), _phi_exact(dom, [hi[0]])]
        vals += [Fraction(float(dom.samples[i])) for i in range(i0, i1 + 1)]
        return max(vals)
    return max(_phi_exact(dom, p) for p in _box_candidates_3d(dom, lo, hi, Fraction))


def decompose(domain, s_max: int) -> WhitneyDecomposition:
    """Selected cubes of generation ≤ s_max (marked, no marked ancestor)."""
    if s_max < 4:
        raise ValueError("s_max must be at least 4")
    n = domain.dim
    cand = domain.root_cubes()
    roots_gen = 0
    gens, idxs, dists = [], [], []
    for g in range(roots_gen, s_max + 1):
        if len(cand) == 0:
            break
        cand = cand[domain.cube_may_intersect(g, cand)]
        side = 2.0**-g
        diam = math.sqrt(n) * side
        lo = cand * side
        hi = lo + side
        d = domain.box_distance(lo, hi, cap=np.full(len(cand), diam))
        marked = d >= diam
        sel = cand[marked]
        if len(sel):
            lo_s = sel * side
            full = domain.box_distance(lo_s, lo_s + side, cap=np.full(len(sel), 5.0 * diam))
            gens.append(np.full(len(sel), g, dtype=np.int64))
            idxs.append(sel)
            dists.append(full)
        rest = cand[~marked]
        if g < s_max and len(rest):
            offs = np.array([[(c >> a) & 1 for a in range(n)] for c in range(2**n)], dtype=np.int64)
            cand = (2 * rest[:, None, :] + offs[None]).reshape(-1, n)
        else:
            cand = cand[:0]
    if gens:
        G, I, D = np.concatenate(gens), np.concatenate(idxs), np.concatenate(dists)
    else:
        G, I, D = np.zeros(0, np.int64), np.zeros((0, n), np.int64), np.zeros(0)
    return WhitneyDecomposition(domain, s_max, G, I, D)


def brute_force_selection(domain, s_max: int, extent: tuple[int, int] = (0, 1)) -> set:
    """Exhaustive oracle: enumerate every dyadic cube in the lattice box
    [extent]^n for each generation, apply the mark rule, keep the maximal
    ones.  Practical only for small s_max."""
    n = domain.dim
    marked: dict[int, set] = {}
    a, b = extent
    for g in range(0, s_max + 1):
        rng = np.arange(a * 2**g, b * 2**g)
        grid = np.stack([m.ravel() for m in np.meshgrid(*([rng] * n), indexing="ij")], axis=1)
        side = 2.0**-g
        lo = grid * side
        d = domain.box_distance(lo, lo + side)
        mk = grid[d >= math.sqrt(n) * side]
        marked[g] = {tuple(int(v) for v in k) for k in mk}
    out = set()
    for g, ks in marked.items():
        for k in ks:
            if not any(tuple(v >> (g - a2) for v in k) in marked[a2] for a2 in range(g)):
                out.add((g, k))
    return out
