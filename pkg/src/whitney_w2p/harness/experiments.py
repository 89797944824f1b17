"""Experiment definitions.

Each experiment expands a config into independent cells (one domain, one
(α, h) pair, ...) and a finaliser that turns the cell outputs into ladder
verdicts, invariant checks and plot series.  Cells only return values; the
runner owns all file output.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .. import analysis as an
from ..fdsolver import DegenerateArm, assemble_poisson, build_grid, second_differences, solve
from ..geometry import build_domain, cusp_spec
from ..whitney import decompose, family_offset
from .config import ExperimentConfig, resolve_domain

PASS, FAIL, INFO = "PASS", "FAIL", "INFO"


@dataclass
class Check:
    """One invariant or ladder verdict."""

    task: str
    name: str
    value: float
    limit: float | None
    verdict: str
    note: str = ""

    FIELDS = ("task", "name", "value", "limit", "verdict", "note")

    def row(self) -> dict:
        v = lambda x: "" if x is None else (repr(float(x)) if isinstance(x, (float, np.floating)) else x)  # noqa: E731
        return {k: v(getattr(self, k)) for k in self.FIELDS}


def check_le(task, name, value, limit, note="") -> Check:
    return Check(task, name, float(value), limit, PASS if value <= limit else FAIL, note)


def check_ge(task, name, value, limit, note="") -> Check:
    return Check(task, name, float(value), limit, PASS if value >= limit else FAIL, note)


def check_band(task, name, value, center, width, note="") -> Check:
    ok = abs(value - center) <= width
    return Check(task, name, float(value), width, PASS if ok else FAIL,
                 note or f"target {center:g} ± {width:g}")


@dataclass
class CellOutput:
    reports: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    data: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)   # name -> (fields, rows)


@dataclass
class Experiment:
    cells: list                 # [(key, callable)] executed independently
    finalize: object            # (cfg, {key: CellOutput}) -> (checks, series, summary)


def _domain(ref: str):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateArm)
        return build_domain(resolve_domain(ref))


def _cusp(alpha: float):
    return build_domain(cusp_spec(alpha))


def _solve(system, tol):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateArm)
        return solve(system, tol=tol, method="direct")


def _grid(dom, h):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateArm)
        return build_grid(dom, h)


def _no_final(cfg, outs):
    return [], {}, {}


def _kappa(dom) -> float:
    return float(dom.spec.seminorm_K) if hasattr(dom, "spec") else 0.0


def _tag(*parts) -> str:
    return "/".join(str(p) for p in parts)


def _h_label(h: float) -> str:
    k = round(1.0 / h)
    return f"1/{k}" if abs(1.0 / k - h) < 1e-15 else f"{h:g}"


# ------------------------------------------------------------ Whitney

def sample_anchors(dec, cap: int, seed: int) -> list[int]:
    """All anchors of each F^{s₀} when there are at most ``cap``, else a
    seeded random subset of ``cap``."""
    e = family_offset(dec.dim)
    rng = np.random.default_rng(seed)
    out = []
    for s0 in sorted({int(g) - e for g in np.unique(dec.gens)}):
        rows = dec.family_rows(s0)
        if len(rows) > cap:
            rows = np.sort(rng.choice(rows, size=cap, replace=False))
        out.extend(int(r) for r in rows)
    return out


def _whitney_cell(cfg: ExperimentConfig, ref: str):
    def run():
        t0 = time.perf_counter()
        dom = _domain(ref)
        n = dom.dim
        s_max = int(cfg.options.get("s_max_3d", 7)) if n == 3 else cfg.s_max
        dec = decompose(dom, s_max)
        out = CellOutput()
        task = _tag("whitney", ref)
        out.checks.append(check_le(task, "disjoint_violations", dec.check_disjoint(), 0))
        dr = dec.check_distance_bounds()
        out.checks.append(check_le(task, "distance_violations", dr.violations, 0,
                                   f"dist/d in [{dr.min_ratio:.4f}, {dr.max_ratio:.4f}]"))
        out.checks.append(check_le(task, "dilated_overlap_max", dec.check_overlap_bound(), 12**n))
        cr = dec.check_cover_containment(1.0)
        out.checks.append(check_le(task, "cover_uncovered", cr.uncovered, 0,
                                   f"{cr.covered} covered, {cr.collar_skipped} in collar"))
        bad_p = bad_e = probed = 0
        for ar in sample_anchors(dec, int(cfg.options.get("anchors", 64)), cfg.seeds[0]):
            bad_p += dec.band_partition_violations(ar)
            bad_e += dec.emptiness_violations(ar)
            probed += 1
        out.checks.append(check_le(task, "band_partition_violations", bad_p, 0, f"{probed} anchors"))
        out.checks.append(check_le(task, "emptiness_violations", bad_e, 0, f"{probed} anchors"))
        out.checks.append(check_le(task, "runtime_s", time.perf_counter() - t0, 120.0))
        out.data = {"cubes": len(dec), "s_max": s_max, "generations": dec.generation_counts()}
        return out
    return run


def whitney_suite(cfg: ExperimentConfig) -> Experiment:
    return Experiment([(ref, _whitney_cell(cfg, ref)) for ref in cfg.domains], _no_final)


# ------------------------------------------------- collar and diam sums

def _collar_cell(cfg, ref):
    def run():
        dom = _domain(ref)
        n = dom.dim
        ceiling = 2.0 ** (n - 1) * (_kappa(dom) + 1.0)
        ts = np.linspace(-0.25, 0.25, int(cfg.options.get("centers", 3)))
        out = CellOutput()
        ratios = []
        for t in ts:
            c = [t, float(dom.phi(t))] if n == 2 else [t, 0.0, float(dom.phi(np.array([t, 0.0])))]
            for r in cfg.options.get("rs", [0.5, 0.25, 0.125]):
                for d in cfg.options.get("ds", [2.0**-k for k in range(3, 9)]):
                    if d > r:
                        continue
                    meas, ratio = dom.boundary_collar_measure(c, r, d)
                    ratios.append(ratio)
                    out.reports.append(an.EstimateReport("Lem2.4", meas, r ** (n - 1) * d, h=d,
                                                         ceiling=ceiling))
        out.checks.append(check_le(_tag("collar", ref), "max_ratio", max(ratios), ceiling,
                                   "ceiling 2^(n-1)(K+1)"))
        out.checks.append(check_ge(_tag("collar", ref), "min_ratio", min(ratios), 0.0))
        return out
    return run


def collar(cfg):
    return Experiment([(ref, _collar_cell(cfg, ref)) for ref in cfg.domains], _no_final)


def _diam_cell(cfg, ref):
    def run():
        dom = _domain(ref)
        n = dom.dim
        dec = decompose(dom, cfg.s_max if n == 2 else int(cfg.options.get("s_max_3d", 7)))
        q = n - 1 + 0.5
        ds = dec.sum_diameters(q, float(cfg.options.get("eps", 0.5)))
        task = _tag("diam-sums", ref)
        out = CellOutput(data={"generations": ds.generations, "sums": ds.sums})
        out.checks.append(Check(task, "geometric_decay", float(ds.s_star if ds.s_star is not None else -1),
                                None, PASS if ds.decay_holds else FAIL, "value = s*"))
        slope = ds.slope if ds.slope is not None else math.nan
        out.checks.append(check_band(task, "log2_slope", slope, -(q - n + 1), 0.3))
        return out
    return run


def diam_sums(cfg):
    def final(cfg, outs):
        series = {k: (o.data["generations"], o.data["sums"]) for k, o in outs.items() if o.data}
        return [], {"diam_sums": dict(series=series, xlabel="s", ylabel="sum d^q",
                                      logx=False, logy=True)}, {}
    return Experiment([(ref, _diam_cell(cfg, ref)) for ref in cfg.domains], final)


# ------------------------------------------------------------ families

FAMILY_FIELDS = ("s0", "anchor_id", "s", "j", "member_count", "measure", "bound", "ratio")


def _family_cell(cfg, ref, seed):
    def run():
        dom = _domain(ref)
        n = dom.dim
        dec = decompose(dom, cfg.s_max if n == 2 else int(cfg.options.get("s_max_3d", 7)))
        K = _kappa(dom)
        e = family_offset(n)
        c_meas = 2.0 ** (8 * (n - 1) + 3) * (K + 1)
        c_rev = 2.0 ** (8 * (n - 1) + 3 + e * n) * (K + 1)
        rng = np.random.default_rng(seed)
        fam = dec.all_family_rows()
        s_top = dec.s_max - e
        out = CellOutput()
        task = _tag("family", ref)
        nprobe = int(cfg.options.get("probes", 200))
        meas, rev, empty, table = [], [], 0, []
        anchors_seen = set()
        for _ in range(nprobe):
            ar = int(rng.choice(fam))
            s0 = int(dec.gens[ar]) - e
            j = int(rng.integers(0, s0 + 1))
            s = int(rng.integers(max(0, s0 - j - 6), s_top + 1))
            mv, bound, ratio = dec.family_measure(ar, s, j)
            meas.append(ratio)
            table.append({"s0": s0, "anchor_id": ar, "s": s, "j": j,
                          "member_count": len(dec.family_Fsj_rows(ar, s, j)),
                          "measure": repr(mv), "bound": repr(bound), "ratio": repr(ratio)})
            out.reports.append(an.EstimateReport("Lem2.6", ratio, 1.0, s0=s0, s=s, j=j, ceiling=c_meas))
            if ar not in anchors_seen:
                empty += dec.emptiness_violations(ar)
                anchors_seen.add(ar)
            tr = int(rng.choice(fam))
            t0 = int(rng.integers(0, s_top + 1))
            tj = int(rng.integers(0, t0 + 1))
            cnt = dec.reverse_count(tr, t0, tj)
            rr = cnt / 2.0 ** (tj * (n - 1))
            rev.append(rr)
            out.reports.append(an.EstimateReport("Lem2.7", rr, 1.0, s0=t0,
                                                 s=int(dec.gens[tr]) - e, j=tj, ceiling=c_rev))
        out.checks.append(check_le(task, "family_measure_max", max(meas), c_meas,
                                   f"{nprobe} probes, ceiling 2^(8(n-1)+3)(K+1)"))
        out.checks.append(check_le(task, "reverse_count_max", max(rev), c_rev,
                                   f"{nprobe} probes, ceiling 2^(8(n-1)+3+en)(K+1)"))
        out.checks.append(check_le(task, "emptiness_violations", empty, 0,
                                   f"{len(anchors_seen)} anchors"))
        out.checks.append(check_ge(task, "probes", nprobe, 200))
        out.tables[f"family-{ref}"] = (FAMILY_FIELDS, table)
        return out
    return run


def family_suite(cfg):
    return Experiment([(ref, _family_cell(cfg, ref, cfg.seeds[0])) for ref in cfg.domains], _no_final)


# ------------------------------------------------------------------ MMS

def _fit_order(hs, errs) -> float:
    hs, errs = np.asarray(hs, dtype=float), np.asarray(errs, dtype=float)
    if np.any(errs <= 0):
        return math.inf
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


def _mms_cell(cfg, ref):
    def run():
        dom = _domain(ref)
        task = _tag("mms", ref)
        quad = lambda x, y: x * x - y * y  # noqa: E731
        aff = lambda x, y: 1.0 + 2.0 * x - 3.0 * y  # noqa: E731
        smooth = lambda x, y: np.exp(x) * np.sin(y + 0.5)  # noqa: E731
        out = CellOutput()
        q_sol, q_hess, a_sol, s_sol, s_hess = [], [], [], [], []
        t0 = time.perf_counter()
        for h in cfg.hs:
            G = _grid(dom, h)
            X, Y = G.coords()
            m = G.unknown
            inner = an.Ball(1.0 / 12).mask(G)
            for fn, sink in ((quad, "q"), (aff, "a"), (smooth, "s")):
                u = _solve(assemble_poisson(G, 0.0, fn), cfg.tol)
                U = u.as_array()
                err = float(np.abs(U[m] - fn(X[m], Y[m])).max())
                if sink == "a":
                    a_sol.append(err)
                    continue
                H = second_differences(u, stencil="cut")
                mk = H.mask & inner
                if sink == "q":
                    he = np.abs(H.dxx - 2.0)[mk].max(initial=0.0), np.abs(H.dyy + 2.0)[mk].max(initial=0.0), \
                        np.abs(H.dxy)[mk].max(initial=0.0)
                    q_sol.append(err)
                    q_hess.append(float(max(he)))
                else:
                    ex = np.exp(X) * np.sin(Y + 0.5)
                    ey = np.exp(X) * np.cos(Y + 0.5)
                    pe = np.sqrt((H.dxx - ex) ** 2 + 2 * (H.dxy - ey) ** 2 + (H.dyy + ex) ** 2)
                    s_sol.append(err)
                    s_hess.append(float(np.sqrt(np.sum(pe[mk] ** 2) * h * h)))
        out.checks.append(check_le(task, "quadratic_solution_max_error", max(q_sol), 1e-10,
                                   "Shortley-Weller is exact on quadratics"))
        out.checks.append(check_le(task, "quadratic_hessian_max_error", max(q_hess), 1e-10))
        out.checks.append(check_le(task, "affine_max_error", max(a_sol), 1e-10))
        out.checks.append(check_ge(task, "smooth_solution_order", _fit_order(cfg.hs, s_sol), 1.8,
                                   "u = exp(x) sin(y+1/2), max norm"))
        out.checks.append(check_ge(task, "smooth_hessian_order", _fit_order(cfg.hs, s_hess), 0.8,
                                   "L2 norm over Omega_1/12"))
        out.checks.append(check_le(task, "runtime_s", time.perf_counter() - t0, 60.0))
        out.data = {"hs": list(cfg.hs), "smooth_solution": s_sol, "smooth_hessian": s_hess,
                    "quadratic_solution": q_sol, "quadratic_hessian": q_hess}
        return out
    return run


def mms(cfg):
    def final(cfg, outs):
        series = {}
        for k, o in outs.items():
            series[f"{k} u"] = (o.data["hs"], o.data["smooth_solution"])
            series[f"{k} D2u"] = (o.data["hs"], o.data["smooth_hessian"])
        return [], {"mms": dict(series=series, xlabel="h", ylabel="error")}, {}
    return Experiment([(ref, _mms_cell(cfg, ref)) for ref in cfg.domains], final)


# -------------------------------------------------------------- Green's

def _greens_cell(cfg, ref, h):
    def run():
        dom = _domain(ref)
        dec = decompose(dom, cfg.s_max)
        rng = np.random.default_rng(cfg.seeds[0])
        pairs = an.random_cube_pairs(dec, rng, int(cfg.options.get("pairs", 100)),
                                     float(cfg.options.get("min_side", 1 / 16)))
        G = _grid(dom, h)
        S = assemble_poisson(G, 0.0)
        out = CellOutput()
        best = {float(p): 0.0 for p in cfg.ps}
        for D, E in pairs:
            sol = an.greens_solution(S, D)
            for p in cfg.ps:
                r = an.greens_bound_check(S, D, E, float(p), solution=sol)
                out.reports.append(r)
                best[float(p)] = max(best[float(p)], r.ratio)
        z = an.greens_bound_check(S, pairs[0][0], pairs[0][1], 2.0, f=0.0)
        out.checks.append(Check(_tag("greens", ref, _h_label(h)), "zero_source_indeterminate",
                                z.left, None, PASS if z.verdict == an.INDETERMINATE else FAIL))
        out.data = {"max": best, "h": h}
        return out
    return run


def _kernel_cell(cfg):
    def run():
        eta = float(cfg.options.get("eta", 1 / 32))
        ball = an.ball_kernel_ratio()
        out = CellOutput()
        R = 0.5
        x = np.zeros(3)
        rep = an.kernel_integral_bound(lambda P: np.einsum("ij,ij->i", P, P) < R * R, x, eta,
                                       bbox=(-R * np.ones(3), R * np.ones(3)))
        task = "greens/kernel"
        out.checks.append(check_le(task, "ball_relative_error", abs(rep.ratio / ball - 1), 0.01,
                                   f"oracle 2pi/(4pi/3)^(2/3) = {ball:.6f}"))
        far = an.kernel_integral_bound(lambda P: np.einsum("ij,ij->i", P - 1.0, P - 1.0) < R * R,
                                       x, eta, bbox=(np.full(3, 1 - R), np.full(3, 1 + R)))
        out.checks.append(check_le(task, "translated_ball_ratio", far.ratio, rep.ratio))
        rng = np.random.default_rng(cfg.seeds[0])
        worst = 0.0
        for _ in range(int(cfg.options.get("boxes", 40))):
            k = int(rng.integers(1, 4))
            lo = rng.uniform(-0.6, 0.3, size=(k, 3)).round(5)
            hi = lo + rng.uniform(0.1, 0.5, size=(k, 3)).round(5)
            r = an.kernel_integral_bound(an.BoxUnion(lo, hi), x, eta)
            worst = max(worst, r.ratio)
            out.reports.append(an.EstimateReport("Eq3.2", r.integral, r.measure ** (2 / 3),
                                                 ceiling=ball * 1.01))
        out.checks.append(check_le(task, "box_union_max_ratio", worst, ball * 1.01))
        return out
    return run


def greens(cfg):
    cells = [(_tag(ref, _h_label(h)), _greens_cell(cfg, ref, h)) for ref in cfg.domains for h in cfg.hs]
    cells.append(("kernel", _kernel_cell(cfg)))

    def final(cfg, outs):
        checks = []
        hs = sorted(cfg.hs, reverse=True)
        for ref in cfg.domains:
            for a, b in zip(hs[:-1], hs[1:]):
                ka, kb = _tag(ref, _h_label(a)), _tag(ref, _h_label(b))
                if ka not in outs or kb not in outs:
                    continue
                for p in cfg.ps:
                    ma, mb = outs[ka].data["max"][float(p)], outs[kb].data["max"][float(p)]
                    checks.append(check_le(_tag("greens", ref, f"p={p:g}"),
                                           f"max_ratio_change_{_h_label(a)}_{_h_label(b)}",
                                           abs(mb / ma - 1.0), 0.2, f"{ma:.5f} -> {mb:.5f}"))
        return checks, {}, {}
    return Experiment(cells, final)


# -------------------------------------------------------- C^{1,α} decay

def _c1alpha_cell(cfg, alpha, h):
    def run():
        dom = _cusp(alpha)
        G = _grid(dom, h)
        u = _solve(assemble_poisson(G, 0.0, lambda x, y: y - dom.phi(x)), cfg.tol)
        radii = np.geomspace(16 * h, 0.25, int(cfg.options.get("radii", 8)))
        fit = an.affine_fit_decay(u, [0.0, 0.0], radii)
        out = CellOutput(data={"radii": list(radii), "sups": list(fit.sups)})
        out.checks.append(check_band(_tag("c1alpha", f"alpha={alpha:g}", _h_label(h)), "gamma",
                                     fit.gamma, 1.0 + alpha, 0.2))
        out.reports.append(an.EstimateReport("Cor3.3", float(fit.gamma), 1.0 + alpha, alpha=alpha,
                                             h=h, extras={"grad": fit.grad_norm}))
        return out
    return run


def c1alpha(cfg):
    cells = [(_tag(f"alpha={a:g}", _h_label(h)), _c1alpha_cell(cfg, a, h))
             for a in cfg.alphas for h in cfg.hs]

    def final(cfg, outs):
        series = {k: (o.data["radii"], o.data["sups"]) for k, o in outs.items()}
        return [], {"c1alpha": dict(series=series, xlabel="rho", ylabel="sup |u - l|")}, {}
    return Experiment(cells, final)


# ------------------------------------------------------ per-cube slope

def _percube_cell(cfg, alpha, h, p):
    def run():
        dom = _cusp(alpha)
        dec = decompose(dom, cfg.s_max)
        G = _grid(dom, h)
        u = _solve(assemble_poisson(G, 0.0, lambda x, y: y - dom.phi(x)), cfg.tol)
        H = second_differences(u, stencil="cut")
        unorm = an.lp_norm(u, None, p).value
        cone = cfg.options.get("cone", 4.0)
        rep = an.per_cube_hessian_scaling(dec, H, p, alpha, cone=cone, normalize=unorm)
        full = an.per_cube_hessian_scaling(dec, H, p, alpha, normalize=unorm)
        task = _tag("percube", f"alpha={alpha:g}", f"p={p:g}", _h_label(h))
        out = CellOutput(data={"d": [math.sqrt(2) * 2.0**-g for g in rep.generations],
                               "medians": rep.medians})
        out.checks.append(check_band(task, f"slope_cone{cone:g}", rep.slope, rep.theory, 0.25,
                                     f"theory n/p+a-1 = {rep.theory:g}; gens {rep.generations}"))
        out.checks.append(Check(task, "slope_all_family_cubes", full.slope, None, INFO,
                                f"gens {full.generations}, counts {full.counts}"))
        out.reports.append(an.EstimateReport("Eq3.12", rep.slope, rep.theory, alpha=alpha, p=p, h=h))
        return out
    return run


def percube(cfg):
    cells = [(_tag(f"alpha={a:g}", f"p={p:g}", _h_label(h)), _percube_cell(cfg, a, h, float(p)))
             for a in cfg.alphas for p in cfg.ps for h in cfg.hs]

    def final(cfg, outs):
        series = {k: (o.data["d"], o.data["medians"]) for k, o in outs.items()}
        return [], {"percube": dict(series=series, xlabel="d_k", ylabel="median |D2u|_Lp(Q)")}, {}
    return Experiment(cells, final)


# --------------------------------------------- interior estimate ladders

def _constant_cell(cfg, alpha, h, p, variant):
    def run():
        dom = _cusp(alpha)
        G = _grid(dom, h)
        if variant == "harmonic":
            u = _solve(assemble_poisson(G, 0.0, lambda x, y: y - dom.phi(x)), cfg.tol)
            f = 0.0
        else:
            f = float(cfg.options.get("f", 1.0))
            u = _solve(assemble_poisson(G, f), cfg.tol)
        rep = an.estimate_constant(u, f, p, variant, alpha=alpha)
        return CellOutput(reports=[rep], data={"ratio": rep.ratio})
    return run


def ladder_verdict(alpha: float, p: float, ratios: list) -> tuple[str, float, str]:
    """Above threshold (α > 1−1/p): spread (max−min)/min < 25%.  At or below:
    strictly increasing at every rung."""
    if alpha > 1.0 - 1.0 / p:
        spread = (max(ratios) - min(ratios)) / min(ratios)
        return (PASS if spread < 0.25 else FAIL), spread, "stable: (max-min)/min < 0.25"
    inc = all(b > a for a, b in zip(ratios[:-1], ratios[1:]))
    growth = ratios[-1] / ratios[0] - 1.0
    return (PASS if inc else FAIL), growth, "below threshold: strictly increasing"


def _ladder(variant: str, eid: str):
    def build(cfg):
        cells = [(_tag(f"alpha={a:g}", f"p={p:g}", _h_label(h)), _constant_cell(cfg, a, h, float(p), variant))
                 for a in cfg.alphas for p in cfg.ps for h in cfg.hs]

        def final(cfg, outs):
            checks, series = [], {}
            hs = sorted(cfg.hs, reverse=True)
            for a in cfg.alphas:
                for p in cfg.ps:
                    keys = [_tag(f"alpha={a:g}", f"p={p:g}", _h_label(h)) for h in hs]
                    if not all(k in outs for k in keys):
                        continue
                    rs = [outs[k].data["ratio"] for k in keys]
                    verdict, val, note = ladder_verdict(a, float(p), rs)
                    checks.append(Check(_tag(cfg.experiment, f"alpha={a:g}", f"p={p:g}"), "ladder",
                                        val, None, verdict,
                                        note + "; ratios " + ", ".join(f"{r:.5f}" for r in rs)))
                    series[f"alpha={a:g} p={p:g}"] = (hs, rs)
            return checks, {cfg.experiment: dict(series=series, xlabel="h",
                                                 ylabel=f"{eid} observed constant")}, {}
        return Experiment(cells, final)
    return build


thm34 = _ladder("harmonic", "Thm3.4")
thm41 = _ladder("poisson", "Thm4.1")
blowup_sweep = _ladder("poisson", "Thm4.1")


# ---------------------------------------------------- harmonic split

def _lemma42_cell(cfg, alpha, h, p):
    def run():
        dom = _cusp(alpha)
        dec = decompose(dom, cfg.s_max)
        G = _grid(dom, h)
        S = assemble_poisson(G, 0.0)
        f = float(cfg.options.get("f", 1.0))
        task = _tag("lemma42", f"alpha={alpha:g}", f"p={p:g}", _h_label(h))
        out = CellOutput()
        sbump = lambda x, y: 1.0 + x - 0.5 * y  # noqa: E731
        gdat = lambda x, y: y - dom.phi(x) + x * x  # noqa: E731
        vw = an.vw_split(assemble_poisson(G, 0.0, gdat), sbump, dec, tol=cfg.tol)
        out.checks.append(check_le(task, "vw_split_error", vw.split_error, 10 * cfg.tol))
        out.checks.append(check_le(task, "v_harmonic_residual", vw.harmonic_residual, 10 * cfg.tol))
        reports, verdict, info = an.lemma42_sweep(S, f, dec, p, alpha,
                                                  int(cfg.options.get("max_cells", 40)), cfg.tol)
        out.reports.extend(reports)
        out.checks.append(check_le(task, "cells", len(reports), int(cfg.options.get("max_cells", 40))))
        out.checks.append(Check(task, "ratio_trend", info.get("max_ratio", math.nan), None, verdict,
                                f"slope_j={info.get('slope_j', 0):.3f} slope_m={info.get('slope_m', 0):.3f}"))
        out.checks.append(check_le(task, "band_overlap_nodes", info["band_overlap"], 0,
                                   f"{info['band_probes']} probes"))
        out.checks.append(check_le(task, "band_residual", info["band_residual"], 10 * cfg.tol))
        return out
    return run


def lemma42(cfg):
    cells = [(_tag(f"alpha={a:g}", f"p={p:g}", _h_label(h)), _lemma42_cell(cfg, a, h, float(p)))
             for a in cfg.alphas for p in cfg.ps for h in cfg.hs]
    return Experiment(cells, _no_final)


# ------------------------------------------------------ Thm 5.1 arithmetic

def _thm51_cell(cfg, ref, h, p):
    def run():
        dom = _domain(ref)
        dec = decompose(dom, cfg.s_max)
        G = _grid(dom, h)
        g = lambda x, y: x * y + 3 * x * x * y - y**3  # noqa: E731
        u = _solve(assemble_poisson(G, 0.0, g), cfg.tol)
        H = second_differences(u, stencil="cut")
        reg = an.Ball(1.0 / 12)
        norms, cnt = an.per_cube_norms(dec, H, p, region=reg)
        sel = cnt > 0
        data = np.stack([dec.diameters()[sel], norms[sel], np.zeros(int(sel.sum()))], 1)
        rep = an.aggregate_fully_nonlinear(data, p, p, 1.0)
        direct = an.lp_norm(H, reg, p).value
        agg = rep.extras["aggregate"] ** (1.0 / p)
        task = _tag("thm51", ref, f"p={p:g}", _h_label(h))
        out = CellOutput(reports=[rep])
        out.checks.append(check_le(task, "cube_sum_vs_direct", abs(agg / direct - 1.0), 0.05,
                                   f"{agg:.6g} vs {direct:.6g} over {int(sel.sum())} cubes"))
        out.checks.append(Check(task, "holder_chain", rep.extras["aggregate"], rep.extras["chain_bound"],
                                PASS if rep.extras["chain_ok"] else FAIL))
        return out
    return run


def _gate_cell():
    def run():
        out = CellOutput()
        cases = [(0.4, 4.0, 2.0, True), (0.5, 4.0, 2.0, True), (0.5, 4.0, 1.999, False),
                 (0.25, 2.0, 1.0 / 0.75, True), (0.25, 2.0, 1.3, False), (0.9, 2.0, 2.0, False)]
        bad = 0
        for a0, p, p0, reject in cases:
            try:
                an.aggregate_fully_nonlinear([(0.1, 0.1 ** (2 / p + a0 - 1), 0.0)], p, p0, a0)
                got = False
            except an.ExponentOutOfRange:
                got = True
            bad += got != reject
        out.checks.append(check_le("thm51/gate", "exponent_gate_mismatches", bad, 0,
                                   f"{len(cases)} cases incl. p0 = 1/(1-a0) exactly"))
        one = an.aggregate_fully_nonlinear([(0.25, 0.25 ** (2 / 2 + 0.7 - 1), 0.0)], 2.0, 2.0, 0.7)
        out.checks.append(check_le("thm51/gate", "definitional_constant_error", abs(one.ratio - 1.0), 1e-12))
        return out
    return run


def thm51_aggregate(cfg):
    cells = [(_tag(ref, f"p={p:g}", _h_label(h)), _thm51_cell(cfg, ref, h, float(p)))
             for ref in cfg.domains for p in cfg.ps for h in cfg.hs]
    cells.append(("gate", _gate_cell()))
    return Experiment(cells, _no_final)


BUILDERS = {
    "whitney-suite": whitney_suite, "collar": collar, "diam-sums": diam_sums,
    "family-suite": family_suite, "mms": mms, "greens": greens, "c1alpha": c1alpha,
    "percube": percube, "thm34": thm34, "thm41": thm41, "lemma42": lemma42,
    "thm51-aggregate": thm51_aggregate, "blowup-sweep": blowup_sweep,
}
