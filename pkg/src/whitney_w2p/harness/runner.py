"""Task execution, manifests and run comparison."""
from __future__ import annotations

import csv
import io
import json
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .. import __version__
from ..analysis import EstimateReport
from .config import ExperimentConfig, thread_cap
from .experiments import BUILDERS, FAIL, PASS, CellOutput, Check
from .svg import line_plot


class SchemaMismatch(ValueError):
    pass


@dataclass
class RunManifest:
    experiment: str
    config_hash: str
    version: str
    wall_clock: float
    tasks: dict                     # key -> {"status": ok|error, "message", "seconds"}
    files: list
    verdict: str
    checks: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    out: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def failed_checks(self) -> list:
        return [c for c in self.checks if c["verdict"] == FAIL]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=str)

    @classmethod
    def load(cls, path) -> "RunManifest":
        p = Path(path)
        if p.is_dir():
            p = p / "manifest.json"
        return cls(**json.loads(p.read_text()))


def _execute(cells, threads: int):
    def one(item):
        key, fn = item
        t0 = time.perf_counter()
        try:
            return key, fn(), {"status": "ok", "message": "", "seconds": time.perf_counter() - t0}
        except Exception as exc:  # one failing cell must not sink its siblings
            msg = f"{type(exc).__name__}: {exc}"
            return key, None, {"status": "error", "message": msg, "seconds": time.perf_counter() - t0,
                               "trace": traceback.format_exc(limit=4)}
    if threads <= 1 or len(cells) <= 1:
        return [one(c) for c in cells]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, cells))


def _csv_text(fields, rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def execute(config: ExperimentConfig):
    """Run an experiment in memory: (cell outputs, statuses, checks, plots)."""
    config.validate()
    exp = BUILDERS[config.experiment](config)
    results = _execute(exp.cells, thread_cap())
    outs: dict[str, CellOutput] = {}
    status: dict[str, dict] = {}
    for key, res, st in sorted(results, key=lambda t: t[0]):
        status[key] = st
        if res is not None:
            outs[key] = res
    checks, plots, _ = exp.finalize(config, outs)
    allchecks = [c for k in sorted(outs) for c in outs[k].checks] + list(checks)
    for key, st in status.items():
        if st["status"] != "ok":
            allchecks.append(Check(key, "task_error", float("nan"), None, FAIL, st["message"]))
    return outs, status, allchecks, plots


def run(config: ExperimentConfig) -> RunManifest:
    """Execute and write manifest.json, reports/*.csv and plots/*.svg."""
    t0 = time.perf_counter()
    outs, status, checks, plots = execute(config)
    root = Path(config.out)
    (root / "reports").mkdir(parents=True, exist_ok=True)
    files = []
    rows = []
    for key in sorted(outs):
        for r in outs[key].reports:
            row = r.row()
            row["task"] = key
            rows.append(row)
    est = root / "reports" / f"{config.experiment}.csv"
    est.write_text(_csv_text(EstimateReport.CSV_FIELDS + ("task",), rows))
    files.append(str(est.relative_to(root)))
    for key in sorted(outs):
        for name, (fields, trows) in sorted(outs[key].tables.items()):
            tp = root / "reports" / f"{name}.csv"
            tp.write_text(_csv_text(fields, trows))
            files.append(str(tp.relative_to(root)))
    chk = root / "reports" / f"{config.experiment}-checks.csv"
    chk.write_text(_csv_text(Check.FIELDS, [c.row() for c in checks]))
    files.append(str(chk.relative_to(root)))
    if config.plots and plots:
        (root / "plots").mkdir(exist_ok=True)
        for name, spec in plots.items():
            path = root / "plots" / f"{name}.svg"
            line_plot(path, spec["series"], title=name, xlabel=spec.get("xlabel", ""),
                      ylabel=spec.get("ylabel", ""), logx=spec.get("logx", True),
                      logy=spec.get("logy", True))
            files.append(str(path.relative_to(root)))
    verdict = FAIL if any(c.verdict == FAIL for c in checks) else PASS
    man = RunManifest(config.experiment, config.digest(), __version__, time.perf_counter() - t0,
                      status, sorted(files), verdict, [c.row() for c in checks],
                      config.canonical(), str(root))
    (root / "manifest.json").write_text(man.to_json())
    return man


def _read_rows(man: RunManifest) -> tuple[list, list]:
    path = Path(man.out) / "reports" / f"{man.experiment}.csv"
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        return list(rd.fieldnames or []), list(rd)


_KEY = ("estimate_id", "alpha", "p", "p0", "s0", "s", "j")


@dataclass
class RunDiff:
    experiment: str
    rows: list                  # (key, ratio_a, ratio_b, relative delta)

    @property
    def empty(self) -> bool:
        return all(d == 0.0 for *_, d in self.rows)

    def max_abs_delta(self) -> float:
        return max((abs(d) for *_, d in self.rows), default=0.0)


def compare_runs(a, b) -> RunDiff:
    """Per-key ratio deltas between two runs of one experiment.

    Rows sharing (estimate id, α, p, p₀, s₀, s, j) are paired in order, so
    runs at different h compare rung to rung; the delta of a pair is
    ratio_b / ratio_a − 1 using the per-key maximum ratio."""
    ma = a if isinstance(a, RunManifest) else RunManifest.load(a)
    mb = b if isinstance(b, RunManifest) else RunManifest.load(b)
    if ma.experiment != mb.experiment:
        raise SchemaMismatch(f"{ma.experiment} vs {mb.experiment}")
    fa, ra = _read_rows(ma)
    fb, rb = _read_rows(mb)
    if fa != fb:
        raise SchemaMismatch("report columns differ")

    def best(rows):
        out: dict = {}
        for r in rows:
            k = tuple(r[c] for c in _KEY)
            try:
                v = float(r["ratio"])
            except ValueError:
                continue
            out[k] = max(out.get(k, v), v)
        return out
    A, B = best(ra), best(rb)
    if set(A) != set(B):
        raise SchemaMismatch("runs cover different estimate keys")
    diff = []
    for k in sorted(A):
        d = 0.0 if A[k] == B[k] else (B[k] / A[k] - 1.0 if A[k] else float("inf"))
        diff.append((k, A[k], B[k], d))
    return RunDiff(ma.experiment, diff)
