"""Experiment configuration: ids, parameter grids, domain references."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from ..geometry import bump_spec, cusp_spec, flat_spec, load_domain_spec

EXPERIMENTS = (
    "whitney-suite", "collar", "diam-sums", "family-suite", "mms", "greens", "c1alpha",
    "percube", "thm34", "thm41", "lemma42", "thm51-aggregate", "blowup-sweep",
)

# estimate ids accepted by ``verify`` and the experiment that measures each
ESTIMATES = {
    "Lem2.1": "whitney-suite", "Lem2.2": "whitney-suite", "Lem2.3": "whitney-suite",
    "Lem2.4": "collar", "Lem2.5": "diam-sums", "Lem2.6": "family-suite",
    "Lem2.7": "family-suite", "MMS": "mms", "Lem3.1": "greens", "Eq3.2": "greens",
    "Cor3.3": "c1alpha", "Eq3.12": "percube", "Thm3.4": "thm34", "Thm4.1": "thm41",
    "Lem4.2": "lemma42", "Thm5.1": "thm51-aggregate",
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    domains: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    ps: list = field(default_factory=lambda: [2.0])
    hs: list = field(default_factory=list)
    s_max: int = 10
    seeds: list = field(default_factory=lambda: [0])
    tol: float = 1e-10
    out: str = "runs/out"
    plots: bool = True
    options: dict = field(default_factory=dict)

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment id {self.experiment!r}")
        for name in ("ps", "seeds"):
            if not getattr(self, name):
                raise ConfigError(f"parameter grid {name!r} is empty")
        needs = {"domains": ("whitney-suite", "collar", "diam-sums", "family-suite", "mms",
                             "greens", "thm51-aggregate"),
                 "hs": ("mms", "greens", "c1alpha", "percube", "thm34", "thm41", "lemma42",
                        "blowup-sweep", "thm51-aggregate"),
                 "alphas": ("c1alpha", "percube", "thm34", "thm41", "lemma42", "blowup-sweep")}
        for name, ids in needs.items():
            if self.experiment in ids and not getattr(self, name):
                raise ConfigError(f"parameter grid {name!r} is empty")
        for p in self.ps:
            if not 1.0 < float(p) < float("inf"):
                raise ConfigError(f"p={p} outside (1, ∞)")
        for h in self.hs:
            if h <= 0:
                raise ConfigError(f"h={h} must be positive")
        for d in self.domains:
            resolve_domain(d)
        return self

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("out")
        return d

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def resolve_domain(ref: str, delta: float | None = None):
    """'flat', 'bump', 'cuspA' (A = α), 'flat3d', or a JSON spec path."""
    if ref == "flat":
        return flat_spec()
    if ref == "bump":
        return bump_spec()
    if ref == "flat3d":
        return flat_spec(dim=3, delta=2.0**-9)
    if ref.startswith("cusp"):
        try:
            a = float(ref[4:].lstrip("-_"))
        except ValueError as exc:
            raise ConfigError(f"bad cusp reference {ref!r}") from exc
        return cusp_spec(a) if delta is None else cusp_spec(a, delta=delta)
    if os.path.exists(ref):
        try:
            return load_domain_spec(ref)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot load domain spec {ref!r}: {exc}") from exc
    raise ConfigError(f"unknown domain reference {ref!r}")


_CUSPS = ["cusp0.3", "cusp0.5", "cusp0.6", "cusp0.9"]

DEFAULTS: dict[str, dict] = {
    "whitney-suite": dict(domains=["flat", "bump", *_CUSPS, "flat3d"], s_max=10,
                          options={"s_max_3d": 7, "anchors": 64}),
    "collar": dict(domains=["flat", "bump", *_CUSPS],
                   options={"ds": [2.0**-k for k in range(3, 9)],
                            "rs": [0.5, 0.25, 0.125], "centers": 3}),
    "diam-sums": dict(domains=["flat", "bump", *_CUSPS], options={"eps": 0.5}),
    "family-suite": dict(domains=["flat", "bump", *_CUSPS], options={"probes": 200}),
    "mms": dict(domains=["flat", "bump"], hs=[1 / 32, 1 / 64, 1 / 128]),
    "greens": dict(domains=["flat", "cusp0.6"], ps=[1.5, 2.0, 4.0], hs=[1 / 64, 1 / 128],
                   options={"pairs": 100, "min_side": 1 / 16, "eta": 1 / 32, "boxes": 40}),
    "c1alpha": dict(alphas=[0.6, 0.75], hs=[1 / 256]),
    "percube": dict(alphas=[0.75, 0.9], hs=[1 / 1024], options={"cone": 4.0}),
    "thm34": dict(alphas=[0.9, 0.6, 0.3], hs=[1 / 64, 1 / 128, 1 / 256]),
    "thm41": dict(alphas=[0.9, 0.6, 0.3], hs=[1 / 64, 1 / 128, 1 / 256]),
    "lemma42": dict(alphas=[0.75], hs=[1 / 128], options={"max_cells": 40}),
    "thm51-aggregate": dict(domains=["flat"], hs=[1 / 128, 1 / 256]),
    "blowup-sweep": dict(alphas=[0.3, 0.6, 0.9], hs=[1 / 64, 1 / 128, 1 / 256]),
}


def default_config(experiment: str, **over) -> ExperimentConfig:
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment id {experiment!r}")
    base = ExperimentConfig(experiment)
    d = dict(DEFAULTS.get(experiment, {}))
    opts = dict(d.pop("options", {}))
    opts.update(over.pop("options", {}) or {})
    cfg = replace(base, **d, options=opts)
    return replace(cfg, **{k: v for k, v in over.items() if v is not None})


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if "experiment" not in raw:
        raise ConfigError("config needs an 'experiment' field")
    exp = raw.pop("experiment")
    known = set(ExperimentConfig.__dataclass_fields__)
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown config keys {sorted(extra)}")
    return default_config(exp, **raw)


def thread_cap() -> int:
    v = os.environ.get("WHITNEY_W2P_THREADS", "1")
    try:
        return max(1, int(v))
    except ValueError:
        raise ConfigError(f"WHITNEY_W2P_THREADS={v!r} is not an integer") from None
