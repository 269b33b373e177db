"""Config-driven Monte Carlo experiments: specs, sweeps, run records and
summaries.

An experiment spec is a JSON document::

    {
      "name": "line-lemma",
      "graph": {"family": "line", "m": 5},
      "protocol": "three-state",
      "placement": {"preset": "line-leftmost-g"},
      "trials": 100000,
      "seed": 20240601,
      "max_steps": null,
      "win": "g",
      "sweep": [{"graph.m": [2, 3, 5, 8]}]
    }

``sweep`` is a list of axis groups. Axes inside one group are zipped, groups
are combined as a cartesian product. An axis name is a dotted path into the
spec (``graph.n1``, ``placement.counts.r``, ``trials``); the value ``graph``
replaces the whole descriptor.

Trial ``t`` of every cell draws from ``SeedSequence(seed, spawn_key=(t,))``;
random placements consume that stream first, then the scheduler. Cells of a
sweep therefore share random numbers, and any trial can be rerun alone.
"""

from __future__ import annotations

import copy
import csv
import itertools
import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

import numpy as np

from . import __version__, engine, graph as graphs, protocols
from .scheduler import PRNG_ID, UniformScheduler, trial_rng

Z95 = 1.959963984540054
PRESET_DIR = Path(__file__).with_name("presets")
SIMULATORS = ("auto", "vertex", "aggregated")
OBSERVERS = ("W", "C")


class SpecError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    name: str
    graph: dict
    protocol: str = "three-state"
    placement: dict | list = field(default_factory=dict)
    trials: int = 1000
    seed: int = 0
    max_steps: int | None = None
    win: str = "majority"
    simulator: str = "auto"
    observers: list = field(default_factory=list)
    stride: int = 1
    skip_null: bool = True
    sweep: list = field(default_factory=list)
    output: str | None = None
    description: str = ""

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentSpec":
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise SpecError(f"unknown spec fields {sorted(extra)}")
        if "name" not in doc or "graph" not in doc:
            raise SpecError("spec needs 'name' and 'graph'")
        spec = cls(**copy.deepcopy(doc))
        spec.validate()
        return spec

    def to_dict(self) -> dict:
        return {k: copy.deepcopy(getattr(self, k)) for k in self.__dataclass_fields__}

    def validate(self):
        if int(self.trials) != self.trials or self.trials < 0:
            raise SpecError(f"trials must be a non-negative integer, got {self.trials!r}")
        if self.simulator not in SIMULATORS:
            raise SpecError(f"simulator must be one of {SIMULATORS}")
        bad = set(self.observers) - set(OBSERVERS)
        if bad:
            raise SpecError(f"unknown observers {sorted(bad)}")
        if not isinstance(self.sweep, list):
            raise SpecError("sweep must be a list of axis groups")
        for group in self.sweep:
            lengths = {len(v) for v in group.values()}
            if len(lengths) > 1:
                raise SpecError(f"zipped axes {sorted(group)} have different lengths")


def load_spec(source) -> ExperimentSpec:
    """Spec from a dict, a JSON file path, or a bundled preset name."""
    if isinstance(source, ExperimentSpec):
        return source
    if isinstance(source, dict):
        return ExperimentSpec.from_dict(source)
    path = Path(source)
    if not path.exists() and (PRESET_DIR / f"{source}.json").exists():
        path = PRESET_DIR / f"{source}.json"
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise SpecError(f"no spec file or preset named {source!r}") from None
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON: {exc}") from None
    return ExperimentSpec.from_dict(doc)


def preset_names() -> list[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.json"))


# ---------------------------------------------------------------- cells

def _set_path(doc: dict, path: str, value):
    keys = path.split(".")
    target = doc
    for k in keys[:-1]:
        if not isinstance(target.get(k), dict):
            target[k] = {}
        target = target[k]
    target[keys[-1]] = value


def expand(spec: ExperimentSpec) -> list[tuple[dict, ExperimentSpec]]:
    """``(axis values, cell spec)`` for every sweep cell, in declaration order."""
    base = spec.to_dict()
    base["sweep"] = []
    if not spec.sweep:
        return [({}, ExperimentSpec.from_dict(base))]
    groups = []
    for group in spec.sweep:
        names = list(group)
        groups.append([dict(zip(names, vals)) for vals in zip(*(group[n] for n in names))])
    cells = []
    for combo in itertools.product(*groups):
        params = {}
        for part in combo:
            params.update(part)
        doc = copy.deepcopy(base)
        for path, value in params.items():
            _set_path(doc, path, copy.deepcopy(value))
        cells.append((params, ExperimentSpec.from_dict(doc)))
    return cells


def _use_aggregated(spec: ExperimentSpec, g, p) -> bool:
    if spec.simulator == "vertex":
        return False
    eligible = (
        g.descriptor.get("family") == "clique"
        and p.name == "three-state"
        and isinstance(spec.placement, dict)
        and ("counts" in spec.placement or "random" in spec.placement)
        and not spec.observers
    )
    if spec.simulator == "aggregated" and not eligible:
        raise SpecError("aggregated simulator needs three-state on a clique with count placement "
                        "and no observers")
    return eligible


def _target(spec: ExperimentSpec, p, c0) -> str | None:
    """Output symbol counted as a win."""
    if spec.win in ("majority", "minority"):
        inputs = _inputs(p, c0)
        major = protocols.inputs_majority(inputs)
        if major is None:
            return None
        if spec.win == "majority":
            return p.output_map[p.input_map[major]]
        others = [x for x in p.inputs if x != major]
        return p.output_map[p.input_map[others[0]]] if others else None
    return spec.win


def _inputs(p, c0) -> list[str]:
    inverse = {}
    for x in p.inputs:
        inverse.setdefault(p.input_map[x], x)
    return [inverse.get(p.states[s], "?") for s in c0.states]


def run_trial(spec: ExperimentSpec, trial: int, g=None, p=None) -> dict:
    """Run one trial and return its record."""
    g = g or graphs.from_descriptor(spec.graph)
    p = p or protocols.load(spec.protocol)
    rng = trial_rng(spec.seed, trial)
    c0 = engine.initial_config(g, p, spec.placement, rng)
    target = _target(spec, p, c0)
    sched = UniformScheduler(rng=rng)
    if _use_aggregated(spec, g, p):
        counts = c0.counts()
        res = engine.run_clique_aggregated(g.n, counts["r"], counts["g"], sched, spec.max_steps,
                                           skip_null=spec.skip_null, protocol=p)
    else:
        observers = []
        if "W" in spec.observers:
            observers.append(engine.BlankObserver(0, record=True, stride=spec.stride))
        if "C" in spec.observers:
            red = int(np.count_nonzero(c0.states == p.index["r"]))
            observers.append(engine.ContestObserver(red, record=True, stride=spec.stride))
        res = engine.run(g, p, c0, sched, spec.max_steps, observers, skip_null=spec.skip_null)
    rec = {
        "trial": trial,
        "seed": spec.seed,
        "outcome": res.outcome,
        "value": res.value,
        "label": res.label(),
        "win": target is not None and res.outcome == engine.ABSORBED and res.value == target,
        "target": target,
        "steps_total": res.steps_total,
        "steps_effective": res.steps_effective,
    }
    if isinstance(spec.placement, dict) and "random" in spec.placement:
        rec["initial"] = "".join(_inputs(p, c0))
    if res.series:
        rec["series"] = res.series
    return rec


def run_cell(spec: ExperimentSpec) -> list[dict]:
    g = graphs.from_descriptor(spec.graph)
    p = protocols.load(spec.protocol)
    return [run_trial(spec, t, g, p) for t in range(spec.trials)]


# ---------------------------------------------------------------- statistics

@dataclass(frozen=True)
class Stats:
    freq: float | None
    wilson95: tuple[float, float] | None


def wilson(k: int, n: int, z: float = Z95) -> tuple[float, float] | None:
    """Wilson score interval; ``None`` when ``n == 0``."""
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    if n == 0:
        return None
    f = k / n
    denom = 1 + z * z / n
    centre = (f + z * z / (2 * n)) / denom
    half = z * math.sqrt(f * (1 - f) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


def stats(win_count: int, trials: int, z: float = Z95) -> Stats:
    if trials == 0:
        wilson(win_count, trials)
        return Stats(None, None)
    return Stats(win_count / trials, wilson(win_count, trials, z))


def summarize(records: Iterable[dict], cap: int | None = None) -> dict:
    """Per-cell summary from run records.

    Capped runs enter the step statistics at their cap, so medians and
    percentiles are lower bounds when ``cap_hits > 0``.
    """
    records = list(records)
    n = len(records)
    outcomes: dict[str, int] = {}
    for r in records:
        outcomes[r["label"]] = outcomes.get(r["label"], 0) + 1
    wins = sum(1 for r in records if r["win"])
    s = stats(wins, n)
    steps = np.array([r["steps_total"] for r in records], dtype=float)
    out = {
        "trials": n,
        "outcomes": dict(sorted(outcomes.items())),
        "wins": wins,
        "win_freq": s.freq,
        "wilson95": list(s.wilson95) if s.wilson95 else None,
        "cap_hits": sum(1 for r in records if r["outcome"] == engine.STEP_CAP),
    }
    if n:
        out.update(
            steps_mean=float(steps.mean()),
            steps_median=float(np.median(steps)),
            steps_p95=float(np.percentile(steps, 95)),
        )
    else:
        out.update(steps_mean=None, steps_median=None, steps_p95=None)
    return out


# ---------------------------------------------------------------- driver

@dataclass
class CellResult:
    index: int
    params: dict
    spec: ExperimentSpec
    records: list
    summary: dict


def simulate(spec) -> CellResult:
    """Run a spec as a single cell (its sweep, if any, is ignored)."""
    spec = load_spec(spec)
    doc = spec.to_dict()
    doc["sweep"] = []
    cell = ExperimentSpec.from_dict(doc)
    recs = run_cell(cell)
    return CellResult(0, {}, cell, recs, summarize(recs))


def sweep(spec) -> list[CellResult]:
    spec = load_spec(spec)
    out = []
    for k, (params, cell) in enumerate(expand(spec)):
        recs = run_cell(cell)
        out.append(CellResult(k, params, cell, recs, summarize(recs)))
    return out


def record_lines(cells: list[CellResult]) -> list[str]:
    """JSON-lines run records; byte-identical for a fixed spec and seed."""
    lines = []
    for c in cells:
        for r in c.records:
            doc = dict(r, cell=c.index, params=c.params, graph=c.spec.graph,
                       placement=c.spec.placement, protocol=c.spec.protocol, prng=PRNG_ID)
            lines.append(json.dumps(doc, sort_keys=True, separators=(",", ":")))
    return lines


def metadata(spec: ExperimentSpec) -> dict:
    return {
        "spec": spec.to_dict(),
        "version": __version__,
        "prng": PRNG_ID,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def summary_rows(cells: list[CellResult]) -> list[dict]:
    rows = []
    for c in cells:
        s = c.summary
        row = {"cell": c.index}
        row.update({k: json.dumps(v) if isinstance(v, (dict, list)) else v for k, v in c.params.items()})
        row.update(
            trials=s["trials"], wins=s["wins"], win_freq=s["win_freq"],
            wilson_lo=s["wilson95"][0] if s["wilson95"] else None,
            wilson_hi=s["wilson95"][1] if s["wilson95"] else None,
            steps_mean=s["steps_mean"], steps_median=s["steps_median"], steps_p95=s["steps_p95"],
            cap_hits=s["cap_hits"], outcomes=json.dumps(s["outcomes"], sort_keys=True),
        )
        rows.append(row)
    return rows


def plot_rows(cells: list[CellResult]) -> list[dict]:
    """Tidy long format: one row per (cell, metric)."""
    rows = []
    for c in cells:
        params = json.dumps(c.params, sort_keys=True)
        for metric in ("win_freq", "steps_mean", "steps_median", "steps_p95", "cap_hits"):
            rows.append({"cell": c.index, "params": params, "metric": metric,
                         "value": c.summary[metric]})
        for label, count in c.summary["outcomes"].items():
            rows.append({"cell": c.index, "params": params, "metric": f"outcome:{label}",
                         "value": count})
    return rows


def _write_csv(path: Path, rows: list[dict]):
    fields: list[str] = []
    for r in rows:
        fields += [k for k in r if k not in fields]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def default_output_dir() -> Path:
    return Path(os.environ.get("POPMAJ_OUTPUT_DIR", "."))


def write_outputs(spec: ExperimentSpec, cells: list[CellResult], out_dir: Path | None = None,
                  plot_data: bool = False) -> dict[str, Path]:
    """Write ``<name>.runs.jsonl``, ``<name>.summary.json``, ``<name>.csv``,
    ``<name>.meta.json`` and optionally ``<name>.plot.csv``."""
    out_dir = Path(out_dir) if out_dir is not None else (
        Path(spec.output) if spec.output else default_output_dir())
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = spec.name
    paths = {
        "runs": out_dir / f"{stem}.runs.jsonl",
        "summary": out_dir / f"{stem}.summary.json",
        "csv": out_dir / f"{stem}.csv",
        "meta": out_dir / f"{stem}.meta.json",
    }
    lines = record_lines(cells)
    paths["runs"].write_text("".join(l + "\n" for l in lines), encoding="utf-8")
    summary = [{"cell": c.index, "params": c.params, **c.summary} for c in cells]
    paths["summary"].write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _write_csv(paths["csv"], summary_rows(cells))
    paths["meta"].write_text(json.dumps(metadata(spec), indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")
    if plot_data:
        paths["plot"] = out_dir / f"{stem}.plot.csv"
        _write_csv(paths["plot"], plot_rows(cells))
    return paths


def summaries_from_records(lines: Iterable[str]) -> dict[int, dict]:
    """Recompute per-cell summaries from JSON-lines run records."""
    by_cell: dict[int, list] = {}
    for line in lines:
        if line.strip():
            r = json.loads(line)
            by_cell.setdefault(r["cell"], []).append(r)
    return {k: summarize(v) for k, v in sorted(by_cell.items())}
