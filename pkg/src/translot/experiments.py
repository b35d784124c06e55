"""Gap studies over generated instance families.

A :class:`StudySpec` describes a family (horizon, demand family, pattern
pool, cost grids), how instances are drawn from it, and which two methods
are compared.  :func:`run_study` evaluates every instance, optionally across
worker processes, and journals one record per instance so an interrupted run
can be resumed.  Outputs are CSV files with fixed headers; floats use 12
significant digits and rows are sorted, so reruns are byte-identical.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import itertools
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import Instance
from .demand import TAGS_4, TAGS_10, DemandSpec, make_pattern
from .errors import BoundsWarning, ConfigurationError
from .heuristic import RecedingHorizonPolicy, estimate
from .sdp import solve_sdp1, solve_sdp2

METHODS = ("sdp1", "sdp2", "heuristic")
SAMPLINGS = ("lhs", "pairs", "factorial")
PIVOTS = ("pattern1", "K", "R", "b")
WORKERS_ENV = "TRANSLOT_WORKERS"


@dataclass(frozen=True)
class HeuristicSettings:
    alpha: float = 0.95
    rel_halfwidth: float = 1e-3
    min_n: int = 100
    max_n: int = 1_000_000
    batch: int = 100
    lookahead: str = "independent"
    lookahead_paths: int = 64
    backend: str = "highs"
    n_regions: int = 10


@dataclass(frozen=True)
class StudySpec:
    """One instance family plus the sampling plan and the compared methods.

    ``sampling``:

    * ``"lhs"`` draws ``n_instances`` points by Latin hypercube sampling over
      (pattern1, pattern2, K, R, b, (z, v));
    * ``"pairs"`` draws ``n_pattern_pairs`` pattern pairs by Latin hypercube
      sampling and crosses each with every cost group;
    * ``"factorial"`` takes every combination.

    Initial inventories are the grid ``offsets x offsets`` scaled by
    ``scale / 10`` and rounded.
    """

    name: str
    horizon: int
    demand_family: str
    scale: float
    patterns: tuple[str, ...]
    K: tuple[float, ...]
    R: tuple[float, ...]
    b: tuple[float, ...]
    zv: tuple[tuple[float, float], ...]
    h: float = 1.0
    cv: float = 0.0
    sampling: str = "lhs"
    n_instances: int = 60
    n_pattern_pairs: int = 10
    seed: int = 0
    offsets: tuple[int, ...] = (-5, 0, 5)
    methods: tuple[str, str] = ("sdp1", "sdp2")
    bounds: tuple[tuple[int, int], tuple[int, int]] | None = None
    q_max: int | None = None
    truncation_eps: float = 1e-5
    heuristic: HeuristicSettings = HeuristicSettings()
    pattern_config: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        if self.sampling not in SAMPLINGS:
            raise ConfigurationError(f"sampling must be one of {SAMPLINGS}")
        if len(self.methods) != 2 or any(m not in METHODS for m in self.methods):
            raise ConfigurationError(f"methods must be two of {METHODS}")
        for nm in ("patterns", "K", "R", "b", "zv", "offsets"):
            if not getattr(self, nm):
                raise ConfigurationError(f"study grid {nm!r} is empty")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> StudySpec:
        d = dict(d)
        if "heuristic" in d and isinstance(d["heuristic"], dict):
            d["heuristic"] = HeuristicSettings(**d["heuristic"])
        for key in ("patterns", "K", "R", "b", "offsets", "methods"):
            if key in d:
                d[key] = tuple(d[key])
        if "zv" in d:
            d["zv"] = tuple(tuple(p) for p in d["zv"])
        if d.get("bounds") is not None:
            d["bounds"] = tuple(tuple(p) for p in d["bounds"])
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown study keys: {sorted(extra)}")
        return cls(**d)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def initial_states(self) -> list[tuple[int, int]]:
        f = self.scale / 10.0
        vals = sorted({int(math.floor(o * f + 0.5)) for o in self.offsets})
        return [(a, c) for a in vals for c in vals]


def four_period_spec(n_instances: int = 60, seed: int = 4, **kw) -> StudySpec:
    """Poisson demand, four periods, both dynamic programs compared."""
    base = dict(name="p4", horizon=4, demand_family="poisson", scale=10.0, patterns=TAGS_4,
                K=(10.0, 20.0, 30.0), R=(5.0, 10.0, 20.0), b=(3.0, 5.0),
                zv=((2.0, 1.0), (1.0, 0.5)), sampling="lhs", n_instances=n_instances,
                seed=seed, methods=("sdp1", "sdp2"), bounds=((-45, 55), (-45, 55)), q_max=45)
    base.update(kw)
    return StudySpec(**base)


def ten_period_spec(horizon: int = 10, n_pattern_pairs: int | None = None, seed: int = 10,
                    **kw) -> StudySpec:
    """Normal demand (cv 0.1), two-stage program against the heuristic.

    Without ``n_pattern_pairs`` all 25 ordered pattern pairs are used.
    """
    base = dict(name=f"p{horizon}", horizon=horizon, demand_family="normal", scale=10.0,
                patterns=TAGS_10, K=(10.0, 20.0), R=(5.0, 10.0), b=(3.0, 5.0),
                zv=((0.5, 1.0),), cv=0.1, seed=seed, methods=("sdp2", "heuristic"),
                bounds=((-30, 80), (-30, 80)), q_max=50)
    if n_pattern_pairs is None:
        base.update(sampling="factorial")
    else:
        base.update(sampling="pairs", n_pattern_pairs=n_pattern_pairs)
    base.update(kw)
    return StudySpec(**base)


# -- design -------------------------------------------------------------------------------

def lhs_sample(levels: Sequence[int], n: int, seed: int) -> list[tuple[int, ...]]:
    """Latin hypercube sample of ``n`` points on a grid of discrete levels.

    Each axis is split into ``n`` strata that are mapped onto its levels, so
    every level is hit ``floor(n/L)`` or ``ceil(n/L)`` times.
    """
    if n < 1:
        raise ConfigurationError("sample size must be at least 1")
    if not levels or any(int(L) < 1 for L in levels):
        raise ConfigurationError("every dimension needs at least one level")
    rng = np.random.default_rng(seed)
    cols = [(rng.permutation(n) * int(L)) // n for L in levels]
    return [tuple(int(c[i]) for c in cols) for i in range(n)]


@dataclass(frozen=True)
class DesignPoint:
    id: str
    index: int
    pattern1: str
    pattern2: str
    K: float
    R: float
    b: float
    z: float
    v: float


def design(spec: StudySpec) -> list[DesignPoint]:
    P, K, R, B, ZV = spec.patterns, spec.K, spec.R, spec.b, spec.zv
    if spec.sampling == "lhs":
        rows = lhs_sample([len(P), len(P), len(K), len(R), len(B), len(ZV)],
                          spec.n_instances, spec.seed)
    else:
        costs = list(itertools.product(range(len(K)), range(len(R)), range(len(B)),
                                       range(len(ZV))))
        if spec.sampling == "pairs":
            pairs = lhs_sample([len(P), len(P)], spec.n_pattern_pairs, spec.seed)
        else:
            pairs = list(itertools.product(range(len(P)), range(len(P))))
        rows = [p + c for p in pairs for c in costs]
    width = max(4, len(str(len(rows))))
    out = []
    for i, (p1, p2, k, r, b, zv) in enumerate(rows):
        out.append(DesignPoint(f"{spec.name}-{i:0{width}d}", i, P[p1], P[p2], K[k], R[r], B[b],
                               ZV[zv][0], ZV[zv][1]))
    return out


def make_instance(spec: StudySpec, pt: DesignPoint) -> Instance:
    locs = []
    for tag in (pt.pattern1, pt.pattern2):
        means = make_pattern(tag, spec.horizon, spec.scale, spec.pattern_config)
        if spec.demand_family == "deterministic":
            means = [int(math.floor(m + 0.5)) for m in means]
        locs.append(DemandSpec(spec.demand_family, tuple(means), cv=spec.cv))
    return Instance(T=spec.horizon, K=pt.K, z=pt.z, R=pt.R, v=pt.v, h=spec.h, b=pt.b,
                    demand=tuple(locs), bounds=spec.bounds, q_max=spec.q_max,
                    truncation_eps=spec.truncation_eps, name=pt.id)


# -- evaluation ------------------------------------------------------------------------------

@dataclass
class GapRecord:
    id: str
    pattern1: str
    pattern2: str
    K: float
    R: float
    b: float
    h: float
    z: float
    v: float
    etc1: float | None = None
    etc2: float | None = None
    gap: float | None = None
    gap_halfwidth: float | None = None
    replications: int = 0
    status: str = "ok"
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


RECORD_FIELDS = [f.name for f in dataclasses.fields(GapRecord)]


def method_etc(method: str, inst: Instance, states, settings: HeuristicSettings, seed: int):
    """Average expected total cost over ``states``: (mean, half-width, replications)."""
    if method in ("sdp1", "sdp2"):
        solver = solve_sdp1 if method == "sdp1" else solve_sdp2
        table = solver(inst, initial_states=states)
        return float(np.mean([table.value(1, s) for s in states])), 0.0, 0
    hs = settings
    policy = RecedingHorizonPolicy(inst, backend=hs.backend, n_regions=hs.n_regions,
                                   lookahead=hs.lookahead, lookahead_paths=hs.lookahead_paths,
                                   seed=seed)
    means, hws, n = [], [], 0
    for k, s in enumerate(states):
        est = estimate(inst, s, hs.alpha, hs.rel_halfwidth, seed=seed + k + 1, policy=policy,
                       min_n=hs.min_n, max_n=hs.max_n, batch=hs.batch)
        if not est.converged:
            raise RuntimeError(f"estimate from {s} stopped at the cap without converging")
        means.append(est.mean)
        hws.append(est.halfwidth)
        n += est.n
    return float(np.mean(means)), float(math.sqrt(np.sum(np.square(hws)))) / len(hws), n


def _instance_seed(spec: StudySpec, index: int) -> int:
    return int(np.random.SeedSequence([spec.seed, index]).generate_state(1)[0] >> 8)


def evaluate_point(spec: StudySpec, pt: DesignPoint) -> GapRecord:
    rec = GapRecord(pt.id, pt.pattern1, pt.pattern2, pt.K, pt.R, pt.b, spec.h, pt.z, pt.v)
    try:
        inst = make_instance(spec, pt)
        states = spec.initial_states()
        seed = _instance_seed(spec, pt.index)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", BoundsWarning)
            e1, hw1, n1 = method_etc(spec.methods[0], inst, states, spec.heuristic, seed)
            e2, hw2, n2 = method_etc(spec.methods[1], inst, states, spec.heuristic, seed)
        notes = sorted({str(w.message) for w in caught if issubclass(w.category, BoundsWarning)})
        rec.message = " | ".join(notes)
        if not e1 > 0:
            raise RuntimeError("benchmark cost is not positive")
        rec.etc1, rec.etc2 = e1, e2
        rec.gap = 100.0 * (e2 - e1) / e1
        rec.gap_halfwidth = 100.0 * math.hypot(hw1, hw2) / e1
        rec.replications = n1 + n2
    except Exception as exc:  # recorded, excluded from averages
        rec.status = "failed"
        rec.message = f"{type(exc).__name__}: {exc}"
    return rec


def _evaluate_job(args):
    spec_dict, pt = args
    return evaluate_point(StudySpec.from_dict(spec_dict), pt)


# -- record store ---------------------------------------------------------------------------------

class RecordStore:
    """Append-only journal of :class:`GapRecord` lines keyed by instance id."""

    def __init__(self, directory, spec: StudySpec):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.journal = self.dir / "records.jsonl"
        meta = self.dir / "study.json"
        fp = spec.fingerprint()
        if meta.exists():
            old = json.loads(meta.read_text())
            if old.get("fingerprint") != fp:
                raise ConfigurationError(
                    f"{self.dir} holds results of a different study ({old.get('name')})")
        else:
            meta.write_text(json.dumps({"name": spec.name, "fingerprint": fp,
                                        "spec": spec.to_dict()}, indent=2, sort_keys=True,
                                       default=str) + "\n")

    def load(self) -> dict[str, GapRecord]:
        out = {}
        if self.journal.exists():
            for line in self.journal.read_text().splitlines():
                try:
                    rec = GapRecord(**json.loads(line))
                except (json.JSONDecodeError, TypeError):
                    continue  # torn last line of an interrupted run
                out[rec.id] = rec
        return out

    def append(self, rec: GapRecord) -> None:
        with open(self.journal, "a") as fh:
            fh.write(json.dumps(dataclasses.asdict(rec)) + "\n")
            fh.flush()
            os.fsync(fh.fileno())


# -- aggregation ------------------------------------------------------------------------------------

@dataclass
class PivotRow:
    pivot: str
    level: str
    mean_gap: float | None
    count: int
    failures: int


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


def _level_key(pivot: str, value, spec_patterns: Sequence[str] | None):
    if pivot == "pattern1" and spec_patterns and value in spec_patterns:
        return (0, spec_patterns.index(value), "")
    if isinstance(value, (int, float)):
        return (1, float(value), "")
    return (2, 0.0, str(value))


def pivot_tables(records: Iterable[GapRecord], pivots: Sequence[str] = PIVOTS,
                 patterns: Sequence[str] | None = None) -> list[PivotRow]:
    """Mean gap per level of each pivot dimension plus the grand average."""
    recs = list(records)
    rows = []
    for p in pivots:
        levels = sorted({getattr(r, p) for r in recs}, key=lambda v: _level_key(p, v, patterns))
        for lv in levels:
            grp = [r for r in recs if getattr(r, p) == lv]
            rows.append(_pivot_row(p, _fmt(lv), grp))
    rows.append(_pivot_row("all", "average", recs))
    return rows


def _pivot_row(p, level, grp) -> PivotRow:
    good = [r.gap for r in grp if r.ok]
    return PivotRow(p, level, float(np.mean(good)) if good else None, len(good),
                    len(grp) - len(good))


@dataclass
class BoxStats:
    group: str
    n: int
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    whisker_low: float
    whisker_high: float
    outliers: list[float]


def five_number(values: Sequence[float], group: str = "") -> BoxStats:
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ConfigurationError(f"group {group!r} is empty")
    q1, med, q3 = (float(x) for x in np.quantile(v, [0.25, 0.5, 0.75]))
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    out = [float(x) for x in v if x < lo_fence or x > hi_fence]
    return BoxStats(group, int(v.size), float(v[0]), q1, med, q3, float(v[-1]),
                    float(inside[0]), float(inside[-1]), out)


def boxplot_data(records: Iterable[GapRecord], pivot: str,
                 patterns: Sequence[str] | None = None) -> list[BoxStats]:
    """Five-number summaries of the gap per level of ``pivot`` (``"all"`` for one group)."""
    recs = [r for r in records if r.ok]
    if pivot == "all":
        return [five_number([r.gap for r in recs], "all")]
    levels = sorted({getattr(r, pivot) for r in recs},
                    key=lambda v: _level_key(pivot, v, patterns))
    return [five_number([r.gap for r in recs if getattr(r, pivot) == lv], _fmt(lv))
            for lv in levels]


# -- CSV ----------------------------------------------------------------------------------------------

def records_csv(records: Iterable[GapRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_FIELDS)
    for r in sorted(records, key=lambda r: r.id):
        w.writerow([_fmt(getattr(r, f)) for f in RECORD_FIELDS])
    return buf.getvalue()


def read_records_csv(text: str) -> list[GapRecord]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        kw = {}
        for f in dataclasses.fields(GapRecord):
            s = row[f.name]
            if f.name in ("id", "pattern1", "pattern2", "status", "message"):
                kw[f.name] = s
            elif f.name == "replications":
                kw[f.name] = int(s)
            else:
                kw[f.name] = float(s) if s != "" else None
        out.append(GapRecord(**kw))
    return out


def pivots_csv(rows: Iterable[PivotRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["pivot", "level", "mean_gap", "count", "failures"])
    for r in rows:
        w.writerow([r.pivot, r.level, _fmt(r.mean_gap), r.count, r.failures])
    return buf.getvalue()


def boxplot_csv(stats: Iterable[BoxStats], pivot: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["pivot", "group", "n", "min", "q1", "median", "q3", "max",
                "whisker_low", "whisker_high", "outliers"])
    for s in stats:
        w.writerow([pivot, s.group, s.n, _fmt(s.minimum), _fmt(s.q1), _fmt(s.median),
                    _fmt(s.q3), _fmt(s.maximum), _fmt(s.whisker_low), _fmt(s.whisker_high),
                    ";".join(_fmt(x) for x in s.outliers)])
    return buf.getvalue()


# -- runner -----------------------------------------------------------------------------------------------

@dataclass
class StudyResult:
    spec: StudySpec
    records: list[GapRecord]
    pivots: list[PivotRow]

    @property
    def grand_average(self) -> float | None:
        return self.pivots[-1].mean_gap


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def run_study(spec: StudySpec, out_dir=None, workers: int | None = None,
              progress: Callable[[GapRecord], None] | None = None) -> StudyResult:
    """Evaluate every design point; with ``out_dir`` results are journaled and
    completed instances are skipped on a rerun."""
    points = design(spec)
    store = RecordStore(out_dir, spec) if out_dir is not None else None
    done = store.load() if store else {}
    todo = [p for p in points if p.id not in done]
    workers = default_workers() if workers is None else max(1, int(workers))

    def commit(rec):
        done[rec.id] = rec
        if store:
            store.append(rec)
        if progress:
            progress(rec)

    if workers == 1 or len(todo) <= 1:
        for p in todo:
            commit(evaluate_point(spec, p))
    else:
        sd = spec.to_dict()
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rec in pool.map(_evaluate_job, [(sd, p) for p in todo]):
                commit(rec)
    ids = {p.id for p in points}
    records = sorted((r for r in done.values() if r.id in ids), key=lambda r: r.id)
    result = StudyResult(spec, records, pivot_tables(records, patterns=spec.patterns))
    if store:
        write_outputs(result, store.dir)
    return result


def write_outputs(result: StudyResult, directory) -> None:
    d = Path(directory)
    (d / "records.csv").write_text(records_csv(result.records))
    (d / "pivots.csv").write_text(pivots_csv(result.pivots))
