"""Sweep harness: tasks x estimators x (d, rho, n, seed) grids with reproducible seeding.

Every job's random streams are derived from ``(master_seed, cell index,
replicate)`` alone, so results do not depend on execution order or on the
number of worker processes. Ground truth is computed once per cell with its
own oracle seed, shared by all estimators in that cell.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from itertools import product
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .errors import ConfigInvalid, EmptyInput
from .estimators import ALIASES, ESTIMATORS, EstimatorConfig, Estimator
from .ndmath import derive_seed, make_rng
from .synth import TASKS, TRANSFORMS, TaskSpec

log = logging.getLogger(__name__)

RECORD_FIELDS = (
    "task",
    "transform",
    "d",
    "rho",
    "n",
    "seed",
    "estimator",
    "mi_true",
    "mi_true_stderr",
    "mi_est",
    "mode",
    "wall_time_seconds",
    "status",
)

AGGREGATE_FIELDS = (
    "task",
    "transform",
    "d",
    "rho",
    "n",
    "estimator",
    "count",
    "mi_true",
    "mi_true_stderr",
    "mean",
    "median",
    "std",
    "median_abs_error",
    "abs_error_of_median",
)

_INT_FIELDS = {"d", "n", "seed", "count"}
_FLOAT_FIELDS = {
    "rho",
    "mi_true",
    "mi_true_stderr",
    "mi_est",
    "wall_time_seconds",
    "mean",
    "median",
    "std",
    "median_abs_error",
    "abs_error_of_median",
}


@dataclass
class EstimateRecord:
    task: str
    transform: str
    d: int
    rho: float
    n: int
    seed: int
    estimator: str
    mi_true: float
    mi_true_stderr: float
    mi_est: float
    mode: str
    wall_time_seconds: float
    status: str = "ok"

    @property
    def key(self) -> tuple:
        return (self.task, self.transform, self.d, self.rho, self.n, self.seed, self.estimator)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class SweepConfig:
    task: str = "gauss"
    transforms: list[str] = field(default_factory=lambda: ["identity"])
    d: list[int] = field(default_factory=lambda: [1])
    rho: list[float] = field(default_factory=lambda: [0.5])
    n: list[int] = field(default_factory=lambda: [10_000])
    estimators: list[str] = field(default_factory=lambda: ["mime"])
    seeds: int = 10
    master_seed: int = 0
    oracle_seed: int = 2024
    mc_samples: int = 1_000_000
    estimator_config: dict = field(default_factory=dict)
    output: str = "results.csv"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        self.estimators = [ALIASES.get(e, e) for e in self.estimators]
        if self.task not in TASKS:
            raise ConfigInvalid(f"unknown task {self.task!r}; valid: {', '.join(TASKS)}")
        for name in ("transforms", "d", "rho", "n", "estimators"):
            if not getattr(self, name):
                raise ConfigInvalid(f"{name} grid is empty")
        bad = [t for t in self.transforms if t not in TRANSFORMS]
        if bad:
            raise ConfigInvalid(f"unknown transform(s) {bad}")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad:
            raise ConfigInvalid(f"unknown estimator(s) {bad}; valid: {', '.join(ESTIMATORS)}")
        if self.seeds < 1:
            raise ConfigInvalid("seeds must be >= 1")
        if any(not -1 < r < 1 for r in self.rho):
            raise ConfigInvalid("every rho must lie in (-1, 1)")
        if any(d < 1 for d in self.d) or any(n < 10 for n in self.n):
            raise ConfigInvalid("d must be >= 1 and n >= 10")
        self.estimator_cfg()

    def estimator_cfg(self) -> EstimatorConfig:
        try:
            return EstimatorConfig().with_overrides(**self.estimator_config)
        except TypeError as exc:
            raise ConfigInvalid(str(exc)) from None

    def cells(self) -> list[tuple[TaskSpec, int]]:
        """``(task spec, n)`` per grid cell, in a fixed order."""
        transforms = self.transforms if self.task == "gauss" else ["identity"]
        return [
            (TaskSpec(self.task, d, rho, tr), n)
            for tr, d, rho, n in product(transforms, self.d, self.rho, self.n)
        ]

    def jobs(self) -> list[tuple[int, str, int]]:
        """``(cell index, estimator, replicate)``, the output row order."""
        return [
            (c, est, s) for c in range(len(self.cells())) for est in self.estimators for s in range(self.seeds)
        ]

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        known = {f.name for f in fields(cls)}
        bad = set(d) - known
        if bad:
            raise ConfigInvalid(f"unknown sweep config key(s): {sorted(bad)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "SweepConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot read sweep config {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigInvalid("sweep config must be a JSON object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return asdict(self)


def data_seed(cfg: SweepConfig, cell: int, replicate: int) -> int:
    return derive_seed(cfg.master_seed, cell, replicate, 0)


def estimator_seed(cfg: SweepConfig, cell: int, replicate: int) -> int:
    # shared by all estimators of a cell/replicate: identical data splits
    return derive_seed(cfg.master_seed, cell, replicate, 1)


def cell_truth(cfg: SweepConfig, cell: int) -> tuple[float, float]:
    spec, _ = cfg.cells()[cell]
    return spec.true_mi(cfg.mc_samples, make_rng(derive_seed(cfg.oracle_seed, cell)))


def _task_label(spec: TaskSpec) -> str:
    return spec.transform if spec.task == "gauss" else "none"


def run_one(
    cfg: SweepConfig, cell: int, estimator: str, replicate: int, truth: tuple[float, float] | None = None
) -> EstimateRecord:
    """Run a single job in isolation; failures become ``status`` rows."""
    spec, n = cfg.cells()[cell]
    if truth is None:
        truth = cell_truth(cfg, cell)
    t0 = time.perf_counter()
    try:
        ds = spec.generate(n, make_rng(data_seed(cfg, cell, replicate)))
        est = Estimator(estimator, cfg.estimator_cfg()).train(ds, estimator_seed(cfg, cell, replicate)).estimate()
        value, mode, status = est.value, est.mode, "ok"
        if not math.isfinite(value):
            status = "error: non-finite estimate"
    except Exception as exc:  # recorded, never fatal for the sweep
        log.exception("job failed: cell %d %s seed %d", cell, estimator, replicate)
        value, mode, status = float("nan"), "", f"error: {type(exc).__name__}: {exc}"
    wall = max(time.perf_counter() - t0, 1e-9)
    return EstimateRecord(
        task=spec.task,
        transform=_task_label(spec),
        d=spec.d,
        rho=float(spec.rho),
        n=n,
        seed=replicate,
        estimator=estimator,
        mi_true=float(truth[0]),
        mi_true_stderr=float(truth[1]),
        mi_est=float(value),
        mode=mode,
        wall_time_seconds=wall,
        status=status,
    )


def _run_job(args):
    cfg_dict, cell, estimator, replicate, truth = args
    return run_one(SweepConfig.from_dict(cfg_dict), cell, estimator, replicate, truth)


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("MIMEST_THREADS", "1"))
    return max(1, int(threads))


def run_sweep(
    cfg: SweepConfig,
    threads: int | None = None,
    resume: bool = False,
    output: str | Path | None = None,
    on_record: Callable[[EstimateRecord], None] | None = None,
) -> list[EstimateRecord]:
    """Run every job of ``cfg``; rows come back in job order.

    With ``output`` the CSV is rewritten after every finished job so an
    interrupted sweep keeps its completed rows; ``resume`` reuses the ``ok``
    rows already present in that file instead of recomputing them.
    """
    threads = resolve_threads(threads)
    jobs = cfg.jobs()
    cells = cfg.cells()
    done: dict[tuple, EstimateRecord] = {}
    if resume and output is not None and Path(output).exists():
        for r in read_records(output):
            if r.ok:
                done[r.key] = r

    def key_of(job):
        cell, est, rep = job
        spec, n = cells[cell]
        return (spec.task, _task_label(spec), spec.d, float(spec.rho), n, rep, est)

    pending = [j for j in jobs if key_of(j) not in done]
    truths = {c: cell_truth(cfg, c) for c in sorted({j[0] for j in pending})}
    results: dict[tuple, EstimateRecord] = dict(done)

    def flush():
        if output is not None:
            emit([results[key_of(j)] for j in jobs if key_of(j) in results], "csv", output)

    args = [(cfg.to_dict(), c, e, s, truths[c]) for c, e, s in pending]
    if threads == 1:
        it: Iterable[EstimateRecord] = map(_run_job, args)
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=threads)
        it = pool.map(_run_job, args)
    try:
        for job, rec in zip(pending, it):
            results[key_of(job)] = rec
            if on_record:
                on_record(rec)
            flush()
    finally:
        if pool is not None:
            pool.shutdown()
    flush()
    return [results[key_of(j)] for j in jobs]


def summarize(records: Iterable[EstimateRecord]) -> list[dict]:
    """One aggregate per (task, transform, d, rho, n, estimator) over ``ok`` rows."""
    groups: dict[tuple, list[EstimateRecord]] = {}
    for r in records:
        if r.ok:
            groups.setdefault((r.task, r.transform, r.d, r.rho, r.n, r.estimator), []).append(r)
    if not groups:
        raise EmptyInput("no successful records to summarize")
    out = []
    for (task, tr, d, rho, n, est), rows in groups.items():
        v = np.array([r.mi_est for r in rows])
        truth = rows[0].mi_true
        med = float(np.median(v))
        out.append(
            {
                "task": task,
                "transform": tr,
                "d": d,
                "rho": rho,
                "n": n,
                "estimator": est,
                "count": len(rows),
                "mi_true": truth,
                "mi_true_stderr": rows[0].mi_true_stderr,
                "mean": float(np.mean(v)),
                "median": med,
                "std": float(np.std(v)),
                "median_abs_error": float(np.median(np.abs(v - truth))),
                "abs_error_of_median": abs(med - truth),
            }
        )
    return out


def _rows(items) -> tuple[tuple[str, ...], list[dict]]:
    items = list(items)
    if items and isinstance(items[0], EstimateRecord):
        return RECORD_FIELDS, [asdict(r) for r in items]
    if items and set(items[0]) == set(AGGREGATE_FIELDS):
        return AGGREGATE_FIELDS, items
    if not items:
        return RECORD_FIELDS, []
    return tuple(items[0]), items


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit(items, fmt: str = "csv", path: str | Path | None = None, header=None) -> str:
    """Write records or aggregates as CSV or JSON; returns the text.

    Floats use ``repr`` (shortest round-tripping decimal). An empty record set
    gives a header-only CSV.
    """
    cols, rows = _rows(items)
    cols = tuple(header) if header else cols
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in cols])
        text = buf.getvalue()
    elif fmt == "json":
        clean = [{c: (None if isinstance(r[c], float) and not math.isfinite(r[c]) else r[c]) for c in cols} for r in rows]
        text = json.dumps(clean, indent=1) + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None:
        try:
            tmp = Path(str(path) + ".tmp")
            tmp.write_text(text)
            os.replace(tmp, path)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
    return text


def _parse(col: str, v):
    if v is None:
        return float("nan") if col in _FLOAT_FIELDS else v
    if col in _INT_FIELDS:
        return int(v)
    if col in _FLOAT_FIELDS:
        return float(v)
    return v


def read_rows(path: str | Path) -> list[dict]:
    """Parse a CSV or JSON file written by :func:`emit`."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json" or text.lstrip().startswith("["):
        raw = json.loads(text)
    else:
        raw = list(csv.DictReader(io.StringIO(text)))
    return [{k: _parse(k, v) for k, v in r.items()} for r in raw]


def read_records(path: str | Path) -> list[EstimateRecord]:
    return [EstimateRecord(**r) for r in read_rows(path)]
