"""Shared plumbing for the experiment scripts: flags, running, printing."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from mimest.bench import SweepConfig, emit, run_sweep, summarize  # noqa: E402
from mimest.ndmath import tune_allocator  # noqa: E402

DESK = {"width": 64, "lr": 1e-3, "contrastive_batch_size": 64}


def parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--threads", type=int, default=None, help="default $MIMEST_THREADS or 1")
    p.add_argument("--width", type=int, default=DESK["width"])
    p.add_argument("--out", default=None, help="records CSV (default results/<script>.csv)")
    p.add_argument("--resume", action="store_true")
    return p


def run(name: str, args, **grid) -> list[dict]:
    tune_allocator()
    out = Path(args.out or f"results/{name}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    cfg = SweepConfig(
        seeds=args.seeds,
        estimator_config={**DESK, "width": args.width},
        output=str(out),
        **grid,
    )
    records = run_sweep(cfg, threads=args.threads, resume=args.resume, output=out)
    aggs = summarize(records)
    emit(aggs, "csv", out.with_suffix(".summary.csv"))
    print_table(aggs)
    return aggs


def print_table(aggs: list[dict]) -> None:
    cols = ("task", "transform", "d", "rho", "n", "estimator", "count", "mi_true", "median", "std", "median_abs_error")
    print(" ".join(f"{c:>16}" for c in cols))
    for a in aggs:
        print(" ".join(f"{a[c]:>16.4f}" if isinstance(a[c], float) else f"{a[c]!s:>16}" for c in cols))
