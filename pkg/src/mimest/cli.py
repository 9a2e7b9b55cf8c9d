"""``mimest`` command-line interface.

Machine-readable results go to standard output, logs to standard error.
Exit status: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .bench import EstimateRecord, SweepConfig, emit, read_records, resolve_threads, run_sweep, summarize
from .copula import fit_copula
from .errors import ConfigInvalid
from .estimators import ALIASES, ESTIMATORS, EstimatorConfig, Estimator
from .ndmath import make_rng, tune_allocator
from .synth import TASKS, TRANSFORMS, PairedDataset, TaskSpec

log = logging.getLogger("mimest")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _rho(s: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {s!r}") from None
    if not -1.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"rho must lie in the open interval (-1, 1), got {v}")
    return v


def _positive_int(s: str) -> int:
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {s!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _fmt4(v: float) -> str:
    return f"{v:.4f}"


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="master random seed (default 0)")
    p.add_argument("--threads", type=_positive_int, default=None, help="worker processes (default $MIMEST_THREADS or 1)")
    p.add_argument("--output", default=None, help="output file (default: standard output where applicable)")
    p.add_argument("--format", choices=("csv", "json"), default=None, help="output format for record files")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    return p


def _task_flags(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--task", choices=TASKS, required=required, help="benchmark task")
    p.add_argument("--d", type=_positive_int, default=1, help="dimension of each of x and y")
    p.add_argument("--rho", type=_rho, default=0.0, help="per-coordinate correlation in (-1, 1)")
    p.add_argument("--transform", choices=sorted(TRANSFORMS), default="identity")


def build_parser() -> argparse.ArgumentParser:
    g = _global_flags()
    parser = argparse.ArgumentParser(prog="mimest", description="Mutual-information estimation benchmarks.")
    parser.add_argument("--version", action="version", version=f"mimest {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser("generate", parents=[g], help="sample a synthetic dataset")
    _task_flags(p)
    p.add_argument("--n", type=_positive_int, default=10_000)

    p = sub.add_parser("oracle", parents=[g], help="ground-truth MI of a task")
    _task_flags(p)
    p.add_argument("--mc-samples", type=_positive_int, default=1_000_000, help="Monte-Carlo samples for mixtures")

    p = sub.add_parser("fit-copula", parents=[g], help="fit a Gaussian copula to a dataset")
    p.add_argument("--input", required=True, help="dataset file (.csv or binary)")

    p = sub.add_parser("estimate", parents=[g], help="run one estimator")
    p.add_argument("--input", default=None, help="dataset file; otherwise the task flags describe the data")
    _task_flags(p, required=False)
    p.add_argument("--n", type=_positive_int, default=10_000)
    p.add_argument("--estimator", required=True, help=f"one of: {', '.join(ESTIMATORS)}")
    p.add_argument("--mode", choices=("ratio", "dv"), default=None, help="MIME/MRE read-out (default ratio)")
    p.add_argument("--config", default=None, help="estimator options as a JSON file or inline JSON object")
    p.add_argument("--record", default=None, help="append an EstimateRecord row to this CSV")

    p = sub.add_parser("sweep", parents=[g], help="run a benchmark grid")
    p.add_argument("--config", required=True, help="SweepConfig JSON file")
    p.add_argument("--resume", action="store_true", help="keep completed rows of an existing output file")

    p = sub.add_parser("summarize", parents=[g], help="aggregate a record file")
    p.add_argument("--input", required=True, help="records CSV or JSON")
    return parser


def _spec(args) -> TaskSpec:
    if args.transform != "identity" and args.task != "gauss":
        raise UsageError("--transform only applies to --task gauss")
    return TaskSpec(args.task, args.d, args.rho, args.transform)


def _estimator_config(raw: str | None, mode: str | None) -> EstimatorConfig:
    overrides = {}
    if raw:
        try:
            text = Path(raw).read_text() if Path(raw).is_file() else raw
            overrides = json.loads(text)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"--config: cannot parse estimator options: {exc}") from None
        if not isinstance(overrides, dict):
            raise UsageError("--config must be a JSON object")
    if mode:
        overrides["mode"] = mode
    try:
        return EstimatorConfig().with_overrides(**overrides)
    except (ConfigInvalid, TypeError) as exc:
        raise UsageError(f"--config: {exc}") from None


def cmd_generate(args) -> int:
    spec = _spec(args)
    ds = spec.generate(args.n, make_rng(args.seed))
    if args.output:
        ds.save(args.output)
        print(f"n={ds.n} dx={ds.dx} dy={ds.dy} seed={args.seed} output={args.output}")
    else:
        sys.stdout.write(ds.to_csv())
        print(f"n={ds.n} dx={ds.dx} dy={ds.dy} seed={args.seed}", file=sys.stderr)
    return EXIT_OK


def cmd_oracle(args) -> int:
    spec = _spec(args)
    mi, se = spec.true_mi(args.mc_samples, make_rng(args.seed))
    if args.format == "json":
        print(json.dumps({"mi_true": mi, "mi_true_stderr": se}))
    else:
        print(f"mi_true {_fmt4(mi)}")
        if not spec.analytic:
            print(f"std_error {_fmt4(se)}")
    return EXIT_OK


def cmd_fit_copula(args) -> int:
    ds = PairedDataset.load(args.input)
    model = fit_copula(ds)
    out = args.output or str(Path(args.input).with_suffix(".copula.json"))
    model.save(out)
    print(f"dx={model.dx} dy={model.dy} n={ds.n} copula_mi {_fmt4(model.gaussian_mi())} output={out}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    args.estimator = ALIASES.get(args.estimator, args.estimator)
    if args.estimator not in ESTIMATORS:
        raise UsageError(f"--estimator: unknown {args.estimator!r}; valid: {', '.join(ESTIMATORS)}")
    cfg = _estimator_config(args.config, args.mode)
    truth = (float("nan"), float("nan"))
    if args.input:
        ds = PairedDataset.load(args.input)
        spec = None
    else:
        if args.task is None:
            raise UsageError("give either --input or --task")
        spec = _spec(args)
        ds = spec.generate(args.n, make_rng(args.seed))
        if spec.analytic:
            truth = spec.true_mi()
    t0 = time.perf_counter()
    est = Estimator(args.estimator, cfg).train(ds, args.seed).estimate()
    wall = time.perf_counter() - t0
    line = f"{est.estimator} {est.mode} {_fmt4(est.value)} n_eval={est.n_eval} seed={args.seed}"
    if spec is not None and spec.analytic:
        line += f" mi_true={_fmt4(truth[0])}"
    print(line)
    if args.record:
        rec = EstimateRecord(
            task=spec.task if spec else Path(args.input).name,
            transform=(spec.transform if spec.task == "gauss" else "none") if spec else "none",
            d=ds.dx,
            rho=float(spec.rho) if spec else float("nan"),
            n=ds.n,
            seed=args.seed,
            estimator=est.estimator,
            mi_true=truth[0],
            mi_true_stderr=truth[1],
            mi_est=est.value,
            mode=est.mode,
            wall_time_seconds=wall,
            status="ok",
        )
        path = Path(args.record)
        rows = read_records(path) if path.exists() and path.stat().st_size else []
        emit(rows + [rec], "csv", path)
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        cfg = SweepConfig.from_json(args.config)
    except ConfigInvalid as exc:
        raise UsageError(f"--config: {exc}") from None
    out = args.output or cfg.output
    fmt = args.format or ("json" if str(out).endswith(".json") else "csv")
    csv_path = out if fmt == "csv" else str(Path(out).with_suffix(".partial.csv"))
    records = run_sweep(
        cfg,
        threads=resolve_threads(args.threads),
        resume=args.resume,
        output=csv_path,
        on_record=lambda r: log.info("%s d=%d rho=%s seed=%d %s: %s", r.task, r.d, r.rho, r.seed, r.estimator, r.status),
    )
    if fmt == "json":
        emit(records, "json", out)
    failed = sum(not r.ok for r in records)
    print(f"records={len(records)} failed={failed} output={out}")
    return EXIT_OK


def cmd_summarize(args) -> int:
    aggs = summarize(read_records(args.input))
    fmt = args.format or ("json" if args.output and args.output.endswith(".json") else "csv")
    if args.output:
        emit(aggs, fmt, args.output)
        print(f"aggregates={len(aggs)} output={args.output}")
    elif fmt == "json":
        sys.stdout.write(emit(aggs, "json"))
    else:
        rounded = [{k: (round(v, 4) if isinstance(v, float) else v) for k, v in a.items()} for a in aggs]
        sys.stdout.write(emit(rounded, "csv"))
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "oracle": cmd_oracle,
    "fit-copula": cmd_fit_copula,
    "estimate": cmd_estimate,
    "sweep": cmd_sweep,
    "summarize": cmd_summarize,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    tune_allocator()
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"mimest {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"mimest {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
