import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mimest.bench import (
    AGGREGATE_FIELDS,
    RECORD_FIELDS,
    EstimateRecord,
    SweepConfig,
    emit,
    read_records,
    read_rows,
    run_one,
    run_sweep,
    summarize,
)
from mimest.errors import ConfigInvalid, EmptyInput

FAST = {"width": 8, "depth": 1, "max_epochs": 2, "patience": 1, "batch_size": 128}


def cfg(**kw):
    base = dict(d=[1], rho=[0.0], n=[1000], estimators=["mime"], seeds=2, estimator_config=FAST)
    base.update(kw)
    return SweepConfig(**base)


def rec(v, seed=0, truth=1.5, est="mime"):
    return EstimateRecord("gauss", "identity", 1, 0.5, 100, seed, est, truth, 0.0, v, "ratio", 0.1, "ok")


def test_header_matches_interface():
    assert ",".join(RECORD_FIELDS) == (
        "task,transform,d,rho,n,seed,estimator,mi_true,mi_true_stderr,mi_est,mode,wall_time_seconds,status"
    )


def test_config_validation():
    with pytest.raises(ConfigInvalid):
        cfg(d=[])
    with pytest.raises(ConfigInvalid):
        cfg(estimators=["bogus"])
    with pytest.raises(ConfigInvalid):
        cfg(seeds=0)
    with pytest.raises(ConfigInvalid):
        cfg(rho=[1.0])
    with pytest.raises(ConfigInvalid):
        cfg(estimator_config={"nope": 1})
    with pytest.raises(ConfigInvalid):
        SweepConfig.from_dict({"grid": 1})


def test_config_json_round_trip(tmp_path):
    c = cfg(rho=[0.0, 0.5], transforms=["tanh", "cube"])
    (tmp_path / "c.json").write_text(json.dumps(c.to_dict()))
    assert SweepConfig.from_json(tmp_path / "c.json") == c


def test_zero_mi_cell_gives_three_records():
    out = run_sweep(cfg(n=[5000], seeds=3))
    assert len(out) == 3 and all(r.mi_true == 0 for r in out)
    assert [r.seed for r in out] == [0, 1, 2]


def test_cardinality():
    c = cfg(rho=[0.0, 0.5], d=[1, 2], estimators=["mime", "doe-gaussian"], seeds=10, estimator_config={**FAST, "max_epochs": 1})
    assert len(c.jobs()) == 80
    out = run_sweep(c)
    assert len(out) == 80 and all(r.ok for r in out)


def test_rerun_byte_identical_modulo_wall_time(tmp_path):
    c = cfg(estimators=["mime", "doe"])
    a = emit(run_sweep(c), "csv")
    b = emit(run_sweep(c), "csv")
    strip = lambda t: [line.rsplit(",", 2)[0] for line in t.splitlines()]  # noqa: E731
    assert strip(a) == strip(b)


def test_parallel_matches_serial():
    c = cfg(rho=[0.0, 0.3], estimators=["mime", "doe-gaussian"])
    serial = [r.mi_est for r in run_sweep(c, threads=1)]
    parallel = [r.mi_est for r in run_sweep(c, threads=2)]
    assert serial == parallel


def test_isolated_rerun_reproduces_record():
    c = cfg(rho=[0.0, 0.5], seeds=3)
    out = run_sweep(c)
    for cell, est, rep in [(1, "mime", 2), (0, "mime", 1)]:
        again = run_one(c, cell, est, rep)
        match = [r for r in out if r.rho == c.rho[cell] and r.seed == rep][0]
        assert again.mi_est == match.mi_est


def test_failures_become_rows():
    # 40 training pairs cannot fill a 128-row batch
    out = run_sweep(cfg(n=[50], estimators=["mime", "doe-gaussian"], seeds=1))
    assert out[0].status.startswith("error") and math.isnan(out[0].mi_est)
    assert out[1].ok


def test_mog_truth_has_stderr_and_is_shared():
    out = run_sweep(cfg(task="mog1", d=[1], mc_samples=2000, estimators=["doe-gaussian", "mime"], seeds=2))
    assert len({(r.mi_true, r.mi_true_stderr) for r in out}) == 1
    assert out[0].mi_true_stderr > 0 and out[0].transform == "none"


def test_resume_skips_completed(tmp_path):
    path = tmp_path / "r.csv"
    c = cfg(seeds=3)
    first = run_sweep(c, output=path)
    # drop the last row and mark one as failed, as an interrupted run would leave it
    rows = first[:2]
    rows[1] = EstimateRecord(**{**rows[1].__dict__, "status": "error: killed", "mi_est": float("nan")})
    emit(rows, "csv", path)
    seen = []
    again = run_sweep(c, output=path, resume=True, on_record=seen.append)
    assert [r.seed for r in seen] == [1, 2]
    assert again[0].wall_time_seconds == first[0].wall_time_seconds
    assert [r.mi_est for r in again] == [r.mi_est for r in first]
    assert len(read_records(path)) == 3


def test_summarize_single_and_triple():
    (a,) = summarize([rec(2.0)])
    assert a["mean"] == a["median"] == 2.0 and a["std"] == 0.0 and a["count"] == 1
    (b,) = summarize([rec(1.0, 0), rec(2.0, 1), rec(3.0, 2)])
    assert b["mean"] == 2.0 and b["median"] == 2.0


def test_summarize_error_columns_hand_computed():
    # truth 1.5, estimates 1.0, 1.2, 2.5: median 1.2 -> |1.2 - 1.5| = 0.3;
    # absolute errors 0.5, 0.3, 1.0 -> median 0.5
    (a,) = summarize([rec(1.0, 0), rec(1.2, 1), rec(2.5, 2)])
    assert a["abs_error_of_median"] == pytest.approx(0.3, abs=1e-15)
    assert a["median_abs_error"] == pytest.approx(0.5, abs=1e-15)
    assert a["std"] == pytest.approx(np.std([1.0, 1.2, 2.5]))


def test_summarize_groups_and_skips_errors():
    bad = EstimateRecord(**{**rec(9.0).__dict__, "status": "error: x"})
    out = summarize([rec(1.0), rec(2.0, est="nwj"), bad])
    assert [a["estimator"] for a in out] == ["mime", "nwj"] and out[0]["count"] == 1
    with pytest.raises(EmptyInput):
        summarize([])
    with pytest.raises(EmptyInput):
        summarize([bad])


def test_emit_empty_and_single(tmp_path):
    assert emit([], "csv", tmp_path / "e.csv") == ",".join(RECORD_FIELDS) + "\n"
    r = rec(0.1 + 0.2)
    text = emit([r], "csv", tmp_path / "one.csv")
    assert len(text.splitlines()) == 2
    assert read_records(tmp_path / "one.csv") == [r]


def test_emit_json_equals_csv(tmp_path):
    rs = [rec(1 / 3, 0), rec(float("nan"), 1)]
    rs[1].status = "error: boom"
    emit(rs, "csv", tmp_path / "r.csv")
    emit(rs, "json", tmp_path / "r.json")
    a, b = read_rows(tmp_path / "r.csv"), read_rows(tmp_path / "r.json")
    assert [list(x) for x in a] == [list(RECORD_FIELDS)] * 2 == [list(x) for x in b]
    for x, y in zip(a, b):
        for k in RECORD_FIELDS:
            assert x[k] == y[k] or (isinstance(x[k], float) and math.isnan(x[k]) and math.isnan(y[k]))


def test_emit_unwritable(tmp_path):
    with pytest.raises(OSError):
        emit([rec(1.0)], "csv", tmp_path / "missing" / "r.csv")


finite = st.floats(-1e100, 1e100, allow_nan=False)


@settings(max_examples=50)
@given(st.lists(st.tuples(finite, st.integers(0, 3), st.sampled_from(["mime", "nwj"])), min_size=1, max_size=12))
def test_round_trip_and_summary_purity(tmp_path_factory, rows):
    rs = [rec(v, seed=s, est=e) for v, s, e in rows]
    path = tmp_path_factory.mktemp("rt") / "r.csv"
    emit(rs, "csv", path)
    back = read_records(path)
    assert back == rs
    path_j = path.with_suffix(".json")
    emit(rs, "json", path_j)
    assert read_records(path_j) == rs
    assert summarize(back) == summarize(rs)
    agg = summarize(rs)
    emit(agg, "csv", path.with_suffix(".agg.csv"))
    assert read_rows(path.with_suffix(".agg.csv")) == agg
    assert list(agg[0]) == list(AGGREGATE_FIELDS)
