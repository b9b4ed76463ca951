import csv
import json

import numpy as np
import pytest

from earlybird.cli import main
from earlybird.trace import NS_PER_MS as MS
from earlybird.traceio import header_line, write_trace
from earlybird.trace import DatasetShape

from conftest import grid_dataset


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def tiny_trace(tmp_path):
    rng = np.random.default_rng(0)
    d = rng.normal(26.3 * MS, 0.2 * MS, size=(1, 2, 5, 16)).astype(np.int64)
    path = tmp_path / "tiny.csv"
    write_trace(grid_dataset(d), path)
    return path


def test_validate_clean(tiny_trace, tmp_path):
    assert main(["validate", "--input", str(tiny_trace), "--out-dir", str(tmp_path / "v")]) == 0
    assert (tmp_path / "v" / "validation.txt").read_text().startswith("status: clean\n")


def test_validate_missing_rows(tiny_trace, tmp_path):
    lines = tiny_trace.read_text().splitlines()
    tiny_trace.write_text("\n".join(lines[:-2]) + "\n")
    out = tmp_path / "v"
    assert main(["validate", "--input", str(tiny_trace), "--out-dir", str(out)]) == 1
    text = (out / "validation.txt").read_text()
    assert "missing: 2\n  missing 0.1.4.14\n  missing 0.1.4.15\n" in text
    assert main(["validate", "--input", str(tiny_trace), "--allow-partial", "--out-dir", str(out)]) == 0


def test_malformed_header_reports_line(tmp_path, capsys):
    f = tmp_path / "bad.csv"
    f.write_text("#earlybird-trace v1 trials=1 procs=1 iters=1 threads=two unit=ns\n")
    assert main(["metrics", "--input", str(f), "--out-dir", str(tmp_path)]) == 1
    assert "bad.csv:1:" in capsys.readouterr().err


def test_usage_errors(tiny_trace, tmp_path):
    assert main([]) == 2
    assert main(["metrics"]) == 2
    assert main(["metrics", "--input", str(tiny_trace), "--laggard-threshold", "soon"]) == 2
    assert main(["synth", "--out-dir", str(tmp_path)]) == 2
    assert main(["simulate", "--input", str(tiny_trace), "--strategies", "warp"]) == 2


def test_analyze_outputs(tiny_trace, tmp_path):
    out = tmp_path / "a"
    assert main(["analyze", "--input", str(tiny_trace), "--out-dir", str(out), "--hist-group", "iter.2"]) == 0
    pct = _rows(out / "percentiles.csv")
    assert len(pct) == 5 and list(pct[0]) == ["iteration", "p05", "p25", "p50", "p75", "p95"]
    for level in ("application", "application_iteration", "process_iteration"):
        summary = _rows(out / f"normality_{level}.csv")
        assert [r["test"] for r in summary] == ["dagostino", "shapiro_wilk", "anderson_darling"]
    assert len(_rows(out / "normality_process_iteration_groups.csv")) == 10
    hist = _rows(out / "hist_app_10us.csv")
    assert sum(int(r["count"]) for r in hist) == 160
    assert sum(int(r["count"]) for r in _rows(out / "hist_iter.2_10us.csv")) == 32
    assert sum(int(r["count"]) for r in _rows(out / "hist_proc.0.0.0_50us.csv")) == 16


def test_metrics_constant_groups(tmp_path):
    d = np.broadcast_to(np.array([1, 2, 3]) * MS, (1, 2, 4, 3))
    trace = tmp_path / "c.csv"
    write_trace(grid_dataset(d), trace)
    assert main(["metrics", "--input", str(trace), "--out-dir", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "metrics_summary.json").read_text())
    assert summary["overall"]["avg_reclaimable_ms"] == 3
    assert summary["sections"] == []
    assert len(_rows(tmp_path / "group_metrics.csv")) == 8


def test_simulate_worked_example(tmp_path):
    trace = tmp_path / "two.csv"
    trace.write_text(header_line(DatasetShape(1, 1, 1, 2)) + f"\n0,0,0,0,0,0\n0,0,0,1,0,{10 * MS}\n")
    out = tmp_path / "s"
    args = ["simulate", "--input", str(trace), "--out-dir", str(out), "--bandwidth", "1GB/s",
            "--overhead", "0", "--partition-bytes", "5000000", "--strategies", "bulk,earlybird"]
    assert main(args) == 0
    rows = {r["strategy"]: r for r in _rows(out / "transmissions.csv")}
    assert float(rows["bulk"]["completion_ms"]) == 20
    assert float(rows["earlybird"]["completion_ms"]) == 15
    assert float(rows["earlybird"]["overlap_gain_ms"]) == 5


def test_simulate_zero_overhead_dominance(tiny_trace, tmp_path):
    out = tmp_path / "s"
    assert main(["simulate", "--input", str(tiny_trace), "--out-dir", str(out), "--overhead", "0"]) == 0
    by_key = {}
    for r in _rows(out / "transmissions.csv"):
        by_key.setdefault(r["key"], {})[r["strategy"]] = float(r["completion_ms"])
    for c in by_key.values():
        assert c["earlybird"] <= c["timeout_binned"] <= c["bulk"]


def test_config_file_flags_win(tiny_trace, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# comment\ninput={tiny_trace}\nlaggard-threshold=1ns\nsections=0..2\n")
    assert main(["metrics", "--config", str(cfg), "--out-dir", str(tmp_path / "a")]) == 0
    a = json.loads((tmp_path / "a" / "metrics_summary.json").read_text())
    assert a["threshold"] == "1ns" and a["overall"]["laggard_fraction"] == 1.0
    assert [s["label"] for s in a["sections"]] == ["0..2"]
    assert main(["metrics", "--config", str(cfg), "--laggard-threshold", "1ms",
                 "--out-dir", str(tmp_path / "b")]) == 0
    b = json.loads((tmp_path / "b" / "metrics_summary.json").read_text())
    assert b["threshold"] == "1e+06ns"
    cfg.write_text("bogus=1\n")
    assert main(["metrics", "--config", str(cfg)]) == 2


def test_synth_custom_phases(tmp_path):
    out = tmp_path / "t.csv"
    args = ["synth", "--shape", "1,2,10,8", "--phase", "4:tight:20:0.1",
            "--phase", "*:laggard:30:0.1:0.5:2-3", "--output", str(out), "--seed", "3"]
    assert main(args) == 0
    assert out.read_text().startswith("#earlybird-trace v1 trials=1 procs=2 iters=10 threads=8 unit=ns\n")
    assert main(["synth", "--phase", "4:nope:20:0.1", "--output", str(out)]) == 2
