import json
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from earlybird import stats
from earlybird.stats import NormalityTest, Verdict
from earlybird.trace import NS_PER_MS, AggregationLevel, DatasetShape
from earlybird.traceio import GeneratorProfile, ProfileClass, generate, generate_phased

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "scripts"))
from make_golden import make_input  # noqa: E402

GOLDEN = json.loads((Path(__file__).parent / "golden" / "normality_oracle.json").read_text())["cases"]


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


@pytest.mark.parametrize("n", [20, 48, 500, 3840])
def test_golden_statistics(n):
    for case in (c for c in GOLDEN if c["n"] == n):
        x = make_input(case["seed"], n, case["dist"])
        assert float(x.sum()) == case["checksum"]
        k2, _ = stats.dagostino_batch(x)
        w, wp = stats.shapiro_wilk_batch(x)
        a2 = stats.anderson_darling_batch(x)
        assert _rel(k2[0], case["k2"]) < 1e-6
        assert _rel(w[0], case["w"]) < 1e-6
        assert _rel(a2[0], case["a2"]) < 1e-6
        assert abs(wp[0] - case["w_p"]) < 1e-4


def test_dagostino_normal_and_exponential():
    rng = np.random.default_rng(123)
    x = rng.normal(size=1000)
    r = stats.dagostino_k2(x)
    ref = sps.normaltest(x)
    assert _rel(r.statistic, ref.statistic) < 1e-9 and _rel(r.p_value, ref.pvalue) < 1e-9
    assert r.verdict is Verdict.FAIL_TO_REJECT
    e = rng.exponential(size=1000)
    assert stats.dagostino_k2(e).verdict is Verdict.REJECT
    assert sps.normaltest(e).pvalue < 0.05


def test_dagostino_degenerate():
    with pytest.raises(stats.DegenerateSample):
        stats.dagostino_k2([3.0] * 30)


def test_dagostino_small_n_warns():
    with pytest.warns(UserWarning):
        r = stats.dagostino_k2(np.random.default_rng(0).normal(size=12))
    assert r.warning


def test_shapiro_n48_matches_reference():
    x = np.random.default_rng(48).normal(26.3, 0.1, 48)
    r = stats.shapiro_wilk(x)
    ref = sps.shapiro(x)
    assert _rel(r.statistic, ref.statistic) < 1e-6
    assert _rel(r.p_value, ref.pvalue) < 1e-6


def test_shapiro_linear_sample_follows_oracle():
    # evenly spaced 1..48 sits just above the 5% cut under the reference (p ~ 0.0675)
    x = np.arange(1, 49, dtype=float)
    r = stats.shapiro_wilk(x)
    ref = sps.shapiro(x)
    assert _rel(r.statistic, ref.statistic) < 1e-6
    assert _rel(r.p_value, ref.pvalue) < 1e-6
    assert r.rejected == (ref.pvalue < 0.05)
    assert r.verdict is Verdict.FAIL_TO_REJECT
    assert stats.shapiro_wilk(x, alpha=0.10).verdict is Verdict.REJECT


@pytest.mark.parametrize("n", [2, 5001])
def test_shapiro_range(n):
    with pytest.raises(ValueError, match="range|n"):
        stats.shapiro_wilk(np.random.default_rng(n).normal(size=n))


def test_shapiro_small_n_pvalues():
    for n in (3, 4, 7, 11, 12):
        x = np.random.default_rng(n).normal(size=n)
        r = stats.shapiro_wilk(x)
        ref = sps.shapiro(x)
        assert _rel(r.statistic, ref.statistic) < 1e-6
        assert abs(r.p_value - ref.pvalue) < 1e-6


def test_anderson_n48_matches_reference():
    x = np.random.default_rng(4848).normal(size=48)
    r = stats.anderson_darling(x)
    ref = sps.anderson(x)
    assert _rel(r.statistic, ref.statistic) < 1e-6
    assert r.p_value is None and r.p_approx is not None
    assert r.critical_value == pytest.approx(ref.critical_values[2], abs=5e-4)
    assert r.verdict is Verdict.FAIL_TO_REJECT


def test_anderson_bimodal_rejected():
    rng = np.random.default_rng(99)
    x = np.concatenate([rng.normal(0, 1, 24), rng.normal(8, 1, 24)])
    r = stats.anderson_darling(x)
    assert r.statistic > sps.anderson(x).critical_values[2]
    assert r.verdict is Verdict.REJECT


def test_anderson_precondition():
    with pytest.raises(ValueError):
        stats.anderson_darling([1.0, 2, 3, 4, 5])
    with pytest.raises(ValueError):
        stats.anderson_critical(48, 0.2)


@settings(max_examples=50, deadline=None)
@given(st.integers(8, 300), st.integers(0, 2**32))
def test_verdict_rule(n, seed):
    x = np.random.default_rng(seed).standard_t(3, n)
    for r in (stats.dagostino_k2(x, 0.05) if n >= 20 else None, stats.anderson_darling(x)):
        if r is None:
            continue
        if r.p_value is not None:
            assert 0 <= r.p_value <= 1
            assert r.rejected == (r.p_value < r.alpha)
        else:
            assert r.rejected == (r.statistic > r.critical_value)


def test_exponential_power_n48():
    rng = np.random.default_rng(2024)
    rows = rng.exponential(size=(500, 48))
    res = stats.run_tests_batch(rows, 0.05)
    for t in NormalityTest:
        assert res[t].reject.mean() >= 0.90, t


def test_summary_tight_process_level():
    ds = generate(GeneratorProfile(ProfileClass.TIGHT_UNIMODAL, 26.3, 0.18, seed=5), DatasetShape(2, 4, 100, 48))
    table = stats.normality_summary(ds, AggregationLevel.PROCESS_ITERATION)
    for t in NormalityTest:
        assert 0.90 <= table.pass_fraction(t) <= 0.99, (t, table.pass_fraction(t))


def test_summary_contaminated_groups_fail():
    prof = GeneratorProfile(ProfileClass.LAGGARD, 26.3, 0.18, 1.0, (5.0, 10.0), seed=6)
    table = stats.normality_summary(generate(prof, DatasetShape(1, 4, 50, 48)), AggregationLevel.PROCESS_ITERATION)
    for t in NormalityTest:
        assert table.pass_fraction(t) < 0.10


def test_summary_bimodal_application_rejects():
    phases = [(GeneratorProfile(ProfileClass.TIGHT_UNIMODAL, 20.0, 0.2, seed=1), 10),
              (GeneratorProfile(ProfileClass.TIGHT_UNIMODAL, 30.0, 0.2, seed=2), None)]
    ds = generate_phased(phases, DatasetShape(1, 2, 20, 48))
    table = stats.normality_summary(ds, AggregationLevel.APPLICATION)
    for t in NormalityTest:
        assert table.results[t].reject[0]


def test_summary_subsamples_large_groups():
    ds = generate(GeneratorProfile(ProfileClass.WIDE_NORMAL, 60.0, 9.0, seed=7), DatasetShape(2, 4, 20, 48))
    t1 = stats.normality_summary(ds, AggregationLevel.APPLICATION, seed=3)
    t2 = stats.normality_summary(ds, AggregationLevel.APPLICATION, seed=3)
    assert t1.notes and "5000" in t1.notes[0]
    sw = NormalityTest.SHAPIRO_WILK
    assert t1.results[sw].statistic[0] == t2.results[sw].statistic[0]


def test_summary_skips_degenerate_groups():
    from conftest import grid_dataset

    d = np.random.default_rng(0).integers(10**6, 2 * 10**6, size=(1, 1, 3, 16))
    d[0, 0, 1] = 5
    table = stats.normality_summary(grid_dataset(d), AggregationLevel.PROCESS_ITERATION)
    for t in NormalityTest:
        assert table.skipped(t) == 1 and table.evaluated(t) == 2
    assert any("zero-variance" in n for n in table.notes)


def test_percentile_examples():
    assert stats.percentiles([1, 2, 3, 4, 5], 0.5) == 3
    assert stats.percentiles([1, 2, 3, 4], 0.5) == 2.5


def _brute_percentile(xs, p):
    s = sorted(xs)
    h = (len(s) - 1) * p
    lo = int(h // 1)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (s[hi] - s[lo]) * (h - lo)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 10**9), min_size=1, max_size=200))
def test_percentiles_match_bruteforce(xs):
    ps = [0.05, 0.25, 0.5, 0.75, 0.95]
    got = stats.percentiles(xs, ps)
    assert list(got) == [_brute_percentile(xs, p) for p in ps]
    assert np.all(np.diff(got) >= 0)
    assert np.allclose(got, np.percentile(xs, [5, 25, 50, 75, 95]), rtol=1e-12, atol=1e-6)


def test_iqr_examples():
    assert stats.iqr([1, 2, 3, 4, 5, 6, 7, 8]) == 3.5
    assert stats.iqr([4, 4, 4, 4]) == 0


def test_histogram_example():
    h = stats.histogram(np.array([0, 5, 10, 15]) * 1000, 10_000)
    assert h.bins == [(0, 2), (10_000, 2)]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-10**6, 10**6), min_size=1, max_size=300), st.integers(1, 10**5))
def test_histogram_conservation(xs, width):
    h = stats.histogram(np.array(xs, dtype=np.int64), width)
    assert h.total == len(xs)
    for x in xs:
        hits = [lo for lo, c in h.bins if lo <= x < lo + width]
        assert len(hits) == 1
    assert h.bins[0][1] > 0 and h.bins[-1][1] > 0


def test_histogram_miniqmc_mode():
    ds = generate(GeneratorProfile(ProfileClass.WIDE_NORMAL, 60.91, 9.05, seed=8), DatasetShape(10, 8, 200, 48))
    lo, _ = stats.histogram(ds.durations().ravel(), NS_PER_MS).mode()
    assert abs(lo / NS_PER_MS + 0.5 - 60.91) <= 1.5
