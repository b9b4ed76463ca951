import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from earlybird.metrics import laggard_fraction
from earlybird.stats import iqr_series, percentiles
from earlybird.trace import NS_PER_MS, AggregationLevel, DatasetShape, ValidationError
from earlybird.traceio import (
    GeneratorProfile, ProfileClass, TraceFormatError, fit_profile, generate, generate_phased,
    header_line, load_trace, named_profile, read_trace, write_trace,
)

from conftest import grid_dataset

FULL = DatasetShape(10, 8, 200, 48)


def test_read_four_line_file(tmp_path):
    f = tmp_path / "t.csv"
    f.write_text(header_line(DatasetShape(1, 1, 1, 4)) + "\n"
                 + "".join(f"0,0,0,{n},100,{200 + n}\n" for n in range(4)))
    ds = read_trace(f)
    assert len(ds) == 4
    assert list(ds.durations().ravel()) == [100, 101, 102, 103]


def test_column_name_line_tolerated(tmp_path):
    f = tmp_path / "t.csv"
    f.write_text("trial,process,iteration,thread,t_start,t_end\n0,0,0,0,5,9\n")
    assert read_trace(f, DatasetShape(1, 1, 1, 1)).durations().item() == 4


def test_duplicate_row_named(tmp_path):
    f = tmp_path / "t.csv"
    f.write_text(header_line(DatasetShape(1, 1, 1, 2)) + "\n0,0,0,0,1,2\n0,0,0,0,1,3\n0,0,0,1,1,2\n")
    with pytest.raises(ValidationError, match=r"duplicates \(1\): 0\.0\.0\.0") as ei:
        read_trace(f)
    assert ei.value.report.duplicates == [(0, 0, 0, 0)]


def test_headerless_needs_shape(tmp_path):
    f = tmp_path / "t.csv"
    f.write_text("0,0,0,0,1,2\n")
    with pytest.raises(TraceFormatError, match="--shape"):
        load_trace(f)
    assert len(read_trace(f, DatasetShape(1, 1, 1, 1))) == 1


def test_shape_mismatch(tmp_path):
    f = tmp_path / "t.csv"
    f.write_text(header_line(DatasetShape(1, 1, 1, 1)) + "\n0,0,0,0,1,2\n")
    with pytest.raises(TraceFormatError, match="header says"):
        load_trace(f, DatasetShape(1, 1, 1, 2))


def test_malformed_header_line_number(tmp_path):
    f = tmp_path / "t.csv"
    f.write_text("#earlybird-trace v1 trials=1 procs=x iters=1 threads=1 unit=ns\n0,0,0,0,1,2\n")
    with pytest.raises(TraceFormatError) as ei:
        load_trace(f)
    assert ei.value.line == 1


def test_bad_field_line_number(tmp_path):
    f = tmp_path / "t.csv"
    f.write_text(header_line(DatasetShape(1, 1, 1, 3)) + "\n#meta a=b\n0,0,0,0,1,2\n0,0,0,1,1,zz\n0,0,0,2,1,2\n")
    with pytest.raises(TraceFormatError, match="non-integer") as ei:
        load_trace(f)
    assert ei.value.line == 4


def test_empty_metadata_header(tmp_path):
    f = tmp_path / "t.csv"
    write_trace(grid_dataset(np.ones((1, 1, 1, 2))), f)
    assert f.read_text().split("\n")[0] == "#earlybird-trace v1 trials=1 procs=1 iters=1 threads=2 unit=ns"


def test_unwritable_path_names_path(tmp_path):
    target = tmp_path / "missing_dir" / "t.csv"
    with pytest.raises(OSError) as ei:
        write_trace(grid_dataset(np.ones((1, 1, 1, 2))), target)
    assert str(target) in str(ei.value)


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.tuples(*[st.integers(1, 3)] * 4), st.integers(0, 2**32),
       st.dictionaries(st.from_regex(r"[a-z_]{1,8}", fullmatch=True),
                       st.text(st.characters(blacklist_categories=("Cs", "Cc")), max_size=20), max_size=3))
def test_write_read_roundtrip(tmp_path, dims, seed, meta):
    rng = np.random.default_rng(seed)
    ds = grid_dataset(rng.integers(0, 10**9, size=dims), meta)
    f = tmp_path / "rt.csv"
    write_trace(ds, f)
    back = read_trace(f)
    assert back == ds
    g = tmp_path / "rt2.csv"
    write_trace(back, g)
    assert f.read_bytes() == g.read_bytes()


def test_generate_is_seed_deterministic():
    prof = GeneratorProfile(ProfileClass.LAGGARD, 26.3, 0.18, 0.224, (1, 5), seed=11)
    shape = DatasetShape(2, 2, 10, 16)
    assert generate(prof, shape) == generate(prof, shape)
    assert not generate(prof, shape) == generate(GeneratorProfile(ProfileClass.LAGGARD, 26.3, 0.18, 0.224,
                                                                  (1, 5), seed=12), shape)


def test_profile_invariants():
    with pytest.raises(ValueError):
        GeneratorProfile(ProfileClass.TIGHT_UNIMODAL, 26.3, 0.18, laggard_prob=0.1)
    with pytest.raises(ValueError):
        GeneratorProfile(ProfileClass.LAGGARD, 26.3, 0.18, 0.1, (5, 1))
    with pytest.raises(ValueError):
        GeneratorProfile(ProfileClass.WIDE_NORMAL, 0, 1)


def test_tight_median_full_shape():
    ds = generate(GeneratorProfile(ProfileClass.TIGHT_UNIMODAL, 26.30, 0.18, seed=1), FULL)
    med = float(percentiles(ds.durations().ravel(), 0.5)) / NS_PER_MS
    assert abs(med - 26.30) / 26.30 < 0.01


def test_laggard_profile_fraction():
    ds = generate(GeneratorProfile(ProfileClass.LAGGARD, 26.30, 0.18, 0.224, (1.0, 5.0), seed=2), FULL)
    assert abs(laggard_fraction(ds) - 0.224) <= 0.02


def test_fit_roundtrip_laggard():
    truth = GeneratorProfile(ProfileClass.LAGGARD, 26.30, 0.18, 0.224, (1.0, 5.0), seed=3)
    fit = fit_profile(generate(truth, FULL), ProfileClass.LAGGARD)
    assert abs(fit.median_ms - 26.30) / 26.30 < 0.01
    assert abs(fit.iqr_ms - 0.18) / 0.18 < 0.10
    assert abs(fit.laggard_prob - 0.224) < 0.02
    lo, hi = fit.laggard_excess_ms
    assert 0.9 <= lo and hi <= 5.1


def test_fit_roundtrip_miniqmc_within_5pct():
    truth = GeneratorProfile(ProfileClass.WIDE_NORMAL, 60.91, 9.05, seed=4)
    fit = fit_profile(generate(truth, FULL), ProfileClass.WIDE_NORMAL)
    assert abs(fit.median_ms - 60.91) / 60.91 < 0.05
    assert abs(fit.iqr_ms - 9.05) / 9.05 < 0.05


def test_fit_all_equal():
    ds = grid_dataset(np.full((1, 2, 3, 8), 5 * NS_PER_MS))
    with pytest.warns(UserWarning):
        fit = fit_profile(ds, ProfileClass.LAGGARD)
    assert fit.iqr_ms == 0 and fit.laggard_prob == 0


def test_wide_mean_iqr_within_5pct():
    ds = generate(GeneratorProfile(ProfileClass.WIDE_NORMAL, 60.91, 9.05, seed=5), FULL)
    mean_iqr, _ = iqr_series(ds, AggregationLevel.PROCESS_ITERATION)
    assert abs(mean_iqr / NS_PER_MS - 9.05) / 9.05 < 0.05


def test_phases_concatenate():
    shape = DatasetShape(1, 2, 30, 16)
    ds = generate_phased(named_profile("minimd-like", 0), shape)
    d = ds.durations() / NS_PER_MS
    assert d[:, :, :19].mean() > d[:, :, 19:].mean()
    with pytest.raises(ValueError, match="cover only"):
        generate_phased([(GeneratorProfile(ProfileClass.WIDE_NORMAL, 1, 0.1), 3)], shape)
