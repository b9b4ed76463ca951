import numpy as np
import pytest

from earlybird.trace import NS_PER_MS, DatasetShape, TraceDataset
from earlybird.traceio import GeneratorProfile, ProfileClass, generate

_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance_log():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(label: str, ok: bool, detail: str = ""):
        line = f"{'PASS' if ok else 'FAIL'}  {label}" + (f"  ({detail})" if detail else "")
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)


def grid_dataset(durations_ns, metadata=None) -> TraceDataset:
    """Dataset whose region entries are all at a fixed base per process iteration."""
    d = np.asarray(durations_ns, dtype=np.int64)
    base = 1_000_000_000 + np.arange(np.prod(d.shape[:3]), dtype=np.int64).reshape(d.shape[:3]) * 10**9
    start = np.broadcast_to(base[..., None], d.shape)
    return TraceDataset.from_grid(start, start + d, metadata)


@pytest.fixture
def small_tight():
    prof = GeneratorProfile(ProfileClass.TIGHT_UNIMODAL, 26.3, 0.18, seed=7)
    return generate(prof, DatasetShape(2, 2, 6, 48))


@pytest.fixture
def ms():
    return NS_PER_MS
