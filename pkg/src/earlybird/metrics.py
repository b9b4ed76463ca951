"""Laggard detection and reclaimable idle time per process iteration.

For one process iteration with arrivals a_1..a_n (ns since region entry):

    reclaimable = sum_i (max(a) - a_i) = n * max(a) - sum(a)
    idle_ratio  = reclaimable / (n * max(a))        (0 when max(a) == 0)
    laggard     = max(a) - median(a) > threshold

Arrivals are integers, so reclaimable time is exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .stats import percentiles
from .trace import NS_PER_MS, GroupKey, TraceDataset, process_iteration_matrix

DEFAULT_THRESHOLD_NS = NS_PER_MS


@dataclass(frozen=True)
class LaggardThreshold:
    """Absolute (ns) or relative-to-group-median threshold."""

    value: float = DEFAULT_THRESHOLD_NS
    relative: bool = False

    @classmethod
    def parse(cls, text: str) -> "LaggardThreshold":
        from .units import parse_duration

        text = text.strip()
        if text.endswith("%"):
            return cls(float(text[:-1]) / 100.0, relative=True)
        return cls(parse_duration(text))

    def resolve(self, medians):
        """Threshold in ns for each group median."""
        return self.value * np.asarray(medians, dtype=float) if self.relative else self.value

    def __str__(self) -> str:
        return f"{self.value * 100:g}%" if self.relative else f"{self.value:g}ns"


def _as_group(arrivals) -> np.ndarray:
    a = np.asarray(arrivals)
    if a.ndim != 1 or a.size == 0:
        raise ValueError("a group must be a nonempty 1-D sequence of arrivals")
    return a


def laggard_classify(arrivals, threshold=DEFAULT_THRESHOLD_NS) -> bool:
    a = _as_group(arrivals)
    if a.size < 2:
        raise ValueError("laggard classification needs at least 2 threads")
    med = float(percentiles(a, 0.5))
    thr = threshold.resolve(med) if isinstance(threshold, LaggardThreshold) else threshold
    return bool(float(a.max()) - med > thr)


def reclaimable_time(arrivals):
    """Total thread idle time before the last arrival (same units as input)."""
    a = _as_group(arrivals)
    if np.issubdtype(a.dtype, np.integer):
        return int(a.size * int(a.max()) - int(a.sum(dtype=np.int64)))
    return float(a.size * a.max() - a.sum())


def idle_ratio(arrivals) -> float:
    a = _as_group(arrivals)
    top = a.max()
    if top < 0:
        raise ValueError("arrivals must be nonnegative")
    if top == 0:
        return 0.0
    return reclaimable_time(a) / (a.size * float(top))


@dataclass(frozen=True)
class GroupMetrics:
    key: GroupKey
    median: float
    max: int
    laggard: bool
    reclaimable: int
    idle_ratio: float
    iqr: float


@dataclass
class GroupMetricsTable:
    """Vectorized GroupMetrics for every complete process iteration."""

    keys: list[GroupKey]
    median: np.ndarray
    max: np.ndarray
    laggard: np.ndarray
    reclaimable: np.ndarray
    idle_ratio: np.ndarray
    iqr: np.ndarray

    def __len__(self) -> int:
        return len(self.keys)

    def __getitem__(self, i: int) -> GroupMetrics:
        return GroupMetrics(self.keys[i], float(self.median[i]), int(self.max[i]), bool(self.laggard[i]),
                            int(self.reclaimable[i]), float(self.idle_ratio[i]), float(self.iqr[i]))

    def select(self, mask: np.ndarray) -> "GroupMetricsTable":
        idx = np.flatnonzero(mask)
        return GroupMetricsTable([self.keys[i] for i in idx], self.median[idx], self.max[idx],
                                 self.laggard[idx], self.reclaimable[idx], self.idle_ratio[idx],
                                 self.iqr[idx])


def group_metrics(dataset: TraceDataset, threshold: LaggardThreshold | float = DEFAULT_THRESHOLD_NS
                  ) -> GroupMetricsTable:
    if not isinstance(threshold, LaggardThreshold):
        threshold = LaggardThreshold(float(threshold))
    keys, mat = process_iteration_matrix(dataset)
    n = mat.shape[1]
    if n < 2:
        raise ValueError("laggard classification needs at least 2 threads per group")
    q = percentiles(mat, [0.25, 0.5, 0.75])
    med = q[:, 1]
    top = mat.max(axis=1)
    recl = n * top - mat.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(top > 0, recl / (n * top.astype(float)), 0.0)
    lag = (top - med) > threshold.resolve(med)
    return GroupMetricsTable(keys, med, top, lag, recl, ratio, q[:, 2] - q[:, 0])


def laggard_fraction(dataset: TraceDataset, threshold: LaggardThreshold | float = DEFAULT_THRESHOLD_NS) -> float:
    return float(group_metrics(dataset, threshold).laggard.mean())


@dataclass
class SectionSummary:
    """Aggregates over a set of process iterations; durations in ms."""

    label: str
    n_groups: int
    mean_median_ms: float
    global_median_ms: float
    laggard_fraction: float
    avg_reclaimable_ms: float
    mean_idle_ratio: float
    mean_span_idle_ratio: float
    mean_iqr_ms: float
    max_iqr_ms: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class MetricsSummary:
    threshold: str
    overall: SectionSummary
    sections: list[SectionSummary] = field(default_factory=list)

    # convenience mirrors of the overall block
    @property
    def mean_median_ms(self) -> float:
        return self.overall.mean_median_ms

    @property
    def laggard_fraction(self) -> float:
        return self.overall.laggard_fraction

    @property
    def avg_reclaimable_ms(self) -> float:
        return self.overall.avg_reclaimable_ms

    @property
    def mean_idle_ratio(self) -> float:
        return self.overall.mean_idle_ratio

    def as_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "overall": self.overall.as_dict(),
            "sections": [s.as_dict() for s in self.sections],
        }


def parse_sections(text: str | None) -> list[tuple[int, int]]:
    """``"0..19,19..200"`` -> [(0, 19), (19, 200)]; half-open iteration ranges."""
    if not text:
        return []
    out = []
    for part in text.split(","):
        lo, sep, hi = part.strip().partition("..")
        if not sep:
            raise ValueError(f"section must look like a..b, got {part!r}")
        lo, hi = int(lo), int(hi)
        if not 0 <= lo < hi:
            raise ValueError(f"empty or negative section {part!r}")
        out.append((lo, hi))
    return out


def _section(label: str, table: GroupMetricsTable, mat: np.ndarray) -> SectionSummary:
    if len(table) == 0:
        nan = float("nan")
        return SectionSummary(label, 0, nan, nan, nan, nan, nan, nan, nan, nan)
    n = mat.shape[1]
    span = mat.max(axis=1) - mat.min(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        span_ratio = np.where(span > 0, table.reclaimable / (n * span.astype(float)), 0.0)
    return SectionSummary(
        label=label,
        n_groups=len(table),
        mean_median_ms=float(table.median.mean()) / NS_PER_MS,
        global_median_ms=float(percentiles(mat.ravel(), 0.5)) / NS_PER_MS,
        laggard_fraction=float(table.laggard.mean()),
        avg_reclaimable_ms=float(table.reclaimable.mean()) / NS_PER_MS,
        mean_idle_ratio=float(table.idle_ratio.mean()),
        mean_span_idle_ratio=float(span_ratio.mean()),
        mean_iqr_ms=float(table.iqr.mean()) / NS_PER_MS,
        max_iqr_ms=float(table.iqr.max()) / NS_PER_MS,
    )


def summarize(dataset: TraceDataset, threshold: LaggardThreshold | float = DEFAULT_THRESHOLD_NS,
              sections: list[tuple[int, int]] | None = None) -> MetricsSummary:
    """Average the per-group metrics over all process iterations.

    ``mean_span_idle_ratio`` is an extra view that measures idle time against
    the first-to-last arrival span instead of the region length.
    """
    if not isinstance(threshold, LaggardThreshold):
        threshold = LaggardThreshold(float(threshold))
    table = group_metrics(dataset, threshold)
    _, mat = process_iteration_matrix(dataset)
    overall = _section("all", table, mat)
    out = []
    iters = np.array([k.iteration for k in table.keys])
    for lo, hi in sections or []:
        mask = (iters >= lo) & (iters < hi)
        out.append(_section(f"{lo}..{hi}", table.select(mask), mat[mask]))
    return MetricsSummary(str(threshold), overall, out)
