"""Thread arrival trace model.

A trace records, for every (trial, process, iteration, thread), the monotonic
clock readings taken when a thread enters and leaves one parallel region.
Threads pass a barrier before the entry reading, so a thread's compute time
(``t_end - t_start``) doubles as its arrival offset within its process
iteration. Readings from different cores are never compared directly.

Samples are stored column-wise as int64 nanoseconds. Everything downstream
works on the dense ``(trials, processes, iterations, threads)`` duration grid
returned by :meth:`TraceDataset.grid`.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, NamedTuple

import numpy as np

NS_PER_MS = 1_000_000


class ValidationError(ValueError):
    """Raised when a dataset is used before it passes validation."""


@dataclass(frozen=True)
class ThreadSample:
    trial: int
    process: int
    iteration: int
    thread: int
    t_start: int
    t_end: int

    @property
    def key(self) -> tuple[int, int, int, int]:
        return (self.trial, self.process, self.iteration, self.thread)


def compute_time(sample: ThreadSample) -> int:
    """Elapsed nanoseconds spent in the region by one thread."""
    if sample.t_end < sample.t_start:
        raise ValidationError(
            f"t_end < t_start for sample {sample.key}: "
            f"{sample.t_end} < {sample.t_start}"
        )
    return sample.t_end - sample.t_start


@dataclass(frozen=True)
class DatasetShape:
    n_trials: int
    n_processes: int
    n_iterations: int
    n_threads: int

    def __post_init__(self):
        for name, value in self.as_dict().items():
            if int(value) < 1:
                raise ValueError(f"{name} must be >= 1, got {value}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.n_trials, self.n_processes, self.n_iterations, self.n_threads)

    def as_dict(self) -> dict[str, int]:
        return {
            "n_trials": self.n_trials,
            "n_processes": self.n_processes,
            "n_iterations": self.n_iterations,
            "n_threads": self.n_threads,
        }

    @property
    def size(self) -> int:
        t, p, i, n = self.as_tuple()
        return t * p * i * n

    @classmethod
    def parse(cls, text: str) -> "DatasetShape":
        """Parse ``"T,P,I,N"``."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError(f"shape must be T,P,I,N, got {text!r}")
        return cls(*(int(p) for p in parts))

    def __str__(self) -> str:
        return ",".join(str(v) for v in self.as_tuple())


class AggregationLevel(enum.Enum):
    APPLICATION = "application"
    APPLICATION_ITERATION = "application_iteration"
    PROCESS_ITERATION = "process_iteration"

    @classmethod
    def parse(cls, text: str) -> "AggregationLevel":
        aliases = {
            "app": cls.APPLICATION,
            "application": cls.APPLICATION,
            "iter": cls.APPLICATION_ITERATION,
            "app-iter": cls.APPLICATION_ITERATION,
            "application_iteration": cls.APPLICATION_ITERATION,
            "proc": cls.PROCESS_ITERATION,
            "proc-iter": cls.PROCESS_ITERATION,
            "process_iteration": cls.PROCESS_ITERATION,
        }
        try:
            return aliases[text.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown aggregation level {text!r}") from None


class GroupKey(NamedTuple):
    """Identifies one group; components coarser than the level are None."""

    level: AggregationLevel
    trial: int | None = None
    process: int | None = None
    iteration: int | None = None

    def __str__(self) -> str:
        if self.level is AggregationLevel.APPLICATION:
            return "app"
        if self.level is AggregationLevel.APPLICATION_ITERATION:
            return f"iter.{self.iteration}"
        return f"proc.{self.trial}.{self.process}.{self.iteration}"

    @classmethod
    def parse(cls, text: str) -> "GroupKey":
        parts = text.strip().split(".")
        try:
            if parts == ["app"]:
                return cls(AggregationLevel.APPLICATION)
            if parts[0] == "iter" and len(parts) == 2:
                return cls(AggregationLevel.APPLICATION_ITERATION, iteration=int(parts[1]))
            if parts[0] == "proc" and len(parts) == 4:
                t, p, i = (int(v) for v in parts[1:])
                return cls(AggregationLevel.PROCESS_ITERATION, t, p, i)
        except ValueError:
            pass
        raise ValueError(f"bad group key {text!r}")


@dataclass
class ValidationReport:
    missing: list[tuple[int, int, int, int]] = field(default_factory=list)
    duplicates: list[tuple[int, int, int, int]] = field(default_factory=list)
    ordering: list[tuple[int, int, int, int]] = field(default_factory=list)
    out_of_range: list[tuple[int, int, int, int]] = field(default_factory=list)
    n_missing: int = 0

    @property
    def clean(self) -> bool:
        return not (self.n_missing or self.duplicates or self.ordering or self.out_of_range)

    @property
    def usable_partial(self) -> bool:
        """True when the only defect is missing samples."""
        return not (self.duplicates or self.ordering or self.out_of_range)

    def lines(self) -> list[str]:
        out = [f"status: {'clean' if self.clean else 'dirty'}"]
        for name in ("missing", "duplicates", "ordering", "out_of_range"):
            items = getattr(self, name)
            count = self.n_missing if name == "missing" else len(items)
            out.append(f"{name}: {count}")
            out.extend(f"  {name} {'.'.join(map(str, k))}" for k in items)
        if self.n_missing > len(self.missing):
            out.append(f"  ... {self.n_missing - len(self.missing)} more missing")
        return out

    def summary(self) -> str:
        if self.clean:
            return "clean"
        return (
            f"{self.n_missing} missing, {len(self.duplicates)} duplicate, "
            f"{len(self.ordering)} ordering, {len(self.out_of_range)} out-of-range"
        )


# cap on listed missing tuples; the count is always exact
MAX_LISTED_MISSING = 10_000


@dataclass(frozen=True, eq=False)
class TraceDataset:
    """Column-oriented collection of thread samples.

    ``allow_partial`` admits datasets whose only defect is missing samples;
    incomplete process iterations are then dropped from every grouping.
    """

    shape: DatasetShape
    trial: np.ndarray
    process: np.ndarray
    iteration: np.ndarray
    thread: np.ndarray
    t_start: np.ndarray
    t_end: np.ndarray
    metadata: dict[str, str] = field(default_factory=dict)
    allow_partial: bool = False

    def __post_init__(self):
        cols = [np.asarray(c, dtype=np.int64) for c in self._columns()]
        n = len(cols[0])
        if any(len(c) != n for c in cols):
            raise ValueError("all columns must have the same length")
        for name, col in zip(("trial", "process", "iteration", "thread", "t_start", "t_end"), cols):
            col.setflags(write=False)
            object.__setattr__(self, name, col)

    def _columns(self):
        return (self.trial, self.process, self.iteration, self.thread, self.t_start, self.t_end)

    @classmethod
    def from_samples(cls, shape: DatasetShape, samples, metadata=None, allow_partial=False):
        rows = [s.key + (s.t_start, s.t_end) for s in samples]
        arr = np.array(rows, dtype=np.int64).reshape(-1, 6)
        return cls(shape, *arr.T, metadata=dict(metadata or {}), allow_partial=allow_partial)

    @classmethod
    def from_grid(cls, t_start: np.ndarray, t_end: np.ndarray, metadata=None):
        """Build a complete dataset from two ``(T, P, I, N)`` timestamp grids."""
        t_start = np.asarray(t_start, dtype=np.int64)
        t_end = np.asarray(t_end, dtype=np.int64)
        if t_start.ndim != 4 or t_start.shape != t_end.shape:
            raise ValueError("timestamp grids must both be 4-D with equal shape")
        shape = DatasetShape(*t_start.shape)
        idx = np.indices(t_start.shape).reshape(4, -1)
        return cls(shape, *idx, t_start.ravel(), t_end.ravel(), metadata=dict(metadata or {}))

    def __len__(self) -> int:
        return len(self.trial)

    def __iter__(self) -> Iterator[ThreadSample]:
        for row in zip(*(c.tolist() for c in self._columns())):
            yield ThreadSample(*row)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TraceDataset):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.metadata == other.metadata
            and all(np.array_equal(a, b) for a, b in zip(self._columns(), other._columns()))
        )

    def keys(self) -> np.ndarray:
        return np.stack([self.trial, self.process, self.iteration, self.thread], axis=1)

    def canonical_order(self) -> np.ndarray:
        """Permutation sorting samples by (trial, process, iteration, thread)."""
        return np.lexsort((self.thread, self.iteration, self.process, self.trial))

    @cached_property
    def report(self) -> ValidationReport:
        return validate(self)

    @cached_property
    def _grid(self) -> tuple[np.ndarray, np.ndarray]:
        rep = self.report
        if not rep.clean and not (self.allow_partial and rep.usable_partial):
            raise ValidationError(f"dataset failed validation: {rep.summary()}")
        dims = self.shape.as_tuple()
        durations = np.zeros(dims, dtype=np.int64)
        present = np.zeros(dims, dtype=bool)
        idx = (self.trial, self.process, self.iteration, self.thread)
        durations[idx] = self.t_end - self.t_start
        present[idx] = True
        complete = present.all(axis=3)
        durations.setflags(write=False)
        complete.setflags(write=False)
        return durations, complete

    def grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(durations, complete)``.

        ``durations`` has shape (T, P, I, N) in ns; ``complete`` has shape
        (T, P, I) and marks process iterations with every thread present.
        Raises ValidationError unless the dataset is usable.
        """
        return self._grid

    def durations(self) -> np.ndarray:
        return self._grid[0]

    @property
    def is_complete(self) -> bool:
        return bool(self._grid[1].all())


def validate(dataset: TraceDataset) -> ValidationReport:
    """Check completeness, uniqueness and t_end >= t_start; never raises."""
    rep = ValidationReport()
    dims = np.array(dataset.shape.as_tuple())
    keys = dataset.keys()
    if len(keys):
        bad_range = ((keys < 0) | (keys >= dims)).any(axis=1)
    else:
        bad_range = np.zeros(0, dtype=bool)
    rep.out_of_range = [tuple(k) for k in keys[bad_range].tolist()]
    rep.ordering = [tuple(k) for k in keys[dataset.t_end < dataset.t_start].tolist()]

    keys = keys[~bad_range]
    flat = np.ravel_multi_index(keys.T, tuple(dims)) if len(keys) else np.zeros(0, np.int64)
    counts = np.bincount(flat, minlength=dataset.shape.size)
    dup = np.flatnonzero(counts > 1)
    rep.duplicates = [tuple(int(v) for v in np.unravel_index(i, tuple(dims))) for i in dup]
    missing = np.flatnonzero(counts == 0)
    rep.n_missing = int(len(missing))
    shown = missing[:MAX_LISTED_MISSING]
    if len(shown):
        rep.missing = [tuple(k) for k in np.stack(np.unravel_index(shown, tuple(dims)), axis=1).tolist()]
    return rep


def group(dataset: TraceDataset, level: AggregationLevel) -> list[tuple[GroupKey, np.ndarray]]:
    """Partition compute times (ns) into groups at ``level``.

    Groups come out in key order. Inside a group samples are ordered by
    (trial, process, thread); the application group additionally orders by
    iteration before thread.
    """
    durations, complete = dataset.grid()
    T, P, I, N = durations.shape
    if level is AggregationLevel.APPLICATION:
        vals = durations[complete] if not complete.all() else durations.reshape(-1)
        return [(GroupKey(level), vals.reshape(-1))]
    if level is AggregationLevel.APPLICATION_ITERATION:
        out = []
        for i in range(I):
            block = durations[:, :, i, :][complete[:, :, i]]
            out.append((GroupKey(level, iteration=i), block.reshape(-1)))
        return out
    out = []
    for t in range(T):
        for p in range(P):
            for i in range(I):
                if complete[t, p, i]:
                    out.append((GroupKey(level, t, p, i), durations[t, p, i]))
    return out


def process_iteration_matrix(dataset: TraceDataset) -> tuple[list[GroupKey], np.ndarray]:
    """All complete process iterations as one ``(groups, threads)`` matrix."""
    durations, complete = dataset.grid()
    idx = np.argwhere(complete)
    keys = [GroupKey(AggregationLevel.PROCESS_ITERATION, int(t), int(p), int(i)) for t, p, i in idx]
    return keys, durations[complete]
