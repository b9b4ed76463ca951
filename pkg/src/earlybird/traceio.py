"""Trace files and synthetic trace generation.

File format (UTF-8, LF line endings)::

    #earlybird-trace v1 trials=T procs=P iters=I threads=N unit=ns
    #meta application=minife-like
    0,0,0,0,1000000000000,1000026300000
    ...

Rows are trial,process,iteration,thread,t_start,t_end. A column-name line
with exactly those names is tolerated on input but never written. The
header line is optional only when the caller supplies the shape.
Rows are written in (trial, process, iteration, thread) order.
"""
from __future__ import annotations

import enum
import re
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .trace import NS_PER_MS, DatasetShape, TraceDataset, ValidationError

HEADER_RE = re.compile(
    r"#earlybird-trace v1 trials=(\d+) procs=(\d+) iters=(\d+) threads=(\d+) unit=ns"
)
COLUMNS = "trial,process,iteration,thread,t_start,t_end"
IQR_PER_SIGMA = 2 * 0.6744897501960817


class TraceFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None, path=None):
        where = f"{path}:" if path else ""
        where += f"{line}: " if line is not None else (": " if path else "")
        super().__init__(where + message)
        self.line = line


def header_line(shape: DatasetShape) -> str:
    t, p, i, n = shape.as_tuple()
    return f"#earlybird-trace v1 trials={t} procs={p} iters={i} threads={n} unit=ns"


def load_trace(path, shape: DatasetShape | None = None, allow_partial: bool = False) -> TraceDataset:
    """Parse a trace file without validating it."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    lines = [ln[:-1] if ln.endswith("\r") else ln for ln in lines]

    file_shape = None
    metadata: dict[str, str] = {}
    pos = 0
    if lines and lines[0].startswith("#earlybird-trace"):
        m = HEADER_RE.fullmatch(lines[0].strip())
        if not m:
            raise TraceFormatError(f"malformed header {lines[0]!r}", 1, path)
        try:
            file_shape = DatasetShape(*(int(g) for g in m.groups()))
        except ValueError as e:
            raise TraceFormatError(str(e), 1, path) from None
        pos = 1
    while pos < len(lines) and lines[pos].startswith("#"):
        ln = lines[pos]
        if ln.startswith("#meta "):
            key, eq, value = ln[6:].partition("=")
            if not eq or not key or any(c.isspace() for c in key):
                raise TraceFormatError(f"malformed meta line {ln!r}", pos + 1, path)
            metadata[key] = value
        elif ln.startswith("#earlybird-trace"):
            raise TraceFormatError("header must be the first line", pos + 1, path)
        pos += 1

    if file_shape and shape and file_shape != shape:
        raise TraceFormatError(f"shape {shape} given but file header says {file_shape}", 1, path)
    shape = shape or file_shape
    if shape is None:
        raise TraceFormatError("no header line; supply the shape explicitly (--shape T,P,I,N)", 1, path)

    if pos < len(lines) and lines[pos].replace(" ", "") == COLUMNS:
        pos += 1
    first_row = pos
    body = lines[pos:]
    arr = _parse_rows(body)
    if arr is None:
        _locate_error(body, first_row, path)
    return TraceDataset(shape, *arr.T, metadata=metadata, allow_partial=allow_partial)


def _parse_rows(body: list[str]) -> np.ndarray | None:
    if not body:
        return np.zeros((0, 6), dtype=np.int64)
    fields = ",".join(body).split(",")
    if len(fields) != 6 * len(body):
        return None
    try:
        arr = np.array(fields).astype(np.int64)
    except (ValueError, OverflowError):
        return None
    return arr.reshape(-1, 6)


def _locate_error(body: list[str], offset: int, path):
    for j, ln in enumerate(body):
        parts = ln.split(",")
        if len(parts) != 6:
            raise TraceFormatError(f"expected 6 comma-separated fields, got {len(parts)}: {ln!r}",
                                   offset + j + 1, path)
        for p in parts:
            if not re.fullmatch(r"\s*-?\d+\s*", p):
                raise TraceFormatError(f"non-integer field {p!r}", offset + j + 1, path)
    raise TraceFormatError("unparseable trace body", None, path)


def read_trace(path, shape: DatasetShape | None = None, allow_partial: bool = False) -> TraceDataset:
    """Parse and validate; raises ValidationError on a dirty dataset."""
    ds = load_trace(path, shape, allow_partial)
    rep = ds.report
    if not rep.clean and not (allow_partial and rep.usable_partial):
        detail = []
        for name in ("duplicates", "ordering", "out_of_range", "missing"):
            items = getattr(rep, name)
            if items:
                shown = ", ".join(".".join(map(str, k)) for k in items[:5])
                detail.append(f"{name} ({len(items) if name != 'missing' else rep.n_missing}): {shown}")
        err = ValidationError(f"{path}: invalid trace: " + "; ".join(detail))
        err.report = rep
        raise err
    return ds


def write_trace(dataset: TraceDataset, path) -> None:
    rep = dataset.report
    if not rep.clean and not (dataset.allow_partial and rep.usable_partial):
        raise ValidationError(f"refusing to write an invalid dataset: {rep.summary()}")
    lines = [header_line(dataset.shape)]
    for k, v in dataset.metadata.items():
        k, v = str(k), str(v)
        if not k or "=" in k or any(c.isspace() for c in k) or "\n" in v:
            raise ValueError(f"metadata entry {k!r}={v!r} cannot be serialized")
        lines.append(f"#meta {k}={v}")
    order = dataset.canonical_order()
    cols = np.stack([c[order] for c in dataset._columns()], axis=1)
    lines.extend("%d,%d,%d,%d,%d,%d" % tuple(r) for r in cols.tolist())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


# ---------------------------------------------------------------------------
# synthetic traces


class ProfileClass(enum.Enum):
    TIGHT_UNIMODAL = "tight"
    LAGGARD = "laggard"
    WIDE_NORMAL = "wide"


@dataclass(frozen=True)
class GeneratorProfile:
    """Per-process-iteration arrival distribution, in milliseconds."""

    cls: ProfileClass
    median_ms: float
    iqr_ms: float
    laggard_prob: float = 0.0
    laggard_excess_ms: tuple[float, float] = (0.0, 0.0)
    seed: int = 0
    floor_ms: float | None = None  # default median/10

    def __post_init__(self):
        if not self.median_ms > 0:
            raise ValueError("median_ms must be > 0")
        if not self.iqr_ms >= 0:
            raise ValueError("iqr_ms must be >= 0")
        if not 0.0 <= self.laggard_prob <= 1.0:
            raise ValueError("laggard_prob must be in [0, 1]")
        lo, hi = self.laggard_excess_ms
        if not 0 <= lo <= hi:
            raise ValueError("laggard_excess_ms must satisfy 0 <= min <= max")
        if self.cls is not ProfileClass.LAGGARD and self.laggard_prob != 0:
            raise ValueError(f"laggard_prob must be 0 for class {self.cls.value}")
        if self.floor_ms is not None and not self.floor_ms > 0:
            raise ValueError("floor_ms must be > 0")

    @property
    def sigma_ms(self) -> float:
        return self.iqr_ms / IQR_PER_SIGMA

    @property
    def floor(self) -> float:
        return self.median_ms / 10 if self.floor_ms is None else self.floor_ms


def sample_durations(profile: GeneratorProfile, shape: DatasetShape) -> np.ndarray:
    """Ground-truth region durations (ns) with shape (T, P, I, N)."""
    rng = np.random.default_rng(profile.seed)
    dims = shape.as_tuple()
    d = rng.normal(profile.median_ms, profile.sigma_ms, size=dims)
    if profile.cls is ProfileClass.LAGGARD:
        hit = rng.random(dims[:3]) < profile.laggard_prob
        excess = rng.uniform(*profile.laggard_excess_ms, size=dims[:3])
        top = d.argmax(axis=3)
        t, p, i = np.nonzero(hit)
        d[t, p, i, top[hit]] = profile.median_ms + excess[hit]
    d = np.maximum(d, profile.floor)
    return np.rint(d * NS_PER_MS).astype(np.int64)


def assemble(durations: np.ndarray, seed: int, gap_ns: int = NS_PER_MS, metadata=None) -> TraceDataset:
    """Place durations on a per-(trial, process) monotonic clock.

    Iterations of one process run back to back with ``gap_ns`` between the
    last thread leaving and the next region entry.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7157A]))
    T, P, I, N = durations.shape
    base = rng.integers(10**12, 2 * 10**12, size=(T, P), dtype=np.int64)
    step = durations.max(axis=3) + gap_ns
    offsets = np.concatenate([np.zeros((T, P, 1), np.int64), np.cumsum(step, axis=2)[:, :, :-1]], axis=2)
    t_start = np.broadcast_to((base[:, :, None] + offsets)[..., None], durations.shape)
    return TraceDataset.from_grid(t_start, t_start + durations, metadata)


def generate(profile: GeneratorProfile, shape: DatasetShape, metadata=None) -> TraceDataset:
    meta = {"generator": f"{profile.cls.value} median_ms={profile.median_ms} iqr_ms={profile.iqr_ms} "
                         f"laggard_prob={profile.laggard_prob} seed={profile.seed}"}
    meta.update(metadata or {})
    return assemble(sample_durations(profile, shape), profile.seed, metadata=meta)


Phase = tuple[GeneratorProfile, "int | None"]


def generate_phased(phases: list[Phase], shape: DatasetShape, seed: int = 0, metadata=None) -> TraceDataset:
    """Concatenate profiles along the iteration axis.

    Each phase covers its iteration count; a count of None takes whatever is
    left. Phases past the end of the run are dropped.
    """
    blocks = []
    left = shape.n_iterations
    for prof, count in phases:
        if left == 0:
            break
        n = left if count is None else min(count, left)
        if n <= 0:
            continue
        sub = DatasetShape(shape.n_trials, shape.n_processes, n, shape.n_threads)
        blocks.append(sample_durations(prof, sub))
        left -= n
    if left:
        raise ValueError(f"phases cover only {shape.n_iterations - left} of {shape.n_iterations} iterations")
    return assemble(np.concatenate(blocks, axis=2), seed, metadata=metadata)


def _phase_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1, np.uint64)[0])


def named_profile(name: str, seed: int = 0) -> list[Phase]:
    """Built-in profiles shaped after the three proxy applications."""
    s = lambda k: _phase_seed(seed, k)  # noqa: E731
    if name == "minife-like":
        return [(GeneratorProfile(ProfileClass.LAGGARD, 26.30, 0.18, 0.224, (1.0, 5.0), s(0)), None)]
    if name == "minimd-like":
        # wide first phase kept under the 1 ms laggard rule: a normal base with
        # the observed 0.93 ms IQR would flag nearly every one of its groups
        return [
            (GeneratorProfile(ProfileClass.TIGHT_UNIMODAL, 25.5, 0.40, seed=s(0)), 19),
            (GeneratorProfile(ProfileClass.LAGGARD, 24.74, 0.15, 0.048, (1.5, 7.5), s(1)), None),
        ]
    if name == "miniqmc-like":
        return [(GeneratorProfile(ProfileClass.WIDE_NORMAL, 60.91, 9.05, seed=s(0)), None)]
    raise ValueError(f"unknown profile {name!r}; choose from {', '.join(NAMED_PROFILES)}")


NAMED_PROFILES = ("minife-like", "minimd-like", "miniqmc-like")

# iteration ranges matching the phases of each named profile
NAMED_SECTIONS = {"minimd-like": [(0, 19), (19, None)]}


def fit_profile(dataset: TraceDataset, cls: ProfileClass, threshold_ns: float = NS_PER_MS,
                seed: int = 0) -> GeneratorProfile:
    """Estimate a profile from per-process-iteration statistics.

    median = mean of group medians, iqr = mean group IQR; for the laggard
    class the laggard probability is the measured laggard fraction and the
    excess range spans the observed (max - median) of laggard groups.
    """
    from .metrics import group_metrics

    table = group_metrics(dataset, threshold_ns)
    med = float(table.median.mean()) / NS_PER_MS
    spread = float(table.iqr.mean()) / NS_PER_MS
    d = dataset.durations()
    if d.size and d.max() == d.min():
        warnings.warn("degenerate dataset: all samples equal", stacklevel=2)
        return GeneratorProfile(cls, med, 0.0, seed=seed)
    if cls is not ProfileClass.LAGGARD:
        return GeneratorProfile(cls, med, spread, seed=seed)
    lag = table.laggard
    if not lag.any():
        return GeneratorProfile(cls, med, spread, 0.0, (0.0, 0.0), seed)
    excess = (table.max[lag] - table.median[lag]) / NS_PER_MS
    return GeneratorProfile(cls, med, spread, float(lag.mean()),
                            (float(excess.min()), float(excess.max())), seed)


def with_seed(profile: GeneratorProfile, seed: int) -> GeneratorProfile:
    return replace(profile, seed=seed)
