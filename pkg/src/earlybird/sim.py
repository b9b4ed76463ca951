"""Partitioned-message transmission under three initiation strategies.

One process iteration produces a message split into n equal partitions, one
per thread. Partition i becomes ready when thread i arrives. The link is a
single serialized FIFO channel: transfers run back to back in initiation
order (ties by thread index), never preempted. A transfer of b bytes
occupies the link for ``overhead + b / bandwidth``.

* bulk: every partition initiates at the join point max(arrivals).
* earlybird: each partition initiates at its own arrival.
* timeout_binned: at k*timeout (k >= 1) and at max(arrivals), all ready but
  unsent partitions go out as one batched transfer with a single overhead.

All times are float nanoseconds measured from region entry.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .stats import percentiles
from .trace import GroupKey, TraceDataset, process_iteration_matrix


class Strategy(enum.Enum):
    BULK = "bulk"
    EARLYBIRD = "earlybird"
    TIMEOUT_BINNED = "timeout_binned"


@dataclass(frozen=True)
class NetworkModel:
    bandwidth: float  # bytes per second
    per_transfer_overhead: float = 0.0  # ns
    link_discipline: str = "serialized_fifo"

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if not self.per_transfer_overhead >= 0:
            raise ValueError(f"overhead must be >= 0, got {self.per_transfer_overhead}")
        if self.link_discipline != "serialized_fifo":
            raise ValueError(f"unsupported link discipline {self.link_discipline!r}")

    def wire_ns(self, nbytes: float) -> float:
        return nbytes * 1e9 / self.bandwidth


@dataclass(frozen=True)
class MessageSpec:
    total_bytes: int
    n_partitions: int
    pad: bool = False

    def __post_init__(self):
        if self.n_partitions < 1:
            raise ValueError("need at least one partition")
        if self.total_bytes < 0:
            raise ValueError("total_bytes must be >= 0")
        rem = self.total_bytes % self.n_partitions
        if rem:
            if not self.pad:
                raise ValueError(
                    f"{self.total_bytes} bytes do not split into {self.n_partitions} equal partitions; "
                    "pass pad=True to round up"
                )
            object.__setattr__(self, "total_bytes", self.total_bytes + self.n_partitions - rem)

    @property
    def partition_bytes(self) -> int:
        return self.total_bytes // self.n_partitions

    @classmethod
    def from_partition(cls, partition_bytes: int, n_partitions: int) -> "MessageSpec":
        return cls(int(partition_bytes) * n_partitions, n_partitions)


@dataclass(frozen=True)
class PartitionTiming:
    thread: int
    ready: float
    initiate: float
    start: float
    finish: float


@dataclass(frozen=True)
class TransmissionReport:
    strategy: Strategy
    completion: float
    bulk_completion: float
    partitions: tuple[PartitionTiming, ...]
    n_transfers: int
    link_busy: float

    @property
    def overlap_gain(self) -> float:
        return self.bulk_completion - self.completion


def _check(arrivals, msg: MessageSpec) -> list[float]:
    a = [float(v) for v in np.asarray(arrivals).ravel()]
    if not a:
        raise ValueError("no arrivals")
    if len(a) != msg.n_partitions:
        raise ValueError(f"{len(a)} arrivals for {msg.n_partitions} partitions")
    return a


def _bulk_completion(a: list[float], msg: MessageSpec, net: NetworkModel) -> float:
    cost = net.per_transfer_overhead + net.wire_ns(msg.partition_bytes)
    t = max(a)
    for _ in a:
        t = t + cost
    return t


def simulate_bulk(arrivals, msg: MessageSpec, net: NetworkModel) -> TransmissionReport:
    a = _check(arrivals, msg)
    cost = net.per_transfer_overhead + net.wire_ns(msg.partition_bytes)
    join = max(a)
    link = join
    parts = []
    for i, ready in enumerate(a):
        start = link
        link = start + cost
        parts.append(PartitionTiming(i, ready, join, start, link))
    return TransmissionReport(Strategy.BULK, link, link, tuple(parts), len(a), len(a) * cost)


def simulate_earlybird(arrivals, msg: MessageSpec, net: NetworkModel) -> TransmissionReport:
    a = _check(arrivals, msg)
    cost = net.per_transfer_overhead + net.wire_ns(msg.partition_bytes)
    link = -math.inf
    parts = []
    for i in sorted(range(len(a)), key=lambda j: (a[j], j)):
        start = max(a[i], link)
        link = start + cost
        parts.append(PartitionTiming(i, a[i], a[i], start, link))
    parts.sort(key=lambda p: p.thread)
    return TransmissionReport(Strategy.EARLYBIRD, link, _bulk_completion(a, msg, net), tuple(parts),
                              len(a), len(a) * cost)


def flush_time(ready: float, timeout: float, last: float) -> float:
    """First flush at or after ``ready``: a positive multiple of timeout, capped at ``last``."""
    k = max(1, math.ceil(ready / timeout))
    if k * timeout < ready:
        k += 1
    return min(k * timeout, last)


def simulate_timeout_binned(arrivals, msg: MessageSpec, net: NetworkModel, timeout: float
                            ) -> TransmissionReport:
    if not timeout > 0:
        raise ValueError(f"timeout must be positive, got {timeout}")
    a = _check(arrivals, msg)
    last = max(a)
    flushes = [flush_time(r, timeout, last) for r in a]
    order = sorted(range(len(a)), key=lambda j: (flushes[j], j))
    wire = net.wire_ns(msg.partition_bytes)
    link = -math.inf
    busy = 0.0
    parts = []
    batches = 0
    pos = 0
    while pos < len(order):
        at = flushes[order[pos]]
        batch = []
        while pos < len(order) and flushes[order[pos]] == at:
            batch.append(order[pos])
            pos += 1
        start = max(at, link)
        # advance one partition at a time, like the other strategies, so
        # float rounding cannot break the ordering between them
        link = start + (net.per_transfer_overhead + wire)
        for _ in batch[1:]:
            link = link + wire
        busy += link - start
        batches += 1
        parts.extend(PartitionTiming(i, a[i], at, start, link) for i in batch)
    parts.sort(key=lambda p: p.thread)
    return TransmissionReport(Strategy.TIMEOUT_BINNED, link, _bulk_completion(a, msg, net), tuple(parts),
                              batches, busy)


def simulate(strategy: Strategy, arrivals, msg: MessageSpec, net: NetworkModel,
             timeout: float | None = None) -> TransmissionReport:
    if strategy is Strategy.BULK:
        return simulate_bulk(arrivals, msg, net)
    if strategy is Strategy.EARLYBIRD:
        return simulate_earlybird(arrivals, msg, net)
    if timeout is None:
        raise ValueError("timeout_binned needs a timeout")
    return simulate_timeout_binned(arrivals, msg, net, timeout)


# ---------------------------------------------------------------------------
# vectorized sweep over many groups


def _completions(mat: np.ndarray, strategy: Strategy, msg: MessageSpec, net: NetworkModel,
                 timeout: float | None) -> tuple[np.ndarray, np.ndarray]:
    """(completion, n_transfers) per row, same recurrences as the scalar path."""
    a = mat.astype(np.float64)
    g, n = a.shape
    o = net.per_transfer_overhead
    wire = net.wire_ns(msg.partition_bytes)
    cost = o + wire
    last = a.max(axis=1)
    if strategy is Strategy.BULK:
        t = last.copy()
        for _ in range(n):
            t = t + cost
        return t, np.full(g, n)
    if strategy is Strategy.EARLYBIRD:
        s = np.sort(a, axis=1)
        link = np.full(g, -np.inf)
        for k in range(n):
            link = np.maximum(s[:, k], link) + cost
        return link, np.full(g, n)
    k = np.maximum(1, np.ceil(a / timeout))
    k = np.where(k * timeout < a, k + 1, k)
    f = np.minimum(k * timeout, last[:, None])
    f = np.sort(f, axis=1)
    # a batch is a run of equal flush times: its first partition pays the
    # overhead, the rest only wire time
    link = np.full(g, -np.inf)
    batches = np.zeros(g, dtype=np.int64)
    for k in range(n):
        first = f[:, k] != f[:, k - 1] if k else np.ones(g, dtype=bool)
        link = np.maximum(f[:, k], link) + np.where(first, cost, wire)
        batches += first
    return link, batches


@dataclass
class OverlapSummary:
    strategy: Strategy
    n_groups: int
    mean_completion_ms: float
    mean_gain_ms: float
    gain_p05_ms: float
    gain_p50_ms: float
    gain_p95_ms: float
    min_gain_ms: float
    max_gain_ms: float
    positive_gain_fraction: float
    mean_transfers: float

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["strategy"] = self.strategy.value
        return d


@dataclass
class SweepResult:
    keys: list[GroupKey]
    arrivals: np.ndarray
    msg: MessageSpec
    net: NetworkModel
    timeout: float | None
    completion: dict[Strategy, np.ndarray] = field(default_factory=dict)
    n_transfers: dict[Strategy, np.ndarray] = field(default_factory=dict)
    summary: dict[Strategy, OverlapSummary] = field(default_factory=dict)

    def gain(self, strategy: Strategy) -> np.ndarray:
        return self.completion[Strategy.BULK] - self.completion[strategy]

    def report(self, index: int, strategy: Strategy) -> TransmissionReport:
        """Full per-partition report for one group, from the scalar simulator."""
        return simulate(strategy, self.arrivals[index], self.msg, self.net, self.timeout)


def _summarize(strategy: Strategy, completion: np.ndarray, gain: np.ndarray, transfers: np.ndarray
               ) -> OverlapSummary:
    q = percentiles(gain, [0.05, 0.5, 0.95]) / 1e6
    return OverlapSummary(
        strategy=strategy,
        n_groups=len(gain),
        mean_completion_ms=float(completion.mean()) / 1e6,
        mean_gain_ms=float(gain.mean()) / 1e6,
        gain_p05_ms=float(q[0]),
        gain_p50_ms=float(q[1]),
        gain_p95_ms=float(q[2]),
        min_gain_ms=float(gain.min()) / 1e6,
        max_gain_ms=float(gain.max()) / 1e6,
        positive_gain_fraction=float((gain > 0).mean()),
        mean_transfers=float(transfers.mean()),
    )


def sweep(dataset: TraceDataset, msg: MessageSpec | None, net: NetworkModel,
          strategies=tuple(Strategy), timeout: float | None = None, jobs: int = 1,
          partition_bytes: int | None = None) -> SweepResult:
    """Simulate every process iteration under each strategy.

    Either ``msg`` or ``partition_bytes`` must be given; the latter sizes the
    message from the dataset's thread count.
    """
    keys, mat = process_iteration_matrix(dataset)
    if msg is None:
        if partition_bytes is None:
            raise ValueError("need a MessageSpec or partition_bytes")
        msg = MessageSpec.from_partition(partition_bytes, mat.shape[1])
    if msg.n_partitions != mat.shape[1]:
        raise ValueError(f"message has {msg.n_partitions} partitions but groups have {mat.shape[1]} threads")
    strategies = list(dict.fromkeys([Strategy.BULK, *strategies]))
    if Strategy.TIMEOUT_BINNED in strategies and not (timeout and timeout > 0):
        raise ValueError("timeout_binned needs a positive timeout")
    res = SweepResult(keys, mat, msg, net, timeout)
    chunks = np.array_split(np.arange(len(keys)), max(1, min(jobs, len(keys) or 1)))
    for s in strategies:
        def run(idx, s=s):
            return _completions(mat[idx], s, msg, net, timeout)

        if jobs > 1:
            with ThreadPoolExecutor(jobs) as pool:
                parts = list(pool.map(run, chunks))
        else:
            parts = [run(idx) for idx in chunks]
        res.completion[s] = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0)
        res.n_transfers[s] = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0, int)
    for s in strategies:
        if len(keys):
            res.summary[s] = _summarize(s, res.completion[s], res.gain(s), res.n_transfers[s])
    return res
