"""Normality tests, percentiles and histograms for arrival-time groups.

The three tests are implemented here directly over the last axis of a 2-D
array so a whole aggregation level (e.g. 16 000 groups of 48 threads) is
evaluated in one vectorized pass.

* D'Agostino-Pearson K^2: skewness and kurtosis z-scores combined, p from
  chi-squared with 2 degrees of freedom.
* Shapiro-Wilk W with Royston's AS R94 coefficient and p-value
  approximations (valid for 3 <= n <= 5000).
* Anderson-Darling A^2 against a normal with estimated mean and variance;
  verdict from Stephens' critical values, adjusted for n.
"""
from __future__ import annotations

import enum
import warnings
import zlib
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special

from .trace import AggregationLevel, GroupKey, TraceDataset, group

SW_MAX_N = 5000

# Stephens' case-3 critical values (mean and variance estimated), keyed by alpha
AD_CRITICAL = {
    0.15: 0.576,
    0.10: 0.656,
    0.05: 0.787,
    0.025: 0.918,
    0.01: 1.092,
}


class DegenerateSample(ValueError):
    """Zero-variance sample; normality is undefined."""


class NormalityTest(enum.Enum):
    DAGOSTINO = "dagostino"
    SHAPIRO_WILK = "shapiro_wilk"
    ANDERSON_DARLING = "anderson_darling"


class Verdict(enum.Enum):
    REJECT = "reject_normality"
    FAIL_TO_REJECT = "fail_to_reject"


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # keep pytest from collecting this

    test: NormalityTest
    statistic: float
    p_value: float | None
    alpha: float
    verdict: Verdict
    n: int
    critical_value: float | None = None
    p_approx: float | None = None
    warning: str | None = None

    @property
    def rejected(self) -> bool:
        return self.verdict is Verdict.REJECT


# ---------------------------------------------------------------------------
# batch kernels: rows are groups, all rows share n


def _as_rows(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ValueError("expected a 1-D sample or a 2-D batch of samples")
    return a


def _degenerate(rows: np.ndarray) -> np.ndarray:
    return rows.max(axis=1) == rows.min(axis=1)


def dagostino_batch(x) -> tuple[np.ndarray, np.ndarray]:
    """K^2 statistic and p-value per row. Requires n >= 8."""
    rows = _as_rows(x)
    n = rows.shape[1]
    if n < 8:
        raise ValueError(f"D'Agostino test needs n >= 8, got {n}")
    d = rows - rows.mean(axis=1, keepdims=True)
    m2 = (d**2).mean(axis=1)
    m3 = (d**3).mean(axis=1)
    m4 = (d**4).mean(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        g1 = m3 / m2**1.5
        b2 = m4 / m2**2

    # skewness z-score
    y = g1 * np.sqrt((n + 1.0) * (n + 3) / (6.0 * (n - 2)))
    beta2 = (
        3.0 * (n * n + 27 * n - 70) * (n + 1) * (n + 3)
        / ((n - 2.0) * (n + 5) * (n + 7) * (n + 9))
    )
    w2 = -1 + np.sqrt(2 * (beta2 - 1))
    delta = 1 / np.sqrt(0.5 * np.log(w2))
    alpha = np.sqrt(2.0 / (w2 - 1))
    y = np.where(y == 0, 1, y)
    z_skew = delta * np.log(y / alpha + np.sqrt((y / alpha) ** 2 + 1))

    # kurtosis z-score
    mean_b2 = 3.0 * (n - 1) / (n + 1)
    var_b2 = 24.0 * n * (n - 2) * (n - 3) / ((n + 1) * (n + 1.0) * (n + 3) * (n + 5))
    xk = (b2 - mean_b2) / np.sqrt(var_b2)
    sqrt_beta1 = (
        6.0 * (n * n - 5 * n + 2) / ((n + 7) * (n + 9))
        * np.sqrt((6.0 * (n + 3) * (n + 5)) / (n * (n - 2) * (n - 3)))
    )
    a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + np.sqrt(1 + 4.0 / sqrt_beta1**2))
    term1 = 1 - 2 / (9.0 * a)
    denom = 1 + xk * np.sqrt(2 / (a - 4.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        term2 = np.sign(denom) * np.power((1 - 2.0 / a) / np.abs(denom), 1 / 3.0)
        term2 = np.where(denom == 0, np.nan, term2)
    z_kurt = (term1 - term2) / np.sqrt(2 / (9.0 * a))

    k2 = z_skew**2 + z_kurt**2
    # chi-squared survival with 2 dof
    p = np.exp(-k2 / 2)
    return k2, p


def _poly(coefs, x):
    out = 0.0
    for c in reversed(coefs):
        out = out * x + c
    return out


@lru_cache(maxsize=64)
def shapiro_wilk_coefficients(n: int) -> np.ndarray:
    """Full antisymmetric weight vector a (length n) for ascending data."""
    if not 3 <= n <= SW_MAX_N:
        raise ValueError(f"Shapiro-Wilk needs 3 <= n <= {SW_MAX_N}, got {n}")
    half = n // 2
    if n == 3:
        upper = np.array([np.sqrt(0.5)])
    else:
        i = np.arange(1, half + 1)
        # m[0] is the most negative expected normal order statistic
        m = special.ndtri((i - 0.375) / (n + 0.25))
        summ2 = 2.0 * np.sum(m * m)
        ssumm2 = np.sqrt(summ2)
        rsn = 1.0 / np.sqrt(n)
        a1 = _poly([0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056], rsn) - m[0] / ssumm2
        upper = -m.copy()
        if n > 5:
            a2 = _poly([0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633], rsn) - m[1] / ssumm2
            fac = np.sqrt(
                (summ2 - 2.0 * m[0] ** 2 - 2.0 * m[1] ** 2) / (1.0 - 2.0 * a1**2 - 2.0 * a2**2)
            )
            upper = upper / fac
            upper[0], upper[1] = a1, a2
        else:
            fac = np.sqrt((summ2 - 2.0 * m[0] ** 2) / (1.0 - 2.0 * a1**2))
            upper = upper / fac
            upper[0] = a1
    a = np.zeros(n)
    a[:half] = -upper
    a[n - half:] = upper[::-1]
    a.setflags(write=False)
    return a


def _shapiro_wilk_pvalue(w: np.ndarray, n: int) -> np.ndarray:
    if n == 3:
        p = (6 / np.pi) * (np.arcsin(np.sqrt(w)) - np.pi / 3)
        return np.clip(p, 0.0, 1.0)
    with np.errstate(divide="ignore"):
        y = np.log1p(-w)
    if n <= 11:
        gamma = _poly([-2.273, 0.459], n)
        m = _poly([0.5440, -0.39978, 0.025054, -6.714e-4], n)
        s = np.exp(_poly([1.3822, -0.77857, 0.062767, -0.0020322], n))
        with np.errstate(invalid="ignore", divide="ignore"):
            z = (-np.log(gamma - y) - m) / s
        return np.where(y >= gamma, 1e-99, special.ndtr(-z))
    ln = np.log(n)
    m = _poly([-1.5861, -0.31082, -0.083751, 0.0038915], ln)
    s = np.exp(_poly([-0.4803, -0.082676, 0.0030302], ln))
    return special.ndtr(-(y - m) / s)


def shapiro_wilk_batch(x) -> tuple[np.ndarray, np.ndarray]:
    """W and p-value per row."""
    rows = np.sort(_as_rows(x), axis=1)
    n = rows.shape[1]
    a = shapiro_wilk_coefficients(n)
    centered = rows - rows.mean(axis=1, keepdims=True)
    ss = np.sum(centered**2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = (centered @ a) ** 2 / ss
    w = np.minimum(w, 1.0)
    return w, _shapiro_wilk_pvalue(w, n)


def anderson_darling_batch(x) -> np.ndarray:
    """Unadjusted A^2 per row, mean and variance estimated from the data."""
    rows = np.sort(_as_rows(x), axis=1)
    n = rows.shape[1]
    if n < 8:
        raise ValueError(f"Anderson-Darling test needs n >= 8, got {n}")
    mean = rows.mean(axis=1, keepdims=True)
    sd = rows.std(axis=1, ddof=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (rows - mean) / sd
    log_cdf = special.log_ndtr(z)
    log_sf = special.log_ndtr(-z)
    i = np.arange(1, n + 1)
    return -n - np.sum((2 * i - 1) / n * (log_cdf + log_sf[:, ::-1]), axis=1)


def anderson_critical(n: int, alpha: float) -> float:
    if alpha not in AD_CRITICAL:
        raise ValueError(f"Anderson-Darling alpha must be one of {sorted(AD_CRITICAL)}, got {alpha}")
    return AD_CRITICAL[alpha] / (1.0 + 4.0 / n - 25.0 / n**2)


def anderson_pvalue_approx(a2, n: int):
    """D'Agostino & Stephens approximation on the n-adjusted statistic."""
    a = np.asarray(a2, dtype=float) * (1.0 + 0.75 / n + 2.25 / n**2)
    with np.errstate(over="ignore"):
        p = np.select(
            [a >= 0.6, a >= 0.34, a >= 0.2],
            [
                np.exp(1.2937 - 5.709 * a + 0.0186 * a**2),
                np.exp(0.9177 - 4.279 * a - 1.38 * a**2),
                1 - np.exp(-8.318 + 42.796 * a - 59.938 * a**2),
            ],
            1 - np.exp(-13.436 + 101.14 * a - 223.73 * a**2),
        )
    return np.clip(p, 0.0, 1.0)


# ---------------------------------------------------------------------------
# single-sample API


def _check_alpha(alpha: float):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")


def _one_sample(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if len(x) and x.max() == x.min():
        raise DegenerateSample("zero-variance sample")
    return x


def _verdict(reject: bool) -> Verdict:
    return Verdict.REJECT if reject else Verdict.FAIL_TO_REJECT


def dagostino_k2(samples, alpha: float = 0.05) -> TestResult:
    _check_alpha(alpha)
    x = _one_sample(samples)
    n = len(x)
    k2, p = dagostino_batch(x)
    warning = f"n={n} < 20: kurtosis approximation unreliable" if n < 20 else None
    if warning:
        warnings.warn(warning, stacklevel=2)
    p = float(p[0])
    return TestResult(NormalityTest.DAGOSTINO, float(k2[0]), p, alpha, _verdict(p < alpha), n,
                      warning=warning)


def shapiro_wilk(samples, alpha: float = 0.05) -> TestResult:
    _check_alpha(alpha)
    x = np.asarray(samples, dtype=np.float64).ravel()
    if not 3 <= len(x) <= SW_MAX_N:
        raise ValueError(f"Shapiro-Wilk needs 3 <= n <= {SW_MAX_N}, got {len(x)}")
    x = _one_sample(x)
    w, p = shapiro_wilk_batch(x)
    p = float(p[0])
    return TestResult(NormalityTest.SHAPIRO_WILK, float(w[0]), p, alpha, _verdict(p < alpha), len(x))


def anderson_darling(samples, alpha: float = 0.05) -> TestResult:
    """Verdict compares A^2 with the case-3 critical value; p is only approximate."""
    crit = anderson_critical(8, alpha)  # validates alpha early
    x = np.asarray(samples, dtype=np.float64).ravel()
    n = len(x)
    if n < 8:
        raise ValueError(f"Anderson-Darling test needs n >= 8, got {n}")
    x = _one_sample(x)
    a2 = float(anderson_darling_batch(x)[0])
    crit = anderson_critical(n, alpha)
    return TestResult(
        NormalityTest.ANDERSON_DARLING, a2, None, alpha, _verdict(a2 > crit), n,
        critical_value=crit, p_approx=float(anderson_pvalue_approx(a2, n)),
    )


# ---------------------------------------------------------------------------
# per-level summary


@dataclass
class GroupVerdicts:
    """Per-group outcomes of one test; statistic and p are NaN when skipped."""

    statistic: np.ndarray
    p_value: np.ndarray
    reject: np.ndarray
    skipped: np.ndarray


@dataclass
class NormalityTable:
    level: AggregationLevel
    alpha: float
    keys: list[GroupKey]
    sizes: np.ndarray
    results: dict[NormalityTest, GroupVerdicts]
    notes: list[str] = field(default_factory=list)

    @property
    def n_groups(self) -> int:
        return len(self.keys)

    def evaluated(self, test: NormalityTest) -> int:
        return int((~self.results[test].skipped).sum())

    def passed(self, test: NormalityTest) -> int:
        r = self.results[test]
        return int((~r.reject & ~r.skipped).sum())

    def skipped(self, test: NormalityTest) -> int:
        return int(self.results[test].skipped.sum())

    def pass_fraction(self, test: NormalityTest) -> float:
        ev = self.evaluated(test)
        return self.passed(test) / ev if ev else float("nan")

    def discordant(self) -> list[GroupKey]:
        """Groups where the three tests do not all agree."""
        rej = np.stack([r.reject for r in self.results.values()])
        skip = np.stack([r.skipped for r in self.results.values()]).any(axis=0)
        mixed = rej.any(axis=0) & ~rej.all(axis=0) & ~skip
        return [self.keys[i] for i in np.flatnonzero(mixed)]


def _subsample_seed(seed: int, key: GroupKey) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, zlib.crc32(str(key).encode())])


def run_tests_batch(rows: np.ndarray, alpha: float, sw_rows: np.ndarray | None = None
                    ) -> dict[NormalityTest, GroupVerdicts]:
    """Run all three tests on equal-length rows; degenerate rows are skipped.

    ``sw_rows`` substitutes the input seen by Shapiro-Wilk (used for
    subsampled oversized groups).
    """
    rows = _as_rows(rows)
    sw_rows = rows if sw_rows is None else _as_rows(sw_rows)
    n = rows.shape[1]
    skip = _degenerate(rows)
    sw_skip = skip | _degenerate(sw_rows)
    out = {}
    with np.errstate(all="ignore"):
        k2, p = dagostino_batch(rows)
        out[NormalityTest.DAGOSTINO] = GroupVerdicts(k2, p, p < alpha, skip)
        w, p = shapiro_wilk_batch(sw_rows)
        out[NormalityTest.SHAPIRO_WILK] = GroupVerdicts(w, p, p < alpha, sw_skip)
        a2 = anderson_darling_batch(rows)
        out[NormalityTest.ANDERSON_DARLING] = GroupVerdicts(
            a2, anderson_pvalue_approx(a2, n), a2 > anderson_critical(n, alpha), skip)
    for r in out.values():
        r.statistic = np.where(r.skipped, np.nan, r.statistic)
        r.p_value = np.where(r.skipped, np.nan, r.p_value)
        r.reject = np.where(r.skipped, False, r.reject)
    return out


def normality_summary(
    dataset: TraceDataset,
    level: AggregationLevel,
    alpha: float = 0.05,
    seed: int = 0,
) -> NormalityTable:
    """Run D'Agostino, Shapiro-Wilk and Anderson-Darling on every group.

    Shapiro-Wilk sees a fixed-seed subsample of 5000 for groups larger than
    that; the other two tests always see the full group.
    """
    _check_alpha(alpha)
    anderson_critical(8, alpha)
    groups = group(dataset, level)
    keys = [k for k, _ in groups]
    sizes = np.array([len(v) for _, v in groups])
    if len(sizes) and sizes.min() < 8:
        raise ValueError(f"groups at level {level.value} have {sizes.min()} samples; tests need >= 8")
    n_groups = len(groups)
    results = {
        t: GroupVerdicts(np.full(n_groups, np.nan), np.full(n_groups, np.nan),
                         np.zeros(n_groups, bool), np.zeros(n_groups, bool))
        for t in NormalityTest
    }
    notes = []
    for n in np.unique(sizes):
        idx = np.flatnonzero(sizes == n)
        rows = np.stack([groups[i][1] for i in idx]).astype(np.float64)
        batch = run_tests_batch(rows, alpha) if n <= SW_MAX_N else _run_large(rows, [keys[i] for i in idx], alpha, seed)
        for t, r in batch.items():
            dst = results[t]
            dst.statistic[idx] = r.statistic
            dst.p_value[idx] = r.p_value
            dst.reject[idx] = r.reject
            dst.skipped[idx] = r.skipped
        if n > SW_MAX_N:
            notes.append(
                f"shapiro_wilk evaluated on a seeded subsample of {SW_MAX_N} "
                f"(seed={seed}) for {len(idx)} group(s) of n={n}"
            )
    n_skip = int(results[NormalityTest.DAGOSTINO].skipped.sum())
    if n_skip:
        notes.append(f"{n_skip} zero-variance group(s) skipped and excluded from pass fractions")
    return NormalityTable(level, alpha, keys, sizes, results, notes)


def _run_large(rows: np.ndarray, keys: list[GroupKey], alpha: float, seed: int):
    sub = np.stack([
        np.random.default_rng(_subsample_seed(seed, k)).choice(row, SW_MAX_N, replace=False)
        for k, row in zip(keys, rows)
    ])
    return run_tests_batch(rows, alpha, sw_rows=sub)


# ---------------------------------------------------------------------------
# descriptive statistics


def percentiles(samples, ps) -> np.ndarray:
    """Linear-interpolation quantiles at rank (n-1)p (Hyndman-Fan type 7).

    Works along the last axis, so a 2-D input gives one row of quantiles per
    group.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64), axis=-1)
    n = x.shape[-1]
    if n == 0:
        raise ValueError("percentiles of an empty sample")
    ps = np.asarray(ps, dtype=np.float64)
    if np.any((ps < 0) | (ps > 1)) or np.any(np.isnan(ps)):
        raise ValueError("percentile fractions must lie in [0, 1]")
    h = (n - 1) * ps
    lo = np.floor(h).astype(np.intp)
    hi = np.minimum(lo + 1, n - 1)
    frac = h - lo
    a = x[..., lo]
    b = x[..., hi]
    # clamp keeps the result monotone in p despite rounding
    return np.minimum(a + (b - a) * frac, b)


def median(samples) -> np.ndarray | float:
    out = percentiles(samples, 0.5)
    return float(out) if np.ndim(out) == 0 else out


def iqr(samples):
    """p75 - p25 along the last axis; needs at least 4 samples."""
    x = np.asarray(samples)
    if x.shape[-1] < 4:
        raise ValueError(f"IQR needs a group of at least 4 samples, got {x.shape[-1]}")
    q = percentiles(x, [0.25, 0.75])
    out = q[..., 1] - q[..., 0]
    return float(out) if np.ndim(out) == 0 else out


def iqr_series(dataset: TraceDataset, level: AggregationLevel) -> tuple[float, float]:
    """(mean, max) of per-group IQRs in ns."""
    vals = np.array([iqr(g) for _, g in group(dataset, level)]) if level is not AggregationLevel.PROCESS_ITERATION \
        else _pi_iqrs(dataset)
    return float(vals.mean()), float(vals.max())


def _pi_iqrs(dataset: TraceDataset) -> np.ndarray:
    from .trace import process_iteration_matrix

    _, mat = process_iteration_matrix(dataset)
    return iqr(mat)


@dataclass(frozen=True)
class Histogram:
    bin_width: float
    origin: float
    bins: list[tuple[float, int]]

    @property
    def total(self) -> int:
        return sum(c for _, c in self.bins)

    def mode(self) -> tuple[float, int]:
        """(lower edge, count) of the fullest bin; first one on ties."""
        return max(self.bins, key=lambda b: b[1])


def histogram(samples, bin_width, origin=0) -> Histogram:
    """Fixed-width bins [origin + k*w, origin + (k+1)*w), empty ends trimmed."""
    if not bin_width > 0:
        raise ValueError(f"bin width must be positive, got {bin_width}")
    x = np.asarray(samples).ravel()
    if x.size == 0:
        return Histogram(bin_width, origin, [])
    if np.issubdtype(x.dtype, np.integer) and float(bin_width).is_integer() and float(origin).is_integer():
        width, org = int(bin_width), int(origin)
        k = (x.astype(np.int64) - org) // width
    else:
        width, org = float(bin_width), float(origin)
        k = np.floor((x.astype(np.float64) - org) / width).astype(np.int64)
    k0 = int(k.min())
    counts = np.bincount(k - k0)
    bins = [(org + (k0 + j) * width, int(c)) for j, c in enumerate(counts.tolist())]
    return Histogram(width, org, bins)
