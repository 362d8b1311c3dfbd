"""Sample aggregation and significance tests for repeated measurements."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

from .errors import EmptySamples, TooFewSamples, ZeroBaseline

EXACT_MAX_TOTAL = 16
ALPHA = 0.05


class Alternative(str, enum.Enum):
    LESS = "less"
    GREATER = "greater"
    TWO_SIDED = "two-sided"


@dataclass(frozen=True)
class CiEstimate:
    median: float
    lo: float
    hi: float
    confidence: float
    coverage: float = float("nan")

    def __post_init__(self):
        if not self.lo <= self.median <= self.hi:
            raise ValueError(f"inconsistent interval {self}")


def median(samples: Sequence[float]) -> float:
    if len(samples) == 0:
        raise EmptySamples("median of an empty sample")
    s = sorted(samples)
    n = len(s)
    mid = n // 2
    if n % 2:
        return float(s[mid])
    return (s[mid - 1] + s[mid]) / 2.0


def _binom_half_cdf(k: int, n: int) -> float:
    """P(X <= k) for X ~ Binomial(n, 1/2), exact in rational arithmetic."""
    if k < 0:
        return 0.0
    return sum(math.comb(n, i) for i in range(k + 1)) / 2**n


def order_statistic_ranks(n: int, confidence: float) -> tuple[int, int, float]:
    """1-based ranks (l, u) of the narrowest rank-symmetric median interval.

    The interval [x_(l), x_(n+1-l)] covers the population median with
    probability 1 - 2 P(Bin(n, 1/2) <= l - 1).  Returns the largest l whose
    coverage still reaches ``confidence``, and that coverage.  When even the
    full range falls short (tiny n) the full range is returned.
    """
    best = (1, n, 1.0 - 2 * _binom_half_cdf(0, n))
    for l in range(1, n // 2 + 1):
        cov = 1.0 - 2 * _binom_half_cdf(l - 1, n)
        if cov >= confidence:
            best = (l, n + 1 - l, cov)
        else:
            break
    return best


def median_ci(samples: Sequence[float], confidence: float = 0.95) -> CiEstimate:
    """Distribution-free confidence interval for the median."""
    n = len(samples)
    if n < 5:
        raise TooFewSamples(f"median_ci needs at least 5 samples, got {n}")
    s = sorted(samples)
    l, u, cov = order_statistic_ranks(n, confidence)
    return CiEstimate(median(s), float(s[l - 1]), float(s[u - 1]), confidence, cov)


def bootstrap_median_ci(samples, confidence=0.95, n_resamples=2000, seed=0) -> CiEstimate:
    """Percentile bootstrap interval; the alternative to :func:`median_ci`."""
    import numpy as np

    x = np.asarray(samples, dtype=float)
    if x.size < 5:
        raise TooFewSamples(f"bootstrap_median_ci needs at least 5 samples, got {x.size}")
    rng = np.random.default_rng(seed)
    meds = np.median(rng.choice(x, size=(n_resamples, x.size), replace=True), axis=1)
    tail = (1 - confidence) / 2
    lo, hi = np.quantile(meds, [tail, 1 - tail])
    m = float(np.median(x))
    return CiEstimate(m, min(float(lo), m), max(float(hi), m), confidence)


def rankdata(values: Sequence[float]) -> list[float]:
    """1-based ranks, ties receive the mean of the ranks they span."""
    order = sorted(range(len(values)), key=values.__getitem__)
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        r = (i + j) / 2.0 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = r
        i = j + 1
    return ranks


def _u_distribution(n: int, m: int) -> list[int]:
    """counts[u] = number of the C(n+m, n) labelings whose U statistic is u."""
    # f[i][j] is the count vector for sample sizes (i, j)
    f = [[None] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        for j in range(m + 1):
            if i == 0 or j == 0:
                f[i][j] = [1]
                continue
            # the largest observation belongs to a (adds j to U) or to b
            a_top = [0] * j + f[i - 1][j]
            b_top = f[i][j - 1]
            size = i * j + 1
            f[i][j] = [
                (a_top[u] if u < len(a_top) else 0) + (b_top[u] if u < len(b_top) else 0)
                for u in range(size)
            ]
    return f[n][m]


def _norm_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def mann_whitney_u(a, b, alternative=Alternative.LESS, method: str = "auto") -> tuple[float, float]:
    """Mann-Whitney U test of ``a`` against ``b``.

    Returns ``(U_a, p)`` where U_a counts pairs with a_i > b_j (ties count
    one half).  ``LESS`` tests whether ``a`` tends to be smaller than ``b``.
    ``method`` is ``"auto"``, ``"exact"`` or ``"asymptotic"``; auto uses the
    exact null distribution when the samples are small and untied.
    """
    alternative = Alternative(alternative)
    n, m = len(a), len(b)
    if n < 3 or m < 3:
        raise TooFewSamples(f"mann_whitney_u needs >= 3 samples per group, got {n} and {m}")
    pooled = list(a) + list(b)
    ranks = rankdata(pooled)
    u = sum(ranks[:n]) - n * (n + 1) / 2.0
    tied = len(set(pooled)) < len(pooled)
    if method == "auto":
        method = "exact" if (n + m <= EXACT_MAX_TOTAL and not tied) else "asymptotic"
    if method == "exact":
        if tied:
            raise ValueError("exact Mann-Whitney distribution requires untied samples")
        counts = _u_distribution(n, m)
        total = math.comb(n + m, n)
        k = int(round(u))
        p_less = sum(counts[: k + 1]) / total
        p_greater = sum(counts[k:]) / total
        if alternative is Alternative.LESS:
            p = p_less
        elif alternative is Alternative.GREATER:
            p = p_greater
        else:
            p = min(1.0, 2 * min(p_less, p_greater))
        return u, p
    if method != "asymptotic":
        raise ValueError(f"unknown method {method!r}")
    N = n + m
    tie_term = 0.0
    for v in set(pooled):
        t = pooled.count(v)
        tie_term += t**3 - t
    var = n * m / 12.0 * ((N + 1) - tie_term / (N * (N - 1)))
    if var <= 0:
        return u, 1.0
    sd = math.sqrt(var)
    mu = n * m / 2.0
    if alternative is Alternative.LESS:
        p = _norm_cdf((u - mu + 0.5) / sd)
    elif alternative is Alternative.GREATER:
        p = 1.0 - _norm_cdf((u - mu - 0.5) / sd)
    else:
        z = (abs(u - mu) - 0.5) / sd
        p = 2.0 * (1.0 - _norm_cdf(z))
    return u, min(1.0, max(0.0, p))


def percent_of_baseline(variant_median: float, baseline_median: float) -> float:
    """Variant as a percentage of baseline; below 100 is an improvement."""
    if baseline_median <= 0:
        raise ZeroBaseline(f"baseline median must be positive, got {baseline_median}")
    return 100.0 * variant_median / baseline_median
