"""Rank-based hypothesis tests (two-sided, alpha = 0.05 by convention)."""

from __future__ import annotations

import json
import math
from fractions import Fraction
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr
from scipy.stats import chi2, rankdata

from .errors import DataError

SIGNIFICANCE = 0.05
WILCOXON_EXACT_MAX_N = 25


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    n: tuple
    method: str

    __test__ = False  # not a pytest class

    @property
    def significant(self) -> bool:
        return self.p_value < SIGNIFICANCE

    def as_dict(self) -> dict:
        d = asdict(self)
        d["n"] = list(self.n)
        return d

    def to_json(self) -> str:
        return json.dumps(self.as_dict())


def _tie_term(values: np.ndarray) -> float:
    """sum over tie blocks of t^3 - t."""
    _, t = np.unique(values, return_counts=True)
    return float(np.sum(t.astype(np.float64) ** 3 - t))


def _two_sided_normal(z: float) -> float:
    return float(min(1.0, 2.0 * ndtr(-abs(z))))


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> TestResult:
    """H statistic with the midrank tie correction; chi-square p with g-1 df.

    Midranks are half-integers, so H is evaluated in exact rational
    arithmetic and rounded once.
    """
    samples = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(samples) < 2:
        raise DataError("Kruskal-Wallis needs at least two groups")
    if any(len(s) == 0 for s in samples):
        raise DataError("Kruskal-Wallis groups must be non-empty")
    pooled = np.concatenate(samples)
    n = len(pooled)
    sizes = tuple(len(s) for s in samples)
    _, ties = np.unique(pooled, return_counts=True)
    tie_sum = sum(int(t) ** 3 - int(t) for t in ties)
    correction = Fraction(1) - Fraction(tie_sum, n ** 3 - n) if n > 1 else Fraction(0)
    if correction <= 0:
        return TestResult(0.0, 1.0, sizes, "chi2")
    doubled = np.rint(2.0 * rankdata(pooled)).astype(np.int64)
    acc, start = Fraction(0), 0
    for size in sizes:
        r2 = int(doubled[start:start + size].sum())
        acc += Fraction(r2 * r2, 4 * size)
        start += size
    h = (Fraction(12, n * (n + 1)) * acc - 3 * (n + 1)) / correction
    h = max(float(h), 0.0)
    return TestResult(h, float(chi2.sf(h, len(samples) - 1)), sizes, "chi2")


def mann_whitney_u(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """U = min(U_a, U_b); two-sided normal approximation with tie and continuity corrections."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n1, n2 = len(a), len(b)
    if n1 == 0 or n2 == 0:
        raise DataError("Mann-Whitney U needs two non-empty samples")
    pooled = np.concatenate([a, b])
    ranks = rankdata(pooled)
    u1 = ranks[:n1].sum() - n1 * (n1 + 1) / 2.0
    u = min(u1, n1 * n2 - u1)
    n = n1 + n2
    mu = n1 * n2 / 2.0
    var = n1 * n2 / 12.0 * ((n + 1) - _tie_term(pooled) / (n * (n - 1)))
    if var <= 0:
        return TestResult(float(u), 1.0, (n1, n2), "normal")
    z = max(abs(u - mu) - 0.5, 0.0) / math.sqrt(var)
    return TestResult(float(u), _two_sided_normal(z), (n1, n2), "normal")


def _signed_rank_null_counts(doubled_ranks: np.ndarray) -> np.ndarray:
    """Number of sign assignments giving each value of 2 * W+ (exact DP)."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled_ranks:
        r = int(r)
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(differences: Sequence[float]) -> TestResult:
    """Signed-rank test on paired differences (zeros dropped).

    Exact null distribution (all 2^n sign flips, midranks kept) for
    n <= 25; normal approximation with tie and continuity corrections above.
    """
    d = np.asarray(differences, dtype=np.float64)
    d = d[d != 0]
    n = len(d)
    if n == 0:
        raise DataError("Wilcoxon signed-rank: all differences are zero")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    if n <= WILCOXON_EXACT_MAX_N:
        doubled = np.rint(2.0 * ranks).astype(np.int64)  # midranks are half-integers
        counts = _signed_rank_null_counts(doubled)
        cdf_at = int(round(2.0 * w))
        p = 2.0 * counts[:cdf_at + 1].sum() / 2.0 ** n
        return TestResult(w, float(min(1.0, p)), (n,), "exact")
    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - _tie_term(np.abs(d)) / 48.0
    z = max(abs(w - mu) - 0.5, 0.0) / math.sqrt(var)
    return TestResult(w, _two_sided_normal(z), (n,), "normal")
