"""
Rank-based tests: Kruskal-Wallis with Dunn post-hoc and Benjamini-Hochberg
correction, Friedman with the Nemenyi critical difference, and Cliff's delta.

Ties get mid-ranks everywhere.
"""
import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import chi2, norm, rankdata, tiecorrect
from statsmodels.stats.multitest import multipletests

from src.exceptions import ConfigurationError, RangeError, ShapeError, UsageError

logger = logging.getLogger(__name__)

# Two-tailed Nemenyi q_0.05 / sqrt(2) for k = 2..10 treatments, from the
# studentized range distribution with infinite degrees of freedom.
NEMENYI_Q_005: Dict[int, float] = {
    2: 1.960,
    3: 2.343,
    4: 2.569,
    5: 2.728,
    6: 2.850,
    7: 2.949,
    8: 3.031,
    9: 3.102,
    10: 3.164,
}

CLIFF_THRESHOLDS = ((0.147, "negligible"), (0.33, "small"), (0.474, "medium"))


@dataclass
class TestResult:
    statistic: float
    pvalue: float
    df: int


@dataclass
class PairwiseComparison:
    a: str
    b: str
    statistic: float
    pvalue: float
    adjusted_p: Optional[float] = None
    reject: Optional[bool] = None


@dataclass
class NemenyiResult:
    critical_difference: float
    mean_ranks: Dict[str, float]
    pairs: List[PairwiseComparison] = field(default_factory=list)


def _labels(n: int, labels: Optional[Sequence[str]]) -> List[str]:
    if labels is None:
        return [str(i) for i in range(n)]
    if len(labels) != n:
        raise ShapeError("labels", n, len(labels))
    return [str(x) for x in labels]


def _check_groups(groups: Sequence[Sequence[float]]) -> List[np.ndarray]:
    arrays = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    if len(arrays) < 2:
        raise UsageError(f"need at least 2 groups, got {len(arrays)}")
    if any(a.size == 0 for a in arrays):
        raise UsageError("every group must be non-empty")
    return arrays


def _tie_sum(ranks_or_values: np.ndarray) -> float:
    """Sum of ``t^3 - t`` over tie groups."""
    _, counts = np.unique(ranks_or_values, return_counts=True)
    counts = counts.astype(np.float64)
    return float(np.sum(counts ** 3 - counts))


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> TestResult:
    """
    Kruskal-Wallis H with tie correction; p from chi-square with k - 1 df.

    All-identical data is degenerate and yields ``H = 0, p = 1``.

    Raises:
        UsageError: Fewer than 2 groups, an empty group or N < 3
    """
    arrays = _check_groups(groups)
    pooled = np.concatenate(arrays)
    n = pooled.size
    if n < 3:
        raise UsageError(f"Kruskal-Wallis needs at least 3 observations, got {n}")
    df = len(arrays) - 1
    ranks = rankdata(pooled)
    correction = tiecorrect(ranks)
    if correction == 0:
        return TestResult(0.0, 1.0, df)
    sizes = np.array([a.size for a in arrays])
    bounds = np.cumsum(sizes)[:-1]
    rank_sums = np.array([r.sum() for r in np.split(ranks, bounds)])
    h = 12.0 / (n * (n + 1)) * np.sum(rank_sums ** 2 / sizes) - 3.0 * (n + 1)
    h /= correction
    return TestResult(float(h), float(chi2.sf(h, df)), df)


def dunn_posthoc(
    groups: Sequence[Sequence[float]],
    labels: Optional[Sequence[str]] = None
) -> List[PairwiseComparison]:
    """
    Dunn's pairwise z on pooled mid-ranks with the tie-corrected variance
    ``(N(N+1)/12 - sum(t^3 - t) / (12(N - 1))) * (1/n_i + 1/n_j)``;
    two-sided normal p-values (unadjusted).
    """
    arrays = _check_groups(groups)
    names = _labels(len(arrays), labels)
    pooled = np.concatenate(arrays)
    n = pooled.size
    ranks = rankdata(pooled)
    sizes = np.array([a.size for a in arrays])
    mean_ranks = [r.mean() for r in np.split(ranks, np.cumsum(sizes)[:-1])]
    spread = n * (n + 1) / 12.0 - _tie_sum(pooled) / (12.0 * (n - 1)) if n > 1 else 0.0

    results = []
    for i, j in combinations(range(len(arrays)), 2):
        var = spread * (1.0 / sizes[i] + 1.0 / sizes[j])
        diff = mean_ranks[i] - mean_ranks[j]
        z = diff / math.sqrt(var) if var > 0 else 0.0
        results.append(PairwiseComparison(names[i], names[j], float(z), float(2.0 * norm.sf(abs(z)))))
    return results


def bh_fdr(pvals: Sequence[float], alpha: float = 0.05) -> Tuple[np.ndarray, np.ndarray]:
    """
    Benjamini-Hochberg step-up adjustment.

    Returns:
        (adjusted p-values, reject flags) in input order

    Raises:
        RangeError: A p-value outside [0, 1]
    """
    p = np.asarray(pvals, dtype=np.float64).ravel()
    if p.size == 0:
        return p, np.zeros(0, dtype=bool)
    bad = p[(p < 0) | (p > 1) | ~np.isfinite(p)]
    if bad.size:
        raise RangeError("p-value", float(bad[0]), "0 <= p <= 1")
    reject, adjusted, _, _ = multipletests(p, alpha=alpha, method="fdr_bh")
    return adjusted, reject


def adjust_pairs(pairs: List[PairwiseComparison], alpha: float = 0.05) -> List[PairwiseComparison]:
    """Fill ``adjusted_p`` and ``reject`` on a family of comparisons."""
    if not pairs:
        return pairs
    adjusted, reject = bh_fdr([c.pvalue for c in pairs], alpha)
    for c, adj, rej in zip(pairs, adjusted, reject):
        c.adjusted_p = float(adj)
        c.reject = bool(rej)
    return pairs


def _check_matrix(matrix: Sequence[Sequence[float]]) -> np.ndarray:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError("repeated measures", "replicas x treatments", m.shape)
    if m.shape[0] < 2 or m.shape[1] < 2:
        raise UsageError(f"need at least 2 replicas and 2 treatments, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise UsageError("repeated-measures matrix has missing cells")
    return m


def friedman(matrix: Sequence[Sequence[float]]) -> TestResult:
    """
    Friedman chi-square on within-row mid-ranks,
    ``12 / (n k (k+1)) * sum(R_j^2) - 3 n (k+1)``, df = k - 1.

    Rows are replicas, columns are treatments.
    """
    m = _check_matrix(matrix)
    n, k = m.shape
    ranks = np.apply_along_axis(rankdata, 1, m)
    rank_sums = ranks.sum(axis=0)
    stat = 12.0 / (n * k * (k + 1)) * np.sum(rank_sums ** 2) - 3.0 * n * (k + 1)
    stat = max(float(stat), 0.0)
    return TestResult(stat, float(chi2.sf(stat, k - 1)), k - 1)


def nemenyi(
    matrix: Sequence[Sequence[float]],
    labels: Optional[Sequence[str]] = None,
    alpha: float = 0.05
) -> NemenyiResult:
    """
    Nemenyi critical difference ``CD = q * sqrt(k (k+1) / (6 n))``; a pair
    differs when its mean-rank gap reaches CD.

    Raises:
        ConfigurationError: alpha other than 0.05 or k outside 2..10
    """
    m = _check_matrix(matrix)
    n, k = m.shape
    if not math.isclose(alpha, 0.05):
        raise ConfigurationError("metrics.alpha", "Nemenyi table is only available for alpha = 0.05")
    if k not in NEMENYI_Q_005:
        raise ConfigurationError("sweep.ps", f"Nemenyi table covers 2..10 treatments, got {k}")
    names = _labels(k, labels)
    mean_ranks = np.apply_along_axis(rankdata, 1, m).mean(axis=0)
    cd = NEMENYI_Q_005[k] * math.sqrt(k * (k + 1) / (6.0 * n))
    pairs = []
    for i, j in combinations(range(k), 2):
        gap = float(mean_ranks[i] - mean_ranks[j])
        pairs.append(PairwiseComparison(names[i], names[j], gap, float("nan"), reject=abs(gap) >= cd))
    return NemenyiResult(
        critical_difference=cd,
        mean_ranks={name: float(r) for name, r in zip(names, mean_ranks)},
        pairs=pairs,
    )


def cliffs_delta(x: Sequence[float], y: Sequence[float]) -> float:
    """``(#{x > y} - #{x < y}) / (n_x n_y)`` over all pairs."""
    a = np.asarray(x, dtype=np.float64).ravel()
    b = np.asarray(y, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise UsageError("Cliff's delta needs non-empty samples")
    return float(np.sign(a[:, None] - b[None, :]).sum() / (a.size * b.size))


def cliffs_magnitude(delta: float) -> str:
    """negligible < 0.147 <= small < 0.33 <= medium < 0.474 <= large."""
    size = abs(delta)
    for bound, label in CLIFF_THRESHOLDS:
        if size < bound:
            return label
    return "large"
