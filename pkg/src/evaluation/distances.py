"""
Distribution distances: MMD on morphological features, per-feature
Wasserstein-1 and the kernel inception distance.
"""
import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.stats import wasserstein_distance

from src.evaluation.morphometrics import features_matrix
from src.exceptions import ConfigurationError, ShapeError, UsageError
from src.models import ShapeFeatures

logger = logging.getLogger(__name__)

FeatureSet = Union[np.ndarray, Sequence[ShapeFeatures]]


def _as_matrix(features: FeatureSet) -> np.ndarray:
    if isinstance(features, np.ndarray):
        return np.atleast_2d(features).astype(np.float64)
    return features_matrix(features)


def rbf_kernel(a: np.ndarray, b: np.ndarray, bandwidth: float) -> np.ndarray:
    """``exp(-|a - b|^2 / (2 h^2))``."""
    return np.exp(-cdist(a, b, "sqeuclidean") / (2.0 * bandwidth ** 2))


def mmd2_unbiased(x: np.ndarray, y: np.ndarray, bandwidth: float) -> float:
    """
    Unbiased MMD^2 with an RBF kernel (within-set diagonals excluded).

    Raises:
        UsageError: If either set has fewer than 2 rows
    """
    m, n = x.shape[0], y.shape[0]
    if m < 2 or n < 2:
        raise UsageError(f"unbiased MMD needs at least 2 samples per set, got {m} and {n}")
    kxx = rbf_kernel(x, x, bandwidth)
    kyy = rbf_kernel(y, y, bandwidth)
    kxy = rbf_kernel(x, y, bandwidth)
    term_x = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
    term_y = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    return float(term_x + term_y - 2.0 * kxy.mean())


def median_bandwidth(pooled: np.ndarray) -> float:
    """Median pairwise distance; falls back to 1 when every distance is 0."""
    distances = pdist(pooled)
    positive = distances[distances > 0]
    if positive.size == 0:
        return 1.0
    median = float(np.median(distances))
    return median if median > 0 else float(np.median(positive))


def mmd_mf(real: FeatureSet, gen: FeatureSet, bandwidth: Optional[float] = None) -> float:
    """
    MMD between morphological feature sets.

    Features are z-scored by the real set's mean and (ddof=0) std; real
    features with zero variance are dropped with a warning. The bandwidth
    defaults to the median pairwise distance of the pooled standardized
    set. The result is floored at 0.

    Raises:
        UsageError: If either set has fewer than 2 instances
    """
    x, y = _as_matrix(real), _as_matrix(gen)
    if x.shape[0] < 2 or y.shape[0] < 2:
        raise UsageError(f"MMD-MF needs at least 2 instances per set, got {x.shape[0]} and {y.shape[0]}")
    if x.shape[1] != y.shape[1]:
        raise ShapeError("feature width", x.shape[1], y.shape[1])
    mean, std = x.mean(axis=0), x.std(axis=0)
    keep = std > 0
    if not keep.all():
        logger.warning(f"MMD-MF: dropping {int((~keep).sum())} zero-variance feature(s)")
    if not keep.any():
        return 0.0
    xs = (x[:, keep] - mean[keep]) / std[keep]
    ys = (y[:, keep] - mean[keep]) / std[keep]
    h = bandwidth if bandwidth is not None else median_bandwidth(np.vstack([xs, ys]))
    return max(mmd2_unbiased(xs, ys, h), 0.0)


def wasserstein_1d(a: Sequence[float], b: Sequence[float]) -> float:
    """
    W1 between two empirical distributions (quantile matching).

    Raises:
        UsageError: If either sample is empty
    """
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise UsageError("wasserstein_1d needs non-empty samples")
    return float(wasserstein_distance(a, b))


def polynomial_kernel(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``(a . b / d + 1)^3``."""
    return (a @ b.T / a.shape[1] + 1.0) ** 3


def _kid_subset(x: np.ndarray, y: np.ndarray) -> float:
    m = x.shape[0]
    kxx = polynomial_kernel(x, x)
    kyy = polynomial_kernel(y, y)
    kxy = polynomial_kernel(x, y)
    return float(
        (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
        + (kyy.sum() - np.trace(kyy)) / (m * (m - 1))
        - 2.0 * kxy.mean()
    )


def kid(
    real_feats: np.ndarray,
    gen_feats: np.ndarray,
    subset_size: int,
    n_subsets: int,
    rng: np.random.Generator
) -> Tuple[float, float]:
    """
    Kernel inception distance over random subsets.

    Each subset draws ``subset_size`` distinct rows from each set and
    computes the unbiased polynomial-kernel MMD^2.

    Returns:
        (mean, std) over subsets (std with ddof=1, 0 for a single subset)

    Raises:
        ConfigurationError: If subset_size exceeds either set or is < 2
        ShapeError: If feature widths differ
    """
    x = np.asarray(real_feats, dtype=np.float64)
    y = np.asarray(gen_feats, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ShapeError("KID features", "(n, d) with equal d", (x.shape, y.shape))
    if subset_size < 2:
        raise ConfigurationError("metrics.kid_subset_size", f"must be >= 2, got {subset_size}")
    if subset_size > min(x.shape[0], y.shape[0]):
        raise ConfigurationError(
            "metrics.kid_subset_size",
            f"{subset_size} exceeds available features (real={x.shape[0]}, gen={y.shape[0]})"
        )
    values = []
    for _ in range(n_subsets):
        xi = rng.choice(x.shape[0], subset_size, replace=False)
        yi = rng.choice(y.shape[0], subset_size, replace=False)
        values.append(_kid_subset(x[xi], y[yi]))
    values = np.asarray(values)
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return float(values.mean()), std
