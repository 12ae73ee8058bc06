"""
Intensity normalization and axial binning.
"""
import numpy as np

from src.exceptions import DegenerateInputError, RangeError

LOW_PERCENTILE = 0.05
HIGH_PERCENTILE = 99.5


def percentile_normalize(
    image: np.ndarray,
    lo_pct: float = LOW_PERCENTILE,
    hi_pct: float = HIGH_PERCENTILE
) -> np.ndarray:
    """
    Map ``[P_lo, P_hi]`` linearly onto ``[-1, 1]`` and clamp.

    Percentiles use linear interpolation on the sorted pixel values.

    Args:
        image: Raw H x W intensities
        lo_pct: Lower percentile
        hi_pct: Upper percentile

    Returns:
        float32 array in [-1, 1]

    Raises:
        DegenerateInputError: If P_lo == P_hi (e.g. a constant image)
    """
    values = np.asarray(image, dtype=np.float64)
    p_lo, p_hi = np.percentile(values, [lo_pct, hi_pct])
    if not p_hi > p_lo:
        raise DegenerateInputError(
            f"cannot normalize: percentile {lo_pct} and {hi_pct} coincide at {p_lo:g}"
        )
    scaled = 2.0 * (values - p_lo) / (p_hi - p_lo) - 1.0
    return np.clip(scaled, -1.0, 1.0).astype(np.float32)


def compute_z_bin(z_index: int, z_total: int, n_z: int = 30) -> int:
    """
    ``floor(z_index * n_z / z_total)`` clamped to ``n_z - 1``.

    Raises:
        RangeError: If z_index is outside [0, z_total) or the counts are invalid
    """
    if z_total < 1:
        raise RangeError("z_total", z_total, "z_total >= 1")
    if n_z < 1:
        raise RangeError("n_z", n_z, "n_z >= 1")
    if not 0 <= z_index < z_total:
        raise RangeError("z_index", z_index, f"0 <= z_index < {z_total}")
    return min(z_index * n_z // z_total, n_z - 1)
