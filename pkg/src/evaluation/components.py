"""
Lesion instance extraction from binary masks.
"""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from skimage.measure import label

from src.exceptions import ConfigurationError, ShapeError


@dataclass(frozen=True)
class LesionInstance:
    """One connected lesion region.

    ``pixels`` holds (row, col) coordinates in raster order.
    """

    pixels: np.ndarray
    shape: Tuple[int, int]

    @property
    def area(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def bbox(self) -> Tuple[int, int, int, int]:
        """(min_row, min_col, max_row, max_col), inclusive."""
        rmin, cmin = self.pixels.min(axis=0)
        rmax, cmax = self.pixels.max(axis=0)
        return int(rmin), int(cmin), int(rmax), int(cmax)

    def to_mask(self, pad: int = 0) -> np.ndarray:
        """Boolean mask of the instance cropped to its bbox, padded by ``pad``."""
        rmin, cmin, rmax, cmax = self.bbox
        out = np.zeros((rmax - rmin + 1 + 2 * pad, cmax - cmin + 1 + 2 * pad), dtype=bool)
        out[self.pixels[:, 0] - rmin + pad, self.pixels[:, 1] - cmin + pad] = True
        return out


def connected_components(mask: np.ndarray, connectivity: int = 8, min_area: int = 5) -> List[LesionInstance]:
    """
    Maximal connected +1 regions of a {-1, +1} mask.

    Args:
        mask: H x W mask
        connectivity: 4 or 8
        min_area: Smallest kept region in pixels

    Returns:
        Instances ordered by the raster position of their first pixel
    """
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ShapeError("mask", "H x W", mask.shape)
    if connectivity not in (4, 8):
        raise ConfigurationError("metrics.connectivity", f"must be 4 or 8, got {connectivity}")
    labels = label(mask > 0, connectivity=1 if connectivity == 4 else 2)
    instances = []
    for region in range(1, int(labels.max()) + 1):
        rows, cols = np.nonzero(labels == region)
        if rows.size < min_area:
            continue
        instances.append(LesionInstance(pixels=np.stack([rows, cols], axis=1), shape=mask.shape))
    instances.sort(key=lambda inst: inst.pixels[0, 0] * mask.shape[1] + inst.pixels[0, 1])
    return instances
