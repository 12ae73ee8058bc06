"""
The nine lesion shape descriptors.

Perimeter is the length of the 8-connected outer boundary traced through
pixel centres (Moore neighbour tracing), with unit horizontal/vertical steps
and sqrt(2) diagonal steps. Solidity uses the convex hull of the pixel
corners, so it never exceeds 1. Axes come from the ddof=0 covariance of
pixel-centre coordinates: ``major = 4 sqrt(l1)``, ``minor = 4 sqrt(l2)``.

Degenerate instances:
- a single pixel has no boundary; its perimeter is set to the circumference
  of the equal-area disk (circularity 1),
- a zero second moment is floored at ``MINOR_AXIS_FLOOR`` (axes) so the
  eccentricity stays below 1.
Both cases set ``degenerate=True``.
"""
import logging
import math
from typing import Iterable, List

import numpy as np
from scipy.spatial import ConvexHull

from src.evaluation.components import LesionInstance, connected_components
from src.exceptions import DegenerateInputError
from src.models import ShapeFeatures

logger = logging.getLogger(__name__)

MINOR_AXIS_FLOOR = 1e-3

# Clockwise from west, image coordinates (row grows downwards).
_MOORE = [(0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1)]
_CORNERS = np.array([[-0.5, -0.5], [-0.5, 0.5], [0.5, -0.5], [0.5, 0.5]])


def trace_perimeter(region: np.ndarray) -> float:
    """
    Outer boundary length of a single 8-connected region.

    Args:
        region: Boolean mask containing exactly one region

    Returns:
        Contour length; 0 for an isolated pixel
    """
    padded = np.pad(np.asarray(region, dtype=bool), 1)
    rows, cols = np.nonzero(padded)
    start = (int(rows[0]), int(cols[0]))
    current, back = start, 0
    first_move = None
    length = 0.0
    # Each boundary pixel is visited at most 4 times on the outer contour.
    for _ in range(4 * rows.size + 8):
        for k in range(1, 9):
            d = (back + k) % 8
            nr, nc = current[0] + _MOORE[d][0], current[1] + _MOORE[d][1]
            if padded[nr, nc]:
                break
        else:
            return 0.0
        move = (current, d)
        if first_move is None:
            first_move = move
        elif move == first_move:
            return length
        length += math.sqrt(2.0) if d % 2 else 1.0
        prev = (back + k - 1) % 8
        br, bc = current[0] + _MOORE[prev][0], current[1] + _MOORE[prev][1]
        current = (nr, nc)
        back = _MOORE.index((br - nr, bc - nc))
    raise DegenerateInputError("boundary trace did not close")


def convex_area(pixels: np.ndarray) -> float:
    """Area of the convex hull over the four corners of every pixel."""
    corners = (pixels[:, None, :] + _CORNERS[None, :, :]).reshape(-1, 2)
    return float(ConvexHull(corners).volume)


def shape_features(instance: LesionInstance) -> ShapeFeatures:
    """Compute the nine descriptors of one instance."""
    if instance.area == 0:
        raise DegenerateInputError("empty lesion instance")
    area = float(instance.area)
    degenerate = False

    perimeter = trace_perimeter(instance.to_mask())
    if perimeter <= 0:
        perimeter = 2.0 * math.sqrt(math.pi * area)
        degenerate = True

    rmin, cmin, rmax, cmax = instance.bbox
    extent = area / ((rmax - rmin + 1) * (cmax - cmin + 1))
    solidity = min(1.0, area / convex_area(instance.pixels))

    coords = instance.pixels.astype(np.float64)
    cov = np.cov(coords, rowvar=False, ddof=0) if instance.area > 1 else np.zeros((2, 2))
    l2, l1 = np.linalg.eigvalsh(cov)
    l1, l2 = max(l1, 0.0), max(l2, 0.0)
    floor_var = (MINOR_AXIS_FLOOR / 4.0) ** 2
    if l2 < floor_var:
        l2 = floor_var
        degenerate = True
    l1 = max(l1, l2)
    eccentricity = math.sqrt(max(0.0, 1.0 - l2 / l1))

    return ShapeFeatures(
        area=area,
        perimeter=perimeter,
        circularity=4.0 * math.pi * area / perimeter ** 2,
        solidity=solidity,
        extent=extent,
        eccentricity=eccentricity,
        major_axis=4.0 * math.sqrt(l1),
        minor_axis=4.0 * math.sqrt(l2),
        equivalent_diameter=math.sqrt(4.0 * area / math.pi),
        degenerate=degenerate,
    )


def mask_features(masks: Iterable[np.ndarray], connectivity: int = 8, min_area: int = 5) -> List[ShapeFeatures]:
    """Descriptors of every instance in every mask; slices contribute all their instances."""
    features = []
    for mask in masks:
        for instance in connected_components(mask, connectivity, min_area):
            features.append(shape_features(instance))
    logger.debug(f"Extracted {len(features)} lesion instances")
    return features


def features_matrix(features: Iterable[ShapeFeatures]) -> np.ndarray:
    """Stack descriptors into an (n, 9) float64 array."""
    rows = [f.as_vector() for f in features]
    if not rows:
        return np.zeros((0, 9))
    return np.stack(rows)
