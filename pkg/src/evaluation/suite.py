"""
Metric suite: generated-vs-real and real-vs-real evaluation.

Output rows follow the CSV layout
``metric, value, std, n_real, n_gen, extractor, seed``.
"""
import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.evaluation.distances import kid, mmd_mf, wasserstein_1d
from src.evaluation.features import (
    PERCEPTUAL_PROXY_NAME,
    FeatureExtractor,
    get_extractor,
    mean_perceptual_distance,
)
from src.evaluation.morphometrics import features_matrix, mask_features
from src.exceptions import ConfigurationError
from src.models import SHAPE_FEATURE_NAMES, MetricSettings, SliceRecord

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["metric", "value", "std", "n_real", "n_gen", "extractor", "seed"]
WASSERSTEIN_PREFIX = "wasserstein_"
IOU_METRIC = "lesion-iou"


@dataclass
class MetricRow:
    metric: str
    value: float
    std: float
    n_real: int
    n_gen: int
    extractor: str
    seed: int


def lesion_consistency_iou(image: np.ndarray, mask: np.ndarray, threshold: float = 0.5) -> float:
    """IoU of the mask's +1 region and the image's ``> threshold`` region; 0 when both are empty."""
    hyper = np.asarray(image) > threshold
    lesion = np.asarray(mask) > 0
    union = np.logical_or(hyper, lesion).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(hyper, lesion).sum() / union)


def _lesion_conditioned(record: SliceRecord, n_z: Optional[int]) -> bool:
    if record.token is not None and n_z is not None:
        return record.token // n_z == 1
    return bool(record.pathology)


def evaluate_samples(
    real: Sequence[SliceRecord],
    gen: Sequence[SliceRecord],
    settings: MetricSettings,
    extractor: Optional[FeatureExtractor] = None,
    real_feats: Optional[np.ndarray] = None,
    gen_feats: Optional[np.ndarray] = None,
    n_z: Optional[int] = None
) -> List[MetricRow]:
    """
    KID, the perceptual proxy, MMD-MF, nine per-feature Wasserstein
    distances and, when lesion-conditioned samples exist, the lesion
    consistency IoU.

    Metrics that cannot be computed (e.g. fewer than two lesion instances)
    are reported as NaN with a warning.

    Args:
        real: Reference slices
        gen: Generated (or second-half real) slices
        settings: Metric settings
        extractor: Image feature extractor; built from ``settings.extractor`` if omitted
        real_feats: Precomputed real features (overrides the extractor for KID)
        gen_feats: Precomputed generated features
        n_z: Axial bin count used to decode tokens of generated slices

    Returns:
        Metric rows
    """
    extractor = extractor or get_extractor(settings.extractor)
    rng = np.random.default_rng(settings.seed)
    n_real, n_gen = len(real), len(gen)
    name = "external" if real_feats is not None else extractor.name

    def row(metric: str, value: float, std: float = 0.0) -> MetricRow:
        logger.info(f"{metric}: {value:.6g}")
        return MetricRow(metric, float(value), float(std), n_real, n_gen, name, settings.seed)

    rows: List[MetricRow] = []

    real_images = np.stack([r.image for r in real])
    gen_images = np.stack([g.image for g in gen])
    fr = real_feats if real_feats is not None else extractor.embed(real_images)
    fg = gen_feats if gen_feats is not None else extractor.embed(gen_images)
    subset = min(settings.kid_subset_size, fr.shape[0], fg.shape[0])
    if subset < settings.kid_subset_size:
        logger.warning(f"KID subset size clamped from {settings.kid_subset_size} to {subset}")
    if subset >= 2:
        mean, std = kid(fr, fg, subset, settings.kid_n_subsets, rng)
        rows.append(row("kid", mean, std))
    else:
        logger.warning("KID needs at least 2 samples per set")
        rows.append(row("kid", float("nan")))

    rows.append(row(
        PERCEPTUAL_PROXY_NAME,
        mean_perceptual_distance(real_images, gen_images, extractor, max(n_real, n_gen), rng),
    ))

    real_shapes = mask_features((r.mask for r in real), settings.connectivity, settings.min_area)
    gen_shapes = mask_features((g.mask for g in gen), settings.connectivity, settings.min_area)
    if len(real_shapes) >= 2 and len(gen_shapes) >= 2:
        rows.append(row("mmd-mf", mmd_mf(real_shapes, gen_shapes)))
    else:
        logger.warning(f"MMD-MF skipped: {len(real_shapes)} real and {len(gen_shapes)} generated lesion instances")
        rows.append(row("mmd-mf", float("nan")))

    xr, xg = features_matrix(real_shapes), features_matrix(gen_shapes)
    for j, feature in enumerate(SHAPE_FEATURE_NAMES):
        if xr.shape[0] and xg.shape[0]:
            rows.append(row(f"{WASSERSTEIN_PREFIX}{feature}", wasserstein_1d(xr[:, j], xg[:, j])))
        else:
            rows.append(row(f"{WASSERSTEIN_PREFIX}{feature}", float("nan")))

    ious = [
        lesion_consistency_iou(g.image, g.mask, settings.hyperintense_threshold)
        for g in gen if _lesion_conditioned(g, n_z)
    ]
    if ious:
        rows.append(row(IOU_METRIC, float(np.mean(ious)), float(np.std(ious))))
    return rows


def real_vs_real_baseline(
    records: Sequence[SliceRecord],
    settings: MetricSettings,
    extractor: Optional[FeatureExtractor] = None
) -> List[MetricRow]:
    """
    Every metric between two disjoint random halves of the real slices.

    Raises:
        ConfigurationError: Fewer than 4 slices
    """
    if len(records) < 4:
        raise ConfigurationError("metrics", f"baseline needs at least 4 real slices, got {len(records)}")
    order = np.random.default_rng(settings.seed).permutation(len(records))
    half = len(records) // 2
    first = [records[i] for i in order[:half]]
    second = [records[i] for i in order[half:2 * half]]
    return evaluate_samples(first, second, settings, extractor)


def rows_to_frame(rows: Sequence[MetricRow], **labels) -> pd.DataFrame:
    """Metric rows as a DataFrame, with optional constant label columns prepended."""
    frame = pd.DataFrame([asdict(r) for r in rows], columns=METRIC_COLUMNS)
    for i, (key, value) in enumerate(labels.items()):
        frame.insert(i, key, value)
    return frame


def rows_by_metric(rows: Sequence[MetricRow]) -> Dict[str, MetricRow]:
    return {r.metric: r for r in rows}
