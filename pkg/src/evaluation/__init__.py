"""
Lesion morphometrics and distribution metrics.
"""
from .components import LesionInstance, connected_components
from .distances import kid, median_bandwidth, mmd2_unbiased, mmd_mf, polynomial_kernel, wasserstein_1d
from .features import (
    PERCEPTUAL_PROXY_NAME,
    FeatureExtractor,
    ToyFeatureExtractor,
    available_extractors,
    get_extractor,
    mean_perceptual_distance,
    perceptual_distance,
    read_feature_file,
    register_extractor,
    write_feature_file,
)
from .morphometrics import MINOR_AXIS_FLOOR, convex_area, features_matrix, mask_features, shape_features, trace_perimeter
from .suite import (
    IOU_METRIC,
    METRIC_COLUMNS,
    WASSERSTEIN_PREFIX,
    MetricRow,
    evaluate_samples,
    lesion_consistency_iou,
    real_vs_real_baseline,
    rows_by_metric,
    rows_to_frame,
)

__all__ = [
    "LesionInstance",
    "connected_components",
    "kid",
    "median_bandwidth",
    "mmd2_unbiased",
    "mmd_mf",
    "polynomial_kernel",
    "wasserstein_1d",
    "PERCEPTUAL_PROXY_NAME",
    "FeatureExtractor",
    "ToyFeatureExtractor",
    "available_extractors",
    "get_extractor",
    "mean_perceptual_distance",
    "perceptual_distance",
    "read_feature_file",
    "register_extractor",
    "write_feature_file",
    "MINOR_AXIS_FLOOR",
    "convex_area",
    "features_matrix",
    "mask_features",
    "shape_features",
    "trace_perimeter",
    "IOU_METRIC",
    "METRIC_COLUMNS",
    "WASSERSTEIN_PREFIX",
    "MetricRow",
    "evaluate_samples",
    "lesion_consistency_iou",
    "real_vs_real_baseline",
    "rows_by_metric",
    "rows_to_frame",
]
