"""
Models package initialization.
"""
from .experiment import (
    DataConfig,
    DiffusionConfig,
    ExperimentConfig,
    LpConfig,
    MetricSettings,
    PredictionTarget,
    RuntimeConfig,
    SamplerConfig,
    SweepConfig,
    ToyDataConfig,
    TrainConfig,
    UNetConfig,
)
from .records import SHAPE_FEATURE_NAMES, ConditionToken, ShapeFeatures, SliceRecord

__all__ = [
    "DataConfig",
    "DiffusionConfig",
    "ExperimentConfig",
    "LpConfig",
    "MetricSettings",
    "PredictionTarget",
    "RuntimeConfig",
    "SamplerConfig",
    "SweepConfig",
    "ToyDataConfig",
    "TrainConfig",
    "UNetConfig",
    "SHAPE_FEATURE_NAMES",
    "ConditionToken",
    "ShapeFeatures",
    "SliceRecord",
]
