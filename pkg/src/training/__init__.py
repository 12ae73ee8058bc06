"""
Training recipe and loop.
"""
from .ema import EMAState, ema_update
from .recipe import EarlyStopDecision, cosine_lr, early_stop_check, oversample_weights
from .trainer import (
    BEST_CHECKPOINT,
    LAST_CHECKPOINT,
    METRICS_FILE,
    Trainer,
    TrainResult,
    build_model,
    configure_torch,
    load_denoiser,
    train_step,
    validation_loss,
)

__all__ = [
    "EMAState",
    "ema_update",
    "EarlyStopDecision",
    "cosine_lr",
    "early_stop_check",
    "oversample_weights",
    "BEST_CHECKPOINT",
    "LAST_CHECKPOINT",
    "METRICS_FILE",
    "Trainer",
    "TrainResult",
    "build_model",
    "configure_torch",
    "load_denoiser",
    "train_step",
    "validation_loss",
]
