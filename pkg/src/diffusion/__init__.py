"""
Diffusion math: schedule, forward process, target algebra and the Lp loss.
"""
from .losses import lp_loss, lp_loss_grad
from .parameterization import (
    broadcast_noise,
    compute_target,
    forward_diffuse,
    predict_eps,
    predict_x0,
)
from .schedule import NoiseSchedule, cosine_schedule

__all__ = [
    "NoiseSchedule",
    "cosine_schedule",
    "broadcast_noise",
    "forward_diffuse",
    "compute_target",
    "predict_x0",
    "predict_eps",
    "lp_loss",
    "lp_loss_grad",
]
