"""
Forward diffusion of the joint (image, mask) sample and the algebra that
converts between the epsilon, velocity and x0 prediction targets.

Joint samples have shape ``(..., 2, H, W)``. The forward noise is a single
``(..., H, W)`` field shared by both channels.
"""
import logging
from typing import Tuple

import torch

from src.diffusion.schedule import NoiseSchedule, Timestep
from src.exceptions import ShapeError, SingularityError
from src.models import PredictionTarget

logger = logging.getLogger(__name__)


def broadcast_noise(eps: torch.Tensor, x0: torch.Tensor) -> torch.Tensor:
    """
    Expand an ``(..., H, W)`` noise field to both channels of ``x0``.

    Raises:
        ShapeError: If ``eps`` does not match the spatial/batch layout of ``x0``
    """
    if x0.ndim < 3:
        raise ShapeError("x0", "(..., 2, H, W)", tuple(x0.shape))
    expected = tuple(x0.shape[:-3]) + tuple(x0.shape[-2:])
    if tuple(eps.shape) != expected:
        raise ShapeError("eps", expected, tuple(eps.shape))
    return eps.unsqueeze(-3).expand_as(x0)


def _coefficients(
    sched: NoiseSchedule,
    t: Timestep,
    like: torch.Tensor
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(alpha_bar, sqrt(alpha_bar), sqrt(1 - alpha_bar)) shaped to broadcast over ``like``."""
    alpha_bar = sched.alpha_bar_at(t)
    if isinstance(t, torch.Tensor) and t.ndim > 0:
        if t.ndim != 1 or like.ndim < 4 or t.shape[0] != like.shape[0]:
            raise ShapeError("t", "(B,) matching the batch of x", tuple(t.shape))
        alpha_bar = alpha_bar.reshape(t.shape + (1,) * (like.ndim - t.ndim))
    alpha_bar = alpha_bar.to(device=like.device)
    sqrt_ab = alpha_bar.sqrt().to(like.dtype)
    sqrt_1m_ab = (1.0 - alpha_bar).sqrt().to(like.dtype)
    return alpha_bar, sqrt_ab, sqrt_1m_ab


def _check_pair(name_a: str, a: torch.Tensor, name_b: str, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(name_b, tuple(a.shape), tuple(b.shape))


def forward_diffuse(
    x0: torch.Tensor,
    t: Timestep,
    eps: torch.Tensor,
    sched: NoiseSchedule
) -> torch.Tensor:
    """
    Sample ``x_t = sqrt(alpha_bar[t]) * x0 + sqrt(1 - alpha_bar[t]) * eps``.

    The same ``eps`` realization is added to the image and the mask channel.
    ``t = 0`` is accepted as the clean boundary and returns ``x0``.

    Args:
        x0: Joint sample(s), shape (..., 2, H, W)
        t: Timestep (int) or per-sample LongTensor of shape (B,)
        eps: Shared noise field, shape (..., H, W)
        sched: Noise schedule

    Returns:
        Noisy state with the shape of ``x0``
    """
    noise = broadcast_noise(eps, x0)
    _, sqrt_ab, sqrt_1m_ab = _coefficients(sched, t, x0)
    return sqrt_ab * x0 + sqrt_1m_ab * noise


def compute_target(
    x0: torch.Tensor,
    eps: torch.Tensor,
    t: Timestep,
    sched: NoiseSchedule,
    target: PredictionTarget
) -> torch.Tensor:
    """
    Regression target of the denoiser for the given parameterization.

    Returns:
        ``eps`` broadcast to both channels, ``x0``, or the velocity
        ``v = sqrt(alpha_bar) * eps - sqrt(1 - alpha_bar) * x0``
    """
    noise = broadcast_noise(eps, x0)
    target = PredictionTarget(target)
    if target is PredictionTarget.EPSILON:
        sched.check_timestep(t)
        return noise.clone()
    if target is PredictionTarget.X0:
        sched.check_timestep(t)
        return x0.clone()
    _, sqrt_ab, sqrt_1m_ab = _coefficients(sched, t, x0)
    return sqrt_ab * noise - sqrt_1m_ab * x0


def predict_x0(
    model_out: torch.Tensor,
    x_t: torch.Tensor,
    t: Timestep,
    sched: NoiseSchedule,
    target: PredictionTarget
) -> torch.Tensor:
    """
    Clean-sample estimate implied by a network output.

    Raises:
        SingularityError: Epsilon target at a timestep with alpha_bar = 0
    """
    _check_pair("x_t", x_t, "model_out", model_out)
    target = PredictionTarget(target)
    alpha_bar, sqrt_ab, sqrt_1m_ab = _coefficients(sched, t, x_t)
    if target is PredictionTarget.X0:
        return model_out
    if target is PredictionTarget.VELOCITY:
        return sqrt_ab * x_t - sqrt_1m_ab * model_out
    if bool(torch.any(alpha_bar <= 0)):
        raise SingularityError("epsilon -> x0", _first_timestep(t))
    return (x_t - sqrt_1m_ab * model_out) / sqrt_ab


def predict_eps(
    model_out: torch.Tensor,
    x_t: torch.Tensor,
    t: Timestep,
    sched: NoiseSchedule,
    target: PredictionTarget
) -> torch.Tensor:
    """
    Noise estimate implied by a network output.

    Raises:
        SingularityError: X0 target at a timestep with alpha_bar = 1
    """
    _check_pair("x_t", x_t, "model_out", model_out)
    target = PredictionTarget(target)
    alpha_bar, sqrt_ab, sqrt_1m_ab = _coefficients(sched, t, x_t)
    if target is PredictionTarget.EPSILON:
        return model_out
    if target is PredictionTarget.VELOCITY:
        return sqrt_1m_ab * x_t + sqrt_ab * model_out
    if bool(torch.any(alpha_bar >= 1)):
        raise SingularityError("x0 -> epsilon", _first_timestep(t))
    return (x_t - sqrt_ab * model_out) / sqrt_1m_ab


def _first_timestep(t: Timestep) -> int:
    if isinstance(t, torch.Tensor):
        return int(t.reshape(-1)[0].item())
    return int(t)
