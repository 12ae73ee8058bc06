"""
Conditional DDIM sampler.

Trajectories run over a uniform-stride timestep subsequence ending at the
``alpha_bar = 1`` boundary. Each step predicts x0, clamps it to [-1, 1],
re-derives the implied noise and takes the DDIM update with stochasticity
``eta``. The reverse-process noise is drawn independently per channel.
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
import torch

from src.diffusion import NoiseSchedule, predict_eps, predict_x0
from src.exceptions import ConfigurationError, NonFiniteError, NumericError, RangeError, UsageError
from src.models import ConditionToken, PredictionTarget, SamplerConfig, SliceRecord

logger = logging.getLogger(__name__)

Denoiser = Callable[[torch.Tensor, torch.Tensor, torch.Tensor], torch.Tensor]

VARIANCE_TOLERANCE = 1e-12


def timestep_subsequence(timesteps: int, steps: int) -> List[int]:
    """
    ``tau_i = T - floor(i * T / steps)`` for ``i = 0..steps-1``.

    Strictly decreasing, starts at T, ends at the smallest visited timestep;
    the step after the last one targets t = 0.

    Raises:
        ConfigurationError: If steps is outside [1, T]
    """
    if not 1 <= steps <= timesteps:
        raise ConfigurationError("sampler.steps", f"must be in [1, {timesteps}], got {steps}")
    return [timesteps - (i * timesteps) // steps for i in range(steps)]


def ddim_sigma(alpha_bar_t: float, alpha_bar_prev: float, eta: float) -> float:
    """
    DDIM noise scale
    ``eta * sqrt((1 - ab_prev) / (1 - ab_t)) * sqrt(1 - ab_t / ab_prev)``.

    Raises:
        RangeError: Unless ``0 < ab_t < ab_prev <= 1`` and ``eta >= 0``
    """
    if not 0.0 < alpha_bar_t < alpha_bar_prev <= 1.0:
        raise RangeError(
            "alpha_bar", (alpha_bar_t, alpha_bar_prev), "0 < alpha_bar_t < alpha_bar_prev <= 1"
        )
    if eta < 0:
        raise RangeError("eta", eta, "eta >= 0")
    return eta * float(np.sqrt((1.0 - alpha_bar_prev) / (1.0 - alpha_bar_t))) * float(
        np.sqrt(1.0 - alpha_bar_t / alpha_bar_prev)
    )


def binarize_mask(mask: torch.Tensor, threshold: float = 0.0) -> torch.Tensor:
    """``+1`` where ``mask > threshold``, else ``-1``."""
    return torch.where(mask > threshold, torch.ones_like(mask), -torch.ones_like(mask))


def ddim_step(
    x_t: torch.Tensor,
    model_out: torch.Tensor,
    t: int,
    t_prev: int,
    sched: NoiseSchedule,
    eta: float,
    generator: Optional[torch.Generator],
    target: PredictionTarget
) -> torch.Tensor:
    """
    One reverse step ``x_t -> x_{t_prev}``.

    Args:
        x_t: Current states (B, 2, H, W)
        model_out: Network output at (x_t, t)
        t: Current timestep
        t_prev: Next timestep (0 for the final step)
        sched: Noise schedule
        eta: Stochasticity in [0, 1]
        generator: Source of the per-channel noise (unused when sigma = 0)
        target: What ``model_out`` predicts

    Returns:
        States at ``t_prev``

    Raises:
        NumericError: If ``1 - ab_prev - sigma^2`` is negative
    """
    if not 0 <= t_prev < t:
        raise RangeError("t_prev", t_prev, f"0 <= t_prev < t = {t}")
    ab_t = float(sched.alpha_bar_at(t))
    ab_prev = float(sched.alpha_bar_at(t_prev))
    sigma = ddim_sigma(ab_t, ab_prev, eta)
    direction_var = 1.0 - ab_prev - sigma * sigma
    if direction_var < -VARIANCE_TOLERANCE:
        raise NumericError(
            f"negative direction variance {direction_var:.3g} at t={t} -> {t_prev}"
        )
    direction_var = max(direction_var, 0.0)

    x0_hat = predict_x0(model_out, x_t, t, sched, target).clamp(-1.0, 1.0)
    eps_hat = predict_eps(x0_hat, x_t, t, sched, PredictionTarget.X0)
    x_prev = ab_prev ** 0.5 * x0_hat + direction_var ** 0.5 * eps_hat
    if sigma > 0:
        z = torch.randn(x_t.shape, generator=generator, dtype=x_t.dtype)
        x_prev = x_prev + sigma * z
    return x_prev


@dataclass
class SampleBatch:
    """Finished samples: ``joint`` is clamped/binarized, ``raw`` is the trajectory endpoint."""

    joint: torch.Tensor
    raw: torch.Tensor
    tokens: torch.Tensor

    def __len__(self) -> int:
        return self.joint.shape[0]


def _as_tokens(tokens: Union[None, ConditionToken, Sequence[int], torch.Tensor]) -> torch.Tensor:
    if tokens is None:
        raise UsageError("a condition token is required; unconditional sampling is not supported")
    if isinstance(tokens, ConditionToken):
        return torch.tensor([tokens.token], dtype=torch.long)
    out = torch.as_tensor(tokens, dtype=torch.long).reshape(-1)
    if out.numel() == 0:
        raise UsageError("a condition token is required; unconditional sampling is not supported")
    return out


@torch.no_grad()
def sample(
    model: Denoiser,
    tokens: Union[ConditionToken, Sequence[int], torch.Tensor],
    sched: NoiseSchedule,
    cfg: SamplerConfig,
    target: PredictionTarget,
    image_size: int,
    generator: Optional[torch.Generator] = None
) -> SampleBatch:
    """
    Draw one joint sample per token.

    Starts from ``x_T ~ N(0, I)`` independent per channel and applies
    ``ddim_step`` along ``timestep_subsequence(T, cfg.steps)``.

    Args:
        model: ``model(x_t, t, tokens)`` denoiser (EMA weights for evaluation)
        tokens: Condition token(s); mandatory
        sched: Noise schedule
        cfg: Steps, eta, seed and mask threshold
        target: What the model predicts
        image_size: H = W of the samples
        generator: Noise source; seeded from ``cfg.seed`` when omitted

    Returns:
        SampleBatch

    Raises:
        UsageError: If no token is given
        NonFiniteError: If a trajectory diverges
    """
    tokens = _as_tokens(tokens)
    if generator is None:
        generator = torch.Generator().manual_seed(cfg.seed)
    taus = timestep_subsequence(sched.timesteps, cfg.steps)
    b = tokens.shape[0]
    x = torch.randn((b, 2, image_size, image_size), generator=generator, dtype=torch.float32)

    for i, t in enumerate(taus):
        t_prev = taus[i + 1] if i + 1 < len(taus) else 0
        t_batch = torch.full((b,), t, dtype=torch.long)
        model_out = model(x, t_batch, tokens)
        x = ddim_step(x, model_out, t, t_prev, sched, cfg.eta, generator, target)
        if not bool(torch.isfinite(x).all()):
            raise NonFiniteError(f"sampling trajectory at t={t_prev}")

    joint = torch.stack([x[:, 0].clamp(-1.0, 1.0), binarize_mask(x[:, 1], cfg.mask_threshold)], dim=1)
    return SampleBatch(joint=joint, raw=x, tokens=tokens)


def samples_to_records(batch: SampleBatch, n_z: int, prefix: str = "sample", offset: int = 0) -> List[SliceRecord]:
    """
    Wrap generated samples as archive records.

    The axial position is the token's bin (``z_total = n_z``); ``pathology``
    follows the generated mask while ``token`` keeps the requested condition.
    """
    records = []
    for i in range(len(batch)):
        token = int(batch.tokens[i])
        z_bin = token % n_z
        mask = batch.joint[i, 1].numpy()
        records.append(SliceRecord(
            subject_id=f"{prefix}-{offset + i:06d}",
            z_index=z_bin,
            z_total=n_z,
            z_bin=z_bin,
            pathology=int(bool(np.any(mask > 0))),
            image=batch.joint[i, 0].numpy(),
            mask=mask,
            token=token,
        ))
    return records
