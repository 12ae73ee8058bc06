"""
Cosine noise schedule.

Timesteps are 1-based: ``alpha_bar[t]`` for ``t`` in ``1..T`` and
``alpha_bar[0] = 1`` as the clean-data boundary used by the sampler.
``alpha`` and ``beta`` hold ``T`` entries where index ``t - 1`` belongs to
timestep ``t``.
"""
import math
from dataclasses import dataclass
from typing import Sequence, Union

import torch

from src.exceptions import ConfigurationError, RangeError

BETA_MAX = 0.999

Timestep = Union[int, torch.Tensor]


@dataclass(frozen=True)
class NoiseSchedule:
    """Precomputed float64 schedule tables."""

    timesteps: int
    offset: float
    alpha_bar: torch.Tensor
    alpha: torch.Tensor
    beta: torch.Tensor

    @classmethod
    def from_alpha_bar(cls, alpha_bar: Sequence[float], offset: float = float("nan")) -> "NoiseSchedule":
        """
        Build a schedule from explicit cumulative products.

        Args:
            alpha_bar: Values for t = 0..T, starting at exactly 1

        Returns:
            NoiseSchedule with alpha and beta derived from the ratios
        """
        table = torch.as_tensor(alpha_bar, dtype=torch.float64)
        if table.ndim != 1 or table.numel() < 2:
            raise ConfigurationError("alpha_bar", "need at least the t=0 boundary and one timestep")
        if table[0].item() != 1.0:
            raise ConfigurationError("alpha_bar", "alpha_bar[0] must be exactly 1")
        if not bool(torch.all(table[1:] < table[:-1])):
            raise ConfigurationError("alpha_bar", "must be strictly decreasing")
        if table[-1].item() < 0:
            raise ConfigurationError("alpha_bar", "must stay non-negative")
        alpha = table[1:] / table[:-1]
        return cls(
            timesteps=table.numel() - 1,
            offset=offset,
            alpha_bar=table,
            alpha=alpha,
            beta=1.0 - alpha,
        )

    def check_timestep(self, t: Timestep, allow_zero: bool = True) -> None:
        """Raise RangeError unless every timestep lies in the valid range."""
        low = 0 if allow_zero else 1
        if isinstance(t, torch.Tensor):
            if t.numel() == 0:
                return
            t_min, t_max = int(t.min().item()), int(t.max().item())
        else:
            t_min = t_max = int(t)
        if t_min < low or t_max > self.timesteps:
            bad = t_min if t_min < low else t_max
            raise RangeError("t", bad, f"{low} <= t <= {self.timesteps}")

    def alpha_bar_at(self, t: Timestep) -> torch.Tensor:
        """Cumulative product at timestep(s) ``t`` (float64)."""
        self.check_timestep(t)
        if isinstance(t, torch.Tensor):
            return self.alpha_bar[t.long()]
        return self.alpha_bar[int(t)]


def cosine_schedule(timesteps: int = 1000, offset: float = 0.008) -> NoiseSchedule:
    """
    Cosine schedule ``f(t) = cos^2(((t/T + s) / (1 + s)) * pi/2)``.

    ``alpha_bar[t] = f(t) / f(0)``; per-step betas are clipped to at most
    0.999 and ``alpha_bar`` is rebuilt as the cumulative product of the
    clipped alphas, so ``alpha_bar[T] > 0`` even when ``s = 0``.

    Args:
        timesteps: Number of diffusion steps T
        offset: Schedule offset s

    Returns:
        NoiseSchedule

    Raises:
        ConfigurationError: If T < 1 or s < 0
    """
    if isinstance(timesteps, bool) or not isinstance(timesteps, int) or timesteps < 1:
        raise ConfigurationError("diffusion.timesteps", f"must be an integer >= 1, got {timesteps!r}")
    if not math.isfinite(offset) or offset < 0:
        raise ConfigurationError("diffusion.schedule_offset", f"must be finite and >= 0, got {offset!r}")

    steps = torch.arange(timesteps + 1, dtype=torch.float64)
    f = torch.cos(((steps / timesteps + offset) / (1.0 + offset)) * math.pi / 2.0) ** 2
    ratio = f[1:] / f[:-1]
    beta = torch.clamp(1.0 - ratio, max=BETA_MAX)
    alpha = 1.0 - beta
    alpha_bar = torch.cat([torch.ones(1, dtype=torch.float64), torch.cumprod(alpha, dim=0)])
    return NoiseSchedule(
        timesteps=timesteps,
        offset=offset,
        alpha_bar=alpha_bar,
        alpha=alpha,
        beta=beta,
    )
