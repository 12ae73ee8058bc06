"""
Exponential moving average of model weights.
"""
from contextlib import contextmanager
from typing import Dict, Iterator, Mapping

import torch
import torch.nn as nn

from src.exceptions import ShapeError


class EMAState:
    """Shadow copy of the parameters, updated after every optimizer step."""

    def __init__(self, shadow: Mapping[str, torch.Tensor], decay: float):
        self.shadow: Dict[str, torch.Tensor] = {k: v.detach().clone() for k, v in shadow.items()}
        self.decay = decay

    @classmethod
    def from_module(cls, model: nn.Module, decay: float) -> "EMAState":
        """Start as a copy of the current parameters."""
        return cls(dict(model.named_parameters()), decay)

    @torch.no_grad()
    def update(self, params: Mapping[str, torch.Tensor]) -> None:
        """``shadow <- decay * shadow + (1 - decay) * params`` in place."""
        if set(params) != set(self.shadow):
            raise ShapeError("ema params", sorted(self.shadow), sorted(params))
        for name, value in params.items():
            shadow = self.shadow[name]
            if shadow.shape != value.shape:
                raise ShapeError(f"ema/{name}", tuple(shadow.shape), tuple(value.shape))
            shadow.mul_(self.decay).add_(value.detach(), alpha=1.0 - self.decay)

    def update_from(self, model: nn.Module) -> None:
        """Update against a module's current parameters."""
        self.update(dict(model.named_parameters()))

    @torch.no_grad()
    def copy_to(self, model: nn.Module) -> None:
        """Overwrite the module's parameters with the shadow."""
        for name, param in model.named_parameters():
            param.copy_(self.shadow[name])

    @contextmanager
    def applied(self, model: nn.Module) -> Iterator[nn.Module]:
        """Temporarily swap the shadow weights into ``model``."""
        backup = {name: p.detach().clone() for name, p in model.named_parameters()}
        self.copy_to(model)
        try:
            yield model
        finally:
            with torch.no_grad():
                for name, param in model.named_parameters():
                    param.copy_(backup[name])

    def state_dict(self) -> Dict[str, torch.Tensor]:
        return {k: v.clone() for k, v in self.shadow.items()}


def ema_update(ema: EMAState, params: Mapping[str, torch.Tensor]) -> EMAState:
    """Functional form of ``EMAState.update``; mutates and returns ``ema``."""
    ema.update(params)
    return ema
