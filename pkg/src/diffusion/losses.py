"""
Lp training objective: mean over every element of ``|pred - target|^p``.
"""
from typing import Union

import torch

from src.exceptions import NonFiniteError, ShapeError
from src.models import LpConfig


def lp_loss_grad(residual: torch.Tensor, p: float) -> torch.Tensor:
    """
    Gradient of the mean Lp loss with respect to the prediction.

    ``p * |r|^(p-1) * sign(r) / N``, defined as 0 wherever ``r == 0``.
    """
    n = residual.numel()
    magnitude = residual.abs()
    safe = torch.where(magnitude > 0, magnitude, torch.ones_like(magnitude))
    grad = p * safe.pow(p - 1.0) * torch.sign(residual) / n
    return torch.where(magnitude > 0, grad, torch.zeros_like(grad))


class _LpLoss(torch.autograd.Function):
    """Autograd function with the closed-form Lp gradient."""

    @staticmethod
    def forward(ctx, pred: torch.Tensor, target: torch.Tensor, p: float) -> torch.Tensor:
        residual = pred - target
        ctx.save_for_backward(residual)
        ctx.p = p
        return residual.abs().pow(p).mean()

    @staticmethod
    def backward(ctx, grad_output: torch.Tensor):
        (residual,) = ctx.saved_tensors
        grad = lp_loss_grad(residual, ctx.p) * grad_output
        grad_pred = grad if ctx.needs_input_grad[0] else None
        grad_target = -grad if ctx.needs_input_grad[1] else None
        return grad_pred, grad_target, None


def lp_loss(
    pred: torch.Tensor,
    target: torch.Tensor,
    cfg: Union[LpConfig, float]
) -> torch.Tensor:
    """
    Mean Lp loss over batch and elements.

    Args:
        pred: Network output
        target: Regression target of the same shape
        cfg: LpConfig or a bare exponent

    Returns:
        Scalar loss tensor

    Raises:
        ShapeError: If shapes differ
        NonFiniteError: If either input contains NaN or inf
    """
    p = cfg.p if isinstance(cfg, LpConfig) else LpConfig(p=cfg).p
    if pred.shape != target.shape:
        raise ShapeError("target", tuple(pred.shape), tuple(target.shape))
    if not bool(torch.isfinite(pred).all()):
        raise NonFiniteError("loss prediction")
    if not bool(torch.isfinite(target).all()):
        raise NonFiniteError("loss target")
    return _LpLoss.apply(pred, target, p)
