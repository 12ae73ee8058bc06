"""
Shared-bottleneck 2-channel U-Net.

Image and mask enter as the two channels of one tensor and leave as the two
channels of the prediction; every level, including the deepest one, sees both.
The combined embedding ``e`` modulates every ResBlock additively after its
first convolution.
"""
import logging
from typing import Dict, List

import torch
import torch.nn as nn
import torch.nn.functional as F

from src.exceptions import NonFiniteError, ShapeError
from src.models import UNetConfig
from src.network.conditioning import ConditionEmbedding, TimeEmbedding

logger = logging.getLogger(__name__)

INIT_STD = 0.02


class ResBlock(nn.Module):
    """GroupNorm-SiLU-conv twice, with the embedding added in between."""

    def __init__(self, in_channels: int, out_channels: int, embedding_width: int, groups: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(groups, in_channels)
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.emb_proj = nn.Linear(embedding_width, out_channels)
        self.norm2 = nn.GroupNorm(groups, out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1)
        if in_channels != out_channels:
            self.skip = nn.Conv2d(in_channels, out_channels, 1)
        else:
            self.skip = nn.Identity()

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.emb_proj(F.silu(emb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


class AttentionBlock(nn.Module):
    """Pre-norm multi-head self-attention over flattened spatial positions."""

    def __init__(self, channels: int, head_channels: int, groups: int):
        super().__init__()
        self.heads = channels // head_channels
        self.head_channels = head_channels
        self.norm = nn.GroupNorm(groups, channels)
        self.qkv = nn.Conv2d(channels, 3 * channels, 1)
        self.proj = nn.Conv2d(channels, channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        qkv = self.qkv(self.norm(x)).reshape(b, 3, self.heads, self.head_channels, h * w)
        q, k, v = qkv[:, 0], qkv[:, 1], qkv[:, 2]
        scores = torch.einsum("bncq,bnck->bnqk", q, k) / self.head_channels ** 0.5
        weights = torch.softmax(scores, dim=-1)
        out = torch.einsum("bnqk,bnck->bncq", weights, v).reshape(b, c, h, w)
        return x + self.proj(out)


class Downsample(nn.Module):
    """Strided 3x3 convolution halving H and W."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, 3, stride=2, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(x)


class Upsample(nn.Module):
    """Nearest-neighbor x2 followed by a 3x3 convolution."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(F.interpolate(x, scale_factor=2, mode="nearest"))


class UNet(nn.Module):
    """``f(x_t, e)`` for 2-channel joint samples."""

    def __init__(self, config: UNetConfig):
        super().__init__()
        self.config = config
        levels = config.level_channels
        attended = set(config.resolved_attention_levels)
        groups = config.norm_groups
        d = config.embedding_width
        heads = config.attention_head_channels

        self.conv_in = nn.Conv2d(config.in_channels, levels[0], 3, padding=1)
        skip_channels: List[int] = [levels[0]]
        current = levels[0]

        self.down = nn.ModuleList()
        for i, channels in enumerate(levels):
            stage = nn.ModuleList()
            for _ in range(config.res_blocks_per_level):
                stage.append(ResBlock(current, channels, d, groups))
                current = channels
                if i in attended:
                    stage.append(AttentionBlock(current, heads, groups))
                skip_channels.append(current)
            if i != len(levels) - 1:
                stage.append(Downsample(current))
                skip_channels.append(current)
            self.down.append(stage)

        self.mid_block1 = ResBlock(current, current, d, groups)
        self.mid_attn = AttentionBlock(current, heads, groups)
        self.mid_block2 = ResBlock(current, current, d, groups)

        self.up = nn.ModuleList()
        for i in reversed(range(len(levels))):
            channels = levels[i]
            stage = nn.ModuleList()
            for _ in range(config.res_blocks_per_level + 1):
                stage.append(ResBlock(current + skip_channels.pop(), channels, d, groups))
                current = channels
                if i in attended:
                    stage.append(AttentionBlock(current, heads, groups))
            if i != 0:
                stage.append(Upsample(current))
            self.up.append(stage)

        self.norm_out = nn.GroupNorm(groups, current)
        self.conv_out = nn.Conv2d(current, config.out_channels, 3, padding=1)

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        cfg = self.config
        expected = (cfg.in_channels, cfg.image_size, cfg.image_size)
        if x.ndim != 4 or tuple(x.shape[1:]) != expected:
            raise ShapeError("x_t", ("B",) + expected, tuple(x.shape))
        if emb.shape != (x.shape[0], cfg.embedding_width):
            raise ShapeError("e", (x.shape[0], cfg.embedding_width), tuple(emb.shape))

        h = self.conv_in(x)
        skips = [h]
        for stage in self.down:
            for layer in stage:
                if isinstance(layer, ResBlock):
                    h = layer(h, emb)
                    skips.append(h)
                elif isinstance(layer, AttentionBlock):
                    # the skip of a ResBlock is taken after its attention
                    h = layer(h)
                    skips[-1] = h
                else:
                    h = layer(h)
                    skips.append(h)

        h = self.mid_block1(h, emb)
        h = self.mid_attn(h)
        h = self.mid_block2(h, emb)

        for stage in self.up:
            for layer in stage:
                if isinstance(layer, ResBlock):
                    h = layer(torch.cat([h, skips.pop()], dim=1), emb)
                else:
                    h = layer(h)

        out = self.conv_out(F.silu(self.norm_out(h)))
        if not bool(torch.isfinite(out).all()):
            raise NonFiniteError("denoiser output")
        return out

    def bottleneck_shape(self) -> tuple:
        """(channels, H, W) of the shared bottleneck."""
        size = self.config.bottleneck_size
        return (self.config.level_channels[-1], size, size)


class DenoiserModel(nn.Module):
    """Embeddings plus U-Net: ``f(x_t, t, token)``."""

    def __init__(self, config: UNetConfig, timesteps: int, n_z: int):
        super().__init__()
        self.config = config
        self.timesteps = timesteps
        self.n_z = n_z
        self.time_embed = TimeEmbedding(timesteps, config.embedding_width, config.pe_width)
        self.cond_embed = ConditionEmbedding(n_z, config.embedding_width, config.pe_width)
        self.unet = UNet(config)
        init_weights(self)

    def embed(self, t: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        """Combined embedding ``e = t_emb + c_emb``."""
        return self.time_embed(t) + self.cond_embed(tokens)

    def forward(self, x: torch.Tensor, t: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        return self.unet(x, self.embed(t, tokens))


def init_weights(model: nn.Module, std: float = INIT_STD) -> None:
    """
    normal(0, std) for convolutions, linears and embedding tables, zero
    biases, and a zero output convolution so an untrained model predicts 0.
    """
    for module in model.modules():
        if isinstance(module, (nn.Conv2d, nn.Linear)):
            nn.init.normal_(module.weight, mean=0.0, std=std)
            if module.bias is not None:
                nn.init.zeros_(module.bias)
        elif isinstance(module, nn.Embedding):
            nn.init.normal_(module.weight, mean=0.0, std=std)
    for module in model.modules():
        if isinstance(module, UNet):
            nn.init.zeros_(module.conv_out.weight)
            nn.init.zeros_(module.conv_out.bias)


def unet_forward(model: UNet, x_t: torch.Tensor, e: torch.Tensor) -> torch.Tensor:
    """Single-sample convenience wrapper: ``(2, H, W)`` and ``(d,)`` in, ``(2, H, W)`` out."""
    return model(x_t.unsqueeze(0), e.unsqueeze(0))[0]


def backward(
    model: UNet,
    x_t: torch.Tensor,
    e: torch.Tensor,
    upstream_grad: torch.Tensor
) -> Dict[str, torch.Tensor]:
    """
    Parameter gradients of ``sum(model(x_t, e) * upstream_grad)``.

    Args:
        model: U-Net
        x_t: Batch of noisy states (B, 2, H, W)
        e: Embeddings (B, d)
        upstream_grad: dL/d(output), same shape as the output

    Returns:
        Gradient per named parameter

    Raises:
        NonFiniteError: If any gradient is NaN or inf
    """
    names, params = zip(*[(n, p) for n, p in model.named_parameters() if p.requires_grad])
    with torch.enable_grad():
        out = model(x_t, e)
        if upstream_grad.shape != out.shape:
            raise ShapeError("upstream_grad", tuple(out.shape), tuple(upstream_grad.shape))
        grads = torch.autograd.grad((out * upstream_grad).sum(), params, allow_unused=True)
    result = {}
    for name, param, grad in zip(names, params, grads):
        if grad is None:
            grad = torch.zeros_like(param)
        if not bool(torch.isfinite(grad).all()):
            raise NonFiniteError(f"gradient of {name}")
        result[name] = grad
    return result
