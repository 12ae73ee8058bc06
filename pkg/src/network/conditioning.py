"""
Condition tokens and the embedding pathway ``e = t_emb + c_emb``.

A token packs the axial bin and the pathology flag as
``z_bin + pathology * n_z``. The condition embedding projects the learned
pathology row concatenated with a sinusoidal encoding of the bin; the time
embedding is a two-layer MLP over the sinusoidal encoding of ``t``.
"""
import math
from typing import Tuple, Union

import torch
import torch.nn as nn

from src.exceptions import ConfigurationError, RangeError, ShapeError
from src.models import ConditionToken


def make_token(z_bin: int, pathology: int, n_z: int = 30) -> int:
    """
    Flatten (z_bin, pathology) into a token in ``[0, 2 * n_z)``.

    Raises:
        RangeError: If z_bin or pathology is out of range
    """
    if n_z < 1:
        raise RangeError("n_z", n_z, "n_z >= 1")
    if not 0 <= z_bin < n_z:
        raise RangeError("z_bin", z_bin, f"0 <= z_bin < {n_z}")
    if pathology not in (0, 1):
        raise RangeError("pathology", pathology, "0 or 1")
    return int(z_bin) + int(pathology) * n_z


def decode_token(token: int, n_z: int = 30) -> Tuple[int, int]:
    """
    Inverse of make_token.

    Returns:
        (z_bin, pathology)
    """
    if not 0 <= token < 2 * n_z:
        raise RangeError("token", token, f"0 <= token < {2 * n_z}")
    return int(token) % n_z, int(token) // n_z


def sinpe(position: Union[float, torch.Tensor], d_pe: int) -> torch.Tensor:
    """
    Half-split sinusoidal encoding.

    The first ``d_pe / 2`` entries are ``sin(position * w_i)`` and the rest
    ``cos(position * w_i)`` with ``w_i = 1 / 10000^(2i / d_pe)``.

    Args:
        position: Scalar or tensor of positions
        d_pe: Even encoding width

    Returns:
        Tensor of shape ``position.shape + (d_pe,)``

    Raises:
        ConfigurationError: If d_pe is odd or not positive
    """
    if d_pe <= 0 or d_pe % 2:
        raise ConfigurationError("pe_width", f"must be a positive even number, got {d_pe}")
    position = torch.as_tensor(position)
    if not position.is_floating_point():
        position = position.to(torch.get_default_dtype())
    half = d_pe // 2
    exponent = torch.arange(half, dtype=torch.float64) * (2.0 / d_pe)
    freqs = torch.exp(-math.log(10000.0) * exponent).to(device=position.device, dtype=position.dtype)
    angles = position.unsqueeze(-1) * freqs
    return torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1)


class ConditionEmbedding(nn.Module):
    """``Linear([E_p[pathology] || SinPE(z_bin)])``."""

    def __init__(self, n_z: int, width: int, pe_width: int):
        super().__init__()
        self.n_z = n_z
        self.width = width
        self.pe_width = pe_width
        self.pathology_table = nn.Embedding(2, width)
        self.linear = nn.Linear(width + pe_width, width)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        tokens = tokens.long()
        if tokens.numel() and (int(tokens.min()) < 0 or int(tokens.max()) >= 2 * self.n_z):
            bad = int(tokens.min()) if int(tokens.min()) < 0 else int(tokens.max())
            raise RangeError("token", bad, f"0 <= token < {2 * self.n_z}")
        z_bin = tokens % self.n_z
        pathology = tokens // self.n_z
        dtype = self.linear.weight.dtype
        pe = sinpe(z_bin.to(dtype), self.pe_width)
        return self.linear(torch.cat([self.pathology_table(pathology), pe], dim=-1))


class TimeEmbedding(nn.Module):
    """``MLP(SinPE(t))`` with widths d_pe -> d -> d and SiLU in between."""

    def __init__(self, timesteps: int, width: int, pe_width: int):
        super().__init__()
        self.timesteps = timesteps
        self.width = width
        self.pe_width = pe_width
        self.mlp = nn.Sequential(
            nn.Linear(pe_width, width),
            nn.SiLU(),
            nn.Linear(width, width),
        )

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        t = torch.as_tensor(t)
        if t.numel() and (int(t.min()) < 1 or int(t.max()) > self.timesteps):
            bad = int(t.min()) if int(t.min()) < 1 else int(t.max())
            raise RangeError("t", bad, f"1 <= t <= {self.timesteps}")
        dtype = self.mlp[0].weight.dtype
        return self.mlp(sinpe(t.to(dtype), self.pe_width))


def cond_embedding(tok: ConditionToken, module: ConditionEmbedding) -> torch.Tensor:
    """Embedding vector (width d) of one condition token."""
    if tok.n_z != module.n_z:
        raise ConfigurationError("n_z", f"token uses {tok.n_z} bins, embedding expects {module.n_z}")
    return module(torch.tensor([tok.token]))[0]


def time_embedding(t: int, module: TimeEmbedding) -> torch.Tensor:
    """Embedding vector (width d) of one timestep."""
    return module(torch.tensor([t]))[0]


def combine_embeddings(t_emb: torch.Tensor, c_emb: torch.Tensor) -> torch.Tensor:
    """
    Elementwise sum of the time and condition embeddings.

    Raises:
        ShapeError: If the widths differ
    """
    if t_emb.shape != c_emb.shape:
        raise ShapeError("c_emb", tuple(t_emb.shape), tuple(c_emb.shape))
    return t_emb + c_emb
