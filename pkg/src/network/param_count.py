"""
Analytic parameter count of the denoiser, walking the same layout as
``DenoiserModel`` without allocating any tensors.
"""
from typing import Dict

from src.models import UNetConfig


def _conv(cin: int, cout: int, k: int) -> int:
    return cin * cout * k * k + cout


def _linear(fan_in: int, fan_out: int) -> int:
    return fan_in * fan_out + fan_out


def _norm(channels: int) -> int:
    return 2 * channels


def resblock_params(cin: int, cout: int, d: int) -> int:
    """Parameters of one ResBlock."""
    total = _norm(cin) + _conv(cin, cout, 3) + _linear(d, cout) + _norm(cout) + _conv(cout, cout, 3)
    if cin != cout:
        total += _conv(cin, cout, 1)
    return total


def attention_params(channels: int) -> int:
    """Parameters of one attention block (norm, qkv, proj)."""
    return _norm(channels) + _conv(channels, 3 * channels, 1) + _conv(channels, channels, 1)


def param_breakdown(config: UNetConfig) -> Dict[str, int]:
    """
    Learnable scalar count per component.

    Returns:
        Dict with keys ``time_embed``, ``cond_embed``, ``encoder``, ``middle``,
        ``decoder`` and ``output``
    """
    levels = config.level_channels
    attended = set(config.resolved_attention_levels)
    d = config.embedding_width
    d_pe = config.pe_width

    encoder = _conv(config.in_channels, levels[0], 3)
    skips = [levels[0]]
    current = levels[0]
    for i, channels in enumerate(levels):
        for _ in range(config.res_blocks_per_level):
            encoder += resblock_params(current, channels, d)
            current = channels
            if i in attended:
                encoder += attention_params(current)
            skips.append(current)
        if i != len(levels) - 1:
            encoder += _conv(current, current, 3)
            skips.append(current)

    middle = 2 * resblock_params(current, current, d) + attention_params(current)

    decoder = 0
    for i in reversed(range(len(levels))):
        channels = levels[i]
        for _ in range(config.res_blocks_per_level + 1):
            decoder += resblock_params(current + skips.pop(), channels, d)
            current = channels
            if i in attended:
                decoder += attention_params(current)
        if i != 0:
            decoder += _conv(current, current, 3)

    return {
        "time_embed": _linear(d_pe, d) + _linear(d, d),
        "cond_embed": 2 * d + _linear(d + d_pe, d),
        "encoder": encoder,
        "middle": middle,
        "decoder": decoder,
        "output": _norm(current) + _conv(current, config.out_channels, 3),
    }


def param_count(config: UNetConfig) -> int:
    """Exact learnable-scalar count of ``DenoiserModel(config, ...)``."""
    return sum(param_breakdown(config).values())
