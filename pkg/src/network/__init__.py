"""
Denoiser network: conditioning, U-Net, parameter count and checkpoints.
"""
from .checkpoint import TrainingCheckpoint, decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint
from .conditioning import (
    ConditionEmbedding,
    TimeEmbedding,
    combine_embeddings,
    cond_embedding,
    decode_token,
    make_token,
    sinpe,
    time_embedding,
)
from .param_count import param_breakdown, param_count
from .unet import DenoiserModel, UNet, backward, init_weights, unet_forward

__all__ = [
    "TrainingCheckpoint",
    "encode_checkpoint",
    "decode_checkpoint",
    "read_checkpoint",
    "write_checkpoint",
    "ConditionEmbedding",
    "TimeEmbedding",
    "combine_embeddings",
    "cond_embedding",
    "decode_token",
    "make_token",
    "sinpe",
    "time_embedding",
    "param_breakdown",
    "param_count",
    "DenoiserModel",
    "UNet",
    "backward",
    "init_weights",
    "unet_forward",
]
