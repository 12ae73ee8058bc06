"""
Conditional DDIM sampling.
"""
from .ddim import (
    SampleBatch,
    binarize_mask,
    ddim_sigma,
    ddim_step,
    sample,
    samples_to_records,
    timestep_subsequence,
)

__all__ = [
    "SampleBatch",
    "binarize_mask",
    "ddim_sigma",
    "ddim_step",
    "sample",
    "samples_to_records",
    "timestep_subsequence",
]
