"""
Tensor view of slice records for training, validation and evaluation.
"""
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
import torch

from src.exceptions import ShapeError, UsageError
from src.models import SliceRecord


@dataclass
class SliceTensors:
    """Joint samples ``x0`` (N, 2, H, W) float32 and their flat condition tokens (N,)."""

    x0: torch.Tensor
    tokens: torch.Tensor
    subjects: List[str]

    def __len__(self) -> int:
        return self.x0.shape[0]


def records_to_tensors(records: Sequence[SliceRecord], n_z: int) -> SliceTensors:
    """
    Stack records into tensors.

    Raises:
        UsageError: If ``records`` is empty
        ShapeError: If slices differ in size
    """
    if not records:
        raise UsageError("no slices to stack")
    shape = records[0].image.shape
    for r in records:
        if r.image.shape != shape:
            raise ShapeError(f"slice {r.subject_id}@z{r.z_index}", shape, r.image.shape)
    x0 = torch.from_numpy(np.stack([r.joint() for r in records]))
    tokens = torch.tensor([r.condition(n_z).token for r in records], dtype=torch.long)
    return SliceTensors(x0=x0, tokens=tokens, subjects=[r.subject_id for r in records])
