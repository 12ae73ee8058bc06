"""
Subject-level train/validation split.
"""
import logging
from typing import Dict, List, Sequence, Tuple

import numpy as np

from src.exceptions import ConfigurationError, DataLeakageError
from src.models import SliceRecord

logger = logging.getLogger(__name__)


def subject_lesion_status(records: Sequence[SliceRecord]) -> Dict[str, bool]:
    """A subject is a lesion subject if any of its slices has pathology 1."""
    status: Dict[str, bool] = {}
    for r in records:
        status[r.subject_id] = status.get(r.subject_id, False) or bool(r.pathology)
    return status


def assert_disjoint(train: Sequence[SliceRecord], val: Sequence[SliceRecord]) -> None:
    """
    Raises:
        DataLeakageError: If a subject appears on both sides
    """
    shared = {r.subject_id for r in train} & {r.subject_id for r in val}
    if shared:
        raise DataLeakageError(sorted(shared))


def subject_split(
    records: Sequence[SliceRecord],
    val_fraction: float,
    seed: int
) -> Tuple[List[SliceRecord], List[SliceRecord]]:
    """
    Partition slices by subject so no subject straddles both sides.

    Lesion and control subjects are shuffled and split separately, which
    keeps both classes in training whenever a class has two or more subjects.

    Args:
        records: All slices
        val_fraction: Target fraction of subjects held out, in (0, 1)
        seed: Shuffle seed

    Returns:
        (train, val) slice lists, each in input order

    Raises:
        ConfigurationError: Fewer than two subjects or a bad fraction
    """
    if not 0 < val_fraction < 1:
        raise ConfigurationError("data.val_fraction", f"must be in (0, 1), got {val_fraction}")
    status = subject_lesion_status(records)
    if len(status) < 2:
        raise ConfigurationError("data", f"need at least 2 subjects to split, got {len(status)}")

    rng = np.random.default_rng(seed)
    val_subjects = set()
    for lesion in (True, False):
        group = sorted(s for s, has in status.items() if has == lesion)
        if len(group) < 2:
            continue
        n_val = min(len(group) - 1, max(1, int(round(val_fraction * len(group)))))
        order = rng.permutation(len(group))
        val_subjects.update(group[i] for i in order[:n_val])

    if not val_subjects:
        # One subject per class: hold out the control.
        val_subjects.add(sorted(s for s, has in status.items() if not has)[0])

    train = [r for r in records if r.subject_id not in val_subjects]
    val = [r for r in records if r.subject_id in val_subjects]
    assert_disjoint(train, val)
    logger.info(
        f"Split {len(status)} subjects: {len(status) - len(val_subjects)} train, "
        f"{len(val_subjects)} val ({len(train)}/{len(val)} slices)"
    )
    return train, val
