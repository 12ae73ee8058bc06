"""
Schedule and bookkeeping pieces of the training recipe: cosine LR annealing,
the early-stopping rule and subject-level oversampling weights.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, Sequence, Tuple

from src.exceptions import ConfigurationError, RangeError, UsageError

logger = logging.getLogger(__name__)


def cosine_lr(step: int, total_steps: int, lr0: float, lr_floor: float) -> float:
    """
    ``lr_floor + 0.5 * (lr0 - lr_floor) * (1 + cos(pi * step / total_steps))``.

    Steps past ``total_steps`` stay at the floor.
    """
    if total_steps < 1:
        raise ConfigurationError("total_steps", f"must be >= 1, got {total_steps}")
    if step < 0:
        raise RangeError("step", step, "step >= 0")
    progress = min(step, total_steps) / total_steps
    return lr_floor + 0.5 * (lr0 - lr_floor) * (1.0 + math.cos(math.pi * progress))


@dataclass(frozen=True)
class EarlyStopDecision:
    """Outcome of the early-stopping rule."""

    stop: bool
    best_epoch: int


def early_stop_check(history: Sequence[float], patience: int) -> EarlyStopDecision:
    """
    Stop once ``patience`` epochs have passed without a new minimum.

    The best epoch is the first occurrence of the minimum validation loss.

    Args:
        history: Validation loss per epoch
        patience: Epochs allowed without improvement

    Returns:
        EarlyStopDecision
    """
    if not history:
        raise UsageError("early_stop_check needs at least one validation loss")
    if patience < 1:
        raise ConfigurationError("train.patience", f"must be >= 1, got {patience}")
    best = min(range(len(history)), key=lambda i: (history[i], i))
    return EarlyStopDecision(stop=len(history) - 1 - best >= patience, best_epoch=best)


def oversample_weights(subjects: Iterable[Tuple[str, bool]]) -> Dict[str, float]:
    """
    Per-subject draw weights giving lesion and control subjects equal total mass.

    Each lesion subject gets ``0.5 / n_lesion`` and each control subject
    ``0.5 / n_control``; the weights sum to 1.

    Raises:
        ConfigurationError: If either class is absent or a subject repeats
    """
    subjects = list(subjects)
    ids = [sid for sid, _ in subjects]
    if len(set(ids)) != len(ids):
        raise ConfigurationError("subjects", "subject ids must be unique")
    lesion = [sid for sid, has_lesion in subjects if has_lesion]
    control = [sid for sid, has_lesion in subjects if not has_lesion]
    if not lesion or not control:
        raise ConfigurationError(
            "subjects",
            f"oversampling needs both classes (lesion={len(lesion)}, control={len(control)})"
        )
    weights = {sid: 0.5 / len(lesion) for sid in lesion}
    weights.update({sid: 0.5 / len(control) for sid in control})
    logger.debug(f"Oversampling {len(lesion)} lesion vs {len(control)} control subjects")
    return weights
