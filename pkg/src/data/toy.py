"""
Synthetic brain-slice generator.

Each subject is an elliptical "brain" with smooth texture whose vertical
extent follows the axial bin, so the condition token is learnable. Lesion
subjects carry bright elliptical lesions on a fraction of their slices and
the mask is +1 on exactly the brightened pixels.
"""
import logging
from typing import List

import numpy as np
from scipy.ndimage import gaussian_filter
from skimage.draw import ellipse

from src.data.normalization import compute_z_bin, percentile_normalize
from src.models import SliceRecord, ToyDataConfig

logger = logging.getLogger(__name__)

BRAIN_LEVEL = 0.5
TEXTURE_AMPLITUDE = 0.08
TEXTURE_SIGMA = 1.5


def _brain_mask(size: int, z_bin: int, n_z: int, rng: np.random.Generator) -> np.ndarray:
    frac = (z_bin + 0.5) / n_z
    ry = size * (0.14 + 0.26 * np.sin(np.pi * frac))
    rx = size * rng.uniform(0.30, 0.38)
    cy = size / 2 + rng.uniform(-0.03, 0.03) * size
    cx = size / 2 + rng.uniform(-0.03, 0.03) * size
    brain = np.zeros((size, size), dtype=bool)
    rr, cc = ellipse(cy, cx, ry, rx, shape=brain.shape)
    brain[rr, cc] = True
    return brain


def _lesion_mask(brain: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    size = brain.shape[0]
    ys, xs = np.nonzero(brain)
    cy, cx = ys.mean(), xs.mean()
    half_h = (ys.max() - ys.min()) / 4
    half_w = (xs.max() - xs.min()) / 4
    center_y = cy + rng.uniform(-half_h, half_h)
    center_x = cx + rng.uniform(-half_w, half_w)
    scale = size / 32
    r_radius = rng.uniform(1.5, 3.5) * scale
    c_radius = rng.uniform(1.5, 3.5) * scale
    rotation = rng.uniform(-np.pi / 2, np.pi / 2)
    lesion = np.zeros_like(brain)
    rr, cc = ellipse(center_y, center_x, r_radius, c_radius, shape=brain.shape, rotation=rotation)
    lesion[rr, cc] = True
    return lesion & brain


def generate_toy_dataset(cfg: ToyDataConfig, n_z: int) -> List[SliceRecord]:
    """
    Generate ``cfg.n_subjects * cfg.slices_per_subject`` normalized slices.

    Exactly ``round(lesion_prob * n_subjects)`` subjects carry lesions, each on
    at least one slice.
    Output is a pure function of ``cfg`` and ``n_z``.

    Args:
        cfg: Generator settings
        n_z: Number of axial bins

    Returns:
        Slice records ordered by subject then z
    """
    rng = np.random.default_rng(cfg.seed)
    size = cfg.image_size
    n_lesion = int(round(cfg.lesion_prob * cfg.n_subjects))
    lesion_subjects = set(rng.permutation(cfg.n_subjects)[:n_lesion].tolist())

    records: List[SliceRecord] = []
    for s in range(cfg.n_subjects):
        subject_id = f"toy-{s:03d}"
        has_lesion = s in lesion_subjects
        forced_z = int(rng.integers(cfg.slices_per_subject))
        for z in range(cfg.slices_per_subject):
            z_bin = compute_z_bin(z, cfg.slices_per_subject, n_z)
            brain = _brain_mask(size, z_bin, n_z, rng)
            texture = gaussian_filter(rng.standard_normal((size, size)), sigma=TEXTURE_SIGMA)
            texture /= texture.std() + 1e-12
            raw = np.where(brain, BRAIN_LEVEL + TEXTURE_AMPLITUDE * texture, 0.0)

            lesion = np.zeros_like(brain)
            if has_lesion and (z == forced_z or rng.random() < cfg.slice_lesion_prob):
                lesion = _lesion_mask(brain, rng)
                raw = raw + cfg.lesion_contrast * lesion

            mask = np.where(lesion, 1.0, -1.0).astype(np.float32)
            records.append(SliceRecord(
                subject_id=subject_id,
                z_index=z,
                z_total=cfg.slices_per_subject,
                z_bin=z_bin,
                pathology=int(lesion.any()),
                image=percentile_normalize(raw),
                mask=mask,
            ))

    n_pos = sum(r.pathology for r in records)
    logger.info(
        f"Generated {len(records)} toy slices from {cfg.n_subjects} subjects "
        f"({n_lesion} lesion subjects, {n_pos} lesion slices)"
    )
    return records
