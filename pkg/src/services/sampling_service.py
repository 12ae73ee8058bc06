"""
Sampling service: conditional DDIM draws from a trained checkpoint.
"""
import logging
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import torch
from tqdm import tqdm

from src.data import write_archive
from src.diffusion import cosine_schedule
from src.exceptions import RangeError, UsageError
from src.models import ExperimentConfig, SliceRecord
from src.sampling import SampleBatch, sample, samples_to_records
from src.training import load_denoiser
from src.utils.file_operations import FileOperations

logger = logging.getLogger(__name__)


def batch_generator(seed: int, batch_index: int) -> torch.Generator:
    """Independent noise stream for one sampling batch."""
    state = np.random.SeedSequence([seed, batch_index]).generate_state(1, dtype=np.uint64)[0]
    return torch.Generator().manual_seed(int(state) & 0x7FFF_FFFF_FFFF_FFFF)


def draw_tokens(
    reference: Sequence[SliceRecord],
    n: int,
    distribution: str,
    n_z: int,
    seed: int
) -> List[int]:
    """
    Condition tokens for evaluation sampling.

    ``empirical`` resamples the reference slices' tokens; ``uniform`` draws
    from all ``2 * n_z`` tokens.
    """
    rng = np.random.default_rng(seed)
    if distribution == "uniform":
        return rng.integers(0, 2 * n_z, n).tolist()
    tokens = np.array([r.condition(n_z).token for r in reference])
    if tokens.size == 0:
        raise UsageError("no reference slices to draw tokens from")
    return rng.choice(tokens, n, replace=True).tolist()


class SamplingService:
    """Loads EMA weights and writes generated samples as archives."""

    @staticmethod
    def generate(
        cfg: ExperimentConfig,
        checkpoint: Path,
        tokens: Sequence[int],
        seed: Optional[int] = None
    ) -> List[SliceRecord]:
        """
        One sample per entry of ``tokens``, in order.

        Raises:
            UsageError: No tokens
            RangeError: Token outside [0, 2 * n_z)
        """
        if not tokens:
            raise UsageError("at least one condition token is required; unconditional sampling is not supported")
        n_z = cfg.data.n_z
        for tok in tokens:
            if not 0 <= int(tok) < 2 * n_z:
                raise RangeError("token", tok, f"0 <= token < {2 * n_z}")
        seed = cfg.sampler.seed if seed is None else seed
        model = load_denoiser(cfg, checkpoint, use_ema=True)
        sched = cosine_schedule(cfg.diffusion.timesteps, cfg.diffusion.schedule_offset)
        size = cfg.sampler.batch_size

        records: List[SliceRecord] = []
        starts = range(0, len(tokens), size)
        for batch_index, start in enumerate(tqdm(starts, desc="sampling", disable=None)):
            chunk = torch.tensor([int(t) for t in tokens[start:start + size]], dtype=torch.long)
            batch: SampleBatch = sample(
                model, chunk, sched, cfg.sampler, cfg.train.target, cfg.unet.image_size,
                generator=batch_generator(seed, batch_index),
            )
            records.extend(samples_to_records(batch, n_z, offset=start))
            logger.debug(f"Sampled batch {batch_index} ({len(batch)} slices)")
        return records

    def sample_to_archive(
        self,
        cfg: ExperimentConfig,
        checkpoint: Path,
        tokens: Sequence[int],
        n_per_token: int,
        out_dir: Path,
        seed: Optional[int] = None
    ) -> Path:
        """
        Write ``len(tokens) * n_per_token`` samples with provenance.

        Returns:
            Manifest path
        """
        if n_per_token < 1:
            raise RangeError("n_per_token", n_per_token, "n_per_token >= 1")
        seed = cfg.sampler.seed if seed is None else seed
        expanded = [int(t) for t in tokens for _ in range(n_per_token)]
        records = self.generate(cfg, checkpoint, expanded, seed)
        provenance = {
            "checkpoint_sha256": FileOperations.sha256_file(Path(checkpoint)),
            "seed": seed,
            "tokens": [int(t) for t in tokens],
            "n_per_token": n_per_token,
            "steps": cfg.sampler.steps,
            "eta": cfg.sampler.eta,
            "target": cfg.train.target.value,
        }
        return write_archive(out_dir, records, cfg.data.n_z, provenance)


# Global service instance
sampling_service = SamplingService()
