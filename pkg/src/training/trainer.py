"""
Training loop: Lp objective over the chosen prediction target, AdamW with
cosine LR annealing, global gradient clipping, EMA, early stopping on the
validation loss and subject-level oversampling of lesion cases.

Run directory layout::

    run_dir/
      config.resolved.json
      metrics.tsv        epoch, train_loss, val_loss, lr, ema_applied
      best.ckpt          live + EMA weights at the best validation epoch
      last.ckpt          full resumable state after the latest epoch
      train.log
"""
import logging
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
import torch.nn as nn
from torch.utils.data import BatchSampler, WeightedRandomSampler

from src.data.dataset import SliceTensors, records_to_tensors
from src.data.split import subject_lesion_status
from src.diffusion import NoiseSchedule, compute_target, cosine_schedule, forward_diffuse, lp_loss
from src.exceptions import DataLeakageError, NonFiniteError, NonFiniteLossError, UsageError
from src.models import ExperimentConfig, RuntimeConfig, SliceRecord, TrainConfig
from src.network import DenoiserModel, TrainingCheckpoint, param_count
from src.training.ema import EMAState
from src.training.recipe import cosine_lr, early_stop_check, oversample_weights
from src.utils.file_operations import FileOperations

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.tsv"
BEST_CHECKPOINT = "best.ckpt"
LAST_CHECKPOINT = "last.ckpt"
METRIC_COLUMNS = ["epoch", "train_loss", "val_loss", "lr", "ema_applied"]


def configure_torch(runtime: RuntimeConfig) -> None:
    """Single-threaded, deterministic kernels unless configured otherwise."""
    torch.set_num_threads(runtime.num_threads)
    torch.use_deterministic_algorithms(runtime.deterministic)


def build_model(cfg: ExperimentConfig) -> DenoiserModel:
    """Denoiser initialized from ``train.seed`` without touching the global RNG stream."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.train.seed)
        return DenoiserModel(cfg.unet, cfg.diffusion.timesteps, cfg.data.n_z)


def validation_generator(seed: int, epoch: int) -> torch.Generator:
    """Generator for the fixed (t, eps) draw of one validation epoch."""
    state = np.random.SeedSequence([seed, epoch]).generate_state(1, dtype=np.uint64)[0]
    return torch.Generator().manual_seed(int(state) & 0x7FFF_FFFF_FFFF_FFFF)


def as_float32(value: float) -> float:
    """Round to the nearest float32 so logged values survive checkpointing exactly."""
    return float(np.float32(value))


def train_step(
    model: nn.Module,
    optimizer: torch.optim.Optimizer,
    batch: Tuple[torch.Tensor, torch.Tensor],
    sched: NoiseSchedule,
    cfg: TrainConfig,
    generator: torch.Generator,
    lr: float,
    step: int = 0
) -> float:
    """
    One optimizer step on a batch of joint samples.

    Draws ``t ~ U{1..T}`` and one shared ``H x W`` noise field per sample,
    regresses the configured target with the Lp loss, clips the global
    gradient norm and applies AdamW at ``lr``.

    Args:
        model: Denoiser
        optimizer: AdamW over ``model.parameters()``
        batch: (x0 of shape (B, 2, H, W), tokens of shape (B,))
        sched: Noise schedule
        cfg: Training settings (target, loss, clip_norm)
        generator: Source of t and eps
        lr: Learning rate for this step
        step: Global step index used in diagnostics

    Returns:
        Loss value

    Raises:
        NonFiniteLossError: If the loss or prediction is NaN/inf
    """
    x0, tokens = batch
    b, _, h, w = x0.shape
    t = torch.randint(1, sched.timesteps + 1, (b,), generator=generator)
    eps = torch.randn((b, h, w), generator=generator, dtype=x0.dtype)
    x_t = forward_diffuse(x0, t, eps, sched)
    target = compute_target(x0, eps, t, sched, cfg.target)

    for group in optimizer.param_groups:
        group["lr"] = lr
    optimizer.zero_grad(set_to_none=True)
    try:
        pred = model(x_t, t, tokens)
        loss = lp_loss(pred, target, cfg.loss)
    except NonFiniteError:
        raise NonFiniteLossError(step, t.tolist())
    if not bool(torch.isfinite(loss)):
        raise NonFiniteLossError(step, t.tolist())
    loss.backward()
    nn.utils.clip_grad_norm_(model.parameters(), cfg.clip_norm)
    optimizer.step()
    return loss.item()


@torch.no_grad()
def validation_loss(
    model: nn.Module,
    data: SliceTensors,
    sched: NoiseSchedule,
    cfg: TrainConfig,
    epoch: int,
    batch_size: int
) -> float:
    """
    Lp loss on the validation split with a fixed (t, eps) draw per epoch.

    Returns:
        Element-weighted mean loss rounded to float32
    """
    gen = validation_generator(cfg.seed, epoch)
    n, _, h, w = data.x0.shape
    t = torch.randint(1, sched.timesteps + 1, (n,), generator=gen)
    eps = torch.randn((n, h, w), generator=gen, dtype=data.x0.dtype)
    total, count = 0.0, 0
    for start in range(0, n, batch_size):
        sl = slice(start, start + batch_size)
        x0, tt, ee = data.x0[sl], t[sl], eps[sl]
        x_t = forward_diffuse(x0, tt, ee, sched)
        target = compute_target(x0, ee, tt, sched, cfg.target)
        pred = model(x_t, tt, data.tokens[sl])
        loss = lp_loss(pred, target, cfg.loss)
        total += loss.item() * target.numel()
        count += target.numel()
    return as_float32(total / count)


@dataclass
class TrainResult:
    """Summary of a finished (or early-stopped) training run."""

    run_dir: Path
    best_epoch: int
    best_val_loss: float
    epochs_run: int
    stopped_early: bool
    history: Dict[str, List[float]] = field(default_factory=dict)

    @property
    def best_checkpoint(self) -> Path:
        return self.run_dir / BEST_CHECKPOINT


class Trainer:
    """Trains one (target, p) denoiser on a fixed train/val split."""

    def __init__(
        self,
        cfg: ExperimentConfig,
        train_records: Sequence[SliceRecord],
        val_records: Sequence[SliceRecord],
        run_dir: Path
    ):
        leaked = {r.subject_id for r in train_records} & {r.subject_id for r in val_records}
        if leaked:
            raise DataLeakageError(leaked)
        self.cfg = cfg
        self.run_dir = Path(run_dir)
        self.sched = cosine_schedule(cfg.diffusion.timesteps, cfg.diffusion.schedule_offset)
        self.train_data = records_to_tensors(train_records, cfg.data.n_z)
        self.val_data = records_to_tensors(val_records, cfg.data.n_z)
        self.arch_hash = cfg.architecture_hash()

        self.model = build_model(cfg)
        tc = cfg.train
        self.optimizer = torch.optim.AdamW(
            self.model.parameters(),
            lr=tc.lr,
            betas=tuple(tc.adam_betas),
            eps=tc.adam_eps,
            weight_decay=tc.weight_decay,
        )
        self.ema = EMAState.from_module(self.model, tc.ema_decay)
        self.generator = torch.Generator().manual_seed(tc.seed)

        self.sample_weights = self._slice_weights(train_records)
        self.steps_per_epoch = math.ceil(len(train_records) / tc.batch_size)
        self.total_steps = self.steps_per_epoch * tc.max_epochs

        self.epoch = 0
        self.step = 0
        self.history: Dict[str, List[float]] = {k: [] for k in METRIC_COLUMNS if k != "epoch"}

    @staticmethod
    def _slice_weights(records: Sequence[SliceRecord]) -> torch.Tensor:
        """Per-slice draw weight = subject weight / slices of that subject."""
        slices_by_subject = Counter(r.subject_id for r in records)
        subject_weights = oversample_weights(sorted(subject_lesion_status(records).items()))
        return torch.tensor(
            [subject_weights[r.subject_id] / slices_by_subject[r.subject_id] for r in records],
            dtype=torch.float64,
        )

    # ----- checkpointing -----

    def _checkpoint(self, best_epoch: int) -> TrainingCheckpoint:
        optimizer_state = {}
        names = {id(p): n for n, p in self.model.named_parameters()}
        for param, state in self.optimizer.state.items():
            optimizer_state[names[id(param)]] = {
                k: (v if isinstance(v, torch.Tensor) else torch.tensor(v)) for k, v in state.items()
            }
        return TrainingCheckpoint(
            model=self.model.state_dict(),
            ema=self.ema.state_dict(),
            optimizer=optimizer_state,
            rng_state=self.generator.get_state(),
            epoch=self.epoch,
            step=self.step,
            best_epoch=best_epoch,
            history=self.history,
        )

    def _restore(self, ckpt: TrainingCheckpoint) -> None:
        self.model.load_state_dict(ckpt.model)
        self.ema = EMAState(ckpt.ema, self.cfg.train.ema_decay)
        if ckpt.optimizer:
            index = {n: i for i, (n, _) in enumerate(self.model.named_parameters())}
            state = {index[name]: dict(slots) for name, slots in ckpt.optimizer.items()}
            opt_state = self.optimizer.state_dict()
            opt_state["state"] = state
            self.optimizer.load_state_dict(opt_state)
        if ckpt.rng_state is not None:
            self.generator.set_state(ckpt.rng_state)
        self.epoch = ckpt.epoch
        self.step = ckpt.step
        self.history = {k: list(ckpt.history.get(k, [])) for k in self.history}

    def _write_metrics(self) -> None:
        frame = pd.DataFrame({"epoch": range(len(self.history["val_loss"])), **self.history})
        frame["ema_applied"] = frame["ema_applied"].astype(int)
        text = frame[METRIC_COLUMNS].to_csv(sep="\t", index=False, float_format="%.8g")
        FileOperations.write_text_atomic(self.run_dir / METRICS_FILE, text)

    # ----- main loop -----

    def fit(self, resume: bool = False) -> TrainResult:
        """
        Train until ``max_epochs`` or early stopping.

        Args:
            resume: Continue from ``last.ckpt`` in the run directory if present

        Returns:
            TrainResult
        """
        tc = self.cfg.train
        FileOperations.ensure_directory(self.run_dir)
        last_path = self.run_dir / LAST_CHECKPOINT
        if resume and last_path.exists():
            self._restore(TrainingCheckpoint.load(last_path, self.arch_hash))
            logger.info(f"Resumed from {last_path} at epoch {self.epoch} (step {self.step})")
        elif self.epoch == 0:
            logger.info(
                f"Training {tc.target.value} / p={tc.loss.p}: {len(self.train_data)} train, "
                f"{len(self.val_data)} val slices, {param_count(self.cfg.unet):,} parameters, "
                f"{self.steps_per_epoch} steps/epoch"
            )

        sampler = BatchSampler(
            WeightedRandomSampler(
                self.sample_weights,
                num_samples=len(self.train_data),
                replacement=True,
                generator=self.generator,
            ),
            batch_size=tc.batch_size,
            drop_last=False,
        )

        decision = early_stop_check(self.history["val_loss"], tc.patience) if self.history["val_loss"] else None
        while self.epoch < tc.max_epochs and not (decision and decision.stop):
            started = time.perf_counter()
            self.model.train()
            losses = []
            lr = tc.lr
            for indices in sampler:
                idx = torch.tensor(indices)
                batch = (self.train_data.x0[idx], self.train_data.tokens[idx])
                lr = cosine_lr(self.step, self.total_steps, tc.lr, tc.lr_floor)
                losses.append(train_step(self.model, self.optimizer, batch, self.sched, tc, self.generator, lr, self.step))
                self.ema.update_from(self.model)
                self.step += 1

            self.model.eval()
            if tc.validate_with_ema:
                with self.ema.applied(self.model):
                    val = validation_loss(self.model, self.val_data, self.sched, tc, self.epoch, tc.batch_size)
            else:
                val = validation_loss(self.model, self.val_data, self.sched, tc, self.epoch, tc.batch_size)

            self.history["train_loss"].append(as_float32(float(np.mean(losses))))
            self.history["val_loss"].append(val)
            self.history["lr"].append(as_float32(lr))
            self.history["ema_applied"].append(float(tc.validate_with_ema))
            decision = early_stop_check(self.history["val_loss"], tc.patience)
            logger.info(
                f"epoch {self.epoch}: train {self.history['train_loss'][-1]:.5f} "
                f"val {val:.5f} lr {lr:.3g} ({time.perf_counter() - started:.1f}s)"
            )

            epoch_index = self.epoch
            self.epoch += 1
            self._write_metrics()
            if decision.best_epoch == epoch_index:
                self._checkpoint(decision.best_epoch).save(self.run_dir / BEST_CHECKPOINT, self.arch_hash)
            self._checkpoint(decision.best_epoch).save(last_path, self.arch_hash)

        if decision is None:
            raise UsageError(f"nothing to train: max_epochs={tc.max_epochs} already reached")
        if decision.stop:
            logger.info(f"Early stop after epoch {self.epoch - 1}; best epoch {decision.best_epoch}")
        return TrainResult(
            run_dir=self.run_dir,
            best_epoch=decision.best_epoch,
            best_val_loss=self.history["val_loss"][decision.best_epoch],
            epochs_run=self.epoch,
            stopped_early=decision.stop,
            history={k: list(v) for k, v in self.history.items()},
        )


def load_denoiser(
    cfg: ExperimentConfig,
    checkpoint: Path,
    use_ema: bool = True
) -> DenoiserModel:
    """
    Build the configured denoiser and load weights from a checkpoint.

    Args:
        cfg: Experiment config the checkpoint was trained with
        checkpoint: Path to ``best.ckpt`` or ``last.ckpt``
        use_ema: Load the EMA shadow instead of the live weights

    Returns:
        Model in eval mode
    """
    ckpt = TrainingCheckpoint.load(checkpoint, cfg.architecture_hash())
    model = DenoiserModel(cfg.unet, cfg.diffusion.timesteps, cfg.data.n_z)
    model.load_state_dict(ckpt.ema if use_ema else ckpt.model)
    model.eval()
    return model
