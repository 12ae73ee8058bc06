"""
Pydantic models for the experiment configuration.

Every section of ``config.json`` maps to one model here; the CLI resolves the
file plus overrides into an ``ExperimentConfig`` and writes it back into each
run directory.
"""
import hashlib
import json
from enum import Enum
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ConfigSection(BaseModel):
    """Base of every config section; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")


class PredictionTarget(str, Enum):
    """What the denoiser is trained to output."""

    EPSILON = "epsilon"
    VELOCITY = "velocity"
    X0 = "x0"


class LpConfig(ConfigSection):
    """Exponent of the Lp training objective (mean reduction over all elements)."""

    p: float = Field(default=2.0, gt=0, description="Loss exponent; study values are 1.5, 2.0 and 2.5")

    model_config = ConfigDict(extra="forbid", frozen=True)


class DiffusionConfig(ConfigSection):
    """Noise schedule settings."""

    timesteps: int = Field(default=1000, ge=1, description="Number of diffusion timesteps T")
    schedule_offset: float = Field(default=0.008, ge=0, description="Cosine schedule offset s")


class UNetConfig(ConfigSection):
    """Shared-bottleneck 2-channel U-Net layout."""

    in_channels: int = Field(default=2, description="Image + mask channels")
    out_channels: int = Field(default=2, description="Predicted channels")
    image_size: int = Field(default=32, ge=4, description="Spatial size H = W")
    level_channels: List[int] = Field(default=[16, 32, 64, 64], min_length=1)
    res_blocks_per_level: int = Field(default=2, ge=1)
    norm_groups: int = Field(default=8, ge=1)
    attention_levels: Optional[List[int]] = Field(
        default=None,
        description="Level indices with self-attention; defaults to the two deepest"
    )
    attention_head_channels: int = Field(default=32, ge=1)
    embedding_width: int = Field(default=64, ge=1, description="Width d of the t/c embedding")
    pe_width: int = Field(default=32, ge=2, description="Width d_pe of the sinusoidal encodings")

    @field_validator('in_channels', 'out_channels')
    @classmethod
    def validate_two_channels(cls, v: int) -> int:
        """The joint sample is always image + mask."""
        if v != 2:
            raise ValueError("joint image-mask diffusion uses exactly 2 channels")
        return v

    @field_validator('pe_width')
    @classmethod
    def validate_pe_width(cls, v: int) -> int:
        """Sinusoidal encodings split evenly into sin and cos halves."""
        if v % 2:
            raise ValueError(f"pe_width must be even, got {v}")
        return v

    @model_validator(mode='after')
    def validate_layout(self) -> "UNetConfig":
        """Check divisibility rules between image size, widths, groups and heads."""
        levels = len(self.level_channels)
        if self.image_size % (2 ** (levels - 1)):
            raise ValueError(
                f"image_size {self.image_size} is not divisible by 2^{levels - 1}"
            )
        for i, ch in enumerate(self.level_channels):
            if ch % self.norm_groups:
                raise ValueError(f"level {i} width {ch} is not divisible by norm_groups {self.norm_groups}")
        for i in self.resolved_attention_levels:
            if not 0 <= i < levels:
                raise ValueError(f"attention level {i} does not exist")
            if self.level_channels[i] % self.attention_head_channels:
                raise ValueError(
                    f"level {i} width {self.level_channels[i]} is not divisible by "
                    f"attention_head_channels {self.attention_head_channels}"
                )
        if self.level_channels[-1] % self.attention_head_channels:
            raise ValueError(
                f"bottleneck width {self.level_channels[-1]} is not divisible by "
                f"attention_head_channels {self.attention_head_channels}"
            )
        return self

    @property
    def resolved_attention_levels(self) -> List[int]:
        """Attention level indices with the default applied."""
        if self.attention_levels is not None:
            return sorted(set(self.attention_levels))
        levels = len(self.level_channels)
        return list(range(max(0, levels - 2), levels))

    @property
    def bottleneck_size(self) -> int:
        """Spatial size of the deepest feature map."""
        return self.image_size // 2 ** (len(self.level_channels) - 1)

    @classmethod
    def full_scale(cls) -> "UNetConfig":
        """160x160 layout with [64, 128, 256, 256] channels."""
        return cls(
            image_size=160,
            level_channels=[64, 128, 256, 256],
            norm_groups=32,
            embedding_width=256,
            pe_width=128,
        )

    @classmethod
    def desk(cls) -> "UNetConfig":
        """32x32 layout that trains on a desktop CPU."""
        return cls()


class TrainConfig(ConfigSection):
    """Optimizer, schedule and stopping settings."""

    lr: float = Field(default=1e-4, gt=0)
    lr_floor: float = Field(default=1e-6, ge=0, description="Final LR of the cosine annealing")
    clip_norm: float = Field(default=1.0, gt=0, description="Global gradient norm limit (inf disables)")
    ema_decay: float = Field(default=0.999, ge=0, le=1)
    patience: int = Field(default=25, ge=1)
    batch_size: int = Field(default=32, ge=1)
    max_epochs: int = Field(default=100, ge=1)
    seed: int = Field(default=0, ge=0)
    target: PredictionTarget = PredictionTarget.X0
    loss: LpConfig = Field(default_factory=LpConfig)
    adam_betas: List[float] = Field(default=[0.9, 0.999], min_length=2, max_length=2)
    adam_eps: float = Field(default=1e-8, gt=0)
    weight_decay: float = Field(default=0.01, ge=0)
    validate_with_ema: bool = Field(default=False, description="Compute val loss with EMA weights")

    @model_validator(mode='after')
    def validate_lr_floor(self) -> "TrainConfig":
        """The annealing floor cannot exceed the starting LR."""
        if self.lr_floor > self.lr:
            raise ValueError(f"lr_floor {self.lr_floor} exceeds lr {self.lr}")
        return self


class SamplerConfig(ConfigSection):
    """DDIM sampling settings."""

    steps: int = Field(default=300, ge=1)
    eta: float = Field(default=0.2, ge=0, le=1)
    seed: int = Field(default=0, ge=0)
    mask_threshold: float = Field(default=0.0, description="Binarization threshold of the mask channel")
    batch_size: int = Field(default=64, ge=1, description="Trajectories integrated together")


class ToyDataConfig(ConfigSection):
    """Synthetic brain-slice generator settings."""

    n_subjects: int = Field(default=40, ge=2)
    slices_per_subject: int = Field(default=16, ge=1)
    image_size: int = Field(default=32, ge=16)
    lesion_prob: float = Field(default=0.5, ge=0, le=1, description="Probability a subject carries a lesion")
    slice_lesion_prob: float = Field(default=0.7, ge=0, le=1, description="Per-slice lesion probability for lesion subjects")
    lesion_contrast: float = Field(default=0.4, gt=0, description="Raw hyperintensity added on the lesion")
    seed: int = Field(default=0, ge=0)


class DataConfig(ConfigSection):
    """Where slices come from and how they are split."""

    archive: Optional[str] = Field(default=None, description="Slice archive directory; None uses the toy generator")
    n_z: int = Field(default=30, ge=1, description="Number of axial bins N_z")
    val_fraction: float = Field(default=0.2, gt=0, lt=1)
    split_seed: int = Field(default=0, ge=0)


class MetricSettings(ConfigSection):
    """Evaluation settings."""

    extractor: str = Field(default="toy", description="Registered feature extractor name")
    kid_subset_size: int = Field(default=50, ge=2)
    kid_n_subsets: int = Field(default=20, ge=1)
    min_area: int = Field(default=5, ge=1)
    connectivity: Literal[4, 8] = 8
    n_samples: int = Field(default=128, ge=2, description="Generated slices per evaluated model")
    token_distribution: Literal["empirical", "uniform"] = "empirical"
    reference: Literal["val", "all"] = Field(default="val", description="Real slices compared against")
    hyperintense_threshold: float = Field(default=0.5, description="Image threshold for the lesion-consistency IoU")
    alpha: float = Field(default=0.05, gt=0, lt=1)
    seed: int = Field(default=0, ge=0)


class SweepConfig(ConfigSection):
    """Grid of prediction targets x Lp exponents x replicas."""

    targets: List[PredictionTarget] = Field(
        default=[PredictionTarget.EPSILON, PredictionTarget.VELOCITY, PredictionTarget.X0],
        min_length=1
    )
    ps: List[float] = Field(default=[1.5, 2.0, 2.5], min_length=1)
    replicas: int = Field(default=3, ge=1)
    base_seed: int = Field(default=0, ge=0)
    workers: int = Field(default=1, ge=1, description="Parallel training processes")

    @field_validator('ps')
    @classmethod
    def validate_ps(cls, v: List[float]) -> List[float]:
        """Exponents must be positive and unique."""
        if any(p <= 0 for p in v):
            raise ValueError("every Lp exponent must be > 0")
        if len(set(v)) != len(v):
            raise ValueError("Lp exponents must be unique")
        return v


class RuntimeConfig(ConfigSection):
    """Process-level determinism settings."""

    num_threads: int = Field(default=1, ge=1)
    deterministic: bool = True
    runs_dir: str = Field(default="runs")


class ExperimentConfig(ConfigSection):
    """Fully resolved experiment configuration."""

    name: str = Field(default="desk", min_length=1)
    diffusion: DiffusionConfig = Field(default_factory=DiffusionConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    toy: ToyDataConfig = Field(default_factory=ToyDataConfig)
    unet: UNetConfig = Field(default_factory=UNetConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    metrics: MetricSettings = Field(default_factory=MetricSettings)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    runtime: RuntimeConfig = Field(default_factory=RuntimeConfig)

    model_config = ConfigDict(extra="forbid", json_schema_extra={
        "example": {
            "name": "desk",
            "train": {"target": "x0", "loss": {"p": 2.0}},
            "sampler": {"steps": 300, "eta": 0.2}
        }
    })

    @model_validator(mode='after')
    def validate_cross_sections(self) -> "ExperimentConfig":
        """Checks that span more than one section."""
        if self.sampler.steps > self.diffusion.timesteps:
            raise ValueError(
                f"sampler.steps {self.sampler.steps} exceeds diffusion.timesteps {self.diffusion.timesteps}"
            )
        if self.data.archive is None and self.toy.image_size != self.unet.image_size:
            raise ValueError(
                f"toy.image_size {self.toy.image_size} differs from unet.image_size {self.unet.image_size}"
            )
        return self

    def canonical_json(self) -> str:
        """Stable JSON rendering used for hashing and run snapshots."""
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, indent=2)

    def config_hash(self) -> str:
        """sha256 over the whole resolved configuration."""
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def architecture_hash(self) -> str:
        """sha256 over the settings a checkpoint's tensors depend on."""
        payload = {
            "unet": self.unet.model_dump(mode="json"),
            "diffusion": self.diffusion.model_dump(mode="json"),
            "n_z": self.data.n_z,
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()

    def for_cell(self, target: PredictionTarget, p: float, seed: int) -> "ExperimentConfig":
        """Copy of this config for one sweep cell."""
        train = self.train.model_copy(update={"target": target, "loss": LpConfig(p=p), "seed": seed})
        sampler = self.sampler.model_copy(update={"seed": seed})
        return self.model_copy(update={"train": train, "sampler": sampler}, deep=True)
