"""
Shared pytest fixtures.
"""
import os

import numpy as np
import pytest
import torch

from src.data.toy import generate_toy_dataset
from src.diffusion import cosine_schedule
from src.models import ExperimentConfig, ToyDataConfig, UNetConfig


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running end-to-end runs (set JDIFF_RUN_SLOW=1)")


def pytest_collection_modifyitems(config, items):
    if os.environ.get("JDIFF_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set JDIFF_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)
    yield


@pytest.fixture(scope="session")
def schedule():
    """Default T=1000, s=0.008 schedule."""
    return cosine_schedule(1000, 0.008)


@pytest.fixture
def tiny_unet_config():
    """Smallest layout that still has attention and a 2x2 bottleneck."""
    return UNetConfig(
        image_size=8,
        level_channels=[8, 8],
        res_blocks_per_level=1,
        norm_groups=4,
        attention_levels=[1],
        attention_head_channels=4,
        embedding_width=16,
        pe_width=8,
    )


@pytest.fixture(scope="session")
def toy_records():
    """Small deterministic toy dataset (12 subjects x 8 slices, 32x32)."""
    cfg = ToyDataConfig(n_subjects=12, slices_per_subject=8, image_size=32, seed=3)
    return generate_toy_dataset(cfg, n_z=30)


@pytest.fixture
def tiny_experiment(tmp_path):
    """Experiment config that trains in seconds on 16x16 toy slices."""
    return ExperimentConfig.model_validate({
        "name": "tiny",
        "diffusion": {"timesteps": 50},
        "data": {"n_z": 4, "val_fraction": 0.25},
        "toy": {"n_subjects": 8, "slices_per_subject": 4, "image_size": 16, "seed": 1},
        "unet": {
            "image_size": 16,
            "level_channels": [8, 16],
            "res_blocks_per_level": 1,
            "norm_groups": 4,
            "attention_levels": [1],
            "attention_head_channels": 8,
            "embedding_width": 16,
            "pe_width": 8,
        },
        "train": {"batch_size": 8, "max_epochs": 3, "patience": 5, "ema_decay": 0.9, "lr": 1e-3},
        "sampler": {"steps": 5, "eta": 0.2, "batch_size": 8},
        "metrics": {"n_samples": 8, "kid_subset_size": 4, "kid_n_subsets": 3, "min_area": 2},
        "sweep": {"targets": ["epsilon", "x0"], "ps": [1.5, 2.0], "replicas": 2},
        "runtime": {"runs_dir": str(tmp_path / "runs")},
    })


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
