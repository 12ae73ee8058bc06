"""
Unit tests for Pydantic models.
"""
import numpy as np
import pytest
from pydantic import ValidationError

from src.models import (
    SHAPE_FEATURE_NAMES,
    ConditionToken,
    ExperimentConfig,
    PredictionTarget,
    ShapeFeatures,
    SliceRecord,
    SweepConfig,
    UNetConfig,
)


def plane(value, size=4):
    return np.full((size, size), value, dtype=np.float32)


class TestConditionToken:
    """Tests for ConditionToken."""

    def test_token_flattening(self):
        """token = z_bin + pathology * n_z."""
        assert ConditionToken(z_bin=5, pathology=1, n_z=30).token == 35
        assert ConditionToken(z_bin=5, pathology=0, n_z=30).token == 5

    def test_bin_out_of_range(self):
        """z_bin must be below n_z."""
        with pytest.raises(ValidationError):
            ConditionToken(z_bin=30, pathology=0, n_z=30)

    def test_pathology_is_binary(self):
        with pytest.raises(ValidationError):
            ConditionToken(z_bin=0, pathology=2)

    def test_frozen(self):
        """Tokens are hashable values."""
        tok = ConditionToken(z_bin=1, pathology=0, n_z=4)
        assert tok in {ConditionToken(z_bin=1, pathology=0, n_z=4)}


class TestSliceRecord:
    """Tests for SliceRecord."""

    def test_valid_control_slice(self):
        """A control slice has an all -1 mask."""
        record = SliceRecord(
            subject_id="s01", z_index=3, z_total=10, z_bin=9,
            pathology=0, image=plane(0.0), mask=plane(-1.0),
        )
        assert record.key == ("s01", 3)
        assert record.condition(30).token == 9
        assert record.joint().shape == (2, 4, 4)
        assert record.joint().dtype == np.float32

    def test_pathology_must_match_mask(self):
        """A lesion pixel with pathology 0 is rejected."""
        mask = plane(-1.0)
        mask[1, 1] = 1.0
        with pytest.raises(ValidationError) as exc_info:
            SliceRecord(subject_id="s", z_index=0, z_total=1, z_bin=0, pathology=0, image=plane(0.0), mask=mask)
        assert "pathology" in str(exc_info.value)

    def test_mask_must_be_binary(self):
        with pytest.raises(ValidationError):
            SliceRecord(subject_id="s", z_index=0, z_total=1, z_bin=0, pathology=0, image=plane(0.0), mask=plane(0.0))

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            SliceRecord(
                subject_id="s", z_index=0, z_total=1, z_bin=0, pathology=0,
                image=plane(0.0, 4), mask=plane(-1.0, 5),
            )

    @pytest.mark.parametrize("value", [1.01, -1.5, float("nan"), float("inf")])
    def test_image_range_and_finiteness(self, value):
        """Images must be finite and lie in [-1, 1]."""
        image = plane(0.0)
        image[0, 0] = value
        with pytest.raises(ValidationError):
            SliceRecord(subject_id="s", z_index=0, z_total=1, z_bin=0, pathology=0, image=image, mask=plane(-1.0))

    def test_image_bounds_inclusive(self):
        image = plane(1.0)
        image[0, 0] = -1.0
        record = SliceRecord(subject_id="s", z_index=0, z_total=1, z_bin=0, pathology=0, image=image, mask=plane(-1.0))
        assert record.image.max() == 1.0

    def test_z_index_below_total(self):
        with pytest.raises(ValidationError):
            SliceRecord(subject_id="s", z_index=4, z_total=4, z_bin=0, pathology=0, image=plane(0.0), mask=plane(-1.0))


class TestShapeFeatures:
    """Tests for ShapeFeatures."""

    def test_vector_order(self):
        values = dict(zip(SHAPE_FEATURE_NAMES, [4.0, 8.0, 0.78, 1.0, 1.0, 0.0, 2.3, 2.3, 2.26]))
        features = ShapeFeatures(**values)
        assert features.as_vector().tolist() == list(values.values())
        assert features.as_dict() == values

    def test_minor_axis_above_major(self):
        """The minor axis cannot exceed the major axis."""
        values = dict(zip(SHAPE_FEATURE_NAMES, [4.0, 8.0, 0.78, 1.0, 1.0, 0.0, 2.0, 3.0, 2.26]))
        with pytest.raises(ValidationError):
            ShapeFeatures(**values)


class TestExperimentConfig:
    """Tests for ExperimentConfig and its sections."""

    def test_defaults_validate(self):
        cfg = ExperimentConfig()
        assert cfg.train.target == PredictionTarget.X0
        assert cfg.sampler.steps == 300
        assert cfg.sweep.ps == [1.5, 2.0, 2.5]

    def test_sampler_steps_bounded_by_timesteps(self):
        """More DDIM steps than diffusion steps is a configuration error."""
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate({"diffusion": {"timesteps": 10}, "sampler": {"steps": 11}})

    def test_toy_size_matches_network(self):
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate({"toy": {"image_size": 64}})

    def test_unet_layout_checks(self):
        """Image size must halve cleanly through every level."""
        with pytest.raises(ValidationError):
            UNetConfig(image_size=30, level_channels=[8, 8, 8])
        with pytest.raises(ValidationError):
            UNetConfig(pe_width=7)
        with pytest.raises(ValidationError):
            UNetConfig(in_channels=3)

    def test_unique_exponents(self):
        with pytest.raises(ValidationError):
            SweepConfig(ps=[2.0, 2.0])
        with pytest.raises(ValidationError):
            SweepConfig(ps=[0.0])

    def test_hashes(self):
        """The config hash sees every field; the architecture hash only the network."""
        a = ExperimentConfig()
        b = ExperimentConfig.model_validate({"train": {"lr": 5e-4}})
        c = ExperimentConfig.model_validate({"data": {"n_z": 20}})
        assert a.config_hash() != b.config_hash()
        assert a.architecture_hash() == b.architecture_hash()
        assert a.architecture_hash() != c.architecture_hash()
        assert a.config_hash() == ExperimentConfig.model_validate_json(a.canonical_json()).config_hash()

    def test_for_cell(self):
        """A cell copy sets target, exponent and both seeds without touching the original."""
        base = ExperimentConfig()
        cell = base.for_cell(PredictionTarget.VELOCITY, 1.5, 7)
        assert cell.train.target == PredictionTarget.VELOCITY
        assert cell.train.loss.p == 1.5
        assert (cell.train.seed, cell.sampler.seed) == (7, 7)
        assert base.train.seed == 0 and base.train.loss.p == 2.0
