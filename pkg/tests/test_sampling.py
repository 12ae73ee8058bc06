"""
Tests for the DDIM sampler, including an analytic Gaussian oracle.
"""
import math

import numpy as np
import pytest
import torch

from src.diffusion import cosine_schedule
from src.exceptions import ConfigurationError, RangeError, UsageError
from src.models import ConditionToken, PredictionTarget, SamplerConfig
from src.sampling import (
    binarize_mask,
    ddim_sigma,
    ddim_step,
    sample,
    samples_to_records,
    timestep_subsequence,
)
from src.services.sampling_service import draw_tokens, sampling_service

# Per-channel target Gaussian for the oracle: (mean, std)
IMAGE_PRIOR = (0.3, 0.2)
MASK_PRIOR = (-0.2, 0.3)


def gaussian_denoiser(sched):
    """Exact posterior mean E[x0 | x_t] for independent per-channel Gaussian data."""
    mu = torch.tensor([IMAGE_PRIOR[0], MASK_PRIOR[0]]).view(1, 2, 1, 1)
    var = torch.tensor([IMAGE_PRIOR[1], MASK_PRIOR[1]]).view(1, 2, 1, 1) ** 2

    def model(x, t, tokens):
        ab = sched.alpha_bar[t].to(x.dtype).view(-1, 1, 1, 1)
        gain = var * ab.sqrt() / (ab * var + 1.0 - ab)
        return mu + gain * (x - ab.sqrt() * mu)

    return model


class TestTimestepSubsequence:
    """Tests for timestep_subsequence."""

    def test_default_stride(self):
        """300 of 1000 steps: starts at T, strictly decreasing."""
        taus = timestep_subsequence(1000, 300)
        assert len(taus) == 300
        assert taus[0] == 1000
        assert all(a > b for a, b in zip(taus, taus[1:]))
        assert taus[-1] >= 1

    def test_full_length(self):
        """steps = T visits every timestep."""
        assert timestep_subsequence(5, 5) == [5, 4, 3, 2, 1]

    @pytest.mark.parametrize("steps", [0, 11])
    def test_invalid_steps(self, steps):
        """steps must lie in [1, T]."""
        with pytest.raises(ConfigurationError):
            timestep_subsequence(10, steps)


class TestSigma:
    """Tests for ddim_sigma."""

    def test_eta_zero(self):
        """Deterministic DDIM has no noise."""
        assert ddim_sigma(0.5, 0.6, 0.0) == 0.0

    def test_eta_one_is_ancestral(self):
        """eta = 1 gives the DDPM posterior standard deviation."""
        ab_t, ab_prev = 0.5, 0.6
        expected = math.sqrt((1 - ab_prev) / (1 - ab_t) * (1 - ab_t / ab_prev))
        assert ddim_sigma(ab_t, ab_prev, 1.0) == pytest.approx(expected, rel=1e-12)

    def test_order_required(self):
        """alpha_bar must increase towards t_prev."""
        with pytest.raises(RangeError):
            ddim_sigma(0.6, 0.5, 0.2)


class TestStep:
    """Tests for ddim_step."""

    def test_final_step_returns_clamped_x0(self):
        """Stepping to t = 0 yields the clamped prediction for any eta."""
        sched = cosine_schedule(50)
        x_t = torch.randn((2, 2, 4, 4), generator=torch.Generator().manual_seed(0), dtype=torch.float64)
        pred = torch.full_like(x_t, 1.7)
        out = ddim_step(x_t, pred, 3, 0, sched, 1.0, torch.Generator().manual_seed(1), PredictionTarget.X0)
        assert torch.allclose(out, torch.ones_like(out), atol=1e-12)

    def test_bad_t_prev(self):
        """t_prev must precede t."""
        sched = cosine_schedule(50)
        x = torch.zeros((1, 2, 4, 4))
        with pytest.raises(RangeError):
            ddim_step(x, x, 5, 5, sched, 0.0, None, PredictionTarget.X0)

    def test_binarize(self):
        """Strictly above the threshold maps to +1."""
        assert binarize_mask(torch.tensor([-0.5, 0.0, 0.1])).tolist() == [-1.0, -1.0, 1.0]


class TestSample:
    """Tests for sample()."""

    def test_tokens_required(self):
        """Sampling without a condition is a usage error."""
        sched = cosine_schedule(50)
        cfg = SamplerConfig(steps=5)
        model = gaussian_denoiser(sched)
        for tokens in (None, []):
            with pytest.raises(UsageError):
                sample(model, tokens, sched, cfg, PredictionTarget.X0, 4)

    def test_output_layout(self):
        """Image clamped to [-1, 1]; mask exactly +-1."""
        sched = cosine_schedule(50)
        batch = sample(gaussian_denoiser(sched), [0, 31], sched, SamplerConfig(steps=10), PredictionTarget.X0, 4)
        assert tuple(batch.joint.shape) == (2, 2, 4, 4)
        assert batch.joint[:, 0].abs().max() <= 1.0
        assert set(batch.joint[:, 1].unique().tolist()) <= {-1.0, 1.0}

    def test_condition_token_object(self):
        """A ConditionToken is accepted as a single condition."""
        sched = cosine_schedule(50)
        tok = ConditionToken(z_bin=3, pathology=1, n_z=30)
        batch = sample(gaussian_denoiser(sched), tok, sched, SamplerConfig(steps=5), PredictionTarget.X0, 4)
        assert batch.tokens.tolist() == [33]

    def test_eta_zero_bit_deterministic(self):
        """Two eta = 0 runs from one seed agree exactly."""
        sched = cosine_schedule(1000)
        cfg = SamplerConfig(steps=300, eta=0.0, seed=11)
        model = gaussian_denoiser(sched)
        a = sample(model, [0] * 8, sched, cfg, PredictionTarget.X0, 4)
        b = sample(model, [0] * 8, sched, cfg, PredictionTarget.X0, 4)
        assert torch.equal(a.raw, b.raw)

    @pytest.mark.parametrize("eta", [0.0, 0.2])
    def test_gaussian_oracle(self, eta):
        """An exact Gaussian denoiser reproduces the prior's moments within 5%."""
        sched = cosine_schedule(1000)
        cfg = SamplerConfig(steps=300, eta=eta, seed=5, batch_size=2000)
        batch = sample(gaussian_denoiser(sched), [0] * 2000, sched, cfg, PredictionTarget.X0, 4)
        raw = batch.raw.double()
        for channel, (mu, sd) in enumerate((IMAGE_PRIOR, MASK_PRIOR)):
            values = raw[:, channel]
            assert values.mean().item() == pytest.approx(mu, abs=0.05 * sd)
            assert values.var().item() == pytest.approx(sd ** 2, rel=0.05)
        flat = raw.reshape(2000, -1).numpy()
        corr = np.corrcoef(flat, rowvar=False)
        off_diagonal = corr[~np.eye(corr.shape[0], dtype=bool)]
        assert np.abs(off_diagonal).max() < 0.1

    def test_records(self):
        """Records take their bin from the token and pathology from the mask."""
        sched = cosine_schedule(50)
        batch = sample(gaussian_denoiser(sched), [35, 2], sched, SamplerConfig(steps=5), PredictionTarget.X0, 4)
        records = samples_to_records(batch, n_z=30, offset=10)
        assert [r.z_bin for r in records] == [5, 2]
        assert [r.token for r in records] == [35, 2]
        assert records[0].subject_id == "sample-000010"
        for r in records:
            assert r.pathology == int(bool((r.mask > 0).any()))


class TestSamplingService:
    """Tests for token drawing and argument checks."""

    def test_empirical_tokens_come_from_reference(self, toy_records):
        """Empirical draws only use tokens present in the reference."""
        present = {r.condition(30).token for r in toy_records}
        tokens = draw_tokens(toy_records, 200, "empirical", 30, seed=0)
        assert len(tokens) == 200
        assert set(tokens) <= present

    def test_uniform_tokens_cover_range(self, toy_records):
        """Uniform draws stay in [0, 2 n_z)."""
        tokens = draw_tokens(toy_records, 500, "uniform", 30, seed=0)
        assert min(tokens) >= 0 and max(tokens) < 60

    def test_deterministic(self, toy_records):
        """Same seed, same tokens."""
        assert draw_tokens(toy_records, 50, "empirical", 30, 3) == draw_tokens(toy_records, 50, "empirical", 30, 3)

    def test_generate_requires_tokens(self, tiny_experiment, tmp_path):
        """No tokens is a usage error before any checkpoint is read."""
        with pytest.raises(UsageError):
            sampling_service.generate(tiny_experiment, tmp_path / "missing.ckpt", [])

    def test_generate_rejects_bad_token(self, tiny_experiment, tmp_path):
        """Tokens must lie in [0, 2 n_z)."""
        with pytest.raises(RangeError):
            sampling_service.generate(tiny_experiment, tmp_path / "missing.ckpt", [0, 8])
