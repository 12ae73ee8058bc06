"""
Unit tests for the noise schedule, forward process, target algebra and Lp loss.
"""
import math

import pytest
import torch

from src.diffusion import (
    NoiseSchedule,
    compute_target,
    cosine_schedule,
    forward_diffuse,
    lp_loss,
    lp_loss_grad,
    predict_eps,
    predict_x0,
)
from src.exceptions import (
    ConfigurationError,
    NonFiniteError,
    RangeError,
    ShapeError,
    SingularityError,
)
from src.models import LpConfig, PredictionTarget

TARGETS = [PredictionTarget.EPSILON, PredictionTarget.VELOCITY, PredictionTarget.X0]


class TestCosineSchedule:
    """Tests for cosine_schedule."""

    def test_boundary_is_exactly_one(self, schedule):
        """alpha_bar[0] is exactly 1."""
        assert schedule.alpha_bar[0].item() == 1.0

    def test_strictly_decreasing(self, schedule):
        """alpha_bar decreases strictly and stays positive."""
        diffs = schedule.alpha_bar[1:] - schedule.alpha_bar[:-1]
        assert bool(torch.all(diffs < 0))
        assert schedule.alpha_bar[-1].item() > 0

    def test_midpoint_value(self, schedule):
        """alpha_bar[500] matches the closed form."""
        s = 0.008
        f = lambda t: math.cos(((t / 1000 + s) / (1 + s)) * math.pi / 2) ** 2
        assert schedule.alpha_bar[500].item() == pytest.approx(f(500) / f(0), abs=1e-12)
        assert schedule.alpha_bar[500].item() == pytest.approx(0.49386, abs=1e-4)

    def test_alpha_beta_relations(self, schedule):
        """alpha[t] = alpha_bar[t]/alpha_bar[t-1] and beta in (0, 0.999]."""
        ratio = schedule.alpha_bar[1:] / schedule.alpha_bar[:-1]
        assert torch.allclose(schedule.alpha, ratio, atol=1e-12)
        assert torch.allclose(schedule.beta, 1 - schedule.alpha, atol=1e-15)
        assert bool(torch.all(schedule.beta > 0))
        assert bool(torch.all(schedule.beta <= 0.999))

    def test_zero_offset_keeps_last_step_positive(self):
        """With s=0 the clipped last beta keeps alpha_bar[T] > 0."""
        sched = cosine_schedule(100, 0.0)
        assert sched.beta[-1].item() == pytest.approx(0.999)
        assert sched.alpha_bar[-1].item() > 0

    @pytest.mark.parametrize("timesteps,offset", [(0, 0.008), (-5, 0.008), (10, -0.1)])
    def test_invalid_arguments(self, timesteps, offset):
        """Invalid T or s is a configuration error."""
        with pytest.raises(ConfigurationError):
            cosine_schedule(timesteps, offset)


class TestForwardDiffuse:
    """Tests for forward_diffuse."""

    def test_zero_noise(self, schedule):
        """eps = 0 scales x0 by sqrt(alpha_bar)."""
        x0 = torch.rand(2, 4, 4, dtype=torch.float64) * 2 - 1
        x_t = forward_diffuse(x0, 300, torch.zeros(4, 4, dtype=torch.float64), schedule)
        assert torch.allclose(x_t, schedule.alpha_bar[300].sqrt() * x0, atol=1e-15)

    def test_boundary_is_identity(self, schedule):
        """t = 0 returns x0."""
        x0 = torch.rand(2, 4, 4, dtype=torch.float64)
        eps = torch.randn(4, 4, dtype=torch.float64)
        assert torch.equal(forward_diffuse(x0, 0, eps, schedule), x0)

    def test_channels_share_noise(self, schedule):
        """x_t[0] - x_t[1] = sqrt(alpha_bar) * (image - mask)."""
        gen = torch.Generator().manual_seed(0)
        x0 = torch.rand(2, 8, 8, generator=gen, dtype=torch.float64) * 2 - 1
        eps = torch.randn(8, 8, generator=gen, dtype=torch.float64)
        for t in (1, 250, 999):
            x_t = forward_diffuse(x0, t, eps, schedule)
            expected = schedule.alpha_bar[t].sqrt() * (x0[0] - x0[1])
            assert torch.allclose(x_t[0] - x_t[1], expected, atol=1e-12)

    @pytest.mark.parametrize("t", [100, 500, 900])
    def test_monte_carlo_moments(self, schedule, t):
        """Mean and variance of x_t match the forward-process moments."""
        n = 100_000
        gen = torch.Generator().manual_seed(t)
        x0 = torch.tensor([[[0.6]], [[-1.0]]], dtype=torch.float64).expand(n, 2, 1, 1)
        eps = torch.randn(n, 1, 1, generator=gen, dtype=torch.float64)
        x_t = forward_diffuse(x0, torch.full((n,), t, dtype=torch.long), eps, schedule)
        alpha_bar = schedule.alpha_bar[t].item()
        var = 1 - alpha_bar
        for channel, value in ((0, 0.6), (1, -1.0)):
            samples = x_t[:, channel, 0, 0]
            mean_se = math.sqrt(var / n)
            var_se = var * math.sqrt(2.0 / (n - 1))
            assert abs(samples.mean().item() - math.sqrt(alpha_bar) * value) < 3 * mean_se
            assert abs(samples.var().item() - var) < 3 * var_se

    def test_timestep_out_of_range(self, schedule):
        """t > T is a range error."""
        with pytest.raises(RangeError):
            forward_diffuse(torch.zeros(2, 2, 2), 1001, torch.zeros(2, 2), schedule)

    def test_noise_shape_mismatch(self, schedule):
        """A two-channel eps is rejected; noise is one field."""
        with pytest.raises(ShapeError):
            forward_diffuse(torch.zeros(2, 4, 4), 5, torch.zeros(2, 4, 4), schedule)


class TestTargets:
    """Tests for compute_target, predict_x0 and predict_eps."""

    def test_velocity_closed_form(self):
        """x0 = 1, eps = 0, alpha_bar = 0.25 gives v = -0.86603."""
        sched = NoiseSchedule.from_alpha_bar([1.0, 0.25])
        x0 = torch.ones(2, 3, 3, dtype=torch.float64)
        v = compute_target(x0, torch.zeros(3, 3, dtype=torch.float64), 1, sched, PredictionTarget.VELOCITY)
        assert torch.allclose(v, torch.full_like(v, -0.86603), atol=1e-5)

    def test_epsilon_and_x0_targets(self, schedule):
        """Epsilon returns the broadcast noise, X0 returns x0."""
        x0 = torch.rand(2, 4, 4)
        eps = torch.randn(4, 4)
        eps_target = compute_target(x0, eps, 10, schedule, PredictionTarget.EPSILON)
        assert eps_target.shape == (2, 4, 4)
        assert torch.equal(eps_target[0], eps) and torch.equal(eps_target[1], eps)
        assert torch.equal(compute_target(x0, eps, 10, schedule, PredictionTarget.X0), x0)

    def test_velocity_inversion_example(self):
        """alpha_bar = 0.25, x_t = 0.5, v = -sqrt(0.75) recovers x0 = 1."""
        sched = NoiseSchedule.from_alpha_bar([1.0, 0.25])
        x_t = torch.full((2, 1, 1), 0.5, dtype=torch.float64)
        v = torch.full((2, 1, 1), -math.sqrt(0.75), dtype=torch.float64)
        x0_hat = predict_x0(v, x_t, 1, sched, PredictionTarget.VELOCITY)
        assert torch.allclose(x0_hat, torch.ones_like(x0_hat), atol=1e-12)

    @pytest.mark.parametrize("target", TARGETS)
    def test_round_trip_batch(self, schedule, target):
        """1000 random triples: x0, eps and x_t are reconstructed to 1e-6."""
        gen = torch.Generator().manual_seed(7)
        n = 1000
        x0 = torch.rand(n, 2, 3, 3, generator=gen, dtype=torch.float64) * 2 - 1
        eps = torch.randn(n, 3, 3, generator=gen, dtype=torch.float64)
        t = torch.randint(1, 1000, (n,), generator=gen)
        x_t = forward_diffuse(x0, t, eps, schedule)
        out = compute_target(x0, eps, t, schedule, target)
        x0_hat = predict_x0(out, x_t, t, schedule, target)
        eps_hat = predict_eps(out, x_t, t, schedule, target)
        assert (x0_hat - x0).abs().max().item() < 1e-6
        assert (eps_hat - eps.unsqueeze(1)).abs().max().item() < 1e-6
        ab = schedule.alpha_bar[t].reshape(n, 1, 1, 1)
        rebuilt = ab.sqrt() * x0_hat + (1 - ab).sqrt() * eps_hat
        assert (rebuilt - x_t).abs().max().item() < 1e-6

    def test_epsilon_singular_at_zero_alpha_bar(self):
        """Epsilon -> x0 is undefined where alpha_bar = 0."""
        sched = NoiseSchedule.from_alpha_bar([1.0, 0.5, 0.0])
        x = torch.zeros(2, 2, 2)
        with pytest.raises(SingularityError):
            predict_x0(x, x, 2, sched, PredictionTarget.EPSILON)

    def test_x0_singular_at_boundary(self, schedule):
        """X0 -> epsilon is undefined where alpha_bar = 1."""
        x = torch.zeros(2, 2, 2)
        with pytest.raises(SingularityError):
            predict_eps(x, x, 0, schedule, PredictionTarget.X0)

    def test_model_out_shape_mismatch(self, schedule):
        """Mismatched model output is a shape error."""
        with pytest.raises(ShapeError):
            predict_x0(torch.zeros(2, 2, 2), torch.zeros(2, 3, 3), 5, schedule, PredictionTarget.X0)


class TestLpLoss:
    """Tests for lp_loss."""

    def test_zero_residual(self):
        """pred == target gives 0."""
        x = torch.randn(4, 2, 3, 3)
        assert lp_loss(x, x.clone(), LpConfig(p=1.5)).item() == 0.0

    def test_single_element(self):
        """Residual 2 at p = 1.5 gives 2^1.5."""
        loss = lp_loss(torch.tensor([2.0], dtype=torch.float64), torch.zeros(1, dtype=torch.float64), LpConfig(p=1.5))
        assert loss.item() == pytest.approx(2.82843, abs=1e-5)

    def test_mean_of_squares(self):
        """Residuals [1, -1] at p = 2 give 1."""
        loss = lp_loss(torch.tensor([1.0, -1.0]), torch.zeros(2), LpConfig(p=2.0))
        assert loss.item() == pytest.approx(1.0)

    @pytest.mark.parametrize("p", [1.5, 2.0, 2.5])
    def test_gradient_matches_finite_differences(self, p):
        """Analytic gradient agrees with central differences for |r| in [0.01, 3]."""
        gen = torch.Generator().manual_seed(int(p * 10))
        magnitude = torch.rand(24, generator=gen, dtype=torch.float64) * 2.99 + 0.01
        sign = (torch.rand(24, generator=gen) < 0.5).to(torch.float64) * 2 - 1
        target = torch.randn(24, generator=gen, dtype=torch.float64)
        pred = (target + sign * magnitude).requires_grad_(True)
        cfg = LpConfig(p=p)
        assert torch.autograd.gradcheck(lambda x: lp_loss(x, target, cfg), (pred,), eps=1e-6, atol=0, rtol=1e-4)

    def test_gradient_zero_at_zero_residual(self):
        """The gradient is defined as 0 where the residual vanishes."""
        grad = lp_loss_grad(torch.tensor([0.0, 1.0, -1.0]), 1.5)
        assert grad[0].item() == 0.0
        assert grad[1].item() == pytest.approx(0.5)
        assert grad[2].item() == pytest.approx(-0.5)

    def test_shape_mismatch(self):
        """Shapes must agree."""
        with pytest.raises(ShapeError):
            lp_loss(torch.zeros(3), torch.zeros(4), LpConfig())

    def test_non_finite_input(self):
        """NaN input is a numeric error."""
        with pytest.raises(NonFiniteError):
            lp_loss(torch.tensor([float("nan")]), torch.zeros(1), LpConfig())
