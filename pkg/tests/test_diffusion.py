"""Diffusion schedule, DDIM inversion, and ISM/SDS gradient tests.

The analytic oracle denoiser (exact noise under a known clean image)
provides the independent reference for every derived expectation.
"""

from __future__ import annotations

import numpy as np
import pytest

from splatopt.diffusion import (
    DiffusionSchedule,
    IsmConfig,
    LatentState,
    PromptEmbedding,
    ddim_invert,
    ddim_reconstruct,
    forward_diffuse,
    ism_pixel_gradient,
    sds_pixel_gradient,
)
from splatopt.errors import SplatoptError
from splatopt.guidance import embed_text, oracle_denoiser

SCHEDULE = DiffusionSchedule.linear()
NULL = PromptEmbedding.null()
PROMPT = embed_text("a red sphere")


class ZeroDenoiser:
    def predict_noise(self, latent, prompt):
        return np.zeros_like(latent.data)


class TestSchedule:
    def test_linear_defaults(self):
        s = DiffusionSchedule.linear()
        assert s.num_steps == 1000
        assert s.betas[0] == pytest.approx(1e-4)
        assert s.betas[-1] == pytest.approx(2e-2)
        assert s.alpha_bar(0) == 1.0

    def test_consistency_with_betas(self):
        s = DiffusionSchedule.linear(num_steps=500)
        recomputed = np.concatenate([[1.0], np.cumprod(1.0 - s.betas[:-1])])
        np.testing.assert_allclose(s.alphas_cumprod, recomputed, atol=1e-12, rtol=0)

    def test_strictly_decreasing_in_unit_interval(self):
        s = DiffusionSchedule.linear()
        assert np.all(np.diff(s.alphas_cumprod) < 0)
        assert np.all(s.alphas_cumprod > 0) and np.all(s.alphas_cumprod <= 1)

    def test_inconsistent_table_rejected(self):
        s = DiffusionSchedule.linear(num_steps=10)
        bad = s.alphas_cumprod.copy()
        bad[5] += 1e-6
        with pytest.raises(ValueError):
            DiffusionSchedule(s.betas, bad)


class TestForwardDiffuse:
    def test_t0_identity(self):
        rng = np.random.default_rng(0)
        x0 = rng.standard_normal((4, 4, 3))
        out = forward_diffuse(x0, 0, rng.standard_normal(x0.shape), SCHEDULE)
        np.testing.assert_array_equal(out.data, x0)

    def test_zero_noise_scales_x0(self):
        rng = np.random.default_rng(1)
        x0 = rng.standard_normal((4, 4, 3))
        t = 300
        out = forward_diffuse(x0, t, np.zeros_like(x0), SCHEDULE)
        np.testing.assert_allclose(out.data, np.sqrt(SCHEDULE.alpha_bar(t)) * x0, atol=1e-12)

    def test_monte_carlo_second_moment(self):
        # With x0 = 0, E ||x_t||^2 = (1 - abar_t) * numel.
        t = 600
        x0 = np.zeros((8, 8))
        total = 0.0
        n = 1000
        for seed in range(n):
            noise = np.random.default_rng(seed).standard_normal(x0.shape)
            total += float((forward_diffuse(x0, t, noise, SCHEDULE).data ** 2).sum())
        expected = (1.0 - SCHEDULE.alpha_bar(t)) * x0.size
        assert total / n == pytest.approx(expected, rel=0.05)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            forward_diffuse(np.zeros((2, 2)), 5, np.zeros((3, 3)), SCHEDULE)


class TestDdimInvert:
    def test_zero_denoiser_collapses_recurrence(self):
        rng = np.random.default_rng(2)
        x0 = rng.standard_normal((4, 4, 3))
        traj = ddim_invert(x0, ZeroDenoiser(), NULL, target_t=400, stride=100, schedule=SCHEDULE)
        for state in traj:
            expected = np.sqrt(SCHEDULE.alpha_bar(state.timestep)) * x0
            np.testing.assert_allclose(state.data, expected, atol=1e-12)

    @pytest.mark.parametrize("target_t,stride", [(100, 30), (90, 30), (1, 50), (0, 10)])
    def test_trajectory_length(self, target_t, stride):
        x0 = np.zeros((2, 2))
        traj = ddim_invert(x0, ZeroDenoiser(), NULL, target_t, stride, SCHEDULE)
        assert len(traj) == int(np.ceil(target_t / stride)) + 1
        assert traj[-1].timestep == target_t
        assert traj[0].timestep == 0

    def test_oracle_round_trip(self):
        # Inversion followed by forward DDIM reconstruction recovers x0.
        rng = np.random.default_rng(3)
        x0 = rng.uniform(-1, 1, (8, 8, 3))
        denoiser = oracle_denoiser(x0, schedule=SCHEDULE)
        traj = ddim_invert(x0, denoiser, NULL, target_t=640, stride=80, schedule=SCHEDULE)
        back = ddim_reconstruct(traj[-1], denoiser, NULL, stride=80, schedule=SCHEDULE)
        np.testing.assert_allclose(back, x0, atol=1e-4)

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        x0 = rng.uniform(-1, 1, (4, 4, 3))
        denoiser = oracle_denoiser(x0 * 0.5, schedule=SCHEDULE)
        a = ddim_invert(x0, denoiser, NULL, 320, 40, SCHEDULE)
        b = ddim_invert(x0, denoiser, NULL, 320, 40, SCHEDULE)
        for s1, s2 in zip(a, b):
            np.testing.assert_array_equal(s1.data, s2.data)

    def test_denoiser_failure_carries_timestep(self):
        class Broken:
            def predict_noise(self, latent, prompt):
                raise RuntimeError("boom")

        with pytest.raises(SplatoptError, match="timestep 50"):
            ddim_invert(np.zeros((2, 2)), Broken(), NULL, 100, 50, SCHEDULE)


class TestIsmGradient:
    CONFIG = IsmConfig()

    def test_fixed_point_zero_gradient_at_target(self):
        # Both conditional and unconditional targets equal the render: the
        # residual vanishes for every sampled timestep.
        rng = np.random.default_rng(5)
        img = rng.uniform(0, 1, (8, 8, 3))
        latent_target = 2.0 * img - 1.0
        denoiser = oracle_denoiser(latent_target, schedule=SCHEDULE)
        for seed in range(10):
            out = ism_pixel_gradient(img, denoiser, PROMPT, self.CONFIG, SCHEDULE, seed)
            assert np.abs(out.grad).max() < 1e-3

    def test_descent_direction(self):
        # Conditional target = desired image, unconditional = current render:
        # a small gradient step must strictly reduce the distance to the
        # desired image, for every seed.
        rng = np.random.default_rng(6)
        img = rng.uniform(0.2, 0.8, (8, 8, 3))
        desired = np.clip(img + rng.uniform(-0.3, 0.3, img.shape), 0, 1)
        denoiser = oracle_denoiser(
            2.0 * desired - 1.0, null_target=2.0 * img - 1.0, schedule=SCHEDULE
        )
        before = float(((img - desired) ** 2).sum())
        for seed in range(20):
            out = ism_pixel_gradient(img, denoiser, PROMPT, self.CONFIG, SCHEDULE, seed)
            stepped = img - 1e-4 * out.grad
            after = float(((stepped - desired) ** 2).sum())
            assert after < before

    def test_zero_weight_zero_gradient(self):
        rng = np.random.default_rng(7)
        img = rng.uniform(0, 1, (4, 4, 3))
        denoiser = oracle_denoiser(rng.uniform(-1, 1, img.shape), schedule=SCHEDULE)
        cfg = IsmConfig(omega="zero")
        out = ism_pixel_gradient(img, denoiser, PROMPT, cfg, SCHEDULE, seed=0)
        np.testing.assert_array_equal(out.grad, 0.0)

    def test_sampled_timestep_respects_delta(self):
        cfg = IsmConfig(t_range=(10, 200), delta=80)
        img = np.full((4, 4, 3), 0.5)
        denoiser = oracle_denoiser(np.zeros((4, 4, 3)), schedule=SCHEDULE)
        for seed in range(30):
            out = ism_pixel_gradient(img, denoiser, PROMPT, cfg, SCHEDULE, seed)
            assert 81 <= out.timestep_used <= 200

    def test_empty_timestep_range_rejected(self):
        cfg = IsmConfig(t_range=(10, 50), delta=80)
        img = np.full((4, 4, 3), 0.5)
        denoiser = oracle_denoiser(np.zeros((4, 4, 3)), schedule=SCHEDULE)
        with pytest.raises(SplatoptError, match="empty timestep range"):
            ism_pixel_gradient(img, denoiser, PROMPT, cfg, SCHEDULE, seed=0)

    def test_deterministic_under_seed(self):
        rng = np.random.default_rng(8)
        img = rng.uniform(0, 1, (4, 4, 3))
        denoiser = oracle_denoiser(rng.uniform(-1, 1, img.shape), schedule=SCHEDULE)
        a = ism_pixel_gradient(img, denoiser, PROMPT, self.CONFIG, SCHEDULE, seed=11)
        b = ism_pixel_gradient(img, denoiser, PROMPT, self.CONFIG, SCHEDULE, seed=11)
        np.testing.assert_array_equal(a.grad, b.grad)
        assert a.timestep_used == b.timestep_used


class TestSdsGradient:
    CONFIG = IsmConfig()

    def test_exactly_predicted_noise_zero_gradient(self):
        rng = np.random.default_rng(9)
        img = rng.uniform(0, 1, (6, 6, 3))
        denoiser = oracle_denoiser(2.0 * img - 1.0, schedule=SCHEDULE)
        for seed in range(5):
            out = sds_pixel_gradient(img, denoiser, PROMPT, self.CONFIG, SCHEDULE, seed)
            assert np.abs(out.grad).max() < 1e-9

    def test_monte_carlo_descent_direction(self):
        # With an oracle pulling toward a distinct target, the mean gradient
        # over seeds correlates positively with (x0 - target).
        rng = np.random.default_rng(10)
        img = rng.uniform(0.2, 0.8, (6, 6, 3))
        desired = np.clip(img + rng.uniform(-0.4, 0.4, img.shape), 0, 1)
        denoiser = oracle_denoiser(2.0 * desired - 1.0, schedule=SCHEDULE)
        grads = [
            sds_pixel_gradient(img, denoiser, PROMPT, self.CONFIG, SCHEDULE, seed).grad
            for seed in range(100)
        ]
        mean_grad = np.mean(grads, axis=0).ravel()
        direction = (img - desired).ravel()
        cosine = mean_grad @ direction / (
            np.linalg.norm(mean_grad) * np.linalg.norm(direction)
        )
        assert cosine > 0.5

    def test_zero_weight(self):
        rng = np.random.default_rng(11)
        img = rng.uniform(0, 1, (4, 4, 3))
        denoiser = oracle_denoiser(rng.uniform(-1, 1, img.shape), schedule=SCHEDULE)
        out = sds_pixel_gradient(img, denoiser, PROMPT, IsmConfig(omega="zero"), SCHEDULE, 0)
        np.testing.assert_array_equal(out.grad, 0.0)
