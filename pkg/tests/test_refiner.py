"""Camera encoder and refiner tests: analytic gradients against finite
differences, the identity contracts, and consistency-driven training."""

from __future__ import annotations

import numpy as np
import pytest

from splatopt.camera import default_intrinsics, extrinsic_vector, sample_orbit_camera
from splatopt.diffusion import PromptEmbedding
from splatopt.errors import UnsupportedOperationError
from splatopt.guidance import embed_text
from splatopt.refiner import (
    CameraEncoder,
    EncoderGradients,
    IdentityRefiner,
    MockRefiner,
    build_conditioning,
    encode_camera,
    encode_camera_backward,
    mock_refiner,
    train_encoder_step,
)
from splatopt.renderer import RenderedView
from splatopt.scene_coords import SceneCoordinateMap


def orbit_vec(az, el=10.0):
    cam = sample_orbit_camera(az, el, 4.0, (0, 0, 0), default_intrinsics(16, 16), 16, 16)
    return extrinsic_vector(cam.pose), cam


class TestEncodeCamera:
    def test_zero_weights_biases_only(self):
        enc = CameraEncoder(
            w1=np.zeros((8, 12)), b1=np.full(8, 0.3), w2=np.zeros((5, 8)), b2=np.arange(5.0)
        )
        c, _ = orbit_vec(45.0)
        np.testing.assert_allclose(encode_camera(enc, c), np.arange(5.0), atol=1e-15)

    def test_distinct_poses_distinct_embeddings(self):
        c_a, _ = orbit_vec(10.0)
        c_b, _ = orbit_vec(55.0)
        for seed in range(100):
            enc = CameraEncoder.create(seed=seed, hidden=16, width=16)
            f_a = encode_camera(enc, c_a)
            f_b = encode_camera(enc, c_b)
            assert not np.allclose(f_a, f_b)

    def test_weight_gradients_match_finite_differences(self):
        rng = np.random.default_rng(0)
        enc = CameraEncoder.create(seed=3, hidden=6, width=4)
        c, _ = orbit_vec(30.0)
        grad_out = rng.standard_normal(4)

        def loss():
            return float(grad_out @ encode_camera(enc, c))

        grads = encode_camera_backward(enc, c, grad_out)
        h = 1e-6
        for name in ("w1", "b1", "w2", "b2"):
            param = getattr(enc, name)
            analytic = getattr(grads, name)
            flat, gflat = param.reshape(-1), analytic.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = loss()
                flat[i] = orig - h
                down = loss()
                flat[i] = orig
                fd = (up - down) / (2 * h)
                assert fd == pytest.approx(gflat[i], rel=1e-4, abs=1e-10)

    def test_lipschitz_bounded_on_orbit_domain(self):
        # Max weight-gradient norm over sampled poses stays finite and
        # bounded (empirical Lipschitz check on the orbit domain).
        enc = CameraEncoder.create(seed=1, hidden=16, width=8)
        worst = 0.0
        for az in np.linspace(-180, 180, 25):
            c, _ = orbit_vec(az)
            g = encode_camera_backward(enc, c, np.ones(8))
            worst = max(worst, np.linalg.norm(g.w1))
        assert np.isfinite(worst) and worst < 1e3


class TestBuildConditioning:
    def test_shape_and_last_row(self):
        f_t = embed_text("prompt")
        f_g = np.arange(64.0)
        f_bar = build_conditioning(f_t, f_g)
        assert f_bar.shape == (9, 64)
        np.testing.assert_array_equal(f_bar[-1], f_g)
        np.testing.assert_array_equal(f_bar[:-1], f_t.tokens)

    def test_zero_camera_row(self):
        f_t = embed_text("prompt")
        f_bar = build_conditioning(f_t, np.zeros(64))
        np.testing.assert_array_equal(f_bar[-1], 0.0)
        np.testing.assert_array_equal(f_bar[:-1], f_t.tokens)

    def test_stable_under_repetition(self):
        f_t = embed_text("prompt")
        f_g = np.linspace(0, 1, 64)
        a = build_conditioning(f_t, f_g)
        b = build_conditioning(f_t, f_g)
        np.testing.assert_array_equal(a, b)

    def test_width_mismatch(self):
        with pytest.raises(ValueError, match="width"):
            build_conditioning(embed_text("p"), np.zeros(32))


class TestMockRefiner:
    def _f_bars(self, f_g, n=1):
        return [build_conditioning(PromptEmbedding.null(), f_g) for _ in range(n)]

    def test_identity_at_zero_strength_zero_readout(self):
        ref = MockRefiner(strength=0.0, seed=0)
        ref.w_gamma[:] = 0.0
        ref.w_beta[:] = 0.0
        rng = np.random.default_rng(1)
        view = rng.uniform(0, 1, (12, 12, 3))
        out = ref.refine([view], self._f_bars(np.ones(64)))
        np.testing.assert_allclose(out[0], view, atol=1e-12)

    def test_constant_image_unsharp_vanishes(self):
        ref = MockRefiner(strength=0.8, seed=0)
        ref.w_gamma[:] = 0.0
        ref.w_beta[:] = 0.0
        view = np.full((10, 10, 3), 0.42)
        out = ref.refine([view], self._f_bars(np.ones(64)))
        np.testing.assert_allclose(out[0], 0.42, atol=1e-12)

    def test_output_clamped(self):
        ref = MockRefiner(strength=1.0, readout_scale=0.5, seed=2)
        rng = np.random.default_rng(3)
        view = rng.uniform(0, 1, (8, 8, 3))
        out = ref.refine([view], self._f_bars(rng.standard_normal(64) * 3))
        assert out[0].min() >= 0.0 and out[0].max() <= 1.0

    def test_gradient_through_encoder_matches_fd(self):
        # Composed map: encoder weights -> f_g -> modulation -> refined
        # image; random linear functional of the output.
        rng = np.random.default_rng(4)
        enc = CameraEncoder.create(seed=5, hidden=6, width=16)
        ref = MockRefiner(strength=0.3, embed_width=16, seed=6)
        c, _ = orbit_vec(20.0)
        view = rng.uniform(0.2, 0.8, (8, 8, 3))
        probe = rng.standard_normal((8, 8, 3))
        f_t = PromptEmbedding.null(width=16)

        def loss():
            f_bar = build_conditioning(f_t, encode_camera(enc, c))
            return float((probe * ref.refine([view], [f_bar])[0]).sum())

        f_bar = build_conditioning(f_t, encode_camera(enc, c))
        d_fg = ref.backward_to_embedding([view], [f_bar], [probe])[0]
        grads = encode_camera_backward(enc, c, d_fg)
        h = 1e-6
        rng2 = np.random.default_rng(7)
        for name in ("w1", "w2", "b1", "b2"):
            param = getattr(enc, name)
            analytic = getattr(grads, name).reshape(-1)
            flat = param.reshape(-1)
            for i in rng2.choice(flat.size, size=min(20, flat.size), replace=False):
                orig = flat[i]
                flat[i] = orig + h
                up = loss()
                flat[i] = orig - h
                down = loss()
                flat[i] = orig
                fd = (up - down) / (2 * h)
                assert fd == pytest.approx(analytic[i], rel=1e-3, abs=1e-9)


def consistent_scene(n_views=3, size=12, spread_deg=2.0):
    """Views of a flat textured plane with exact scene coordinates.

    Pixel colors are a smooth function of the world coordinate seen at the
    pixel, so the views are mutually consistent by construction.  With
    ``spread_deg=0`` all views share one camera (identical scene coords and
    images: the exact fixed point of the consistency loss).
    """
    from tests.test_scene_coords import analytic_plane_view
    from splatopt.scene_coords import render_scene_coordinates

    views, maps = [], []
    for i in range(n_views):
        cam = sample_orbit_camera(
            i * spread_deg, 20.0, 4.0, (0, 0, 0),
            default_intrinsics(size, size), size, size,
        )
        synthetic = analytic_plane_view(cam)
        smap = render_scene_coordinates(synthetic)
        rgb = 0.5 + 0.15 * np.sin(3.0 * smap.coords[..., :3])
        views.append(RenderedView(rgb=rgb, depth=synthetic.depth,
                                  alpha=synthetic.alpha, camera=cam))
        maps.append(smap)
    return views, maps


class TestTrainEncoderStep:
    def test_identity_refiner_zero_loss_zero_update(self):
        # Identical refined views with identical scene coordinates: the
        # exact fixed point.
        views, maps = consistent_scene(spread_deg=0.0)
        enc = CameraEncoder.create(seed=0, hidden=8, width=16)
        before = {k: v.copy() for k, v in enc.parameters().items()}
        loss, _ = train_encoder_step(
            enc, views, maps, IdentityRefiner(), lr=0.001,
            prompt=PromptEmbedding.null(width=16), eps_depth=0.5, tau=0.4,
        )
        assert loss == pytest.approx(0.0, abs=1e-9)
        for k, v in enc.parameters().items():
            np.testing.assert_array_equal(v, before[k])

    def test_zero_lr_keeps_encoder(self):
        views, maps = consistent_scene()
        enc = CameraEncoder.create(seed=1, hidden=8, width=16)
        ref = MockRefiner(strength=0.4, embed_width=16, readout_scale=0.1, seed=2)
        before = {k: v.copy() for k, v in enc.parameters().items()}
        loss, _ = train_encoder_step(
            enc, views, maps, ref, lr=0.0,
            prompt=PromptEmbedding.null(width=16), eps_depth=0.5, tau=0.4,
        )
        assert loss > 0.0
        for k, v in enc.parameters().items():
            np.testing.assert_array_equal(v, before[k])

    def test_camera_dependent_inconsistency_trains_down(self):
        # The camera-dependent modulation injects per-view color differences;
        # training the encoder must reduce the consistency loss.
        views, maps = consistent_scene()
        enc = CameraEncoder.create(seed=3, hidden=8, width=16)
        ref = MockRefiner(strength=0.0, embed_width=16, readout_scale=0.05, seed=4)
        opt = None
        losses = []
        for _ in range(50):
            loss, opt = train_encoder_step(
                enc, views, maps, ref, lr=0.01, optimizer=opt,
                prompt=PromptEmbedding.null(width=16), eps_depth=0.5, tau=0.4,
            )
            losses.append(loss)
        assert losses[0] > 0.0
        assert losses[-1] < 0.7 * losses[0]

    def test_non_differentiable_backend_rejected(self):
        views, maps = consistent_scene()
        enc = CameraEncoder.create(seed=0, hidden=8, width=16)

        class Opaque:
            differentiable = False

        with pytest.raises(UnsupportedOperationError):
            train_encoder_step(enc, views, maps, Opaque(), lr=0.001)
