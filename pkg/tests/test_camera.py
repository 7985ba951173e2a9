"""Camera geometry tests.

Every expected value is either hand-computed (single-pixel algebra) or
checked against an independent oracle: explicit 3x3 inverses, rotation
matrices built from scratch, and round-trip compositions over random
poses.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from splatopt.camera import (
    Camera,
    CameraIntrinsics,
    CameraPose,
    camera_center_world,
    camera_from_text,
    camera_to_text,
    camera_to_world,
    extrinsic_vector,
    pixel_to_camera,
    project,
    ray_point,
    sample_orbit_camera,
    turntable_azimuths,
    unproject_pixel,
    world_to_camera,
)
from splatopt.errors import (
    BehindCameraError,
    DegenerateRayError,
    GimbalDegenerateError,
    InvalidIntrinsicsError,
    InvalidPoseError,
)


def random_pose(rng: np.random.Generator) -> CameraPose:
    """Uniform random rotation via QR of a Gaussian matrix, plus random t."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))  # fix the QR sign ambiguity
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return CameraPose(q.T, rng.standard_normal(3))


def yaw_matrix(degrees: float) -> np.ndarray:
    """Independent rotation-matrix oracle: rotation about +y."""
    a = math.radians(degrees)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


class TestExtrinsicVector:
    def test_identity_pose(self):
        c = extrinsic_vector(CameraPose.identity())
        np.testing.assert_array_equal(c, [1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0])

    def test_translation_passthrough(self):
        c = extrinsic_vector(CameraPose(np.eye(3), [0.0, 0.0, 4.0]))
        np.testing.assert_array_equal(c, [1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 4])

    def test_rotation_layout_row_major(self):
        R = yaw_matrix(90.0)
        c = extrinsic_vector(CameraPose(R, np.zeros(3)))
        np.testing.assert_allclose(c[:9], R.reshape(9), atol=1e-15)
        np.testing.assert_array_equal(c[9:], np.zeros(3))

    def test_injective_on_random_poses(self):
        rng = np.random.default_rng(7)
        vecs = [tuple(extrinsic_vector(random_pose(rng))) for _ in range(50)]
        assert len(set(vecs)) == 50


class TestPixelToCamera:
    def test_identity_intrinsics_origin(self):
        k = CameraIntrinsics(1.0, 1.0, 0.0, 0.0)
        np.testing.assert_array_equal(pixel_to_camera((0.0, 0.0), k), [0, 0, 1])

    def test_principal_point_on_axis(self):
        k = CameraIntrinsics(100.0, 100.0, 64.0, 64.0)
        np.testing.assert_array_equal(pixel_to_camera((64.0, 64.0), k), [0, 0, 1])

    def test_against_explicit_inverse(self):
        # Oracle: numerically invert the full 3x3 K and apply it.
        k = CameraIntrinsics(100.0, 100.0, 64.0, 64.0)
        expected = np.linalg.inv(k.matrix) @ np.array([164.0, 64.0, 1.0])
        got = pixel_to_camera((164.0, 64.0), k)
        np.testing.assert_allclose(got, expected, atol=1e-12)
        np.testing.assert_allclose(got, [1.0, 0.0, 1.0], atol=1e-12)

    def test_batched_matches_scalar(self):
        k = CameraIntrinsics(80.0, 120.0, 31.5, 17.0)
        uv = np.array([[0.0, 0.0], [10.5, 20.5], [64.0, 64.0]])
        batched = pixel_to_camera(uv, k)
        for i in range(3):
            np.testing.assert_array_equal(batched[i], pixel_to_camera(uv[i], k))

    def test_nonpositive_focal_rejected(self):
        with pytest.raises(InvalidIntrinsicsError):
            CameraIntrinsics(0.0, 1.0, 0.0, 0.0)


class TestCameraWorldTransforms:
    def test_identity(self):
        np.testing.assert_array_equal(
            camera_to_world((1.0, 2.0, 3.0), CameraPose.identity()), [1, 2, 3]
        )

    def test_pure_translation_inverse(self):
        pose = CameraPose(np.eye(3), [0.0, 0.0, -4.0])
        np.testing.assert_array_equal(camera_to_world((0.0, 0.0, 1.0), pose), [0, 0, 5])

    def test_round_trip_random_poses(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            pose = random_pose(rng)
            p = rng.standard_normal(3) * 3.0
            back = camera_to_world(world_to_camera(p, pose), pose)
            np.testing.assert_allclose(back, p, atol=1e-9)

    def test_invalid_rotation_rejected(self):
        with pytest.raises(InvalidPoseError):
            CameraPose(np.eye(3) * 2.0, np.zeros(3))
        with pytest.raises(InvalidPoseError):
            # Orthonormal but det = -1 (a reflection).
            CameraPose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))


class TestCameraCenter:
    def test_identity(self):
        np.testing.assert_array_equal(camera_center_world(CameraPose.identity()), [0, 0, 0])

    def test_pure_translation(self):
        pose = CameraPose(np.eye(3), [0.0, 0.0, -4.0])
        np.testing.assert_array_equal(camera_center_world(pose), [0, 0, 4])

    def test_fixed_point_property(self):
        # Defining property: the center maps to the camera-frame origin.
        rng = np.random.default_rng(3)
        for _ in range(200):
            pose = random_pose(rng)
            np.testing.assert_allclose(
                world_to_camera(camera_center_world(pose), pose), np.zeros(3), atol=1e-9
            )


class TestProject:
    def test_on_axis(self):
        cam = Camera(
            CameraIntrinsics(1.0, 1.0, 0.0, 0.0), CameraPose.identity(), 4, 4, 0.1, 10.0
        )
        p = project((0.0, 0.0, 2.0), cam)
        assert (p.u, p.v, p.depth, p.clipped) == (0.0, 0.0, 2.0, False)

    def test_axis_point_at_far_plane(self):
        cam = Camera(
            CameraIntrinsics(50.0, 50.0, 32.0, 24.0), CameraPose.identity(), 64, 48, 0.1, 6.0
        )
        p = project((0.0, 0.0, 6.0), cam)
        assert (p.u, p.v) == (32.0, 24.0)
        assert p.depth == 6.0 and not p.clipped

    def test_far_clip_flag(self):
        cam = Camera(
            CameraIntrinsics(50.0, 50.0, 32.0, 24.0), CameraPose.identity(), 64, 48, 0.1, 6.0
        )
        assert project((0.0, 0.0, 6.5), cam).clipped

    def test_behind_camera_raises(self):
        cam = Camera(CameraIntrinsics(1.0, 1.0, 0.0, 0.0), CameraPose.identity(), 4, 4)
        with pytest.raises(BehindCameraError):
            project((0.0, 0.0, -1.0), cam)
        with pytest.raises(BehindCameraError):
            project((0.0, 0.0, 0.05), cam)  # closer than near

    def test_unproject_project_round_trip(self):
        # Composition oracle: world point built at pixel q / depth d must
        # project back to exactly (q, d).
        rng = np.random.default_rng(23)
        intr = CameraIntrinsics(90.0, 110.0, 63.5, 48.0)
        for _ in range(500):
            pose = random_pose(rng)
            cam = Camera(intr, pose, 128, 96, 0.01, 50.0)
            q = rng.uniform([0.0, 0.0], [128.0, 96.0])
            d = rng.uniform(0.5, 20.0)
            p_w = unproject_pixel(q, d, cam)
            got = project(p_w, cam)
            np.testing.assert_allclose([got.u, got.v], q, atol=1e-7)
            assert got.depth == pytest.approx(d, abs=1e-7)


class TestRayPoint:
    def test_axis(self):
        np.testing.assert_array_equal(
            ray_point((0.0, 0.0, 0.0), (0.0, 0.0, 1.0), 5.0), [0, 0, 5]
        )

    def test_zero_depth_returns_center(self):
        c = np.array([1.0, -2.0, 3.0])
        np.testing.assert_array_equal(ray_point(c, (4.0, 5.0, 6.0), 0.0), c)

    def test_norm_oracle(self):
        # ||ray_point - c_w|| must equal s_hat * d exactly.
        rng = np.random.default_rng(5)
        for _ in range(500):
            c = rng.standard_normal(3)
            p = c + rng.standard_normal(3)
            d = rng.uniform(0.0, 10.0)
            s_hat = rng.uniform(0.5, 2.0)
            out = ray_point(c, p, d, s_hat)
            assert np.linalg.norm(out - c) == pytest.approx(s_hat * d, abs=1e-9)

    def test_degenerate_direction(self):
        with pytest.raises(DegenerateRayError):
            ray_point((1.0, 1.0, 1.0), (1.0, 1.0, 1.0), 2.0)


class TestOrbitCamera:
    INTR = CameraIntrinsics(100.0, 100.0, 64.0, 64.0)

    def test_front_view_convention(self):
        cam = sample_orbit_camera(0.0, 0.0, 4.0, (0, 0, 0), self.INTR, 128, 128)
        np.testing.assert_allclose(camera_center_world(cam.pose), [0, 0, 4], atol=1e-12)
        # Optical axis passes through the target: origin projects to the
        # principal point.
        p = project((0.0, 0.0, 0.0), cam)
        assert (p.u, p.v) == pytest.approx((64.0, 64.0), abs=1e-9)
        assert p.depth == pytest.approx(4.0, abs=1e-12)

    def test_back_view_symmetry(self):
        cam = sample_orbit_camera(180.0, 0.0, 4.0, (0, 0, 0), self.INTR, 128, 128)
        np.testing.assert_allclose(camera_center_world(cam.pose), [0, 0, -4], atol=1e-12)
        p = project((0.0, 0.0, 0.0), cam)
        assert (p.u, p.v) == pytest.approx((64.0, 64.0), abs=1e-9)

    def test_120_evenly_spaced_azimuths(self):
        # 120 distinct cameras, all at radius 4 from the target.
        target = np.array([0.5, -0.25, 1.0])
        azimuths = np.linspace(-180.0, 180.0, 120, endpoint=False)
        centers = []
        for az in azimuths:
            cam = sample_orbit_camera(az, 15.0, 4.0, target, self.INTR, 64, 64)
            c = camera_center_world(cam.pose)
            centers.append(tuple(np.round(c, 9)))
            assert np.linalg.norm(c - target) == pytest.approx(4.0, abs=1e-9)
        assert len(set(centers)) == 120

    def test_up_is_world_plus_y(self):
        # With +y up, the world up vector must have a non-positive image-v
        # component (v grows downward).
        cam = sample_orbit_camera(30.0, 15.0, 4.0, (0, 0, 0), self.INTR, 128, 128)
        up_cam = cam.pose.rotation @ np.array([0.0, 1.0, 0.0])
        assert up_cam[1] < 0

    def test_gimbal_degenerate_elevation(self):
        with pytest.raises(GimbalDegenerateError):
            sample_orbit_camera(0.0, 90.0, 4.0, (0, 0, 0), self.INTR, 64, 64)
        with pytest.raises(GimbalDegenerateError):
            sample_orbit_camera(0.0, -90.0, 4.0, (0, 0, 0), self.INTR, 64, 64)

    def test_turntable_azimuths_8(self):
        np.testing.assert_allclose(
            turntable_azimuths(8), [-180, -135, -90, -45, 0, 45, 90, 135]
        )

    def test_turntable_single_frame(self):
        np.testing.assert_allclose(turntable_azimuths(1), [-180.0])


class TestEqChain:
    """The pixel -> camera -> world -> ray chain used by the scene renderer."""

    def test_full_round_trip(self):
        # project(ray_point(...)) must land on the source pixel, with the
        # depth related through the unit-depth ray length.
        rng = np.random.default_rng(41)
        intr = CameraIntrinsics(120.0, 120.0, 64.0, 64.0)
        for _ in range(300):
            pose = random_pose(rng)
            cam = Camera(intr, pose, 128, 128, 0.01, 100.0)
            q = rng.uniform([0.0, 0.0], [128.0, 128.0])
            dist = rng.uniform(0.5, 10.0)
            c_w = camera_center_world(pose)
            p_c = pixel_to_camera(q, intr)
            p_w_prime = camera_to_world(p_c, pose)
            p_w = ray_point(c_w, p_w_prime, dist)
            got = project(p_w, cam)
            np.testing.assert_allclose([got.u, got.v], q, atol=1e-7)
            # Distance d along the ray sits at camera depth d / ||p_c||.
            assert got.depth == pytest.approx(dist / np.linalg.norm(p_c), abs=1e-9)


class TestCameraText:
    def test_round_trip_exact(self):
        rng = np.random.default_rng(2)
        pose = random_pose(rng)
        cam = Camera(CameraIntrinsics(93.7, 101.1, 63.49, 64.51), pose, 128, 96, 0.07, 42.5)
        back = camera_from_text(camera_to_text(cam))
        np.testing.assert_array_equal(back.pose.rotation, cam.pose.rotation)
        np.testing.assert_array_equal(back.pose.translation, cam.pose.translation)
        assert back.intrinsics == cam.intrinsics
        assert (back.width, back.height, back.near, back.far) == (128, 96, 0.07, 42.5)
