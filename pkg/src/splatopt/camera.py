"""Pinhole camera geometry: projection, unprojection, and orbit sampling.

Conventions (used everywhere in this package):

* World frame is right-handed.  The camera looks down its own +z axis;
  +x is image-right and +y is image-down, so for an upright camera the
  camera-frame y axis points against the world up vector.
* Image coordinates: u grows to the right, v grows downward, origin at
  the top-left image corner.  Pixel (ix, iy) (column, row) samples the
  continuous coordinate (ix + 0.5, iy + 0.5).
* World -> camera extrinsic is ``p_c = R @ p_w + t``; the inverse map is
  ``p_w = R.T @ (p_c - t)`` and the camera center in world coordinates
  is ``-R.T @ t``.
* ``project`` recovers the projective scale as the camera-frame z, so it
  is exact at every depth.  ``ray_point`` instead measures Euclidean
  distance along the pixel ray; the two agree only on the optical axis.
* Orbit cameras use +y world up.  Azimuth is measured around +y with
  azimuth 0 placing the camera at ``target + (0, 0, radius)``; elevation
  is measured from the equatorial plane, positive upward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BehindCameraError,
    DegenerateRayError,
    GimbalDegenerateError,
    InvalidIntrinsicsError,
    InvalidPoseError,
    SplatParseError,
)

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics; focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidIntrinsicsError(
                f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}"
            )

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def inverse_matrix(self) -> np.ndarray:
        # Closed-form inverse of the upper-triangular K.
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )


@dataclass(frozen=True)
class CameraPose:
    """World-to-camera extrinsic [R|t] with orthonormal, right-handed R."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        if not np.allclose(R.T @ R, np.eye(3), atol=_ORTHO_TOL, rtol=0.0):
            raise InvalidPoseError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
            raise InvalidPoseError("rotation determinant is not +1 within 1e-9")

    @staticmethod
    def identity() -> "CameraPose":
        return CameraPose(np.eye(3), np.zeros(3))


@dataclass(frozen=True)
class Camera:
    """Full camera: intrinsics, pose, image size, and clip range."""

    intrinsics: CameraIntrinsics
    pose: CameraPose
    width: int
    height: int
    near: float = 0.1
    far: float = 100.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size must be >= 1, got {self.width}x{self.height}")
        if not (0.0 < self.near < self.far):
            raise ValueError(f"need 0 < near < far, got near={self.near}, far={self.far}")


def extrinsic_vector(pose: CameraPose) -> np.ndarray:
    """Flatten [R|t] to a 12-vector: row-major R (9 values) then t (3 values)."""
    return np.concatenate([pose.rotation.reshape(9), pose.translation])


def pixel_to_camera(uv, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Map continuous pixel coordinates to camera-frame points at unit depth.

    Accepts a single (u, v) pair or an (..., 2) array; returns (..., 3)
    with z = 1.  Out-of-image pixels are permitted.
    """
    uv = np.asarray(uv, dtype=np.float64)
    x = (uv[..., 0] - intrinsics.cx) / intrinsics.fx
    y = (uv[..., 1] - intrinsics.cy) / intrinsics.fy
    return np.stack([x, y, np.ones_like(x)], axis=-1)


def world_to_camera(p_w, pose: CameraPose) -> np.ndarray:
    """Apply the world->camera extrinsic to one point or an (..., 3) array."""
    p_w = np.asarray(p_w, dtype=np.float64)
    return p_w @ pose.rotation.T + pose.translation


def camera_to_world(p_c, pose: CameraPose) -> np.ndarray:
    """Apply the camera->world transform [R^T | -R^T t] to (..., 3) points."""
    p_c = np.asarray(p_c, dtype=np.float64)
    return (p_c - pose.translation) @ pose.rotation


def camera_center_world(pose: CameraPose) -> np.ndarray:
    """World-space camera center -R^T t (the point mapping to the camera origin)."""
    return -pose.rotation.T @ pose.translation


@dataclass(frozen=True)
class ProjectedPoint:
    u: float
    v: float
    depth: float
    clipped: bool  # True when depth exceeds the far plane

    @property
    def uv(self) -> np.ndarray:
        return np.array([self.u, self.v])


def project(p_w, camera: Camera) -> ProjectedPoint:
    """Project a world point to pixel coordinates and camera-frame depth.

    Solves s * [u, v, 1]^T = K [R|t] [p_w, 1]^T with the scale s recovered
    as the camera-frame z, so the mapping is exact at every depth.

    Raises BehindCameraError when the camera-frame depth is below the near
    plane; depths beyond the far plane are flagged, not rejected.
    """
    p_c = world_to_camera(p_w, camera.pose)
    depth = float(p_c[2])
    if depth < camera.near:
        raise BehindCameraError(
            f"point depth {depth:.6g} is in front of the near plane {camera.near}"
        )
    u = camera.intrinsics.fx * p_c[0] / depth + camera.intrinsics.cx
    v = camera.intrinsics.fy * p_c[1] / depth + camera.intrinsics.cy
    return ProjectedPoint(float(u), float(v), depth, clipped=depth > camera.far)


def project_points(p_w: np.ndarray, camera: Camera):
    """Vectorized projection of an (N, 3) array; never raises.

    Returns (uv (N, 2), depth (N,), in_front (N,), clipped (N,)) where
    ``in_front`` marks points at or beyond the near plane.  Pixel
    coordinates for points behind the camera are NaN.
    """
    p_c = world_to_camera(p_w, camera.pose)
    depth = p_c[:, 2]
    in_front = depth >= camera.near
    clipped = depth > camera.far
    with np.errstate(divide="ignore", invalid="ignore"):
        u = camera.intrinsics.fx * p_c[:, 0] / depth + camera.intrinsics.cx
        v = camera.intrinsics.fy * p_c[:, 1] / depth + camera.intrinsics.cy
    uv = np.stack([u, v], axis=-1)
    uv[~in_front] = np.nan
    return uv, depth, in_front, clipped


def unproject_pixel(uv, depth, camera: Camera) -> np.ndarray:
    """Exact inverse of ``project``: world point at camera-frame depth ``depth``.

    Broadcasts over leading dimensions of ``uv`` (..., 2) and ``depth`` (...).
    """
    p_c = pixel_to_camera(uv, camera.intrinsics)
    depth = np.asarray(depth, dtype=np.float64)
    return camera_to_world(p_c * depth[..., None], camera.pose)


def ray_point(c_w, p_w_prime, d, s_hat: float = 1.0) -> np.ndarray:
    """Point at Euclidean distance ``s_hat * d`` along the ray c_w -> p_w_prime.

    The direction is normalized, so ``d`` is distance along the ray, not
    camera-frame depth (see module docstring).  Broadcasts over (..., 3)
    inputs with matching (...) depths.
    """
    c_w = np.asarray(c_w, dtype=np.float64)
    p_w_prime = np.asarray(p_w_prime, dtype=np.float64)
    diff = p_w_prime - c_w
    norm = np.linalg.norm(diff, axis=-1)
    if np.any(norm <= 1e-12):
        raise DegenerateRayError("ray endpoint coincides with the camera center")
    e = diff / norm[..., None]
    d = np.asarray(d, dtype=np.float64)
    return c_w + s_hat * d[..., None] * e


def look_at_pose(center, target, up=(0.0, 1.0, 0.0)) -> CameraPose:
    """World->camera pose for a camera at ``center`` looking at ``target``."""
    center = np.asarray(center, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    forward = target - center
    fn = np.linalg.norm(forward)
    if fn <= 1e-12:
        raise DegenerateRayError("camera center coincides with the look-at target")
    z = forward / fn
    x = np.cross(z, up)
    xn = np.linalg.norm(x)
    if xn <= 1e-9:
        raise GimbalDegenerateError("view direction is parallel to the up vector")
    x = x / xn
    y = np.cross(z, x)
    R = np.stack([x, y, z])  # rows are the camera axes in world coordinates
    return CameraPose(R, -R @ center)


def sample_orbit_camera(
    azimuth_deg: float,
    elevation_deg: float,
    radius: float,
    target,
    intrinsics: CameraIntrinsics,
    width: int,
    height: int,
    near: float = 0.1,
    far: float = 100.0,
) -> Camera:
    """Camera on the orbit sphere around ``target``, looking at it, +y up.

    Azimuth 0 / elevation 0 places the center at target + (0, 0, radius);
    azimuth rotates around +y toward +x at +90 degrees.
    """
    if radius <= 0:
        raise ValueError(f"orbit radius must be positive, got {radius}")
    if abs(abs(elevation_deg) - 90.0) < 1e-9:
        raise GimbalDegenerateError("elevation of +/-90 degrees is degenerate (+y up)")
    az = math.radians(azimuth_deg)
    el = math.radians(elevation_deg)
    target = np.asarray(target, dtype=np.float64)
    center = target + radius * np.array(
        [math.sin(az) * math.cos(el), math.sin(el), math.cos(az) * math.cos(el)]
    )
    pose = look_at_pose(center, target)
    return Camera(intrinsics, pose, width, height, near=near, far=far)


def turntable_azimuths(frames: int) -> np.ndarray:
    """Evenly spaced azimuths covering [-180, 180): -180, -180+360/n, ..."""
    if frames < 1:
        raise ValueError("need at least one frame")
    return -180.0 + 360.0 * np.arange(frames) / frames


def pixel_centers(width: int, height: int) -> np.ndarray:
    """(H, W, 2) array of continuous pixel-center coordinates (ix+0.5, iy+0.5)."""
    u = np.arange(width, dtype=np.float64) + 0.5
    v = np.arange(height, dtype=np.float64) + 0.5
    uu, vv = np.meshgrid(u, v)
    return np.stack([uu, vv], axis=-1)


def default_intrinsics(width: int, height: int, fov_y_deg: float = 40.0) -> CameraIntrinsics:
    """Symmetric pinhole intrinsics from a vertical field of view."""
    fy = 0.5 * height / math.tan(math.radians(fov_y_deg) / 2.0)
    return CameraIntrinsics(fx=fy, fy=fy, cx=width / 2.0, cy=height / 2.0)


# Plain-text camera record, shared by the CLI and the guidance protocol.
# Floats are written with repr so the record round-trips float64 exactly.

def camera_to_text(camera: Camera) -> str:
    lines = [
        "camera v1",
        "intrinsics: "
        + " ".join(
            repr(float(x))
            for x in (
                camera.intrinsics.fx,
                camera.intrinsics.fy,
                camera.intrinsics.cx,
                camera.intrinsics.cy,
            )
        ),
        "rotation: " + " ".join(repr(float(x)) for x in camera.pose.rotation.reshape(9)),
        "translation: " + " ".join(repr(float(x)) for x in camera.pose.translation),
        f"size: {camera.width} {camera.height}",
        "clip: " + " ".join(repr(float(x)) for x in (camera.near, camera.far)),
    ]
    return "\n".join(lines) + "\n"


def camera_from_text(text: str) -> Camera:
    fields = {}
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines or lines[0] != "camera v1":
        raise SplatParseError("camera record must start with 'camera v1'")
    for ln in lines[1:]:
        key, _, rest = ln.partition(":")
        fields[key.strip()] = rest.split()
    try:
        fx, fy, cx, cy = (float(x) for x in fields["intrinsics"])
        R = np.array([float(x) for x in fields["rotation"]]).reshape(3, 3)
        t = np.array([float(x) for x in fields["translation"]])
        w, h = (int(x) for x in fields["size"])
        near, far = (float(x) for x in fields["clip"])
    except (KeyError, ValueError) as exc:
        raise SplatParseError(f"malformed camera record: {exc}") from exc
    return Camera(CameraIntrinsics(fx, fy, cx, cy), CameraPose(R, t), w, h, near, far)
