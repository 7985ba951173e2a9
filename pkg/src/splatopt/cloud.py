"""The optimizable Gaussian set: storage, initialization, densify/prune.

Parameterization: per-axis scales are stored as logs and opacities as
logits, so any real-valued optimizer update maps back to a valid cloud.
Colors are plain degree-0 RGB (no view dependence).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import expit, logit

from .errors import EmptyCloudError

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


@dataclass
class GaussianCloud:
    """N anisotropic 3D Gaussians.

    positions (N, 3), log_scales (N, 3), rotations (N, 4) unit wxyz
    quaternions, opacity_logits (N,), colors (N, 3) in [0, 1].
    """

    positions: np.ndarray
    log_scales: np.ndarray
    rotations: np.ndarray
    opacity_logits: np.ndarray
    colors: np.ndarray

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64).reshape(-1, 3)
        n = len(self.positions)
        self.log_scales = np.ascontiguousarray(self.log_scales, dtype=np.float64).reshape(n, 3)
        self.rotations = np.ascontiguousarray(self.rotations, dtype=np.float64).reshape(n, 4)
        self.opacity_logits = np.ascontiguousarray(
            self.opacity_logits, dtype=np.float64
        ).reshape(n)
        self.colors = np.ascontiguousarray(self.colors, dtype=np.float64).reshape(n, 3)

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def count(self) -> int:
        return len(self.positions)

    @property
    def opacities(self) -> np.ndarray:
        return expit(self.opacity_logits)

    @property
    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales)

    def copy(self) -> "GaussianCloud":
        return GaussianCloud(
            self.positions.copy(),
            self.log_scales.copy(),
            self.rotations.copy(),
            self.opacity_logits.copy(),
            self.colors.copy(),
        )

    def normalize_rotations(self) -> None:
        norms = np.linalg.norm(self.rotations, axis=1, keepdims=True)
        np.maximum(norms, 1e-12, out=norms)
        self.rotations /= norms

    def validate(self) -> None:
        """Check the type invariants; raises ValueError on violation."""
        n = self.count
        shapes = {
            "positions": (n, 3),
            "log_scales": (n, 3),
            "rotations": (n, 4),
            "opacity_logits": (n,),
            "colors": (n, 3),
        }
        for name, shape in shapes.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        norms = np.linalg.norm(self.rotations, axis=1)
        if n and np.max(np.abs(norms - 1.0)) > 1e-6:
            raise ValueError("rotations are not unit quaternions within 1e-6")
        if not np.all(np.isfinite(np.exp(self.log_scales))):
            raise ValueError("exp(log_scales) overflows")


@dataclass(frozen=True)
class PointSet:
    """Raw points with optional per-point RGB colors in [0, 1]."""

    points: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if len(pts) < 1:
            raise EmptyCloudError("point set must contain at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        if self.colors is not None:
            cols = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
            if len(cols) != len(pts):
                raise ValueError(f"{len(cols)} colors for {len(pts)} points")
            object.__setattr__(self, "colors", cols)


@dataclass(frozen=True)
class DensifyConfig:
    """Adaptive density control settings (defaults from the training recipe)."""

    interval: int = 100
    start_iter: int = 100
    end_iter: int = 2500
    grad_threshold: float = 0.00075
    prune_opacity: float = 0.003
    split_factor: int = 2
    scale_shrink: float = 1.6

    def __post_init__(self):
        if self.start_iter >= self.end_iter:
            raise ValueError("need start_iter < end_iter")
        if self.grad_threshold <= 0:
            raise ValueError("grad_threshold must be positive")
        if not (0.0 < self.prune_opacity < 1.0):
            raise ValueError("prune_opacity must lie in (0, 1)")
        if self.split_factor < 2:
            raise ValueError("split_factor must be at least 2")


INIT_OPACITY = 0.1
DEFAULT_COLOR = 0.5


def init_from_points(
    points: PointSet, target_count: int, seed: int = 0
) -> GaussianCloud:
    """One isotropic Gaussian per point, resampled to ``target_count``.

    The initial per-Gaussian scale is the mean distance to each point's
    three nearest neighbors in the source set (a single shared value for
    clouds of fewer than four points).
    """
    if target_count < 1:
        raise ValueError("target_count must be at least 1")
    pts = points.points
    m = len(pts)
    rng = np.random.default_rng(seed)
    if m == target_count:
        idx = np.arange(m)
    else:
        idx = rng.integers(0, m, size=target_count)

    # 3-NN mean distance on the source points (before resampling).
    if m >= 4:
        tree = cKDTree(pts)
        dist, _ = tree.query(pts, k=4)  # self plus 3 neighbors
        nn_scale = dist[:, 1:].mean(axis=1)
    else:
        if m == 1:
            nn_scale = np.full(m, 0.01)
        else:
            d = np.linalg.norm(pts[:, None] - pts[None, :], axis=-1)
            np.fill_diagonal(d, np.inf)
            nn_scale = np.full(m, d[np.isfinite(d)].mean())
    nn_scale = np.maximum(nn_scale, 1e-8)

    positions = pts[idx]
    log_scales = np.repeat(np.log(nn_scale[idx])[:, None], 3, axis=1)
    rotations = np.tile(IDENTITY_QUAT, (target_count, 1))
    opacity_logits = np.full(target_count, logit(INIT_OPACITY))
    if points.colors is not None:
        colors = np.clip(points.colors[idx], 0.0, 1.0)
    else:
        colors = np.full((target_count, 3), DEFAULT_COLOR)
    return GaussianCloud(positions, log_scales, rotations, opacity_logits, colors)


@dataclass(frozen=True)
class SplitResult:
    cloud: GaussianCloud
    parent_index: np.ndarray  # output row -> source row (for optimizer state)
    split_mask: np.ndarray  # which source rows were split


def _quat_to_rotmats(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    return np.stack(
        [
            1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
            2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
            2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
        ],
        axis=-1,
    ).reshape(-1, 3, 3)


def densify_split(
    cloud: GaussianCloud,
    grad_norms: np.ndarray,
    config: DensifyConfig,
    iteration: int,
    seed: int = 0,
) -> SplitResult:
    """Split high-gradient Gaussians into ``split_factor`` children.

    No-op outside the [start_iter, end_iter] window or off the interval
    beat.  Children sample their positions from the parent's own density
    and shrink its scale by ``scale_shrink``; all other parameters copy.
    """
    n = cloud.count
    grad_norms = np.asarray(grad_norms, dtype=np.float64).reshape(-1)
    if len(grad_norms) != n:
        raise ValueError(f"got {len(grad_norms)} gradient norms for {n} Gaussians")

    identity = SplitResult(cloud, np.arange(n), np.zeros(n, dtype=bool))
    if not (config.start_iter <= iteration <= config.end_iter):
        return identity
    if iteration % config.interval != 0:
        return identity
    split = grad_norms > config.grad_threshold
    if not split.any():
        return identity

    keep_idx = np.flatnonzero(~split)
    split_idx = np.flatnonzero(split)
    k = config.split_factor
    rng = np.random.default_rng(seed)

    # Sample child positions from each parent's Gaussian density.
    parents = np.repeat(split_idx, k)
    rot = _quat_to_rotmats(cloud.rotations[parents] /
                           np.linalg.norm(cloud.rotations[parents], axis=1, keepdims=True))
    local = rng.standard_normal((len(parents), 3)) * np.exp(cloud.log_scales[parents])
    child_pos = cloud.positions[parents] + np.einsum("nij,nj->ni", rot, local)
    child_log_scales = cloud.log_scales[parents] - np.log(config.scale_shrink)

    new_index = np.concatenate([keep_idx, parents])
    new_cloud = GaussianCloud(
        np.concatenate([cloud.positions[keep_idx], child_pos]),
        np.concatenate([cloud.log_scales[keep_idx], child_log_scales]),
        cloud.rotations[new_index].copy(),
        cloud.opacity_logits[new_index].copy(),
        cloud.colors[new_index].copy(),
    )
    return SplitResult(new_cloud, new_index, split)


@dataclass(frozen=True)
class PruneResult:
    cloud: GaussianCloud
    kept_index: np.ndarray


def prune(cloud: GaussianCloud, config: DensifyConfig) -> PruneResult:
    """Drop Gaussians with opacity below the floor, preserving order."""
    keep = cloud.opacities >= config.prune_opacity
    if keep.all():
        return PruneResult(cloud, np.arange(cloud.count))
    if not keep.any():
        raise EmptyCloudError(
            f"pruning at opacity floor {config.prune_opacity} removed every Gaussian"
        )
    idx = np.flatnonzero(keep)
    return PruneResult(
        GaussianCloud(
            cloud.positions[idx],
            cloud.log_scales[idx],
            cloud.rotations[idx],
            cloud.opacity_logits[idx],
            cloud.colors[idx],
        ),
        idx,
    )


def opacity_to_logit(opacity) -> np.ndarray:
    """Inverse sigmoid, for building clouds from plain opacities."""
    return logit(np.asarray(opacity, dtype=np.float64))
