"""Tile-based differentiable rasterizer for 3D Gaussians.

Forward pass: each Gaussian's 3D covariance R diag(s)^2 R^T is pushed
through the camera by the local affine (EWA) approximation, giving a 2D
covariance J V J^T (+ a fixed 0.3 px^2 diagonal dilation as low-pass /
singularity guard).  Splats are depth-sorted once per frame (stable,
index tie-break) and alpha-composited front to back per tile:

    pixel = sum_k c_k a_k T_k + T_final * background,
    T_k = prod_{j<k} (1 - a_j),  a_k = sigmoid(logit_k) * exp(-0.5 d^T S^-1 d).

The depth channel stores alpha-weighted expected *ray distance* (camera
center to splat center), without renormalization by alpha; the scene
coordinate renderer divides by alpha and walks that distance back along
each pixel ray.  Sorting uses camera-frame z.

Backward pass: exact analytic gradients of the forward compositing for
all five parameter groups.  Contributions below ``alpha_cutoff`` are
skipped in both passes (a deliberate, documented discontinuity; set the
cutoff to 0 for a C^1 forward map, e.g. in finite-difference checks).

Two compositing backends share this module: JIT kernels (numba) and a
pure-numpy reference.  They compute the same expressions in the same
order; ``backend="numpy"`` forces the reference path.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import _rasterize
from .camera import Camera
from .cloud import GaussianCloud
from .errors import SplatoptError

COVARIANCE_DILATION = 0.3  # px^2 added to the 2D covariance diagonal


class TileOverflowError(SplatoptError):
    """A tile exceeded max_splats_per_tile."""


@dataclass(frozen=True)
class RenderConfig:
    tile_size: int = 16
    background: tuple = (0.0, 0.0, 0.0)
    alpha_cutoff: float = 1.0 / 255.0
    max_splats_per_tile: int = 200_000

    def __post_init__(self):
        if self.tile_size < 1:
            raise ValueError("tile_size must be at least 1")
        bg = tuple(float(c) for c in self.background)
        if len(bg) != 3 or any(c < 0.0 or c > 1.0 for c in bg):
            raise ValueError("background must be an RGB triple in [0, 1]")
        object.__setattr__(self, "background", bg)


@dataclass
class RenderedView:
    rgb: np.ndarray  # (H, W, 3) in [0, 1]
    depth: np.ndarray  # (H, W) alpha-weighted expected ray distance
    alpha: np.ndarray  # (H, W) in [0, 1]
    camera: Camera


@dataclass
class ParameterGradients:
    d_positions: np.ndarray
    d_log_scales: np.ndarray
    d_rotations: np.ndarray
    d_opacity_logits: np.ndarray
    d_colors: np.ndarray

    @staticmethod
    def zeros(n: int) -> "ParameterGradients":
        return ParameterGradients(
            np.zeros((n, 3)), np.zeros((n, 3)), np.zeros((n, 4)), np.zeros(n), np.zeros((n, 3))
        )


def _quat_rotmats(q: np.ndarray) -> np.ndarray:
    """Rotation matrices for (N, 4) unit quaternions in wxyz order."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    return np.stack(
        [
            1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
            2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
            2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
        ],
        axis=-1,
    ).reshape(-1, 3, 3)


@dataclass
class _Projected:
    """Per-frame projection state shared by the forward and backward pass.

    All splat arrays are indexed in the front-to-back composite order.
    """

    order: np.ndarray  # composite order -> original cloud index
    center: np.ndarray  # (M, 2) projected means, pixel units
    rng_dist: np.ndarray  # (M,) Euclidean center distance (depth channel)
    ainv: np.ndarray  # (M, 3) inverse 2D covariance entries (a00, a01, a11)
    opacity: np.ndarray  # (M,)
    color: np.ndarray  # (M, 3)
    radius: np.ndarray  # (M,) conservative pixel footprint radius
    # Intermediates for the backward chain:
    qn: np.ndarray  # (M, 4) normalized quaternions
    qnorm: np.ndarray  # (M,) raw quaternion norms
    rotmat: np.ndarray  # (M, 3, 3)
    mu_c: np.ndarray  # (M, 3) camera-frame means
    cam_cov: np.ndarray  # (M, 3, 3) camera-frame 3D covariance
    jac: np.ndarray  # (M, 2, 3) projection Jacobian
    # Tile binning:
    tile_ids: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    tile_starts: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    tile_ends: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    tile_splats: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))


def _project_splats(cloud: GaussianCloud, camera: Camera, config: RenderConfig) -> _Projected | None:
    n = cloud.count
    if n == 0:
        return None
    K = camera.intrinsics
    R = camera.pose.rotation
    t = camera.pose.translation

    mu_c_all = cloud.positions @ R.T + t
    keep = np.flatnonzero(mu_c_all[:, 2] >= camera.near)
    if keep.size == 0:
        return None

    # Stable front-to-back order with index tie-break.
    z_kept = mu_c_all[keep, 2]
    keep = keep[np.argsort(z_kept, kind="stable")]
    mu_c = mu_c_all[keep]
    z = mu_c[:, 2]

    qraw = cloud.rotations[keep]
    qnorm = np.linalg.norm(qraw, axis=1)
    qn = qraw / np.maximum(qnorm, 1e-12)[:, None]
    rot = _quat_rotmats(qn)
    scale2 = np.exp(2.0 * cloud.log_scales[keep])
    # World 3D covariance R diag(s^2) R^T, then camera frame V = W Sigma W^T.
    sigma_world = np.einsum("nij,nj,nkj->nik", rot, scale2, rot)
    cam_cov = np.einsum("ij,njk,lk->nil", R, sigma_world, R)

    x, y = mu_c[:, 0], mu_c[:, 1]
    inv_z = 1.0 / z
    u = K.fx * x * inv_z + K.cx
    v = K.fy * y * inv_z + K.cy
    jac = np.zeros((len(keep), 2, 3))
    jac[:, 0, 0] = K.fx * inv_z
    jac[:, 0, 2] = -K.fx * x * inv_z * inv_z
    jac[:, 1, 1] = K.fy * inv_z
    jac[:, 1, 2] = -K.fy * y * inv_z * inv_z
    cov2d = np.einsum("nij,njk,nlk->nil", jac, cam_cov, jac)
    cov2d[:, 0, 0] += COVARIANCE_DILATION
    cov2d[:, 1, 1] += COVARIANCE_DILATION

    a, b, d = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    det = a * d - b * b
    ainv = np.stack([d / det, -b / det, a / det], axis=-1)

    opacity = expit(cloud.opacity_logits[keep])
    # Conservative circular footprint: alpha falls below the cutoff outside
    # radius sqrt(2 ln(opacity/cutoff) * lambda_max).
    lam_max = 0.5 * (a + d + np.sqrt((a - d) ** 2 + 4.0 * b * b))
    if config.alpha_cutoff > 0.0:
        log_ratio = np.log(np.maximum(opacity / config.alpha_cutoff, 1e-300))
        radius = np.sqrt(2.0 * np.maximum(log_ratio, 0.0) * lam_max)
        visible = opacity > config.alpha_cutoff
        if not visible.all():
            sel = np.flatnonzero(visible)
            keep, mu_c = keep[sel], mu_c[sel]
            qn, qnorm, rot = qn[sel], qnorm[sel], rot[sel]
            cam_cov = cam_cov[sel]
            u, v, jac, ainv = u[sel], v[sel], jac[sel], ainv[sel]
            opacity, radius = opacity[sel], radius[sel]
            if keep.size == 0:
                return None
    else:
        radius = np.full(len(keep), float(np.hypot(camera.width, camera.height)))

    return _Projected(
        order=keep,
        center=np.ascontiguousarray(np.stack([u, v], axis=-1)),
        rng_dist=np.ascontiguousarray(np.linalg.norm(mu_c, axis=1)),
        ainv=np.ascontiguousarray(ainv),
        opacity=np.ascontiguousarray(opacity),
        color=np.ascontiguousarray(cloud.colors[keep]),
        radius=radius,
        qn=qn,
        qnorm=qnorm,
        rotmat=rot,
        mu_c=mu_c,
        cam_cov=cam_cov,
        jac=jac,
    )


def _bin_tiles(proj: _Projected, camera: Camera, config: RenderConfig) -> None:
    """Assign splats to tiles, preserving the global depth order per tile."""
    ts = config.tile_size
    tiles_x = (camera.width + ts - 1) // ts
    tiles_y = (camera.height + ts - 1) // ts

    u, v = proj.center[:, 0], proj.center[:, 1]
    r = proj.radius
    tx0 = np.clip(np.floor((u - r) / ts).astype(np.int64), 0, tiles_x - 1)
    tx1 = np.clip(np.floor((u + r) / ts).astype(np.int64), 0, tiles_x - 1)
    ty0 = np.clip(np.floor((v - r) / ts).astype(np.int64), 0, tiles_y - 1)
    ty1 = np.clip(np.floor((v + r) / ts).astype(np.int64), 0, tiles_y - 1)
    off_image = (u + r < 0) | (u - r > camera.width) | (v + r < 0) | (v - r > camera.height)

    nx = tx1 - tx0 + 1
    ny = ty1 - ty0 + 1
    counts = np.where(off_image, 0, nx * ny)
    total = int(counts.sum())
    if total == 0:
        return

    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    within = np.arange(total) - np.repeat(starts, counts)
    nx_rep = np.repeat(nx, counts)
    dx = within % nx_rep
    dy = within // nx_rep
    pair_tile = (np.repeat(ty0, counts) + dy) * tiles_x + (np.repeat(tx0, counts) + dx)
    pair_splat = np.repeat(np.arange(len(u), dtype=np.int64), counts)

    # Stable sort by tile keeps the global depth order within each tile.
    perm = np.argsort(pair_tile, kind="stable")
    pair_tile = pair_tile[perm]
    proj.tile_splats = np.ascontiguousarray(pair_splat[perm])

    boundaries = np.flatnonzero(np.diff(pair_tile)) + 1
    proj.tile_starts = np.concatenate([[0], boundaries]).astype(np.int64)
    proj.tile_ends = np.concatenate([boundaries, [len(pair_tile)]]).astype(np.int64)
    proj.tile_ids = pair_tile[proj.tile_starts]
    tile_len = proj.tile_ends - proj.tile_starts
    if np.any(tile_len > config.max_splats_per_tile):
        worst = int(np.argmax(tile_len))
        raise TileOverflowError(
            f"tile {proj.tile_ids[worst]} holds {tile_len[worst]} splats "
            f"(max_splats_per_tile={config.max_splats_per_tile})"
        )


def _resolve_backend(backend: str) -> str:
    if backend == "auto":
        return "numba" if _rasterize.HAVE_NUMBA else "numpy"
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not _rasterize.HAVE_NUMBA:
        raise SplatoptError("numba backend requested but numba is unavailable")
    return backend


def render(
    cloud: GaussianCloud,
    camera: Camera,
    config: RenderConfig = RenderConfig(),
    backend: str = "auto",
) -> RenderedView:
    """Rasterize the cloud into RGB, expected-ray-distance depth, and alpha."""
    h, w = camera.height, camera.width
    bg = np.asarray(config.background)
    rgb = np.broadcast_to(bg, (h, w, 3)).copy()
    depth = np.zeros((h, w))
    alpha_img = np.zeros((h, w))

    proj = _project_splats(cloud, camera, config)
    if proj is not None:
        _bin_tiles(proj, camera, config)
    if proj is not None and len(proj.tile_ids):
        tiles_x = (w + config.tile_size - 1) // config.tile_size
        if _resolve_backend(backend) == "numba":
            _rasterize.composite_forward(
                proj.tile_ids, proj.tile_starts, proj.tile_ends, proj.tile_splats,
                proj.center, proj.ainv, proj.opacity, proj.color, proj.rng_dist,
                bg, config.alpha_cutoff, config.tile_size, w, h, tiles_x,
                rgb, depth, alpha_img,
            )
        else:
            _forward_numpy(proj, camera, config, bg, rgb, depth, alpha_img)
    return RenderedView(rgb=rgb, depth=depth, alpha=alpha_img, camera=camera)


def _tile_pixels(tile_id: int, camera: Camera, ts: int):
    tiles_x = (camera.width + ts - 1) // ts
    tx, ty = tile_id % tiles_x, tile_id // tiles_x
    x0, x1 = tx * ts, min((tx + 1) * ts, camera.width)
    y0, y1 = ty * ts, min((ty + 1) * ts, camera.height)
    xs = np.arange(x0, x1, dtype=np.float64) + 0.5
    ys = np.arange(y0, y1, dtype=np.float64) + 0.5
    px = np.repeat(xs[None, :], y1 - y0, axis=0).ravel()
    py = np.repeat(ys[:, None], x1 - x0, axis=1).ravel()
    return (slice(y0, y1), slice(x0, x1)), px, py


def _tile_alpha(proj: _Projected, sel, px, py, cutoff):
    """(M, P) per-splat alpha on the tile, with the cutoff applied."""
    cen = proj.center[sel]
    ai = proj.ainv[sel]
    dx = px[None, :] - cen[:, 0:1]
    dy = py[None, :] - cen[:, 1:2]
    expo = -0.5 * (ai[:, 0:1] * dx * dx + 2.0 * ai[:, 1:2] * dx * dy + ai[:, 2:3] * dy * dy)
    g = np.exp(expo)
    alpha = proj.opacity[sel, None] * g
    if cutoff > 0.0:
        np.copyto(alpha, 0.0, where=alpha < cutoff)
    return alpha, g, dx, dy


def _forward_numpy(proj, camera, config, bg, rgb, depth, alpha_img):
    for tile_id, s, e in zip(proj.tile_ids, proj.tile_starts, proj.tile_ends):
        sel = proj.tile_splats[s:e]
        (ys, xs), px, py = _tile_pixels(int(tile_id), camera, config.tile_size)
        alpha, _, _, _ = _tile_alpha(proj, sel, px, py, config.alpha_cutoff)
        t_cum = np.cumprod(1.0 - alpha, axis=0)
        t_before = np.vstack([np.ones((1, alpha.shape[1])), t_cum[:-1]])
        weight = alpha * t_before
        t_final = t_cum[-1]
        shape = (ys.stop - ys.start, xs.stop - xs.start)
        rgb[ys, xs] = (weight.T @ proj.color[sel] + t_final[:, None] * bg).reshape(shape + (3,))
        depth[ys, xs] = (proj.rng_dist[sel] @ weight).reshape(shape)
        alpha_img[ys, xs] = (1.0 - t_final).reshape(shape)


def render_backward(
    cloud: GaussianCloud,
    camera: Camera,
    config: RenderConfig,
    grad_rgb: np.ndarray,
    grad_depth: np.ndarray | None = None,
    backend: str = "auto",
) -> ParameterGradients:
    """Exact gradients of the forward compositing for every parameter group."""
    h, w = camera.height, camera.width
    grad_rgb = np.ascontiguousarray(grad_rgb, dtype=np.float64)
    if grad_rgb.shape != (h, w, 3):
        raise ValueError(f"grad_rgb has shape {grad_rgb.shape}, expected {(h, w, 3)}")
    if grad_depth is not None:
        grad_depth = np.ascontiguousarray(grad_depth, dtype=np.float64)
        if grad_depth.shape != (h, w):
            raise ValueError(f"grad_depth has shape {grad_depth.shape}, expected {(h, w)}")

    grads = ParameterGradients.zeros(cloud.count)
    proj = _project_splats(cloud, camera, config)
    if proj is None:
        return grads
    _bin_tiles(proj, camera, config)
    if not len(proj.tile_ids):
        return grads

    m = len(proj.order)
    n_pairs = len(proj.tile_splats)
    bg = np.asarray(config.background)
    pair_d_center = np.zeros((n_pairs, 2))
    pair_d_ainv = np.zeros((n_pairs, 3))
    pair_d_opacity = np.zeros(n_pairs)
    pair_d_color = np.zeros((n_pairs, 3))
    pair_d_range = np.zeros(n_pairs)

    tiles_x = (w + config.tile_size - 1) // config.tile_size
    if _resolve_backend(backend) == "numba":
        gd = grad_depth if grad_depth is not None else np.zeros((h, w))
        _rasterize.composite_backward(
            proj.tile_ids, proj.tile_starts, proj.tile_ends, proj.tile_splats,
            proj.center, proj.ainv, proj.opacity, proj.color, proj.rng_dist,
            bg, config.alpha_cutoff, config.tile_size, w, h, tiles_x,
            grad_rgb, gd, grad_depth is not None,
            pair_d_center, pair_d_ainv, pair_d_opacity, pair_d_color, pair_d_range,
        )
    else:
        _backward_numpy(
            proj, camera, config, bg, grad_rgb, grad_depth,
            pair_d_center, pair_d_ainv, pair_d_opacity, pair_d_color, pair_d_range,
        )

    ps = proj.tile_splats
    d_center = np.stack(
        [np.bincount(ps, weights=pair_d_center[:, i], minlength=m) for i in range(2)], axis=-1
    )
    d_ainv = np.stack(
        [np.bincount(ps, weights=pair_d_ainv[:, i], minlength=m) for i in range(3)], axis=-1
    )
    d_opacity = np.bincount(ps, weights=pair_d_opacity, minlength=m)
    d_color = np.stack(
        [np.bincount(ps, weights=pair_d_color[:, i], minlength=m) for i in range(3)], axis=-1
    )
    d_range = np.bincount(ps, weights=pair_d_range, minlength=m)

    _chain_to_parameters(
        cloud, camera, proj, grads, d_center, d_ainv, d_opacity, d_color, d_range
    )
    return grads


def _backward_numpy(
    proj, camera, config, bg, grad_rgb, grad_depth,
    pair_d_center, pair_d_ainv, pair_d_opacity, pair_d_color, pair_d_range,
):
    for tile_id, s, e in zip(proj.tile_ids, proj.tile_starts, proj.tile_ends):
        sel = proj.tile_splats[s:e]
        (ys, xs), px, py = _tile_pixels(int(tile_id), camera, config.tile_size)
        g_rgb = grad_rgb[ys, xs].reshape(-1, 3)
        g_dep = None if grad_depth is None else grad_depth[ys, xs].reshape(-1)
        if not np.any(g_rgb) and (g_dep is None or not np.any(g_dep)):
            continue

        alpha, g, dx, dy = _tile_alpha(proj, sel, px, py, config.alpha_cutoff)
        active = alpha > 0.0
        one_m = 1.0 - alpha
        t_cum = np.cumprod(one_m, axis=0)
        t_before = np.vstack([np.ones((1, alpha.shape[1])), t_cum[:-1]])
        weight = alpha * t_before
        t_final = t_cum[-1]

        b = proj.color[sel] @ g_rgb.T
        if g_dep is not None:
            b = b + proj.rng_dist[sel][:, None] * g_dep[None, :]
        c_mat = b * weight
        suffix = c_mat.sum(axis=0)[None, :] - np.cumsum(c_mat, axis=0)
        bg_term = (g_rgb @ bg) * t_final
        d_alpha = np.where(active, b * t_before - (suffix + bg_term[None, :]) / one_m, 0.0)

        sl = slice(s, e)
        pair_d_color[sl] += weight @ g_rgb
        if g_dep is not None:
            pair_d_range[sl] += weight @ g_dep
        pair_d_opacity[sl] += (d_alpha * g).sum(axis=1)
        d_expo = d_alpha * alpha
        ai = proj.ainv[sel]
        pair_d_center[sl, 0] += (d_expo * (ai[:, 0:1] * dx + ai[:, 1:2] * dy)).sum(axis=1)
        pair_d_center[sl, 1] += (d_expo * (ai[:, 1:2] * dx + ai[:, 2:3] * dy)).sum(axis=1)
        pair_d_ainv[sl, 0] += (d_expo * (-0.5) * dx * dx).sum(axis=1)
        pair_d_ainv[sl, 1] += (d_expo * (-1.0) * dx * dy).sum(axis=1)
        pair_d_ainv[sl, 2] += (d_expo * (-0.5) * dy * dy).sum(axis=1)


def _chain_to_parameters(cloud, camera, proj, grads, d_center, d_ainv, d_opacity, d_color, d_range):
    """Chain per-splat screen-space gradients back to cloud parameters."""
    m = len(proj.order)
    K = camera.intrinsics
    R = camera.pose.rotation

    # d/dSigma2D from d/dAinv:  dA = -A dSigma A  (full-matrix form).
    a_full = np.empty((m, 2, 2))
    a_full[:, 0, 0] = proj.ainv[:, 0]
    a_full[:, 0, 1] = a_full[:, 1, 0] = proj.ainv[:, 1]
    a_full[:, 1, 1] = proj.ainv[:, 2]
    abar = np.empty((m, 2, 2))
    abar[:, 0, 0] = d_ainv[:, 0]
    abar[:, 0, 1] = abar[:, 1, 0] = 0.5 * d_ainv[:, 1]
    abar[:, 1, 1] = d_ainv[:, 2]
    s_bar = -np.einsum("nij,njk,nkl->nil", a_full, abar, a_full)

    # Sigma2D = J V J^T + dilation: split into V and J contributions.
    v_bar = np.einsum("nji,njk,nkl->nil", proj.jac, s_bar, proj.jac)
    j_bar = 2.0 * np.einsum("nij,njk,nkl->nil", s_bar, proj.jac, proj.cam_cov)

    # World covariance gradient: V = W Sigma_w W^T.
    sigw_bar = np.einsum("ji,njk,kl->nil", R, v_bar, R)

    # Camera-frame mean gradient: center, Jacobian entries, and range term.
    x, y, z = proj.mu_c[:, 0], proj.mu_c[:, 1], proj.mu_c[:, 2]
    inv_z = 1.0 / z
    inv_z2 = inv_z * inv_z
    mu_bar = np.zeros((m, 3))
    mu_bar[:, 0] = d_center[:, 0] * K.fx * inv_z + j_bar[:, 0, 2] * (-K.fx * inv_z2)
    mu_bar[:, 1] = d_center[:, 1] * K.fy * inv_z + j_bar[:, 1, 2] * (-K.fy * inv_z2)
    mu_bar[:, 2] = (
        d_center[:, 0] * (-K.fx * x * inv_z2)
        + d_center[:, 1] * (-K.fy * y * inv_z2)
        + j_bar[:, 0, 0] * (-K.fx * inv_z2)
        + j_bar[:, 1, 1] * (-K.fy * inv_z2)
        + j_bar[:, 0, 2] * (2.0 * K.fx * x * inv_z2 * inv_z)
        + j_bar[:, 1, 2] * (2.0 * K.fy * y * inv_z2 * inv_z)
    )
    nonzero = proj.rng_dist > 0
    mu_bar[nonzero] += d_range[nonzero, None] * proj.mu_c[nonzero] / proj.rng_dist[nonzero, None]

    # Sigma_w = Rq D Rq^T with D = diag(exp(2 ls)).
    scale2 = np.exp(2.0 * cloud.log_scales[proj.order])
    rq_bar = 2.0 * np.einsum("nij,njk,nk->nik", sigw_bar, proj.rotmat, scale2)
    d_diag = np.einsum("nji,njk,nki->ni", proj.rotmat, sigw_bar, proj.rotmat)

    d_qn = _rotmat_grad_to_quat(proj.qn, rq_bar)
    dot = np.einsum("ni,ni->n", d_qn, proj.qn)

    grads.d_positions[proj.order] = mu_bar @ R
    grads.d_log_scales[proj.order] = d_diag * 2.0 * scale2
    grads.d_rotations[proj.order] = (d_qn - dot[:, None] * proj.qn) / proj.qnorm[:, None]
    grads.d_opacity_logits[proj.order] = d_opacity * proj.opacity * (1.0 - proj.opacity)
    grads.d_colors[proj.order] = d_color


def _rotmat_grad_to_quat(qn: np.ndarray, r_bar: np.ndarray) -> np.ndarray:
    """Chain (N, 3, 3) rotation-matrix gradients to (N, 4) unit-quaternion grads."""
    w, x, y, z = qn[:, 0], qn[:, 1], qn[:, 2], qn[:, 3]
    g = r_bar
    d_w = 2.0 * (
        -z * g[:, 0, 1] + y * g[:, 0, 2]
        + z * g[:, 1, 0] - x * g[:, 1, 2]
        - y * g[:, 2, 0] + x * g[:, 2, 1]
    )
    d_x = 2.0 * (
        y * g[:, 0, 1] + z * g[:, 0, 2]
        + y * g[:, 1, 0] - 2.0 * x * g[:, 1, 1] - w * g[:, 1, 2]
        + z * g[:, 2, 0] + w * g[:, 2, 1] - 2.0 * x * g[:, 2, 2]
    )
    d_y = 2.0 * (
        -2.0 * y * g[:, 0, 0] + x * g[:, 0, 1] + w * g[:, 0, 2]
        + x * g[:, 1, 0] + z * g[:, 1, 2]
        - w * g[:, 2, 0] + z * g[:, 2, 1] - 2.0 * y * g[:, 2, 2]
    )
    d_z = 2.0 * (
        -2.0 * z * g[:, 0, 0] - w * g[:, 0, 1] + x * g[:, 0, 2]
        + w * g[:, 1, 0] - 2.0 * z * g[:, 1, 1] + y * g[:, 1, 2]
        + x * g[:, 2, 0] + y * g[:, 2, 1]
    )
    return np.stack([d_w, d_x, d_y, d_z], axis=-1)


def render_batch(
    cloud: GaussianCloud,
    cameras: list,
    config: RenderConfig = RenderConfig(),
    backend: str = "auto",
    max_workers: int = 4,
) -> list:
    """Render several views; output order always matches camera order.

    The JIT kernels already parallelize over tiles (and some numba
    threading layers reject concurrent entry), so views run sequentially
    on that backend; the numpy backend fans out across a thread pool.
    """
    if len(cameras) <= 1 or _resolve_backend(backend) == "numba":
        return [
            _render_view_indexed(cloud, cam, config, backend, i)
            for i, cam in enumerate(cameras)
        ]
    with ThreadPoolExecutor(max_workers=min(max_workers, len(cameras))) as pool:
        futures = [
            pool.submit(_render_view_indexed, cloud, cam, config, backend, i)
            for i, cam in enumerate(cameras)
        ]
        return [f.result() for f in futures]


def _render_view_indexed(cloud, camera, config, backend, index):
    try:
        return render(cloud, camera, config, backend=backend)
    except Exception as exc:
        raise SplatoptError(f"render failed for view {index}: {exc}") from exc
