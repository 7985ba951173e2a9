"""Scene-coordinate rendering, projective overlap association, and the
view-consistency loss.

A scene-coordinate map stores, per pixel, the world-space point seen at
that pixel: the rendered expected ray distance is renormalized by alpha
and walked back along the pixel ray (pixel -> camera -> world -> ray).
Pixels whose alpha is at or below ``alpha_min`` are masked invalid.

Association between two views projects each valid source coordinate into
the target camera and keeps it when the landing spot is in-bounds, the
four bilinear taps are valid, and the world-space gap to the bilinearly
sampled target coordinate is at most ``eps_depth``.

The view-consistency loss comes in two variants:

* ``literal``: mean over associated pixels of the per-channel product
  (I - I_hat) * (1 - (S - S_hat)), summed across channels and divided by
  2WH.  Sign-indefinite; kept for fidelity and diagnostics.
* ``stabilized`` (default): mean of |I - I_hat|_1 weighted by
  exp(-|S - S_hat|^2 / tau^2), divided by 2WH.  Nonnegative, zero only
  when overlapping colors agree, and it down-weights pairs whose
  geometry disagrees.

Both variants return analytic gradients with respect to the two images;
geometry is treated as constant (the association and its weights do not
backpropagate).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import (
    Camera,
    camera_center_world,
    camera_to_world,
    pixel_centers,
    pixel_to_camera,
    project_points,
)
from .renderer import RenderedView

DEFAULT_ALPHA_MIN = 0.5


@dataclass
class SceneCoordinateMap:
    coords: np.ndarray  # (H, W, 3) world coordinates, zero where invalid
    valid: np.ndarray  # (H, W) bool
    camera: Camera


@dataclass
class OverlapAssociation:
    mask: np.ndarray  # (H, W) source pixels associated into the target
    target_pixels: np.ndarray  # (H, W, 2) continuous target pixel coords
    depth_gap: np.ndarray  # (H, W) world-space gap, 0 where unassociated


def render_scene_coordinates(
    view: RenderedView, alpha_min: float = DEFAULT_ALPHA_MIN
) -> SceneCoordinateMap:
    """Per-pixel world coordinates from a rendered depth/alpha pair."""
    cam = view.camera
    valid = view.alpha > alpha_min
    coords = np.zeros((cam.height, cam.width, 3))
    if valid.any():
        # Renormalized expected ray distance for the visible surface.
        dist = np.zeros_like(view.depth)
        dist[valid] = view.depth[valid] / view.alpha[valid]
        uv = pixel_centers(cam.width, cam.height)
        p_c = pixel_to_camera(uv, cam.intrinsics)
        p_w_prime = camera_to_world(p_c, cam.pose)
        c_w = camera_center_world(cam.pose)
        ray = p_w_prime - c_w
        ray /= np.linalg.norm(ray, axis=-1, keepdims=True)
        coords[valid] = c_w + dist[valid, None] * ray[valid]
    return SceneCoordinateMap(coords=coords, valid=valid, camera=cam)


def _bilinear_setup(uv: np.ndarray, width: int, height: int):
    """Corner indices and weights for pixel-center bilinear sampling."""
    x = uv[..., 0] - 0.5
    y = uv[..., 1] - 0.5
    x0 = np.clip(np.floor(x).astype(np.int64), 0, width - 1)
    y0 = np.clip(np.floor(y).astype(np.int64), 0, height - 1)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    fx = np.clip(x - x0, 0.0, 1.0)
    fy = np.clip(y - y0, 0.0, 1.0)
    corners = ((y0, x0), (y0, x1), (y1, x0), (y1, x1))
    weights = ((1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy)
    return corners, weights


def _bilinear_gather(img: np.ndarray, corners, weights) -> np.ndarray:
    out = None
    for (iy, ix), w in zip(corners, weights):
        term = img[iy, ix] * (w[..., None] if img.ndim == 3 else w)
        out = term if out is None else out + term
    return out


def associate_overlap(
    source: SceneCoordinateMap,
    target: SceneCoordinateMap,
    eps_depth: float,
) -> OverlapAssociation:
    """Projective data association of source pixels into the target view."""
    h, w = source.valid.shape
    cam = target.camera
    mask = np.zeros((h, w), dtype=bool)
    target_pixels = np.zeros((h, w, 2))
    depth_gap = np.zeros((h, w))

    src_idx = np.flatnonzero(source.valid.ravel())
    if src_idx.size == 0:
        return OverlapAssociation(mask, target_pixels, depth_gap)

    pts = source.coords.reshape(-1, 3)[src_idx]
    uv, _, in_front, _ = project_points(pts, cam)
    # Require full bilinear support inside the image.
    inb = (
        in_front
        & (uv[:, 0] >= 0.5) & (uv[:, 0] <= cam.width - 0.5)
        & (uv[:, 1] >= 0.5) & (uv[:, 1] <= cam.height - 0.5)
    )
    if not inb.any():
        return OverlapAssociation(mask, target_pixels, depth_gap)

    src_idx = src_idx[inb]
    pts = pts[inb]
    uv = uv[inb]
    corners, weights = _bilinear_setup(uv, cam.width, cam.height)
    taps_valid = np.ones(len(uv), dtype=bool)
    for iy, ix in corners:
        taps_valid &= target.valid[iy, ix]
    gap = np.full(len(uv), np.inf)
    if taps_valid.any():
        sampled = _bilinear_gather(target.coords, corners, weights)
        gap = np.where(
            taps_valid, np.linalg.norm(pts - sampled, axis=-1), np.inf
        )
    ok = gap <= eps_depth

    flat_mask = mask.ravel()
    flat_mask[src_idx[ok]] = True
    target_pixels.reshape(-1, 2)[src_idx[ok]] = uv[ok]
    depth_gap.ravel()[src_idx[ok]] = gap[ok]
    return OverlapAssociation(mask, target_pixels, depth_gap)


def scene_radius(*maps: SceneCoordinateMap) -> float:
    """Largest valid coordinate norm across the given maps (>= 1e-6)."""
    best = 0.0
    for m in maps:
        if m.valid.any():
            best = max(best, float(np.linalg.norm(m.coords[m.valid], axis=-1).max()))
    return max(best, 1e-6)


def view_consistency_loss(
    image: np.ndarray,
    image_hat: np.ndarray,
    coords: SceneCoordinateMap,
    coords_hat: SceneCoordinateMap,
    variant: str = "stabilized",
    eps_depth: float | None = None,
    tau: float | None = None,
):
    """Consistency penalty between two views over associated pixels.

    Returns (loss, grad_image, grad_image_hat).  ``eps_depth`` defaults
    to 2% of the scene radius; ``tau`` defaults to ``eps_depth``.
    """
    if variant not in ("literal", "stabilized"):
        raise ValueError(f"unknown variant {variant!r}")
    image = np.asarray(image, dtype=np.float64)
    image_hat = np.asarray(image_hat, dtype=np.float64)
    h, w = coords.valid.shape
    if image.shape != (h, w, 3) or image_hat.shape != coords_hat.valid.shape + (3,):
        raise ValueError(
            f"image shapes {image.shape}/{image_hat.shape} do not match the "
            f"coordinate maps {(h, w)}/{coords_hat.valid.shape}"
        )
    if eps_depth is None:
        eps_depth = 0.02 * scene_radius(coords, coords_hat)
    if tau is None:
        tau = eps_depth

    grad_i = np.zeros_like(image)
    grad_i_hat = np.zeros_like(image_hat)
    assoc = associate_overlap(coords, coords_hat, eps_depth)
    idx = np.flatnonzero(assoc.mask.ravel())
    if idx.size == 0:
        return 0.0, grad_i, grad_i_hat

    uv = assoc.target_pixels.reshape(-1, 2)[idx]
    th, tw = coords_hat.valid.shape
    corners, weights = _bilinear_setup(uv, tw, th)
    i_src = image.reshape(-1, 3)[idx]
    i_tgt = _bilinear_gather(image_hat, corners, weights)
    s_src = coords.coords.reshape(-1, 3)[idx]
    s_tgt = _bilinear_gather(coords_hat.coords, corners, weights)

    norm = 1.0 / (2.0 * w * h)
    s_tilde = s_src - s_tgt
    diff = i_src - i_tgt
    if variant == "literal":
        loss = float((diff * (1.0 - s_tilde)).sum()) * norm
        g_src = (1.0 - s_tilde) * norm
    else:
        weight = np.exp(-(s_tilde * s_tilde).sum(axis=-1) / (tau * tau))
        loss = float((np.abs(diff).sum(axis=-1) * weight).sum()) * norm
        # Subgradient 0 at the |.| cusp: float residue on matching colors
        # must not produce unit-sign gradients.
        sign = np.where(np.abs(diff) <= 1e-12, 0.0, np.sign(diff))
        g_src = sign * weight[:, None] * norm

    grad_i.reshape(-1, 3)[idx] = g_src
    flat_hat = grad_i_hat.reshape(-1, 3)
    for (iy, ix), wgt in zip(corners, weights):
        np.add.at(flat_hat, iy * tw + ix, -g_src * wgt[:, None])
    return loss, grad_i, grad_i_hat


def mean_pairwise_consistency(
    views: list,
    coord_maps: list,
    eps_depth: float | None = None,
    tau: float | None = None,
) -> float:
    """Mean stabilized loss over consecutive view pairs (metric form)."""
    if len(views) < 2:
        return 0.0
    losses = []
    for a, b in zip(range(len(views) - 1), range(1, len(views))):
        loss, _, _ = view_consistency_loss(
            views[a].rgb, views[b].rgb, coord_maps[a], coord_maps[b],
            variant="stabilized", eps_depth=eps_depth, tau=tau,
        )
        losses.append(loss)
    return float(np.mean(losses))
