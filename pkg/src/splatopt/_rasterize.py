"""JIT compositing kernels (numba), with a pure-numpy fallback.

Both backends implement the exact same math; the numpy path is the
reference used in cross-checks, the numba path is what makes desk-scale
optimization runs tractable on CPU.  fastmath stays off so results are
bit-identical run to run.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap

    prange = range


@njit(parallel=True, cache=True)
def composite_forward(
    tile_ids,
    tile_starts,
    tile_ends,
    pair_splat,
    center,
    ainv,
    opacity,
    color,
    rng_dist,
    bg,
    cutoff,
    tile_size,
    width,
    height,
    tiles_x,
    rgb,
    depth,
    alpha,
):
    for ti in prange(len(tile_starts)):
        tid = tile_ids[ti]
        s = tile_starts[ti]
        e = tile_ends[ti]
        tx = tid % tiles_x
        ty = tid // tiles_x
        x0 = tx * tile_size
        x1 = min(x0 + tile_size, width)
        y0 = ty * tile_size
        y1 = min(y0 + tile_size, height)
        for pyi in range(y0, y1):
            py = pyi + 0.5
            for pxi in range(x0, x1):
                px = pxi + 0.5
                t_run = 1.0
                r = 0.0
                g = 0.0
                b = 0.0
                dep = 0.0
                for k in range(s, e):
                    j = pair_splat[k]
                    dx = px - center[j, 0]
                    dy = py - center[j, 1]
                    expo = -0.5 * (
                        ainv[j, 0] * dx * dx
                        + 2.0 * ainv[j, 1] * dx * dy
                        + ainv[j, 2] * dy * dy
                    )
                    a = opacity[j] * math.exp(expo)
                    if a < cutoff:
                        continue
                    w = a * t_run
                    r += w * color[j, 0]
                    g += w * color[j, 1]
                    b += w * color[j, 2]
                    dep += w * rng_dist[j]
                    t_run *= 1.0 - a
                rgb[pyi, pxi, 0] = r + t_run * bg[0]
                rgb[pyi, pxi, 1] = g + t_run * bg[1]
                rgb[pyi, pxi, 2] = b + t_run * bg[2]
                depth[pyi, pxi] = dep
                alpha[pyi, pxi] = 1.0 - t_run


@njit(parallel=True, cache=True)
def composite_backward(
    tile_ids,
    tile_starts,
    tile_ends,
    pair_splat,
    center,
    ainv,
    opacity,
    color,
    rng_dist,
    bg,
    cutoff,
    tile_size,
    width,
    height,
    tiles_x,
    grad_rgb,
    grad_depth,
    has_depth_grad,
    pair_d_center,
    pair_d_ainv,
    pair_d_opacity,
    pair_d_color,
    pair_d_range,
):
    """Per-(splat, tile) pair gradients; pairs are tile-disjoint so the
    parallel tile loop writes without races.  Gradients are accumulated
    per pair and reduced to per-splat sums by the caller."""
    for ti in prange(len(tile_starts)):
        tid = tile_ids[ti]
        s = tile_starts[ti]
        e = tile_ends[ti]
        m = e - s
        tx = tid % tiles_x
        ty = tid // tiles_x
        x0 = tx * tile_size
        x1 = min(x0 + tile_size, width)
        y0 = ty * tile_size
        y1 = min(y0 + tile_size, height)
        a_buf = np.empty(m)
        g_buf = np.empty(m)
        t_buf = np.empty(m)
        dx_buf = np.empty(m)
        dy_buf = np.empty(m)
        for pyi in range(y0, y1):
            py = pyi + 0.5
            for pxi in range(x0, x1):
                px = pxi + 0.5
                gr = grad_rgb[pyi, pxi, 0]
                gg = grad_rgb[pyi, pxi, 1]
                gb = grad_rgb[pyi, pxi, 2]
                gd = grad_depth[pyi, pxi] if has_depth_grad else 0.0
                if gr == 0.0 and gg == 0.0 and gb == 0.0 and gd == 0.0:
                    continue
                t_run = 1.0
                for k in range(m):
                    j = pair_splat[s + k]
                    dx = px - center[j, 0]
                    dy = py - center[j, 1]
                    expo = -0.5 * (
                        ainv[j, 0] * dx * dx
                        + 2.0 * ainv[j, 1] * dx * dy
                        + ainv[j, 2] * dy * dy
                    )
                    gval = math.exp(expo)
                    a = opacity[j] * gval
                    if a < cutoff:
                        a = 0.0
                    a_buf[k] = a
                    g_buf[k] = gval
                    t_buf[k] = t_run
                    dx_buf[k] = dx
                    dy_buf[k] = dy
                    t_run *= 1.0 - a
                t_final = t_run
                bg_term = (gr * bg[0] + gg * bg[1] + gb * bg[2]) * t_final
                suffix = 0.0
                for k in range(m - 1, -1, -1):
                    a = a_buf[k]
                    if a == 0.0:
                        continue
                    j = pair_splat[s + k]
                    t_before = t_buf[k]
                    w = a * t_before
                    payoff = gr * color[j, 0] + gg * color[j, 1] + gb * color[j, 2]
                    if has_depth_grad:
                        payoff += gd * rng_dist[j]
                    d_alpha = payoff * t_before - (suffix + bg_term) / (1.0 - a)
                    suffix += payoff * w
                    kk = s + k
                    pair_d_color[kk, 0] += w * gr
                    pair_d_color[kk, 1] += w * gg
                    pair_d_color[kk, 2] += w * gb
                    if has_depth_grad:
                        pair_d_range[kk] += w * gd
                    pair_d_opacity[kk] += d_alpha * g_buf[k]
                    d_expo = d_alpha * a
                    dx = dx_buf[k]
                    dy = dy_buf[k]
                    pair_d_center[kk, 0] += d_expo * (ainv[j, 0] * dx + ainv[j, 1] * dy)
                    pair_d_center[kk, 1] += d_expo * (ainv[j, 1] * dx + ainv[j, 2] * dy)
                    pair_d_ainv[kk, 0] += d_expo * (-0.5) * dx * dx
                    pair_d_ainv[kk, 1] += d_expo * (-1.0) * dx * dy
                    pair_d_ainv[kk, 2] += d_expo * (-0.5) * dy * dy
