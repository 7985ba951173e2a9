"""The differentiable renderer as an optimizer: fit a cloud to one target.

Renders a reference image from a hidden cloud, then drives a second
cloud toward it with plain gradient descent through the analytic
backward pass -- no diffusion machinery, just the rasterizer.

Run:  python3 demos/02_gradient_descent_on_an_image.py
"""

from pathlib import Path

import numpy as np

from splatopt.camera import default_intrinsics, sample_orbit_camera
from splatopt.cloud import GaussianCloud, opacity_to_logit
from splatopt.io import save_png
from splatopt.optim import AdamOptimizer
from splatopt.renderer import RenderConfig, render, render_backward

out_dir = Path(__file__).parent / "out" / "descent"
out_dir.mkdir(parents=True, exist_ok=True)

rng = np.random.default_rng(0)
camera = sample_orbit_camera(0.0, 10.0, 4.0, (0, 0, 0), default_intrinsics(96, 96), 96, 96)
config = RenderConfig()


def ring_cloud(n, color):
    angles = np.linspace(0, 2 * np.pi, n, endpoint=False)
    pos = np.stack([np.cos(angles), np.sin(angles), np.zeros(n)], axis=-1) * 0.7
    return GaussianCloud(
        pos,
        np.full((n, 3), np.log(0.12)),
        np.tile([1.0, 0, 0, 0], (n, 1)),
        np.full(n, opacity_to_logit(0.8)),
        np.tile(color, (n, 1)),
    )


target_view = render(ring_cloud(40, (0.9, 0.3, 0.1)), camera, config)
save_png(target_view.rgb, out_dir / "target.png")

# Start from the same geometry with wrong colors and opacities.
cloud = ring_cloud(40, (0.2, 0.2, 0.8))
cloud.opacity_logits[:] = opacity_to_logit(0.3)
cloud.positions += rng.normal(0, 0.05, cloud.positions.shape)

optimizer = AdamOptimizer()
for step in range(400):
    view = render(cloud, camera, config)
    loss = float(((view.rgb - target_view.rgb) ** 2).sum())
    grads = render_backward(cloud, camera, config, 2.0 * (view.rgb - target_view.rgb))
    for name, grad, lr in (
        ("positions", grads.d_positions, 2e-3),
        ("log_scales", grads.d_log_scales, 5e-3),
        ("rotations", grads.d_rotations, 1e-3),
        ("opacity_logits", grads.d_opacity_logits, 5e-2),
        ("colors", grads.d_colors, 1e-2),
    ):
        setattr(cloud, name, optimizer.step(name, getattr(cloud, name), grad, lr))
    cloud.normalize_rotations()
    np.clip(cloud.colors, 0.0, 1.0, out=cloud.colors)
    if step % 100 == 0 or step == 399:
        print(f"step {step}: L2 {loss:.3f}")
        save_png(view.rgb, out_dir / f"step_{step:04d}.png")

print(f"wrote frames to {out_dir}")
