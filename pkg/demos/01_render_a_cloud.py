"""Render a procedural Gaussian cloud from a ring of viewpoints.

Walks through the basic objects: build a colored point set, turn it into
Gaussians, and rasterize RGB / depth / alpha from orbit cameras.

Run:  python3 demos/01_render_a_cloud.py  (writes PNGs to demos/out/)
"""

from pathlib import Path

import numpy as np

from splatopt.camera import default_intrinsics, sample_orbit_camera
from splatopt.cloud import PointSet, init_from_points
from splatopt.io import save_png
from splatopt.protocol import procedural_pointcloud
from splatopt.renderer import RenderConfig, render

out_dir = Path(__file__).parent / "out" / "render"
out_dir.mkdir(parents=True, exist_ok=True)

# A colored sphere: the Fibonacci lattice with position-derived colors.
points, colors = procedural_pointcloud("sphere:4000")
cloud = init_from_points(PointSet(points, colors), 4000, seed=0)
# Boost opacity so the object reads clearly in a single render.
cloud.opacity_logits[:] = 2.0

config = RenderConfig(background=(1.0, 1.0, 1.0))
intrinsics = default_intrinsics(256, 256)

for i, azimuth in enumerate((-120.0, -40.0, 40.0, 120.0)):
    camera = sample_orbit_camera(azimuth, 15.0, 4.0, (0, 0, 0), intrinsics, 256, 256)
    view = render(cloud, camera, config)
    save_png(view.rgb, out_dir / f"view_{i}.png")
    print(
        f"azimuth {azimuth:+.0f}: alpha mass {view.alpha.sum():.0f}, "
        f"depth range [{view.depth[view.alpha > 0.5].min():.2f}, "
        f"{view.depth[view.alpha > 0.5].max():.2f}]"
    )

print(f"wrote 4 views to {out_dir}")
