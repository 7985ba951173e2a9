"""Differentiable 3D Gaussian splatting optimizer with pluggable guidance.

Subpackages follow the pipeline: ``camera`` (projection geometry),
``cloud`` (the optimizable Gaussian set), ``renderer`` (differentiable
rasterization), ``scene_coords`` (per-pixel world coordinates and the
view-consistency loss), ``diffusion`` (schedules, DDIM inversion, score
gradients), ``guidance`` (denoiser backends), ``refiner`` (camera-aware
appearance refinement), ``pipeline`` (two-stage optimization), ``cli``.
"""

__version__ = "0.1.0"
