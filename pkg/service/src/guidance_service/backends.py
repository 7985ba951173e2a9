"""Mock backend implementations behind the HTTP endpoints."""

from __future__ import annotations

import base64
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .wire import WireError, decode_tensor, diffusion_alpha_bar, seeded_noise

DENOISE_MODES = ("echo", "oracle", "seeded-noise")
REFINE_MODES = ("identity-refine", "unsharp-refine")
ALL_MODES = DENOISE_MODES + REFINE_MODES


@dataclass
class BackendConfig:
    mode: str = "echo"
    seed: int = 0
    target: np.ndarray | None = None  # oracle mode clean image, [-1, 1]

    def __post_init__(self):
        if self.mode not in ALL_MODES:
            raise ValueError(f"mode must be one of {ALL_MODES}, got {self.mode!r}")


class MockBackend:
    def __init__(self, config: BackendConfig):
        self.config = config
        self.alpha_bar = diffusion_alpha_bar()

    @property
    def mode(self) -> str:
        return self.config.mode

    def denoise(self, payload: dict) -> np.ndarray:
        image = decode_tensor(payload.get("image"))
        timestep = payload.get("timestep")
        if not isinstance(timestep, int) or isinstance(timestep, bool):
            raise WireError("timestep must be an integer")
        if not (0 <= timestep < len(self.alpha_bar)):
            raise WireError(f"timestep {timestep} outside [0, {len(self.alpha_bar)})")
        mode = self.config.mode
        if mode == "echo":
            return image.astype(np.float32)
        if mode == "oracle":
            if self.config.target is None:
                raise WireError("oracle mode has no target configured")
            if timestep == 0:
                raise WireError("oracle denoise requires timestep >= 1 (alpha-bar < 1)")
            target = self.config.target
            if image.shape != target.shape:
                raise WireError(
                    f"image shape {list(image.shape)} does not match "
                    f"oracle target shape {list(target.shape)}"
                )
            abar = self.alpha_bar[timestep]
            return ((image - np.sqrt(abar) * target) / np.sqrt(1.0 - abar)).astype(np.float32)
        if mode == "seeded-noise":
            raw = base64.b64decode(payload["image"]["data"])
            return seeded_noise(
                raw, timestep, payload.get("prompt", ""),
                payload.get("guidance_role", "cond"), self.config.seed, image.shape,
            )
        raise WireError(f"mode {mode!r} does not serve /denoise")

    def refine(self, payload: dict) -> list:
        views = payload.get("views")
        if not isinstance(views, list) or not views:
            raise WireError("views must be a non-empty list of tensors")
        decoded = [decode_tensor(v) for v in views]
        cameras = payload.get("camera_vectors", [])
        if cameras and len(cameras) != len(decoded):
            raise WireError(
                f"{len(cameras)} camera_vectors for {len(decoded)} views"
            )
        mode = self.config.mode
        if mode == "identity-refine" or mode in DENOISE_MODES:
            # Denoise-focused servers still answer /refine as identity.
            return [v.astype(np.float32) for v in decoded]
        if mode == "unsharp-refine":
            out = []
            for v in decoded:
                if v.ndim != 3 or v.shape[-1] != 3:
                    raise WireError(f"refine views must be (H, W, 3), got {list(v.shape)}")
                blurred = np.stack(
                    [gaussian_filter(v[..., c], 1.5, mode="nearest") for c in range(3)],
                    axis=-1,
                )
                out.append(np.clip(v + 0.5 * (v - blurred), 0.0, 1.0).astype(np.float32))
            return out
        raise WireError(f"mode {mode!r} does not serve /refine")
