"""Denoiser backends: analytic oracles for desk-scale verification and an
HTTP client for the guidance-service wire protocol.

An oracle denoiser knows the clean image it believes in and inverts the
forward-diffusion marginal exactly:

    eps*(x_t, t) = (x_t - sqrt(abar_t) * target) / sqrt(1 - abar_t).

Conditional and unconditional queries may use distinct targets (for an
informative interval-score residual: the conditional target is the
reference appearance, the unconditional one the current or blurred
render).  t = 0 is rejected: alpha-bar is exactly 1 there and the noise
is undefined.
"""

from __future__ import annotations

import time
import uuid
from dataclasses import dataclass

import numpy as np
import requests

from .camera import Camera, camera_to_text
from .diffusion import (
    DiffusionSchedule,
    GuidanceGradient,
    LatentState,
    PromptEmbedding,
)
from .errors import GuidanceUnavailableError, ProtocolError, SplatoptError
from .protocol import PROTOCOL_VERSION, decode_tensor, embed_text_tokens, encode_tensor

__all__ = [
    "GuidanceGradient",
    "OracleDenoiser",
    "PhotometricGuidance",
    "RemoteDenoiser",
    "embed_text",
    "oracle_denoiser",
    "photometric_guidance",
    "remote_denoiser",
]


def embed_text(prompt: str) -> PromptEmbedding:
    """Deterministic prompt embedding (protocol.md algorithm)."""
    return PromptEmbedding(embed_text_tokens(prompt), is_null=False)


@dataclass
class OracleDenoiser:
    """Exact noise prediction under a known clean target (latent space)."""

    target: np.ndarray
    null_target: np.ndarray | None = None
    schedule: DiffusionSchedule | None = None

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=np.float64)
        if self.null_target is not None:
            self.null_target = np.asarray(self.null_target, dtype=np.float64)
            if self.null_target.shape != self.target.shape:
                raise ValueError("null_target shape differs from target shape")
        if self.schedule is None:
            self.schedule = DiffusionSchedule.linear()

    def predict_noise(self, latent: LatentState, prompt: PromptEmbedding) -> np.ndarray:
        t = latent.timestep
        if t < 1:
            raise ValueError("oracle denoiser requires t >= 1 (alpha-bar < 1)")
        abar = self.schedule.alpha_bar(t)
        target = self.target
        if prompt.is_null and self.null_target is not None:
            target = self.null_target
        if latent.data.shape != target.shape:
            raise ValueError(
                f"latent shape {latent.data.shape} != target shape {target.shape}"
            )
        return (latent.data - np.sqrt(abar) * target) / np.sqrt(1.0 - abar)


def oracle_denoiser(
    target: np.ndarray,
    null_target: np.ndarray | None = None,
    schedule: DiffusionSchedule | None = None,
) -> OracleDenoiser:
    """Backend computing the exact noise for a hypothesized clean image.

    Targets live in the [-1, 1] latent range.
    """
    return OracleDenoiser(target, null_target, schedule)


class PhotometricGuidance:
    """L2 descent direction toward per-camera reference images.

    The end-to-end acceptance oracle: gradient 2 (render - reference),
    independent of any diffusion math.  Cameras are keyed by their
    plain-text serialization record; the optional camera list lets the
    pipeline sample only poses that have references.
    """

    def __init__(self, reference_views: dict, cameras: list | None = None):
        if not reference_views:
            raise ValueError("need at least one reference view")
        self.references = dict(reference_views)
        self.cameras = list(cameras) if cameras else []

    @staticmethod
    def camera_key(camera: Camera) -> str:
        return camera_to_text(camera)

    def gradient(self, camera: Camera, rendered_rgb: np.ndarray) -> GuidanceGradient:
        key = self.camera_key(camera)
        if key not in self.references:
            raise SplatoptError("no reference image for the sampled camera")
        ref = self.references[key]
        if ref.shape != rendered_rgb.shape:
            raise ValueError(f"reference shape {ref.shape} != render {rendered_rgb.shape}")
        return GuidanceGradient(
            grad=2.0 * (rendered_rgb - ref), timestep_used=0, weight_used=1.0
        )

    def pixel_gradient(self, view, rng) -> GuidanceGradient:
        return self.gradient(view.camera, view.rgb)

    def loss(self, camera: Camera, rendered_rgb: np.ndarray) -> float:
        ref = self.references[self.camera_key(camera)]
        return float(((rendered_rgb - ref) ** 2).sum())

    @staticmethod
    def from_views(cameras: list, images: list) -> "PhotometricGuidance":
        refs = {camera_to_text(c): np.asarray(img) for c, img in zip(cameras, images)}
        return PhotometricGuidance(refs, cameras=cameras)


def photometric_guidance(reference_views: dict, cameras: list | None = None) -> PhotometricGuidance:
    return PhotometricGuidance(reference_views, cameras=cameras)


class RemoteDenoiser:
    """Client for the /denoise endpoint of a guidance service.

    Denoise calls are idempotent (the full latent travels with each
    request), so transport failures retry with exponential backoff.
    """

    def __init__(
        self,
        endpoint: str,
        prompt_text: str = "",
        timeout: float = 10.0,
        retries: int = 3,
        backoff: float = 0.5,
        session=None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.prompt_text = prompt_text
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.session = session or requests.Session()
        info = self._request("GET", "/health", None)
        version = info.get("protocol")
        if version != PROTOCOL_VERSION:
            raise ProtocolError(
                f"server speaks protocol {version!r}, client needs {PROTOCOL_VERSION!r}"
            )

    def _request(self, method: str, path: str, payload):
        url = self.endpoint + path
        last_error = None
        for attempt in range(self.retries):
            try:
                if method == "GET":
                    resp = self.session.get(url, timeout=self.timeout)
                else:
                    resp = self.session.post(url, json=payload, timeout=self.timeout)
                if resp.status_code >= 500:
                    raise GuidanceUnavailableError(
                        f"{path} returned {resp.status_code}: {resp.text[:200]}"
                    )
                if resp.status_code >= 400:
                    raise ProtocolError(f"{path} rejected: {resp.text[:500]}")
                return resp.json()
            except (requests.ConnectionError, requests.Timeout, GuidanceUnavailableError) as exc:
                last_error = exc
                if attempt + 1 < self.retries:
                    time.sleep(self.backoff * (2.0**attempt))
        raise GuidanceUnavailableError(
            f"guidance endpoint {url} unavailable after {self.retries} attempts: {last_error}"
        )

    def predict_noise(self, latent: LatentState, prompt: PromptEmbedding) -> np.ndarray:
        payload = {
            "version": PROTOCOL_VERSION,
            "request_id": str(uuid.uuid4()),
            "image": encode_tensor(latent.data),
            "timestep": int(latent.timestep),
            "prompt": "" if prompt.is_null else self.prompt_text,
            "guidance_role": "uncond" if prompt.is_null else "cond",
        }
        reply = self._request("POST", "/denoise", payload)
        if reply.get("request_id") != payload["request_id"]:
            raise ProtocolError("response request_id does not match the request")
        noise = decode_tensor(reply.get("noise"))
        if noise.shape != latent.data.shape:
            raise ProtocolError(
                f"denoise returned shape {noise.shape}, expected {latent.data.shape}"
            )
        return noise

    def fetch_pointcloud(self, prompt: str, count: int = 1024):
        payload = {
            "version": PROTOCOL_VERSION,
            "request_id": str(uuid.uuid4()),
            "prompt": prompt,
            "count": int(count),
        }
        reply = self._request("POST", "/pointcloud", payload)
        points = decode_tensor(reply.get("points"))
        colors = decode_tensor(reply.get("colors")) if reply.get("colors") else None
        return points, colors


def remote_denoiser(
    endpoint: str, prompt_text: str = "", timeout: float = 10.0, retries: int = 3
) -> RemoteDenoiser:
    return RemoteDenoiser(endpoint, prompt_text, timeout=timeout, retries=retries)
