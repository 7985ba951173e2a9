"""Camera-aware appearance refinement.

The camera encoder is a two-layer tanh MLP mapping the flattened 12-value
extrinsic [R|t] to an embedding row appended to the prompt tokens.  The
mock refiner stands in for an image-conditioned diffusion refiner: it
unsharp-masks each view, then applies a per-channel affine modulation
(1 + gamma) * v + beta whose coefficients are linear readouts of the
camera embedding, making the output differentiable with respect to the
encoder so that consistency-driven encoder training can be exercised end
to end.  A remote backend forwards views to the /refine endpoint instead
(non-differentiable: encoder training is unsupported there).
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .diffusion import PromptEmbedding
from .errors import ProtocolError, UnsupportedOperationError
from .optim import AdamOptimizer
from .protocol import PROTOCOL_VERSION, decode_tensor, encode_tensor
from .scene_coords import view_consistency_loss


@dataclass
class CameraEncoder:
    """12 -> hidden -> width affine-tanh-affine map."""

    w1: np.ndarray  # (hidden, 12)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (width, hidden)
    b2: np.ndarray  # (width,)

    @staticmethod
    def create(seed: int = 0, hidden: int = 64, width: int = 64) -> "CameraEncoder":
        rng = np.random.default_rng(seed)
        return CameraEncoder(
            w1=rng.standard_normal((hidden, 12)) / np.sqrt(12),
            b1=np.zeros(hidden),
            w2=rng.standard_normal((width, hidden)) / np.sqrt(hidden),
            b2=np.zeros(width),
        )

    @property
    def width(self) -> int:
        return len(self.b2)

    def parameters(self) -> dict:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


def encode_camera(encoder: CameraEncoder, c: np.ndarray) -> np.ndarray:
    """Forward pass psi(c) -> embedding of length ``encoder.width``."""
    c = np.asarray(c, dtype=np.float64).reshape(12)
    hidden = np.tanh(encoder.w1 @ c + encoder.b1)
    return encoder.w2 @ hidden + encoder.b2


@dataclass
class EncoderGradients:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def accumulate(self, other: "EncoderGradients") -> None:
        self.w1 += other.w1
        self.b1 += other.b1
        self.w2 += other.w2
        self.b2 += other.b2

    @staticmethod
    def zeros_like(encoder: CameraEncoder) -> "EncoderGradients":
        return EncoderGradients(
            np.zeros_like(encoder.w1), np.zeros_like(encoder.b1),
            np.zeros_like(encoder.w2), np.zeros_like(encoder.b2),
        )


def encode_camera_backward(
    encoder: CameraEncoder, c: np.ndarray, grad_out: np.ndarray
) -> EncoderGradients:
    """Gradients of ``grad_out . psi(c)`` with respect to the weights."""
    c = np.asarray(c, dtype=np.float64).reshape(12)
    pre = encoder.w1 @ c + encoder.b1
    hidden = np.tanh(pre)
    grad_out = np.asarray(grad_out, dtype=np.float64).reshape(encoder.width)
    d_hidden = encoder.w2.T @ grad_out
    d_pre = d_hidden * (1.0 - hidden * hidden)
    return EncoderGradients(
        w1=np.outer(d_pre, c),
        b1=d_pre,
        w2=np.outer(grad_out, hidden),
        b2=grad_out,
    )


def build_conditioning(f_t: PromptEmbedding, f_g: np.ndarray) -> np.ndarray:
    """Append the camera embedding as one extra token row: (m+1, width)."""
    f_g = np.asarray(f_g, dtype=np.float64).reshape(-1)
    if f_t.tokens.shape[1] != len(f_g):
        raise ValueError(
            f"embedding width mismatch: tokens {f_t.tokens.shape[1]}, camera {len(f_g)}"
        )
    return np.vstack([f_t.tokens, f_g[None, :]])


class MockRefiner:
    """Deterministic differentiable refinement (unsharp + camera modulation).

    refined = clip((1 + gamma) * u + beta, 0, 1) with
    u = clip(v + strength * (v - blur(v)), 0, 1) and (gamma, beta) linear
    readouts of the conditioning's last row.
    """

    differentiable = True

    def __init__(self, strength: float = 0.5, blur_sigma: float = 1.5,
                 readout_scale: float = 0.02, embed_width: int = 64, seed: int = 0):
        if not (0.0 <= strength <= 1.0):
            raise ValueError("strength must lie in [0, 1]")
        self.strength = strength
        self.blur_sigma = blur_sigma
        rng = np.random.default_rng(seed)
        self.w_gamma = readout_scale * rng.standard_normal((3, embed_width))
        self.w_beta = readout_scale * rng.standard_normal((3, embed_width))

    def _unsharp(self, view: np.ndarray) -> np.ndarray:
        blurred = np.stack(
            [gaussian_filter(view[..., c], self.blur_sigma, mode="nearest") for c in range(3)],
            axis=-1,
        )
        return np.clip(view + self.strength * (view - blurred), 0.0, 1.0)

    def _modulation(self, f_bar: np.ndarray):
        f_g = np.asarray(f_bar)[-1]
        return self.w_gamma @ f_g, self.w_beta @ f_g

    def refine(self, views: list, f_bars: list, prompt_text: str = "",
               camera_vectors: list | None = None) -> list:
        if len(views) != len(f_bars):
            raise ValueError(f"{len(views)} views but {len(f_bars)} conditioning blocks")
        out = []
        for view, f_bar in zip(views, f_bars):
            gamma, beta = self._modulation(f_bar)
            u = self._unsharp(np.asarray(view, dtype=np.float64))
            out.append(np.clip((1.0 + gamma) * u + beta, 0.0, 1.0))
        return out

    def backward_to_embedding(self, views: list, f_bars: list, grad_refined: list) -> list:
        """d(loss)/d(f_bar last row) for each view, given d(loss)/d(refined)."""
        grads = []
        for view, f_bar, g in zip(views, f_bars, grad_refined):
            gamma, beta = self._modulation(f_bar)
            u = self._unsharp(np.asarray(view, dtype=np.float64))
            pre = (1.0 + gamma) * u + beta
            active = (pre > 0.0) & (pre < 1.0)
            g_eff = np.asarray(g) * active
            d_gamma = (g_eff * u).sum(axis=(0, 1))
            d_beta = g_eff.sum(axis=(0, 1))
            grads.append(self.w_gamma.T @ d_gamma + self.w_beta.T @ d_beta)
        return grads


def mock_refiner(strength: float = 0.5, **kwargs) -> MockRefiner:
    return MockRefiner(strength=strength, **kwargs)


class IdentityRefiner:
    """Pass-through backend: isolates the consistency loss in stage 2."""

    differentiable = True

    def refine(self, views, f_bars, prompt_text: str = "",
               camera_vectors: list | None = None) -> list:
        return [np.asarray(v, dtype=np.float64).copy() for v in views]

    def backward_to_embedding(self, views, f_bars, grad_refined):
        return [np.zeros(np.asarray(f_bar).shape[1]) for f_bar in f_bars]


class RemoteRefiner:
    """Client for the /refine endpoint.  Not differentiable."""

    differentiable = False

    def __init__(self, endpoint: str, session=None, timeout: float = 30.0):
        import requests

        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.session = session or requests.Session()

    def refine(self, views: list, f_bars: list, prompt_text: str = "",
               camera_vectors: list | None = None) -> list:
        import requests

        from .errors import GuidanceUnavailableError

        payload = {
            "version": PROTOCOL_VERSION,
            "request_id": str(uuid.uuid4()),
            "views": [encode_tensor(np.asarray(v)) for v in views],
            "camera_vectors": [
                [float(x) for x in vec] for vec in (camera_vectors or [])
            ],
            "prompt": prompt_text,
        }
        try:
            resp = self.session.post(
                self.endpoint + "/refine", json=payload, timeout=self.timeout
            )
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise GuidanceUnavailableError(f"/refine unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise ProtocolError(f"/refine returned {resp.status_code}: {resp.text[:300]}")
        reply = resp.json()
        refined = [decode_tensor(t) for t in reply.get("views", [])]
        if len(refined) != len(views):
            raise ProtocolError(
                f"/refine returned {len(refined)} views, expected {len(views)}"
            )
        for i, (orig, ref) in enumerate(zip(views, refined)):
            if np.asarray(orig).shape != ref.shape:
                raise ProtocolError(
                    f"refined view {i} has shape {ref.shape}, expected {np.asarray(orig).shape}"
                )
        return refined

    def backward_to_embedding(self, views, f_bars, grad_refined):
        raise UnsupportedOperationError(
            "remote refiner is not differentiable; encoder training requires the mock backend"
        )


def remote_refiner(endpoint: str, **kwargs) -> RemoteRefiner:
    return RemoteRefiner(endpoint, **kwargs)


def train_encoder_step(
    encoder: CameraEncoder,
    views: list,
    scene_coord_maps: list,
    refiner,
    lr: float,
    prompt: PromptEmbedding | None = None,
    optimizer: AdamOptimizer | None = None,
    eps_depth: float | None = None,
    tau: float | None = None,
):
    """One consistency-driven update of the camera encoder.

    Refines the views, evaluates the stabilized view-consistency loss over
    consecutive refined pairs, backpropagates through the refiner's
    camera modulation into the encoder weights, and applies one Adam step.
    Returns (loss, optimizer).
    """
    from .camera import extrinsic_vector

    if not getattr(refiner, "differentiable", False):
        raise UnsupportedOperationError(
            "encoder training requires a differentiable refiner backend"
        )
    if len(views) != len(scene_coord_maps):
        raise ValueError("views and scene_coord_maps must align")
    if prompt is None:
        prompt = PromptEmbedding.null(width=encoder.width)

    cam_vecs = [extrinsic_vector(v.camera.pose) for v in views]
    f_gs = [encode_camera(encoder, c) for c in cam_vecs]
    f_bars = [build_conditioning(prompt, f_g) for f_g in f_gs]
    images = [v.rgb for v in views]
    refined = refiner.refine(images, f_bars)

    total = 0.0
    grad_refined = [np.zeros_like(r) for r in refined]
    for i in range(len(refined) - 1):
        loss, g_a, g_b = view_consistency_loss(
            refined[i], refined[i + 1],
            scene_coord_maps[i], scene_coord_maps[i + 1],
            variant="stabilized", eps_depth=eps_depth, tau=tau,
        )
        total += loss
        grad_refined[i] += g_a
        grad_refined[i + 1] += g_b

    d_fgs = refiner.backward_to_embedding(images, f_bars, grad_refined)
    grads = EncoderGradients.zeros_like(encoder)
    for c, d_fg in zip(cam_vecs, d_fgs):
        grads.accumulate(encode_camera_backward(encoder, c, d_fg))

    if optimizer is None:
        optimizer = AdamOptimizer()
    for name in ("w1", "b1", "w2", "b2"):
        new = optimizer.step(f"encoder.{name}", getattr(encoder, name), getattr(grads, name), lr)
        setattr(encoder, name, new)
    return total, optimizer
