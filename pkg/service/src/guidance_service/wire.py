"""Wire-format primitives, implemented independently from any client.

Everything here follows protocol.md at the repository root; the
conformance vectors pin the byte-level behavior.
"""

from __future__ import annotations

import base64
import hashlib

import numpy as np

PROTOCOL_VERSION = "1"


class WireError(ValueError):
    """Malformed payload; message is safe to return to the caller."""


def encode_tensor(array) -> dict:
    arr = np.ascontiguousarray(array, dtype="<f4")
    return {
        "shape": list(arr.shape),
        "dtype": "float32",
        "data": base64.b64encode(arr.tobytes()).decode("ascii"),
    }


def decode_tensor(obj) -> np.ndarray:
    if not isinstance(obj, dict):
        raise WireError("tensor payload must be an object")
    for key in ("shape", "dtype", "data"):
        if key not in obj:
            raise WireError(f"tensor payload missing field {key!r}")
    if obj["dtype"] != "float32":
        raise WireError(f"unsupported tensor dtype {obj['dtype']!r}")
    try:
        shape = tuple(int(s) for s in obj["shape"])
    except (TypeError, ValueError) as exc:
        raise WireError(f"bad tensor shape: {exc}") from exc
    try:
        raw = base64.b64decode(obj["data"], validate=True)
    except Exception as exc:
        raise WireError(f"tensor data is not valid base64: {exc}") from exc
    count = int(np.prod(shape)) if shape else 1
    if len(raw) != 4 * count:
        raise WireError(
            f"tensor data holds {len(raw)} bytes, expected {4 * count} for shape {list(shape)}"
        )
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)


def _seed_from_bytes(payload: bytes) -> int:
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little")


def embed_text(prompt: str, tokens: int = 8, width: int = 64) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(_seed_from_bytes(prompt.encode("utf-8"))))
    return rng.standard_normal((tokens, width)).astype(np.float32)


def seeded_noise(image_bytes: bytes, timestep: int, prompt: str, role: str,
                 server_seed: int, shape) -> np.ndarray:
    payload = b"\x00".join(
        [image_bytes, str(timestep).encode(), prompt.encode("utf-8"),
         role.encode(), str(server_seed).encode()]
    )
    rng = np.random.Generator(np.random.PCG64(_seed_from_bytes(payload)))
    return rng.standard_normal(shape).astype(np.float32)


def diffusion_alpha_bar(num_steps: int = 1000, beta_start: float = 1e-4,
                        beta_end: float = 2e-2) -> np.ndarray:
    betas = np.linspace(beta_start, beta_end, num_steps)
    abar = np.empty(num_steps)
    abar[0] = 1.0
    np.cumprod(1.0 - betas[:-1], out=abar[1:])
    return abar


def procedural_pointcloud(prompt: str, count: int):
    """Deterministic point clouds; see protocol.md for the exact recipe."""
    shape, _, count_s = prompt.partition(":")
    if count_s:
        count = int(count_s)
    if count < 1:
        raise WireError(f"point count must be positive, got {count}")
    if shape == "cube":
        side = max(2, round(count ** (1.0 / 3.0)))
        axis = np.linspace(-1.0, 1.0, side)
        gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
        points = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=-1)[:count]
        if len(points) < count:
            points = np.concatenate([points, points[: count - len(points)]])
    else:  # sphere is also the fallback for free-text prompts
        k = np.arange(count, dtype=np.float64)
        golden = (1.0 + 5.0**0.5) / 2.0
        z = 1.0 - 2.0 * (k + 0.5) / count
        r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        theta = 2.0 * np.pi * k / golden
        points = np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=-1)
    colors = 0.5 + 0.5 * points / max(1.0, np.abs(points).max())
    return points, np.clip(colors, 0.0, 1.0)
