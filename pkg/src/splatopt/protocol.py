"""Wire-format primitives for the guidance service protocol (version 1).

Tensors travel as JSON objects: explicit shape array, dtype tag, and the
raw little-endian float32 buffer in base64.  Prompt embeddings are
synthesized deterministically from the prompt text so that any two
implementations of this protocol agree bit for bit; see protocol.md at
the repository root for the full framing specification.
"""

from __future__ import annotations

import base64
import hashlib

import numpy as np

from .errors import ProtocolError

PROTOCOL_VERSION = "1"
EMBED_TOKENS = 8
EMBED_WIDTH = 64


def encode_tensor(array: np.ndarray) -> dict:
    arr = np.ascontiguousarray(array, dtype="<f4")
    return {
        "shape": list(arr.shape),
        "dtype": "float32",
        "data": base64.b64encode(arr.tobytes()).decode("ascii"),
    }


def decode_tensor(obj) -> np.ndarray:
    if not isinstance(obj, dict):
        raise ProtocolError(f"tensor payload must be an object, got {type(obj).__name__}")
    for key in ("shape", "dtype", "data"):
        if key not in obj:
            raise ProtocolError(f"tensor payload missing field {key!r}")
    if obj["dtype"] != "float32":
        raise ProtocolError(f"unsupported tensor dtype {obj['dtype']!r}")
    shape = tuple(int(s) for s in obj["shape"])
    try:
        raw = base64.b64decode(obj["data"], validate=True)
    except Exception as exc:
        raise ProtocolError(f"tensor data is not valid base64: {exc}") from exc
    count = int(np.prod(shape)) if shape else 1
    if len(raw) != 4 * count:
        raise ProtocolError(
            f"tensor data holds {len(raw)} bytes, expected {4 * count} for shape {shape}"
        )
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)


def embed_text_tokens(prompt: str, tokens: int = EMBED_TOKENS, width: int = EMBED_WIDTH) -> np.ndarray:
    """Deterministic (tokens, width) float32 embedding of a prompt string.

    Seed = first 8 bytes of SHA-256(utf-8 prompt), little-endian; values
    are standard normals from PCG64.  The guidance math only ever uses
    embedding identity, not content.
    """
    digest = hashlib.sha256(prompt.encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "little")
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.standard_normal((tokens, width)).astype(np.float32).astype(np.float64)


def procedural_pointcloud(name: str):
    """Deterministic point clouds shared with the guidance service.

    ``name`` is "<shape>" or "<shape>:<count>"; shapes: sphere, cube.
    Sphere points follow the closed-form Fibonacci lattice; colors are
    0.5 + 0.5 * coordinates.  No RNG anywhere, so every implementation
    of the protocol generates identical clouds.
    """
    shape, _, count_s = name.partition(":")
    count = int(count_s) if count_s else 1024
    if count < 1:
        raise ValueError(f"point count must be positive, got {count}")
    if shape == "sphere":
        k = np.arange(count, dtype=np.float64)
        golden = (1.0 + 5.0**0.5) / 2.0
        z = 1.0 - 2.0 * (k + 0.5) / count
        r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        theta = 2.0 * np.pi * k / golden
        points = np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=-1)
    elif shape == "cube":
        side = max(2, round(count ** (1.0 / 3.0)))
        axis = np.linspace(-1.0, 1.0, side)
        gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
        points = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=-1)[:count]
        if len(points) < count:
            points = np.concatenate([points, points[: count - len(points)]])
    else:
        raise ValueError(f"unknown procedural shape {shape!r} (try sphere or cube)")
    colors = 0.5 + 0.5 * points / max(1.0, np.abs(points).max())
    return points, np.clip(colors, 0.0, 1.0)
