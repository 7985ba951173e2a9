"""File formats: native splat binary, splat PLY, point-cloud PLY, images.

Native splat binary (little-endian throughout):

    offset 0   magic   b"SPLATBIN"
    offset 8   u32     version (currently 1)
    offset 12  u64     count N
    offset 20  f64[N*3]  positions
    ...        f64[N*3]  log_scales
    ...        f64[N*4]  rotations (wxyz)
    ...        f64[N]    opacity_logits
    ...        f64[N*3]  colors

Storing the raw float64 parameter arrays makes save -> load bit-exact.

Splat PLY export uses the de-facto community layout: float32 properties
x y z nx ny nz f_dc_0..2 opacity scale_0..2 rot_0..3, with colors encoded
as degree-0 SH coefficients ((c - 0.5) / 0.28209479), opacity as logits,
and scales as logs.

Depth maps and scene-coordinate maps are float32 planes behind an
8-byte magic + version + size header (see ``save_depth`` and
``save_scene_coords``).
"""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image

from .cloud import GaussianCloud, PointSet
from .errors import SplatParseError

SPLAT_MAGIC = b"SPLATBIN"
SPLAT_VERSION = 1
DEPTH_MAGIC = b"DEPTHF32"
COORD_MAGIC = b"SCRDF32\x00"
SH_C0 = 0.28209479177387814


def save_splat(cloud: GaussianCloud, path) -> None:
    n = cloud.count
    with open(path, "wb") as f:
        f.write(SPLAT_MAGIC)
        f.write(struct.pack("<IQ", SPLAT_VERSION, n))
        for arr in (
            cloud.positions,
            cloud.log_scales,
            cloud.rotations,
            cloud.opacity_logits,
            cloud.colors,
        ):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_splat(path) -> GaussianCloud:
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != SPLAT_MAGIC:
        raise SplatParseError("bad magic, not a splat file", offset=0)
    if len(data) < 20:
        raise SplatParseError("header truncated", offset=len(data))
    version, n = struct.unpack_from("<IQ", data, 8)
    if version != SPLAT_VERSION:
        raise SplatParseError(f"unsupported splat version {version}", offset=8)
    offset = 20
    sections = [
        ("positions", (n, 3)),
        ("log_scales", (n, 3)),
        ("rotations", (n, 4)),
        ("opacity_logits", (n,)),
        ("colors", (n, 3)),
    ]
    arrays = {}
    for name, shape in sections:
        nbytes = int(np.prod(shape)) * 8
        if offset + nbytes > len(data):
            raise SplatParseError(f"{name} section truncated", offset=offset)
        arrays[name] = (
            np.frombuffer(data, dtype="<f8", count=int(np.prod(shape)), offset=offset)
            .reshape(shape)
            .copy()
        )
        offset += nbytes
    if offset != len(data):
        raise SplatParseError("trailing bytes after colors section", offset=offset)
    return GaussianCloud(**arrays)


# ---------------------------------------------------------------------------
# Splat PLY (community layout)

_SPLAT_PLY_PROPS = (
    ["x", "y", "z", "nx", "ny", "nz"]
    + [f"f_dc_{i}" for i in range(3)]
    + ["opacity"]
    + [f"scale_{i}" for i in range(3)]
    + [f"rot_{i}" for i in range(4)]
)


def export_ply(cloud: GaussianCloud, path) -> None:
    n = cloud.count
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {p}" for p in _SPLAT_PLY_PROPS]
    header += ["end_header"]
    rec = np.zeros(n, dtype=[(p, "<f4") for p in _SPLAT_PLY_PROPS])
    rec["x"], rec["y"], rec["z"] = cloud.positions.T
    for i in range(3):
        rec[f"f_dc_{i}"] = (cloud.colors[:, i] - 0.5) / SH_C0
        rec[f"scale_{i}"] = cloud.log_scales[:, i]
    rec["opacity"] = cloud.opacity_logits
    for i in range(4):
        rec[f"rot_{i}"] = cloud.rotations[:, i]
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(rec.tobytes())


def import_splat_ply(path) -> GaussianCloud:
    """Re-import a splat PLY written by ``export_ply`` (or compatible)."""
    names, dtype, count, body = _parse_ply_header(path)
    needed = [p for p in _SPLAT_PLY_PROPS if not p.startswith("n")]
    missing = [p for p in needed if p not in names]
    if missing:
        raise SplatParseError(f"splat PLY missing properties: {missing}")
    rec = np.frombuffer(body, dtype=dtype, count=count)
    colors = np.stack([rec[f"f_dc_{i}"] for i in range(3)], axis=-1) * SH_C0 + 0.5
    return GaussianCloud(
        np.stack([rec["x"], rec["y"], rec["z"]], axis=-1),
        np.stack([rec[f"scale_{i}"] for i in range(3)], axis=-1),
        np.stack([rec[f"rot_{i}"] for i in range(4)], axis=-1),
        np.asarray(rec["opacity"]),
        np.clip(colors, 0.0, 1.0),
    )


# ---------------------------------------------------------------------------
# Point-cloud PLY ingestion (ASCII and binary little-endian)

_PLY_TYPES = {
    "float": "<f4", "float32": "<f4",
    "double": "<f8", "float64": "<f8",
    "uchar": "u1", "uint8": "u1",
    "char": "i1", "int8": "i1",
    "ushort": "<u2", "uint16": "<u2",
    "short": "<i2", "int16": "<i2",
    "uint": "<u4", "uint32": "<u4",
    "int": "<i4", "int32": "<i4",
}


def _parse_ply_header(path):
    with open(path, "rb") as f:
        data = f.read()
    end = data.find(b"end_header\n")
    if end < 0:
        raise SplatParseError("PLY missing end_header", offset=len(data))
    header_lines = data[:end].decode("ascii", errors="replace").splitlines()
    body = data[end + len(b"end_header\n"):]
    if not header_lines or header_lines[0].strip() != "ply":
        raise SplatParseError("not a PLY file", offset=0)

    fmt = None
    count = None
    props: list[tuple[str, str]] = []
    in_vertex = False
    for line in header_lines[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                count = int(parts[2])
        elif parts[0] == "property" and in_vertex:
            if parts[1] == "list":
                raise SplatParseError("list properties are unsupported for vertices")
            if parts[1] not in _PLY_TYPES:
                raise SplatParseError(f"unsupported PLY property type {parts[1]!r}")
            props.append((parts[2], _PLY_TYPES[parts[1]]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise SplatParseError(f"unsupported PLY format {fmt!r}")
    if count is None:
        raise SplatParseError("PLY has no vertex element")

    names = [p[0] for p in props]
    if fmt == "ascii":
        rows = body.decode("ascii").split("\n")
        vals = []
        for i, row in enumerate(rows):
            row = row.strip()
            if not row:
                continue
            if len(vals) == count:
                break
            items = row.split()
            if len(items) < len(props):
                raise SplatParseError(
                    f"vertex row {i} has {len(items)} values, expected {len(props)}"
                )
            vals.append([float(x) for x in items[: len(props)]])
        if len(vals) != count:
            raise SplatParseError(f"expected {count} vertices, found {len(vals)}")
        table = np.asarray(vals)
        rec = np.zeros(count, dtype=[(nm, "<f8") for nm in names])
        for j, nm in enumerate(names):
            rec[nm] = table[:, j]
        return names, rec.dtype, count, rec.tobytes()

    dtype = np.dtype(props)
    needed = dtype.itemsize * count
    if len(body) < needed:
        raise SplatParseError(
            f"vertex data truncated: have {len(body)} bytes, need {needed}",
            offset=end + len(b"end_header\n") + len(body),
        )
    return names, dtype, count, body


def load_point_ply(path) -> PointSet:
    """Read x/y/z (+ optional red/green/blue) vertices into a PointSet."""
    names, dtype, count, body = _parse_ply_header(path)
    for axis in ("x", "y", "z"):
        if axis not in names:
            raise SplatParseError(f"PLY vertex element lacks property {axis!r}")
    rec = np.frombuffer(body, dtype=dtype, count=count)
    points = np.stack(
        [rec["x"].astype(np.float64), rec["y"].astype(np.float64), rec["z"].astype(np.float64)],
        axis=-1,
    )
    colors = None
    if all(c in names for c in ("red", "green", "blue")):
        raw = np.stack([rec["red"], rec["green"], rec["blue"]], axis=-1).astype(np.float64)
        # Integer color types are 0..255; float colors are taken as-is.
        if np.issubdtype(dtype["red"], np.integer):
            raw = raw / 255.0
        colors = np.clip(raw, 0.0, 1.0)
    return PointSet(points, colors)


def save_point_ply(points: PointSet, path, binary: bool = True) -> None:
    """Write a point cloud as PLY (x/y/z float32 + uchar RGB if present)."""
    n = len(points.points)
    has_color = points.colors is not None
    header = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
              f"element vertex {n}",
              "property float x", "property float y", "property float z"]
    if has_color:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header += ["end_header"]
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
            if has_color:
                fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
            rec = np.zeros(n, dtype=fields)
            rec["x"], rec["y"], rec["z"] = points.points.T.astype(np.float32)
            if has_color:
                rgb = np.clip(points.colors * 255.0 + 0.5, 0, 255).astype(np.uint8)
                rec["red"], rec["green"], rec["blue"] = rgb.T
            f.write(rec.tobytes())
        else:
            for i in range(n):
                row = " ".join(f"{v:.9g}" for v in points.points[i])
                if has_color:
                    rgb = np.clip(points.colors[i] * 255.0 + 0.5, 0, 255).astype(int)
                    row += " " + " ".join(str(v) for v in rgb)
                f.write((row + "\n").encode("ascii"))


# ---------------------------------------------------------------------------
# Image and float-plane formats

def save_png(rgb: np.ndarray, path) -> None:
    """8-bit PNG from a float (H, W, 3) image in [0, 1]."""
    data = np.clip(rgb * 255.0 + 0.5, 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format="PNG")


def load_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def save_depth(depth: np.ndarray, path) -> None:
    h, w = depth.shape
    with open(path, "wb") as f:
        f.write(DEPTH_MAGIC)
        f.write(struct.pack("<III", 1, w, h))
        f.write(np.ascontiguousarray(depth, dtype="<f4").tobytes())


def load_depth(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != DEPTH_MAGIC:
        raise SplatParseError("bad magic, not a depth file", offset=0)
    _, w, h = struct.unpack_from("<III", data, 8)
    need = 20 + 4 * w * h
    if len(data) < need:
        raise SplatParseError("depth data truncated", offset=len(data))
    return np.frombuffer(data, dtype="<f4", count=w * h, offset=20).reshape(h, w).astype(np.float64)


def save_scene_coords(coords: np.ndarray, valid: np.ndarray, path) -> None:
    """Three float32 planes (x, y, z) plus a u8 validity plane."""
    h, w, _ = coords.shape
    with open(path, "wb") as f:
        f.write(COORD_MAGIC)
        f.write(struct.pack("<III", 1, w, h))
        for i in range(3):
            f.write(np.ascontiguousarray(coords[..., i], dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(valid, dtype="u1").tobytes())


def load_scene_coords(path):
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != COORD_MAGIC:
        raise SplatParseError("bad magic, not a scene-coordinate file", offset=0)
    _, w, h = struct.unpack_from("<III", data, 8)
    plane = w * h
    need = 20 + 3 * 4 * plane + plane
    if len(data) < need:
        raise SplatParseError("scene-coordinate data truncated", offset=len(data))
    coords = np.stack(
        [
            np.frombuffer(data, dtype="<f4", count=plane, offset=20 + 4 * plane * i).reshape(h, w)
            for i in range(3)
        ],
        axis=-1,
    ).astype(np.float64)
    valid = (
        np.frombuffer(data, dtype="u1", count=plane, offset=20 + 12 * plane)
        .reshape(h, w)
        .astype(bool)
    )
    return coords, valid
