"""Binary and text file formats.

HGT1
    8-byte magic ``b"HGT1\\n   "``, six little-endian float64 header fields
    ``(rows, cols, mpp, x_min, y_min, nodata)``, then ``rows*cols`` little-endian
    float32 values, row-major. No-data cells hold the sentinel; with a NaN
    sentinel they hold the float32 bit pattern ``0x7FC00000``.
PRM1
    8-byte magic ``b"PRM1\\n   "``, float64 header ``(C, A)``, then the ``C x A``
    weight matrix and the ``A`` bias, float64 little-endian.
Pose file
    One frame per line: 12 whitespace-separated decimals, row-major 3x4
    ``[R|t]``. ``#`` starts a comment.
PGM
    Binary P5, maxval 255; 255 = ground, 0 = non-ground.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError
from .geometry import RigidTransform
from .heightgrid import BevGrid, HeightMap

HGT_MAGIC = b"HGT1\n   "
PRM_MAGIC = b"PRM1\n   "
_NAN32 = np.array([0x7FC00000], dtype="<u4").view("<f4")[0]


def _check_magic(blob: bytes, magic: bytes, path) -> None:
    if blob[: len(magic)] != magic:
        raise FormatError(f"{path}: bad magic {blob[:len(magic)]!r}, expected {magic!r}")


def write_hgt(path, values: np.ndarray, mpp: float = 0.0, x_min: float = 0.0, y_min: float = 0.0,
              nodata: float = math.nan) -> None:
    vals = np.asarray(values, dtype=np.float64)
    if vals.ndim != 2:
        raise ValueError("HGT1 payload must be 2-D")
    rows, cols = vals.shape
    out = vals.astype("<f4")
    bad = ~np.isfinite(vals)
    out[bad] = _NAN32 if math.isnan(nodata) else np.float32(nodata)
    header = struct.pack("<6d", rows, cols, mpp, x_min, y_min, nodata)
    Path(path).write_bytes(HGT_MAGIC + header + out.tobytes())


def read_hgt(path) -> tuple[np.ndarray, dict]:
    """Read an HGT1 file; no-data cells come back as NaN (float64)."""
    blob = Path(path).read_bytes()
    _check_magic(blob, HGT_MAGIC, path)
    if len(blob) < 56:
        raise FormatError(f"{path}: truncated header")
    rows, cols, mpp, x_min, y_min, nodata = struct.unpack("<6d", blob[8:56])
    if not (rows >= 1 and cols >= 1 and rows == int(rows) and cols == int(cols)):
        raise FormatError(f"{path}: invalid dimensions {rows} x {cols}")
    rows, cols = int(rows), int(cols)
    if len(blob) != 56 + 4 * rows * cols:
        raise FormatError(f"{path}: payload length {len(blob) - 56} does not match {rows} x {cols}")
    vals = np.frombuffer(blob, dtype="<f4", offset=56).astype(np.float64).reshape(rows, cols)
    if not math.isnan(nodata):
        vals[vals == np.float32(nodata)] = np.nan
    vals[~np.isfinite(vals)] = np.nan
    return vals, {"rows": rows, "cols": cols, "mpp": mpp, "x_min": x_min, "y_min": y_min, "nodata": nodata}


def save_heightmap(path, hm: HeightMap) -> None:
    g = hm.grid
    write_hgt(path, hm.values, g.meters_per_pixel, g.x_min, g.y_min)


def load_heightmap(path) -> HeightMap:
    vals, hdr = read_hgt(path)
    try:
        grid = BevGrid(hdr["rows"], hdr["cols"], hdr["mpp"], hdr["x_min"], hdr["y_min"])
        return HeightMap(grid, vals)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def save_feature_grid(path, values: np.ndarray) -> None:
    """``(H, W, C)`` features as ``C`` stacked planes; the mpp field holds ``C``."""
    v = np.asarray(values, dtype=np.float64)
    H, W, C = v.shape
    write_hgt(path, v.transpose(2, 0, 1).reshape(C * H, W), mpp=float(C))


def load_feature_grid(path) -> np.ndarray:
    vals, hdr = read_hgt(path)
    C = hdr["mpp"]
    if not (C >= 1 and C == int(C) and hdr["rows"] % int(C) == 0):
        raise FormatError(f"{path}: channel count {C} inconsistent with {hdr['rows']} rows")
    C = int(C)
    return vals.reshape(C, hdr["rows"] // C, hdr["cols"]).transpose(1, 2, 0).copy()


def save_params(path, weight: np.ndarray, bias: np.ndarray) -> None:
    w = np.asarray(weight, dtype="<f8")
    b = np.asarray(bias, dtype="<f8")
    C, A = w.shape
    if b.shape != (A,):
        raise ValueError("bias length must equal anchor count")
    Path(path).write_bytes(PRM_MAGIC + struct.pack("<2d", C, A) + w.tobytes() + b.tobytes())


def load_params(path) -> tuple[np.ndarray, np.ndarray]:
    blob = Path(path).read_bytes()
    _check_magic(blob, PRM_MAGIC, path)
    if len(blob) < 24:
        raise FormatError(f"{path}: truncated header")
    C, A = struct.unpack("<2d", blob[8:24])
    if not (C >= 1 and A >= 1 and C == int(C) and A == int(A)):
        raise FormatError(f"{path}: invalid dimensions")
    C, A = int(C), int(A)
    if len(blob) != 24 + 8 * (C * A + A):
        raise FormatError(f"{path}: payload length mismatch")
    data = np.frombuffer(blob, dtype="<f8", offset=24).astype(np.float64)
    return data[: C * A].reshape(C, A).copy(), data[C * A:].copy()


def format_pose_line(t: RigidTransform) -> str:
    M = np.hstack([t.rotation, t.translation[:, None]])
    return " ".join(repr(float(x)) for x in M.ravel())


def write_poses(path, poses: Sequence[RigidTransform], comment: str | None = None) -> None:
    lines = [f"# {comment}"] if comment else []
    lines += [format_pose_line(p) for p in poses]
    Path(path).write_text("\n".join(lines) + "\n")


def read_poses(path) -> list[RigidTransform]:
    poses = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 12:
            raise FormatError(f"{path}:{lineno}: expected 12 numbers, got {len(parts)}")
        try:
            M = np.array([float(p) for p in parts]).reshape(3, 4)
            poses.append(RigidTransform.from_matrix(M, reorthonormalize=True))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return poses


def write_pgm(path, mask: np.ndarray) -> None:
    m = np.asarray(mask)
    H, W = m.shape
    data = np.where(m > 0, 255, 0).astype(np.uint8)
    Path(path).write_bytes(f"P5\n{W} {H}\n255\n".encode("ascii") + data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM ground mask -> ``uint8`` array of 0/1."""
    blob = Path(path).read_bytes()
    if blob[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        tokens.append(blob[start:pos])
    pos += 1  # single whitespace before raster
    try:
        W, H, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise FormatError(f"{path}: bad PGM header") from exc
    if maxval != 255:
        raise FormatError(f"{path}: maxval must be 255")
    data = np.frombuffer(blob, dtype=np.uint8, offset=pos)
    if data.size != W * H:
        raise FormatError(f"{path}: raster length {data.size} != {W * H}")
    if not np.all((data == 0) | (data == 255)):
        raise FormatError(f"{path}: ground mask pixels must be 0 or 255")
    return (data.reshape(H, W) == 255).astype(np.uint8)


def dump_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc
