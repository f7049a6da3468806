"""File formats.

RasterFile (little-endian)::

    offset  size  field
    0       4     magic b"BONU"
    4       1     version (1)
    5       1     dtype: 0 = float32, 1 = uint16, 2 = uint8
    6       4     height (u32)
    10      4     width (u32)
    14      ...   row-major payload, height * width * itemsize bytes

Tri-state masks travel as float32 rasters (-1 ignore, 0 background, id).

Pairs file (little-endian)::

    0   4   magic b"BNPR"
    4   1   version (1)
    5   4   height (u32)
    9   4   width (u32)
    13  8   pair count (u64)
    21  ... count records of (a_row u32, a_col u32, b_row u32, b_col u32,
            label i8, subset i8)

Points are CSV with a ``row,col`` or ``row,col,score`` header.
"""

from __future__ import annotations

import csv
import io
import struct
from typing import Optional

import numpy as np
from PIL import Image

from .affinity import AffinityPairs
from .config import DataError
from .raster import PointSet

RASTER_MAGIC = b"BONU"
PAIRS_MAGIC = b"BNPR"
VERSION = 1
_HEADER = struct.Struct("<4sBBII")
_PAIRS_HEADER = struct.Struct("<4sBIIQ")
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<u2"), 2: np.dtype("u1")}
_PAIR_RECORD = np.dtype([("ar", "<u4"), ("ac", "<u4"), ("br", "<u4"), ("bc", "<u4"),
                         ("label", "i1"), ("subset", "i1")])


def _dtype_code(arr: np.ndarray) -> int:
    if arr.dtype.kind == "f":
        return 0
    if arr.dtype.kind == "b" or arr.dtype == np.uint8:
        return 2
    if arr.dtype.kind in "iu":
        if arr.size and (arr.min() < 0 or arr.max() > 0xFFFF):
            raise DataError(f"integer raster values outside the uint16 range [{arr.min()}, {arr.max()}]")
        return 1
    raise DataError(f"cannot store dtype {arr.dtype} in a raster file")


def encode_raster(arr: np.ndarray, dtype: Optional[int] = None) -> bytes:
    arr = np.asarray(arr)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DataError(f"raster must be a non-empty 2-D array, got shape {arr.shape}")
    code = _dtype_code(arr) if dtype is None else dtype
    payload = np.ascontiguousarray(arr.astype(_DTYPES[code], copy=False)).tobytes()
    return _HEADER.pack(RASTER_MAGIC, VERSION, code, arr.shape[0], arr.shape[1]) + payload


def decode_raster(buf: bytes, name: str = "<raster>") -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise DataError(f"{name}: truncated header, {len(buf)} of {_HEADER.size} bytes")
    magic, version, code, h, w = _HEADER.unpack_from(buf)
    if magic != RASTER_MAGIC:
        raise DataError(f"{name}: bad magic {magic!r} at byte 0")
    if version != VERSION:
        raise DataError(f"{name}: unsupported version {version} at byte 4")
    if code not in _DTYPES:
        raise DataError(f"{name}: unknown dtype code {code} at byte 5")
    if h < 1 or w < 1:
        raise DataError(f"{name}: empty raster {h}x{w} declared at byte 6")
    need = h * w * _DTYPES[code].itemsize
    have = len(buf) - _HEADER.size
    if have != need:
        raise DataError(f"{name}: payload at byte {_HEADER.size} holds {have} bytes, expected {need}")
    arr = np.frombuffer(buf, dtype=_DTYPES[code], offset=_HEADER.size).reshape(h, w)
    return arr.astype(arr.dtype.newbyteorder("="))


def write_raster(path: str, arr: np.ndarray, dtype: Optional[int] = None) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_raster(arr, dtype))


def read_raster(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_raster(fh.read(), path)


def read_points(path: str, height: Optional[int] = None, width: Optional[int] = None) -> PointSet:
    """Parse a points CSV, reporting problems with their line numbers."""
    with open(path, newline="") as fh:
        text = fh.read()
    return parse_points(text, height, width, name=path)


def parse_points(text: str, height: Optional[int] = None, width: Optional[int] = None,
                 name: str = "<points>") -> PointSet:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise DataError(f"{name}: line 1: missing header")
    header = [h.strip() for h in rows[0]]
    if header not in (["row", "col"], ["row", "col", "score"]):
        raise DataError(f"{name}: line 1: header must be 'row,col' or 'row,col,score', got {','.join(header)!r}")
    has_score = len(header) == 3
    coords, scores = [], []
    seen = {}
    for lineno, rec in enumerate(rows[1:], start=2):
        if not rec or all(not f.strip() for f in rec):
            continue
        if len(rec) != len(header):
            raise DataError(f"{name}: line {lineno}: expected {len(header)} fields, got {len(rec)}")
        try:
            r, c = int(rec[0]), int(rec[1])
            s = float(rec[2]) if has_score else None
        except ValueError:
            raise DataError(f"{name}: line {lineno}: cannot parse {','.join(rec)!r}") from None
        if r < 0 or c < 0 or (height is not None and r >= height) or (width is not None and c >= width):
            raise DataError(f"{name}: line {lineno}: point ({r},{c}) out of bounds")
        if (r, c) in seen:
            raise DataError(f"{name}: line {lineno}: duplicate of point on line {seen[(r, c)]}")
        seen[(r, c)] = lineno
        coords.append((r, c))
        scores.append(s)
    arr = np.array(coords, dtype=np.int64).reshape(-1, 2)
    return PointSet(arr, np.array(scores, dtype=np.float64) if has_score else None)


def format_points(points: PointSet) -> str:
    buf = io.StringIO()
    if points.scores is None:
        buf.write("row,col\n")
        for r, c in points.coords:
            buf.write(f"{r},{c}\n")
    else:
        buf.write("row,col,score\n")
        for (r, c), s in zip(points.coords, points.scores):
            buf.write(f"{r},{c},{float(s)!r}\n")
    return buf.getvalue()


def write_points(path: str, points: PointSet) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_points(points))


def encode_pairs(pairs: AffinityPairs) -> bytes:
    h, w = pairs.shape
    rec = np.empty(len(pairs), dtype=_PAIR_RECORD)
    a, b = pairs.a_rc, pairs.b_rc
    rec["ar"], rec["ac"] = a[:, 0], a[:, 1]
    rec["br"], rec["bc"] = b[:, 0], b[:, 1]
    rec["label"] = pairs.label
    rec["subset"] = pairs.subset
    return _PAIRS_HEADER.pack(PAIRS_MAGIC, VERSION, h, w, len(pairs)) + rec.tobytes()


def decode_pairs(buf: bytes, name: str = "<pairs>") -> AffinityPairs:
    if len(buf) < _PAIRS_HEADER.size:
        raise DataError(f"{name}: truncated header, {len(buf)} of {_PAIRS_HEADER.size} bytes")
    magic, version, h, w, n = _PAIRS_HEADER.unpack_from(buf)
    if magic != PAIRS_MAGIC:
        raise DataError(f"{name}: bad magic {magic!r} at byte 0")
    if version != VERSION:
        raise DataError(f"{name}: unsupported version {version} at byte 4")
    need = n * _PAIR_RECORD.itemsize
    have = len(buf) - _PAIRS_HEADER.size
    if have != need:
        raise DataError(f"{name}: payload at byte {_PAIRS_HEADER.size} holds {have} bytes, expected {need}")
    rec = np.frombuffer(buf, dtype=_PAIR_RECORD, offset=_PAIRS_HEADER.size)
    bad = ((rec["ar"] >= h) | (rec["br"] >= h) | (rec["ac"] >= w) | (rec["bc"] >= w)
           | (rec["label"] < -1) | (rec["label"] > 1) | (rec["subset"] < -1) | (rec["subset"] > 3))
    if bad.any():
        k = int(np.argmax(bad))
        raise DataError(f"{name}: invalid pair record {k} at byte {_PAIRS_HEADER.size + k * _PAIR_RECORD.itemsize}")
    a = np.stack([rec["ar"], rec["ac"]], axis=1).astype(np.int64)
    b = np.stack([rec["br"], rec["bc"]], axis=1).astype(np.int64)
    return AffinityPairs.from_coords((h, w), a, b, rec["label"], rec["subset"])


def write_pairs(path: str, pairs: AffinityPairs) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pairs(pairs))


def read_pairs(path: str) -> AffinityPairs:
    with open(path, "rb") as fh:
        return decode_pairs(fh.read(), path)


def read_image(path: str) -> np.ndarray:
    """8-bit RGB image as an ``HxWx3`` uint8 array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def write_instance_png(path: str, inst: np.ndarray) -> None:
    """Instance map as a 16-bit grayscale PNG (gray value = id)."""
    inst = np.asarray(inst)
    if inst.size and (inst.min() < 0 or inst.max() > 0xFFFF):
        raise DataError("instance ids must fit in 16 bits")
    Image.fromarray(inst.astype(np.uint16)).save(path, format="PNG")


def read_instance_png(path: str) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im).astype(np.int32)


def load_raster(path: str) -> np.ndarray:
    """RasterFile or grayscale PNG, chosen by extension."""
    if path.lower().endswith(".png"):
        return read_instance_png(path)
    return read_raster(path)


def save_raster(path: str, arr: np.ndarray, dtype: Optional[int] = None) -> None:
    if path.lower().endswith(".png"):
        write_instance_png(path, arr)
    else:
        write_raster(path, arr, dtype)
