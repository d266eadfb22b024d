"""Portable raster files: one JSON header line, then a raw payload.

This is an independent implementation of the documented interchange format
(the reconstruction toolkit ships its own): the header is a UTF-8 JSON object
terminated by '\n' with keys magic ("ctkit1"), dtype ("f64" | "f32" | "u8"),
shape (list of ints), and meta (free-form object); the payload holds the
values little-endian, row-major, tightly packed.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = "ctkit1"

_DTYPES = {"f64": "<f8", "f32": "<f4", "u8": "|u1"}
_NAMES = {np.dtype("<f8"): "f64", np.dtype("<f4"): "f32", np.dtype("|u1"): "u8"}


class RasterError(ValueError):
    pass


def write(path, arr: np.ndarray, meta: dict | None = None) -> None:
    arr = np.ascontiguousarray(arr)
    if arr.dtype == np.bool_:
        arr = arr.astype(np.uint8)
    name = _NAMES.get(arr.dtype)
    if name is None:
        raise RasterError(f"unsupported dtype {arr.dtype}; use f64, f32, or u8")
    header = {"magic": MAGIC, "dtype": name, "shape": list(arr.shape),
              "meta": meta or {}}
    data = (json.dumps(header, sort_keys=True) + "\n").encode("utf-8")
    data += arr.astype(arr.dtype.newbyteorder("<")).tobytes()
    Path(path).write_bytes(data)


def read(path, want_meta: bool = False):
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise RasterError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise RasterError(f"{path}: bad header: {e}") from e
    if header.get("magic") != MAGIC:
        raise RasterError(f"{path}: bad magic {header.get('magic')!r}")
    dtype = _DTYPES.get(header.get("dtype"))
    if dtype is None:
        raise RasterError(f"{path}: unknown dtype {header.get('dtype')!r}")
    shape = tuple(int(x) for x in header["shape"])
    payload = raw[nl + 1:]
    expected = int(np.prod(shape)) * np.dtype(dtype).itemsize
    if len(payload) != expected:
        raise RasterError(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}")
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
    if want_meta:
        return arr, header.get("meta", {})
    return arr
