"""Portable raster file format: one JSON header line, then raw payload.

Header: UTF-8 JSON object terminated by '\n' with keys
  magic  -- always "ctkit1"
  dtype  -- "f64" | "f32" | "u8"
  shape  -- list of ints
  meta   -- free-form JSON object
Payload: little-endian values, row-major, tightly packed.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

MAGIC = "ctkit1"

_DTYPES = {"f64": "<f8", "f32": "<f4", "u8": "|u1"}
_NAMES = {np.dtype("<f8"): "f64", np.dtype("<f4"): "f32", np.dtype("|u1"): "u8"}


class RasterError(ValueError):
    pass


def dumps_header(arr: np.ndarray, meta: dict | None = None) -> bytes:
    name = _NAMES.get(arr.dtype)
    if name is None:
        raise RasterError(f"unsupported dtype {arr.dtype}; use f64, f32, or u8")
    header = {"magic": MAGIC, "dtype": name, "shape": list(arr.shape), "meta": meta or {}}
    return (json.dumps(header, sort_keys=True) + "\n").encode("utf-8")


def write(path, arr: np.ndarray, meta: dict | None = None) -> None:
    arr = np.ascontiguousarray(arr)
    if arr.dtype == np.bool_:
        arr = arr.astype(np.uint8)
    data = dumps_header(arr, meta) + arr.astype(arr.dtype.newbyteorder("<")).tobytes()
    if str(path) == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
    else:
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
    payload = raw[nl + 1 :]
    expected = int(np.prod(shape)) * np.dtype(dtype).itemsize
    if len(payload) != expected:
        raise RasterError(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}"
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
    if want_meta:
        return arr, header.get("meta", {})
    return arr
