"""End-to-end learned reconstruction operator and its loss gradient.

Pipeline: extrapolate the limited sinogram to a range-consistent full scan,
then back-project the sum of the Ram-Lak-filtered sinogram and the network's
learned correction, then ReLU.  One back-projection, no forward projections.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import raster
from .extrapolation import BasisSpec, Extrapolator, KnownMask
from .filtering import FilterSpec, ram_lak
from .fno import FnoParams, N_HIDDEN_LAYERS, fno_backward, fno_forward
from .geometry import FanGeometry, ImageGrid
from .projector import Image, Sinogram, back_project, back_project_transpose

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class FnoBpModel:
    geom: FanGeometry
    grid: ImageGrid
    extrapolator: Extrapolator
    filter_spec: FilterSpec
    fno: FnoParams
    fbp_scale: float

    def __post_init__(self):
        if self.fno.angle_count != self.geom.n_angles:
            raise ValueError("FNO channel count must equal the geometry's angle count")


def _forward_parts(g_limited: Sinogram, mask: KnownMask, m: FnoBpModel):
    g_full = m.extrapolator.extrapolate(g_limited, mask)
    filtered = ram_lak(g_full, m.filter_spec)
    correction, tape = fno_forward(g_full, m.fno)
    combined = Sinogram(m.geom, filtered.values + correction.values)
    pre = back_project(combined, m.grid)
    pre_relu = m.fbp_scale * pre.values
    return g_full, tape, pre_relu


def reconstruct(g_limited: Sinogram, mask: KnownMask, m: FnoBpModel) -> Image:
    """Nonnegative reconstruction; exactly one back-projection per call."""
    _, _, pre_relu = _forward_parts(g_limited, mask, m)
    return Image(m.grid, np.maximum(pre_relu, 0.0))


def loss(pred: Image, target: Image) -> float:
    """Mean squared error over pixels."""
    if pred.values.shape != target.values.shape:
        raise ValueError("image shapes differ")
    d = pred.values - target.values
    return float(np.mean(d * d))


def loss_gradient(g_limited: Sinogram, mask: KnownMask, target: Image,
                  m: FnoBpModel):
    """MSE loss and its gradient with respect to the FNO parameters.

    Chain: MSE adjoint -> ReLU mask (subgradient 0 at 0) -> scale ->
    back-projection transpose -> FNO backward.  The extrapolation and Ram-Lak
    branches carry no trainable parameters.
    """
    _, tape, pre_relu = _forward_parts(g_limited, mask, m)
    pred = np.maximum(pre_relu, 0.0)
    diff = pred - target.values
    value = float(np.mean(diff * diff))
    up_img = (2.0 / diff.size) * diff * (pre_relu > 0.0) * m.fbp_scale
    up_sino = back_project_transpose(Image(m.grid, up_img), m.geom)
    grads, _ = fno_backward(tape, up_sino.values, m.fno)
    return value, grads


def save_checkpoint(path, m: FnoBpModel, extra_meta: dict | None = None) -> None:
    """Model bundle: parameter rasters, geometry JSON, filter spec, scale."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    tensors = m.fno.tensors()
    layers = []
    for name, arr in tensors.items():
        if np.iscomplexobj(arr):
            raster.write(path / f"{name}.re", np.ascontiguousarray(arr.real))
            raster.write(path / f"{name}.im", np.ascontiguousarray(arr.imag))
            layers.append({"name": name, "complex": True, "shape": list(arr.shape)})
        else:
            raster.write(path / name, arr)
            layers.append({"name": name, "complex": False, "shape": list(arr.shape)})
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "L": m.fno.angle_count,
        "C": m.fno.channel_count,
        "M": m.fno.mode_count,
        "layers": layers,
        "fbp_scale": m.fbp_scale,
        "filter": m.filter_spec.to_json_dict(),
        "basis": m.extrapolator.spec.to_json_dict(),
        "ridge_lambda": m.extrapolator.lam,
        "grid": {"side_px": m.grid.side_px, "pixel_size": m.grid.pixel_size},
    }
    manifest.update(extra_meta or {})
    (path / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
    (path / "geometry.json").write_text(m.geom.dumps())


def load_checkpoint(path, cache_dir=None) -> tuple[FnoBpModel, dict]:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    if manifest["format_version"] != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {manifest['format_version']}")
    geom = FanGeometry.loads((path / "geometry.json").read_text())
    tensors = {}
    for layer in manifest["layers"]:
        name = layer["name"]
        if layer["complex"]:
            tensors[name] = raster.read(path / f"{name}.re") + 1j * raster.read(path / f"{name}.im")
        else:
            tensors[name] = raster.read(path / name)
    fno = FnoParams(
        tensors["lifting"],
        [tensors[f"spectral{i}"] for i in range(N_HIDDEN_LAYERS)],
        [tensors[f"skip{i}"] for i in range(N_HIDDEN_LAYERS)],
        tensors["projection"],
    )
    grid = ImageGrid(manifest["grid"]["side_px"], manifest["grid"]["pixel_size"])
    extrap = Extrapolator(geom, BasisSpec.from_json_dict(manifest["basis"]),
                          lam=manifest["ridge_lambda"], cache_dir=cache_dir)
    m = FnoBpModel(geom, grid, extrap,
                   FilterSpec.from_json_dict(manifest["filter"]), fno,
                   float(manifest["fbp_scale"]))
    return m, manifest
