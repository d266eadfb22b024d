"""Ram-Lak filtering along the detector axis and the classical FBP operator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ImageGrid
from .projector import Image, Sinogram, back_project, forward_project


@dataclass(frozen=True)
class FilterSpec:
    cutoff_fraction: float = 1.0
    pad_factor: int = 2

    def __post_init__(self):
        if not (0 < self.cutoff_fraction <= 1):
            raise ValueError("cutoff_fraction must be in (0, 1]")
        if self.pad_factor < 2:
            raise ValueError("pad_factor must be an integer >= 2")

    def to_json_dict(self) -> dict:
        return {"cutoff_fraction": self.cutoff_fraction, "pad_factor": self.pad_factor}

    @classmethod
    def from_json_dict(cls, d: dict) -> "FilterSpec":
        return cls(float(d["cutoff_fraction"]), int(d["pad_factor"]))


def ram_lak(g: Sinogram, spec: FilterSpec = FilterSpec()) -> Sinogram:
    """Frequency-domain ramp filter applied independently to each angle row.

    Each row is zero-padded to pad_factor * U, multiplied by |freq| up to
    cutoff_fraction * Nyquist in the Fourier domain (the zero-frequency bin
    is annihilated exactly), then cropped back.  Zero-padding rather than mean
    subtraction keeps the low-frequency response faithful for compactly
    supported rows; a globally constant row therefore maps to a small edge
    ripple rather than exactly zero.
    """
    if not np.all(np.isfinite(g.values)):
        raise ValueError("non-finite sinogram")
    U = g.geom.detector_bin_count
    if U < 2:
        raise ValueError("need at least 2 detector bins")
    pitch = g.geom.detector_pitch
    npad = spec.pad_factor * U
    spec_rows = np.fft.rfft(g.values, n=npad, axis=1)
    freq = np.fft.rfftfreq(npad, d=pitch)
    nyquist = 1.0 / (2.0 * pitch)
    filt = np.where(freq <= spec.cutoff_fraction * nyquist + 1e-12, np.abs(freq), 0.0)
    filt[0] = 0.0
    filtered = np.fft.irfft(spec_rows * filt, n=npad, axis=1)[:, :U]
    return Sinogram(g.geom, filtered)


def fbp(g: Sinogram, grid: ImageGrid, spec: FilterSpec = FilterSpec(),
        scale: float = 1.0) -> Image:
    """Filtered back-projection: scale * back_project(ram_lak(g)).

    The scale constant absorbs the discretization-dependent normalization; it
    is calibrated once per geometry with calibrate_fbp_scale and then frozen.
    """
    filtered = ram_lak(g, spec)
    img = back_project(filtered, grid)
    return Image(grid, scale * img.values)


def calibrate_fbp_scale(geom, grid: ImageGrid, spec: FilterSpec = FilterSpec()) -> float:
    """FBP scale constant from a unit disc phantom of radius fov/2.

    Forward-projects the disc, reconstructs with scale 1, and returns the
    reciprocal of the mean reconstruction value over the disc interior
    (radius 0.8 * disc radius, avoiding the edge).
    """
    c = grid.centers()
    X, Y = np.meshgrid(c, c)
    r_disc = geom.fov_radius / 2.0
    disc = (X * X + Y * Y <= r_disc ** 2).astype(float)
    sino = forward_project(Image(grid, disc), geom)
    recon = fbp(sino, grid, spec, scale=1.0)
    interior = X * X + Y * Y <= (0.8 * r_disc) ** 2
    mean = recon.values[interior].mean()
    if mean <= 0:
        raise RuntimeError("FBP calibration produced a nonpositive interior mean")
    return 1.0 / mean
