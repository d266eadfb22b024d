"""Discrete fan-beam ray transform, weighted back-projection, and the exact
transpose of the back-projection.

Conventions: an Image stores values[i, j] = f(x = xs[j], y = ys[i]) with both
axes ascending.  A Sinogram stores values[i, j] for angle beta_i and detector
bin u_j.  All accumulation happens in double precision.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .geometry import FanGeometry, ImageGrid, check_grid_covers_fov

# Global operation counters; reconstruct() asserts its single-back-projection
# budget against these.
OP_COUNTS = {"forward_project": 0, "back_project": 0, "back_project_transpose": 0}


@contextmanager
def count_ops():
    """Yields a dict that ends up holding the op counts incurred in the block."""
    before = dict(OP_COUNTS)
    counts: dict[str, int] = {}
    try:
        yield counts
    finally:
        for k in OP_COUNTS:
            counts[k] = OP_COUNTS[k] - before[k]


@dataclass
class Image:
    grid: ImageGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        n = self.grid.side_px
        if self.values.shape != (n, n):
            raise ValueError(f"image shape {self.values.shape} != grid ({n}, {n})")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("image contains non-finite values")


@dataclass
class Sinogram:
    geom: FanGeometry
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        shape = (self.geom.n_angles, self.geom.detector_bin_count)
        if self.values.shape != shape:
            raise ValueError(f"sinogram shape {self.values.shape} != geometry {shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("sinogram contains non-finite values")


def preprocess(intensities_in: np.ndarray, intensities_out: np.ndarray,
               geom: FanGeometry) -> Sinogram:
    """Beer-Lambert log transform: g = -log(I_out / I_in)."""
    i_in = np.asarray(intensities_in, dtype=float)
    i_out = np.asarray(intensities_out, dtype=float)
    if i_in.shape != i_out.shape:
        raise ValueError("intensity arrays must share a shape")
    for name, arr in (("I_in", i_in), ("I_out", i_out)):
        bad = np.argwhere(~(arr > 0))
        if bad.size:
            i, j = bad[0]
            raise ValueError(f"{name} must be strictly positive; first offender at "
                             f"angle {i}, bin {j}: {arr[i, j]}")
    return Sinogram(geom, -np.log(i_out / i_in))


def _bilinear_gather(values: np.ndarray, grid: ImageGrid,
                     px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Sample an image at physical points; zero outside the grid."""
    n = grid.side_px
    origin = -(n - 1) / 2.0 * grid.pixel_size
    fx = (px - origin) / grid.pixel_size
    fy = (py - origin) / grid.pixel_size
    jx = np.floor(fx).astype(np.int64)
    jy = np.floor(fy).astype(np.int64)
    valid = (jx >= 0) & (jx <= n - 2) & (jy >= 0) & (jy <= n - 2)
    jxc = np.clip(jx, 0, n - 2)
    jyc = np.clip(jy, 0, n - 2)
    wx = fx - jxc
    wy = fy - jyc
    v00 = values[jyc, jxc]
    v01 = values[jyc, jxc + 1]
    v10 = values[jyc + 1, jxc]
    v11 = values[jyc + 1, jxc + 1]
    out = (v00 * (1 - wx) * (1 - wy) + v01 * wx * (1 - wy)
           + v10 * (1 - wx) * wy + v11 * wx * wy)
    out[~valid] = 0.0
    return out


def forward_project(f: Image, geom: FanGeometry) -> Sinogram:
    """Arclength line integrals of f over every (beta_i, u_j) ray.

    Samples f along each ray with step pixel_size/2 and bilinear interpolation;
    the chord parameterization has constant speed, so sum * step approximates
    the arclength integral directly.
    """
    check_grid_covers_fov(f.grid, geom)
    grid = f.grid
    R = geom.source_radius
    us = geom.detector_us()
    betas = geom.angles
    step = grid.pixel_size / 2.0
    # circumscribed circle of the pixel grid; rays are sampled only inside it
    r_grid = grid.half_width * np.sqrt(2.0)
    n_steps = int(np.ceil(2 * r_grid / step))
    k = (np.arange(n_steps) + 0.5) * step  # offsets from the entry point

    ray_len = np.sqrt(us * us + R * R)                      # (U,)
    out = np.empty((betas.size, us.size))
    for i, beta in enumerate(betas):
        sx, sy = R * np.cos(beta), R * np.sin(beta)
        dx = (us * np.sin(beta) - sx) / ray_len             # unit direction
        dy = (-us * np.cos(beta) - sy) / ray_len
        # parameter of the closest point to the origin along each ray
        t_mid = -(sx * dx + sy * dy)
        t0 = t_mid - r_grid
        px = sx + np.outer(dx, k) + dx[:, None] * t0[:, None]
        py = sy + np.outer(dy, k) + dy[:, None] * t0[:, None]
        vals = _bilinear_gather(f.values, grid, px, py)
        out[i] = vals.sum(axis=1) * step
    OP_COUNTS["forward_project"] += 1
    return Sinogram(geom, out)


def _bp_angle_terms(geom: FanGeometry, grid: ImageGrid, beta: float):
    """Per-pixel detector coordinate, weight, and interpolation indices for one
    source angle of the weighted fan-beam back-projection."""
    c = grid.centers()
    X, Y = np.meshgrid(c, c)               # X[i, j] = xs[j], Y[i, j] = ys[i]
    R = geom.source_radius
    num = X * np.sin(beta) - Y * np.cos(beta)
    den = R - X * np.cos(beta) - Y * np.sin(beta)
    u_arg = R * num / den
    weight = R * np.sqrt(num * num + den * den) / (den * den)
    us = geom.detector_us()
    t = (u_arg - us[0]) / geom.detector_pitch
    j0 = np.floor(t).astype(np.int64)
    frac = t - j0
    inside = (j0 >= 0) & (j0 <= us.size - 2)
    fov = X * X + Y * Y <= geom.fov_radius ** 2
    valid = inside & fov
    j0 = np.clip(j0, 0, us.size - 2)
    return j0, frac, weight, valid


def back_project(g: Sinogram, grid: ImageGrid) -> Image:
    """Weighted fan-beam back-projection onto pixel centers.

    Pixel-driven: each pixel samples every angle's row by linear interpolation
    in u, multiplied by the geometry weight and the angular quadrature weight;
    the 1/(2*pi) normalization of the continuum formula is kept.  Pixels
    outside the field of view are zero; rays outside the detector contribute 0.
    """
    geom = g.geom
    acc = np.zeros((grid.side_px, grid.side_px))
    w_ang = geom.angle_weights()
    for i, beta in enumerate(geom.angles):
        j0, frac, weight, valid = _bp_angle_terms(geom, grid, beta)
        row = g.values[i]
        interp = row[j0] * (1 - frac) + row[j0 + 1] * frac
        acc += np.where(valid, w_ang[i] * weight * interp, 0.0)
    OP_COUNTS["back_project"] += 1
    return Image(grid, acc / (2 * np.pi))


def back_project_transpose(x: Image, geom: FanGeometry) -> Sinogram:
    """Exact discrete transpose of back_project on the same grid.

    Scatters each pixel's contribution back to its two detector bins with the
    same interpolation weights, so <back_project(g), x> == <g, transpose(x)>.
    """
    grid = x.grid
    U = geom.detector_bin_count
    out = np.zeros((geom.n_angles, U))
    w_ang = geom.angle_weights()
    xv = x.values
    for i, beta in enumerate(geom.angles):
        j0, frac, weight, valid = _bp_angle_terms(geom, grid, beta)
        contrib = np.where(valid, w_ang[i] * weight * xv, 0.0).ravel()
        j0f = j0.ravel()
        fr = frac.ravel()
        out[i] = (np.bincount(j0f, weights=contrib * (1 - fr), minlength=U)
                  + np.bincount(j0f + 1, weights=contrib * fr, minlength=U))
    OP_COUNTS["back_project_transpose"] += 1
    return Sinogram(geom, out / (2 * np.pi))
