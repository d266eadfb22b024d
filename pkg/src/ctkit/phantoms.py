"""Synthetic phantom and dataset generation.

Phantoms emulate the HTC-2022 teaching data: a constant-valued disc at a
jittered center with a few disjoint rectangular or elliptical holes carved
out.  Edges are antialiased by 4x4 supersampling.  Everything is deterministic
per seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import raster
from .extrapolation import KnownMask
from .geometry import FanGeometry, ImageGrid
from .projector import Image, forward_project

SUPERSAMPLE = 4


@dataclass(frozen=True)
class PhantomSpec:
    disc_value: float = 1.0
    disc_radius_range: tuple = (0.7, 0.9)     # fraction of fov radius
    center_jitter: float = 0.05               # fraction of fov radius
    hole_count_range: tuple = (1, 4)
    hole_size_range: tuple = (0.05, 0.3)      # fraction of disc radius
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.disc_value <= 0:
            raise ValueError("disc_value must be positive")
        lo, hi = self.hole_count_range
        if lo < 0 or hi < lo:
            raise ValueError("bad hole_count_range")

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["disc_radius_range"] = list(self.disc_radius_range)
        d["hole_count_range"] = list(self.hole_count_range)
        d["hole_size_range"] = list(self.hole_size_range)
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "PhantomSpec":
        return cls(
            disc_value=float(d["disc_value"]),
            disc_radius_range=tuple(d["disc_radius_range"]),
            center_jitter=float(d["center_jitter"]),
            hole_count_range=tuple(d["hole_count_range"]),
            hole_size_range=tuple(d["hole_size_range"]),
            noise_sigma=float(d.get("noise_sigma", 0.0)),
        )


def _hole_inside(hole, hx, hy, rot, X, Y) -> np.ndarray:
    ca, sa = np.cos(rot), np.sin(rot)
    dx = X - hx
    dy = Y - hy
    lx = ca * dx + sa * dy
    ly = -sa * dx + ca * dy
    kind, a, b = hole
    if kind == "rectangle":
        return (np.abs(lx) <= a) & (np.abs(ly) <= b)
    return (lx / a) ** 2 + (ly / b) ** 2 <= 1.0


def generate_phantom(spec: PhantomSpec, seed: int, grid: ImageGrid,
                     fov_radius: float):
    """One phantom image plus its construction segmentation (material mask).

    Holes are rejected until they fall strictly inside the disc and are
    pairwise disjoint; after 1000 failed draws an error is raised.
    """
    rng = np.random.default_rng(seed)
    r_disc = rng.uniform(*spec.disc_radius_range) * fov_radius
    jr = spec.center_jitter * fov_radius * np.sqrt(rng.uniform())
    ja = rng.uniform(0, 2 * np.pi)
    cx, cy = jr * np.cos(ja), jr * np.sin(ja)

    n_holes = int(rng.integers(spec.hole_count_range[0], spec.hole_count_range[1] + 1))
    holes = []  # (kind, half_a, half_b, hx, hy, rot, bound_radius)
    tries = 0
    while len(holes) < n_holes:
        tries += 1
        if tries > 1000:
            raise RuntimeError(f"hole placement failed after 1000 tries (seed {seed})")
        kind = "rectangle" if rng.uniform() < 0.5 else "ellipse"
        a = rng.uniform(*spec.hole_size_range) * r_disc
        b = rng.uniform(*spec.hole_size_range) * r_disc
        rot = rng.uniform(0, 2 * np.pi)
        bound = np.hypot(a, b) if kind == "rectangle" else max(a, b)
        rad = rng.uniform(0, max(r_disc - bound - 0.02 * r_disc, 0))
        ang = rng.uniform(0, 2 * np.pi)
        hx, hy = cx + rad * np.cos(ang), cy + rad * np.sin(ang)
        if np.hypot(hx - cx, hy - cy) + bound >= 0.98 * r_disc:
            continue
        if any(np.hypot(hx - ox, hy - oy) < bound + ob
               for _, _, _, ox, oy, _, ob in holes):
            continue
        holes.append((kind, a, b, hx, hy, rot, bound))

    n = grid.side_px
    c = grid.centers()
    sub = (np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE - 0.5
    offs = sub * grid.pixel_size
    occupancy = np.zeros((n, n))
    for oy in offs:
        for ox in offs:
            X, Y = np.meshgrid(c + ox, c + oy)
            inside = (X - cx) ** 2 + (Y - cy) ** 2 <= r_disc ** 2
            for kind, a, b, hx, hy, rot, _ in holes:
                inside &= ~_hole_inside((kind, a, b), hx, hy, rot, X, Y)
            occupancy += inside
    values = spec.disc_value * occupancy / SUPERSAMPLE ** 2
    return Image(grid, values), values > 0


@dataclass
class Sample:
    image: Image
    segmentation: np.ndarray
    sinogram: "np.ndarray"
    mask: KnownMask
    full_sinogram: np.ndarray


def wedge_mask(geom: FanGeometry, span_deg: float, start_row: int) -> KnownMask:
    """Row wedge of angular width span_deg starting at the given angle row."""
    L = geom.n_angles
    width = max(1, int(round(span_deg / 360.0 * L)))
    rows = np.zeros(L, dtype=bool)
    rows[:width] = True
    rows = np.roll(rows, start_row % L)
    m = np.zeros((L, geom.detector_bin_count), dtype=bool)
    m[rows] = True
    return KnownMask(m)


def generate_dataset(spec: PhantomSpec, count: int, geom: FanGeometry,
                     grid: ImageGrid, wedge_deg: float, out_dir,
                     base_seed: int = 0) -> dict:
    """Write `count` samples and a manifest under out_dir.

    Per sample: image, segmentation, masked sinogram, mask, and the full
    sinogram (for extrapolation oracles).  The wedge start angle is drawn
    uniformly per sample, snapped to the angle grid.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for idx in range(count):
        seed = base_seed + idx
        img, seg = generate_phantom(spec, seed, grid, geom.fov_radius)
        full = forward_project(img, geom)
        if spec.noise_sigma > 0:
            noise_rng = np.random.default_rng(seed + 10 ** 9)
            full.values = full.values + noise_rng.normal(
                0, spec.noise_sigma, full.values.shape)
        start = int(np.random.default_rng(seed + 2 * 10 ** 9).integers(0, geom.n_angles))
        mask = wedge_mask(geom, wedge_deg, start)
        masked = np.where(mask.values, full.values, 0.0)
        stem = f"sample_{idx:05d}"
        raster.write(out / f"{stem}.img", img.values)
        raster.write(out / f"{stem}.seg", seg.astype(np.uint8))
        raster.write(out / f"{stem}.sino", masked)
        raster.write(out / f"{stem}.mask", mask.values.astype(np.uint8))
        raster.write(out / f"{stem}.full", full.values)
        entries.append({"stem": stem, "seed": seed, "wedge_start_row": start})
    manifest = {
        "count": count,
        "wedge_deg": wedge_deg,
        "base_seed": base_seed,
        "geometry": geom.to_json_dict(),
        "grid": {"side_px": grid.side_px, "pixel_size": grid.pixel_size},
        "phantom_spec": spec.to_json_dict(),
        "samples": entries,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
    return manifest


def load_manifest(data_dir) -> dict:
    return json.loads((Path(data_dir) / "manifest.json").read_text())


def load_sample(data_dir, stem: str) -> Sample:
    d = Path(data_dir)
    img = raster.read(d / f"{stem}.img")
    seg = raster.read(d / f"{stem}.seg").astype(bool)
    sino = raster.read(d / f"{stem}.sino")
    mask = KnownMask(raster.read(d / f"{stem}.mask").astype(bool))
    full = raster.read(d / f"{stem}.full")
    manifest = load_manifest(data_dir)
    grid = ImageGrid(**manifest["grid"])
    return Sample(Image(grid, img), seg, sino, mask, full)
