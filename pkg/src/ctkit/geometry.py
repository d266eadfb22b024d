"""Acquisition geometry, image grid, and parallel/fan-beam coordinate maps.

Lines are parameterized two ways.  Parallel coordinates (theta, s): the line
through (s cos(theta), s sin(theta)) perpendicular to (cos(theta), sin(theta)).
Fan coordinates (beta, u): the line from the source at (R cos(beta), R sin(beta))
to the point u on a virtual flat detector through the rotation center.

All angles are radians internally; degrees exist only at the CLI boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class ParallelCoords(NamedTuple):
    theta: np.ndarray | float
    s: np.ndarray | float


class FanCoords(NamedTuple):
    beta: np.ndarray | float
    u: np.ndarray | float


@dataclass(frozen=True)
class ImageGrid:
    """Square raster centered at the rotation center."""

    side_px: int
    pixel_size: float

    def __post_init__(self):
        if self.side_px <= 0:
            raise ValueError("side_px must be positive")
        if self.pixel_size <= 0:
            raise ValueError("pixel_size must be positive")

    @property
    def half_width(self) -> float:
        return self.side_px * self.pixel_size / 2.0

    def centers(self) -> np.ndarray:
        """Pixel center coordinates along one axis, ascending."""
        n = self.side_px
        return (np.arange(n) - (n - 1) / 2.0) * self.pixel_size


@dataclass(frozen=True)
class FanGeometry:
    """Fan-beam acquisition: source circle radius, flat detector, angle set.

    The detector coordinate u is measured on the virtual detector line through
    the rotation center, perpendicular to the source direction.
    """

    source_radius: float
    detector_bin_count: int
    detector_extent: float
    angles: np.ndarray = field(repr=False)
    fov_radius: float

    def __post_init__(self):
        object.__setattr__(self, "angles", np.asarray(self.angles, dtype=float))
        R, r = self.source_radius, self.fov_radius
        if not (R > r > 0):
            raise ValueError(f"need source_radius > fov_radius > 0, got R={R}, fov={r}")
        if self.detector_bin_count < 1:
            raise ValueError("detector_bin_count must be positive")
        u_needed = R * r / np.sqrt(R * R - r * r)
        if self.detector_extent / 2.0 < u_needed * (1 - 1e-12):
            raise ValueError(
                f"detector_extent/2 = {self.detector_extent / 2.0} does not cover the "
                f"field of view (needs >= {u_needed})"
            )
        b = self.angles
        if b.ndim != 1 or b.size == 0:
            raise ValueError("angles must be a non-empty 1D array")
        if np.any(np.diff(b) <= 0):
            raise ValueError("angles must be strictly increasing")
        if b[0] < 0 or b[-1] >= 2 * np.pi:
            raise ValueError("angles must lie in [0, 2*pi)")

    @property
    def n_angles(self) -> int:
        return self.angles.size

    @property
    def detector_pitch(self) -> float:
        return self.detector_extent / self.detector_bin_count

    def detector_us(self) -> np.ndarray:
        """Detector bin centers, ascending."""
        j = np.arange(self.detector_bin_count)
        return (j + 0.5) * self.detector_pitch - self.detector_extent / 2.0

    def angle_weights(self) -> np.ndarray:
        """Angular quadrature weights, trapezoid on the given list.

        A uniform full-circle scan gets the exact uniform weight 2*pi/n.
        """
        b = self.angles
        n = b.size
        if n == 1:
            return np.array([2 * np.pi])
        d = np.diff(b)
        if np.allclose(d, d[0], rtol=1e-9, atol=1e-12) and np.isclose(
            d[0] * n, 2 * np.pi, rtol=1e-6
        ):
            return np.full(n, 2 * np.pi / n)
        w = np.empty(n)
        w[1:-1] = (b[2:] - b[:-2]) / 2.0
        w[0] = d[0] / 2.0
        w[-1] = d[-1] / 2.0
        return w

    def to_json_dict(self) -> dict:
        return {
            "R": self.source_radius,
            "bins": self.detector_bin_count,
            "extent": self.detector_extent,
            "angles_deg": np.rad2deg(self.angles).tolist(),
            "fov": self.fov_radius,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "FanGeometry":
        return cls(
            source_radius=float(d["R"]),
            detector_bin_count=int(d["bins"]),
            detector_extent=float(d["extent"]),
            angles=np.deg2rad(np.asarray(d["angles_deg"], dtype=float)),
            fov_radius=float(d["fov"]),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def loads(cls, s: str) -> "FanGeometry":
        return cls.from_json_dict(json.loads(s))


def uniform_angles(n: int, start: float = 0.0, span: float = 2 * np.pi) -> np.ndarray:
    """n equispaced angles covering [start, start + span), endpoint excluded."""
    return start + span * np.arange(n) / n


def parallel_to_fan(p: ParallelCoords, source_radius: float) -> FanCoords:
    """Map parallel line coordinates to fan coordinates of the same line.

    beta = theta + pi/2 - arctan(s / sqrt(R^2 - s^2)), u = s R / sqrt(R^2 - s^2).
    Requires |s| < R.
    """
    theta = np.asarray(p.theta, dtype=float)
    s = np.asarray(p.s, dtype=float)
    R = source_radius
    if np.any(np.abs(s) >= R):
        raise ValueError(f"|s| must be < source radius {R}")
    root = np.sqrt(R * R - s * s)
    beta = theta + np.pi / 2.0 - np.arctan2(s, root)
    u = s * R / root
    return FanCoords(beta, u)


def fan_to_parallel(q: FanCoords, source_radius: float) -> ParallelCoords:
    """Inverse of parallel_to_fan; defined for all u."""
    beta = np.asarray(q.beta, dtype=float)
    u = np.asarray(q.u, dtype=float)
    R = source_radius
    if R <= 0:
        raise ValueError("source radius must be positive")
    s = u * R / np.sqrt(R * R + u * u)
    theta = beta - np.pi / 2.0 + np.arctan2(u, R)
    return ParallelCoords(theta, s)


def line_params(q: FanCoords, geom: FanGeometry):
    """Endpoints of the unit-speed-in-t chord parameterization of line (beta, u).

    Returns (source_point, detector_point); the ray point at parameter t is
    source*(1-t) + detector*t, so t=0 is the source and t=1 the virtual
    detector point.  The segment has length sqrt(u^2 + R^2).
    """
    beta = np.asarray(q.beta, dtype=float)
    u = np.asarray(q.u, dtype=float)
    R = geom.source_radius
    source = np.stack([R * np.cos(beta), R * np.sin(beta)], axis=-1)
    detector = np.stack([u * np.sin(beta), -u * np.cos(beta)], axis=-1)
    return source, detector


def check_grid_covers_fov(grid: ImageGrid, geom: FanGeometry) -> None:
    if grid.half_width < geom.fov_radius * (1 - 1e-12):
        raise ValueError(
            f"grid half-width {grid.half_width} smaller than fov radius {geom.fov_radius}"
        )
