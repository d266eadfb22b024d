"""Run configuration: one JSON document, schema-validated before any run."""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema
import numpy as np

from .extrapolation import BasisSpec
from .filtering import FilterSpec
from .geometry import FanGeometry, ImageGrid, uniform_angles
from .phantoms import PhantomSpec
from .training import TrainConfig

SCHEMA_VERSION = 1

_NUMBER = {"type": "number"}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "geometry", "grid"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "geometry": {
            "type": "object",
            "required": ["R", "bins", "extent", "fov"],
            "properties": {
                "R": _NUMBER,
                "bins": {"type": "integer", "minimum": 1},
                "extent": _NUMBER,
                "fov": _NUMBER,
                "angles_deg": {"type": "array", "items": _NUMBER},
                "angle_count": {"type": "integer", "minimum": 1},
            },
        },
        "grid": {
            "type": "object",
            "required": ["side_px", "pixel_size"],
            "properties": {
                "side_px": {"type": "integer", "minimum": 1},
                "pixel_size": _NUMBER,
            },
        },
        "basis": {"type": "object"},
        "ridge_lambda": {"type": ["number", "null"]},
        "filter": {"type": "object"},
        "fno": {
            "type": "object",
            "properties": {
                "channels": {"type": "integer", "minimum": 1},
                "modes": {"type": ["integer", "null"]},
                "init_seed": {"type": "integer"},
            },
        },
        "training": {"type": "object"},
        "phantom": {"type": "object"},
        "fbp_scale": {"type": ["number", "null"]},
    },
}


def default_config() -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "geometry": {"R": 4.0, "bins": 128, "extent": 2.2, "fov": 0.95,
                     "angle_count": 240},
        "grid": {"side_px": 128, "pixel_size": 2.0 / 128},
        "basis": {"order_count": 50, "family": "chebyshev2"},
        "ridge_lambda": None,
        "filter": {"cutoff_fraction": 1.0, "pad_factor": 2},
        "fno": {"channels": 60, "modes": None, "init_seed": 0},
        "training": {"epochs": 30, "learning_rate": 3e-5, "batch_size": 8,
                     "shuffle_seed": 0, "checkpoint_every": 5},
        "phantom": PhantomSpec().to_json_dict(),
        "fbp_scale": None,
    }


class ConfigError(ValueError):
    pass


class RunConfig:
    def __init__(self, doc: dict):
        try:
            jsonschema.validate(doc, CONFIG_SCHEMA)
        except jsonschema.ValidationError as e:
            field = "/".join(str(p) for p in e.absolute_path) or "(root)"
            raise ConfigError(f"config field {field}: {e.message}") from e
        self.doc = doc

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        return cls(doc)

    def geometry(self) -> FanGeometry:
        g = self.doc["geometry"]
        if "angles_deg" in g:
            angles = np.deg2rad(np.asarray(g["angles_deg"], dtype=float))
        elif "angle_count" in g:
            angles = uniform_angles(int(g["angle_count"]))
        else:
            raise ConfigError("config field geometry: needs angles_deg or angle_count")
        try:
            return FanGeometry(float(g["R"]), int(g["bins"]), float(g["extent"]),
                               angles, float(g["fov"]))
        except ValueError as e:
            raise ConfigError(f"config field geometry: {e}") from e

    def grid(self) -> ImageGrid:
        g = self.doc["grid"]
        return ImageGrid(int(g["side_px"]), float(g["pixel_size"]))

    def basis_spec(self) -> BasisSpec:
        return BasisSpec.from_json_dict({**BasisSpec().to_json_dict(),
                                         **self.doc.get("basis", {})})

    def filter_spec(self) -> FilterSpec:
        return FilterSpec.from_json_dict({**FilterSpec().to_json_dict(),
                                          **self.doc.get("filter", {})})

    def phantom_spec(self) -> PhantomSpec:
        return PhantomSpec.from_json_dict({**PhantomSpec().to_json_dict(),
                                           **self.doc.get("phantom", {})})

    def train_config(self, **overrides) -> TrainConfig:
        base = self.doc.get("training", {})
        kwargs = {
            "epochs": base.get("epochs", 30),
            "learning_rate": base.get("learning_rate", 3e-5),
            "batch_size": base.get("batch_size", 8),
            "shuffle_seed": base.get("shuffle_seed", 0),
            "checkpoint_every": base.get("checkpoint_every", 5),
        }
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return TrainConfig(**kwargs)

    def fno_dims(self, geom: FanGeometry) -> tuple[int, int, int]:
        f = self.doc.get("fno", {})
        channels = int(f.get("channels", 60))
        modes = f.get("modes")
        max_modes = geom.detector_bin_count // 2 + 1
        modes = min(int(modes), max_modes) if modes else min(280, max_modes)
        seed = int(f.get("init_seed", 0))
        return channels, modes, seed

    @property
    def ridge_lambda(self):
        return self.doc.get("ridge_lambda")

    @property
    def fbp_scale(self):
        return self.doc.get("fbp_scale")
