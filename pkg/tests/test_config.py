"""Run-configuration schema validation and derived-object construction."""

import json

import numpy as np
import pytest

from ctkit.config import ConfigError, RunConfig, default_config


class TestDefaults:
    def test_default_document_validates(self):
        cfg = RunConfig(default_config())
        geom = cfg.geometry()
        assert geom.source_radius == 4.0
        assert geom.detector_bin_count == 128
        assert geom.n_angles == 240
        assert geom.fov_radius == 0.95
        grid = cfg.grid()
        assert grid.side_px == 128
        assert grid.pixel_size == pytest.approx(2.0 / 128)
        assert cfg.basis_spec().coefficient_count == 650

    def test_default_fno_dims_capped_by_detector(self):
        cfg = RunConfig(default_config())
        channels, modes, seed = cfg.fno_dims(cfg.geometry())
        assert channels == 60
        assert modes == min(280, 128 // 2 + 1)
        assert seed == 0

    def test_default_training(self):
        tc = RunConfig(default_config()).train_config()
        assert tc.epochs == 30
        assert tc.learning_rate == 3e-5
        assert tc.batch_size == 8


class TestValidation:
    def test_missing_required_field_names_it(self):
        doc = default_config()
        del doc["geometry"]
        with pytest.raises(ConfigError, match="geometry"):
            RunConfig(doc)

    def test_wrong_type_names_field_path(self):
        doc = default_config()
        doc["grid"]["side_px"] = "big"
        with pytest.raises(ConfigError, match="side_px"):
            RunConfig(doc)

    def test_wrong_schema_version_rejected(self):
        doc = default_config()
        doc["schema_version"] = 99
        with pytest.raises(ConfigError, match="schema_version"):
            RunConfig(doc)

    def test_geometry_needs_angles(self):
        doc = default_config()
        del doc["geometry"]["angle_count"]
        cfg = RunConfig(doc)
        with pytest.raises(ConfigError, match="angle"):
            cfg.geometry()

    def test_invalid_geometry_reported_as_config_error(self):
        doc = default_config()
        doc["geometry"]["fov"] = 10.0  # fov outside the source radius
        with pytest.raises(ConfigError, match="geometry"):
            RunConfig(doc).geometry()

    def test_load_unreadable_file(self, tmp_path):
        with pytest.raises(ConfigError):
            RunConfig.load(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("nope{")
        with pytest.raises(ConfigError):
            RunConfig.load(bad)


class TestOverrides:
    def test_explicit_angles_deg(self):
        doc = default_config()
        doc["geometry"].pop("angle_count")
        doc["geometry"]["angles_deg"] = [0.0, 90.0, 180.0, 270.0]
        geom = RunConfig(doc).geometry()
        assert np.allclose(geom.angles, np.deg2rad([0, 90, 180, 270]))

    def test_train_config_overrides_skip_none(self):
        cfg = RunConfig(default_config())
        tc = cfg.train_config(epochs=2, learning_rate=None)
        assert tc.epochs == 2
        assert tc.learning_rate == 3e-5

    def test_partial_sections_merge_with_defaults(self):
        doc = default_config()
        doc["filter"] = {"cutoff_fraction": 0.8}
        doc["basis"] = {"order_count": 10}
        cfg = RunConfig(doc)
        assert cfg.filter_spec().cutoff_fraction == 0.8
        assert cfg.filter_spec().pad_factor == 2
        assert cfg.basis_spec().order_count == 10

    def test_ridge_lambda_and_scale_passthrough(self):
        doc = default_config()
        doc["ridge_lambda"] = 0.5
        doc["fbp_scale"] = 3.0
        cfg = RunConfig(doc)
        assert cfg.ridge_lambda == 0.5
        assert cfg.fbp_scale == 3.0
