"""Converter contracts: schema mapping, losslessness, determinism, verify."""

import json

import numpy as np
import pytest
import scipy.io
from click.testing import CliRunner

from htc_ingest import convert, load_record, load_segmentation, verify
from htc_ingest.cli import main
from htc_ingest.matfile import HtcFormatError
from htc_ingest import raster

from mat_factories import (
    default_parameters,
    make_sinogram,
    write_classic_mat,
    write_hdf5_mat,
)


class TestLoadRecord:
    def test_both_container_flavors(self, mat_writer, tmp_path):
        sino = make_sinogram()
        path = mat_writer(tmp_path / "scan.mat", sino, default_parameters())
        rec = load_record(path)
        assert rec.sinogram.shape == (181, 140)
        assert np.allclose(rec.sinogram, sino)
        assert rec.detector_bin_count == 140
        assert rec.source_origin_mm == pytest.approx(410.66)
        assert rec.source_detector_mm == pytest.approx(553.74)
        assert rec.angles_deg[1] - rec.angles_deg[0] == pytest.approx(0.5)
        assert rec.arc_span_deg == pytest.approx(90.5)

    def test_struct_name_variants(self, tmp_path):
        for name in ("CtDataFull", "CtDataLimited", "CtData"):
            p = write_classic_mat(tmp_path / f"{name}.mat", make_sinogram(),
                                  default_parameters(), struct_name=name)
            assert load_record(p).struct_name == name

    def test_missing_struct_named(self, tmp_path):
        p = tmp_path / "odd.mat"
        scipy.io.savemat(p, {"SomethingElse": np.zeros((2, 2))})
        with pytest.raises(HtcFormatError, match="SomethingElse"):
            load_record(p)

    def test_missing_required_parameter_named(self, tmp_path):
        params = default_parameters()
        del params["distanceSourceOrigin"]
        p = write_classic_mat(tmp_path / "s.mat", make_sinogram(), params)
        with pytest.raises(HtcFormatError, match="distanceSourceOrigin"):
            load_record(p)

    def test_unknown_parameter_named_not_guessed(self, tmp_path):
        params = default_parameters()
        params["mysteryKnob"] = 3.0
        p = write_classic_mat(tmp_path / "s.mat", make_sinogram(), params)
        with pytest.raises(HtcFormatError, match="mysteryKnob"):
            load_record(p)

    def test_angle_count_mismatch(self, tmp_path):
        params = default_parameters()
        params["angles"] = params["angles"][:-3]
        p = write_classic_mat(tmp_path / "s.mat", make_sinogram(), params)
        with pytest.raises(HtcFormatError, match="angles"):
            load_record(p)

    def test_nonfinite_sinogram(self, tmp_path):
        sino = make_sinogram()
        sino[0, 0] = np.nan
        p = write_classic_mat(tmp_path / "s.mat", sino, default_parameters())
        with pytest.raises(HtcFormatError, match="sinogram"):
            load_record(p)

    def test_not_a_mat_file(self, tmp_path):
        p = tmp_path / "junk.mat"
        p.write_bytes(b"hello world")
        with pytest.raises(HtcFormatError):
            load_record(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(HtcFormatError, match="no such file"):
            load_record(tmp_path / "absent.mat")


class TestLoadSegmentation:
    def test_binary_image(self, tmp_path):
        seg = (np.arange(64).reshape(8, 8) % 2).astype(float)
        p = tmp_path / "seg.mat"
        scipy.io.savemat(p, {"segmentation": seg})
        out = load_segmentation(p)
        assert out.dtype == np.uint8
        assert set(np.unique(out)) <= {0, 1}

    def test_nonbinary_rejected(self, tmp_path):
        p = tmp_path / "seg.mat"
        scipy.io.savemat(p, {"segmentation": np.full((4, 4), 7.0)})
        with pytest.raises(HtcFormatError, match="0/1"):
            load_segmentation(p)


class TestConvert:
    @pytest.fixture()
    def converted(self, tmp_path):
        sino = make_sinogram(seed=3)
        src = write_classic_mat(tmp_path / "scan.mat", sino, default_parameters())
        seg = (np.arange(100).reshape(10, 10) % 2).astype(float)
        seg_path = tmp_path / "seg.mat"
        scipy.io.savemat(seg_path, {"segmentation": seg})
        out = tmp_path / "out"
        manifest = convert(src, out, segmentation_path=seg_path)
        return src, seg_path, out, manifest, sino

    def test_outputs_present_and_lossless(self, converted):
        _, _, out, manifest, sino = converted
        back = raster.read(out / "sinogram.raster")
        assert back.dtype == np.float32  # source precision preserved
        assert np.array_equal(back, sino)
        mask = raster.read(out / "mask.raster")
        assert mask.shape == sino.shape and np.all(mask == 1)
        seg = raster.read(out / "segmentation.raster")
        assert set(np.unique(seg)) <= {0, 1}

    def test_geometry_document(self, converted):
        _, _, out, _, _ = converted
        geom = json.loads((out / "geometry.json").read_text())
        assert geom["fov"] == 1.0
        assert geom["bins"] == 140
        assert len(geom["angles_deg"]) == 181
        assert geom["R"] > 1.0  # source strictly outside the fov
        # detector extent wide enough to cover the fov shadow
        half = geom["extent"] / 2
        s_max = half * geom["R"] / np.hypot(geom["R"], half)
        assert s_max > geom["fov"]

    def test_manifest_checksums_and_provenance(self, converted):
        src, _, out, manifest, _ = converted
        assert manifest["source"]["filename"] == "scan.mat"
        assert manifest["source"]["bytes"] == src.stat().st_size
        assert manifest["arc"]["angle_count"] == 181
        for name, entry in manifest["outputs"].items():
            path = out / name
            assert path.stat().st_size == entry["bytes"]
        assert manifest["geometry_normalization"]["mm_per_unit"] > 0

    def test_idempotent_byte_identical(self, converted, tmp_path):
        src, seg_path, out, _, _ = converted
        again = tmp_path / "again"
        convert(src, again, segmentation_path=seg_path)
        for name in ("sinogram.raster", "mask.raster", "segmentation.raster",
                     "geometry.json", "manifest.json"):
            assert (out / name).read_bytes() == (again / name).read_bytes()

    def test_float64_source_stays_float64(self, tmp_path):
        sino = make_sinogram(dtype=np.float64)
        src = write_classic_mat(tmp_path / "s.mat", sino, default_parameters())
        convert(src, tmp_path / "o")
        back = raster.read(tmp_path / "o" / "sinogram.raster")
        assert back.dtype == np.float64
        assert np.array_equal(back, sino)


class TestVerify:
    @pytest.fixture()
    def converted(self, tmp_path):
        src = write_classic_mat(tmp_path / "scan.mat", make_sinogram(),
                                default_parameters())
        out = tmp_path / "out"
        convert(src, out)
        return out

    def test_fresh_conversion_passes(self, converted):
        report = verify(converted)
        assert report["ok"] and report["problems"] == []

    def test_truncated_payload_reported_with_byte_counts(self, converted):
        path = converted / "sinogram.raster"
        data = path.read_bytes()
        path.write_bytes(data[:-100])
        report = verify(converted)
        assert not report["ok"]
        assert any("sinogram.raster" in p and "bytes" in p
                   for p in report["problems"])

    def test_bitflip_reported_as_checksum_mismatch(self, converted):
        path = converted / "mask.raster"
        data = bytearray(path.read_bytes())
        data[-1] ^= 0xFF
        path.write_bytes(bytes(data))
        report = verify(converted)
        assert any("mask.raster" in p and "checksum" in p
                   for p in report["problems"])

    def test_missing_manifest(self, converted):
        (converted / "manifest.json").unlink()
        report = verify(converted)
        assert not report["ok"]
        assert "manifest.json: missing" in report["problems"]

    def test_missing_output_listed(self, converted):
        (converted / "mask.raster").unlink()
        report = verify(converted)
        assert any(p.startswith("mask.raster") for p in report["problems"])


class TestCli:
    def test_convert_then_verify(self, tmp_path):
        src = write_classic_mat(tmp_path / "scan.mat", make_sinogram(),
                                default_parameters())
        runner = CliRunner()
        res = runner.invoke(main, ["convert", str(src), str(tmp_path / "out")])
        assert res.exit_code == 0, res.output
        assert "181 angles" in res.output
        res = runner.invoke(main, ["verify", str(tmp_path / "out")])
        assert res.exit_code == 0
        assert "all checks passed" in res.output

    def test_unmappable_field_exits_1_naming_it(self, tmp_path):
        params = default_parameters()
        params["weirdField"] = 1.0
        src = write_classic_mat(tmp_path / "scan.mat", make_sinogram(), params)
        runner = CliRunner()
        res = runner.invoke(main, ["convert", str(src), str(tmp_path / "out")])
        assert res.exit_code == 1
        assert "weirdField" in res.output + (res.stderr or "")

    def test_verify_corruption_exits_2(self, tmp_path):
        src = write_classic_mat(tmp_path / "scan.mat", make_sinogram(),
                                default_parameters())
        runner = CliRunner()
        runner.invoke(main, ["convert", str(src), str(tmp_path / "out")])
        p = tmp_path / "out" / "sinogram.raster"
        p.write_bytes(p.read_bytes()[:-4])
        res = runner.invoke(main, ["verify", str(tmp_path / "out")])
        assert res.exit_code == 2


class TestPrimaryToolkitIntegration:
    def test_outputs_load_in_reconstruction_toolkit(self, tmp_path):
        ctkit_geometry = pytest.importorskip("ctkit.geometry")
        ctkit_raster = pytest.importorskip("ctkit.raster")
        from ctkit.projector import Sinogram

        src = write_classic_mat(tmp_path / "scan.mat", make_sinogram(),
                                default_parameters())
        out = tmp_path / "out"
        convert(src, out)
        geom = ctkit_geometry.FanGeometry.from_json_dict(
            json.loads((out / "geometry.json").read_text()))
        sino = ctkit_raster.read(out / "sinogram.raster")
        g = Sinogram(geom, np.asarray(sino, dtype=float))  # shape-validated
        assert g.values.shape == (geom.n_angles, geom.detector_bin_count)
