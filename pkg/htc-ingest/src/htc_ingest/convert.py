"""Conversion of HTC records to portable rasters plus a geometry JSON.

Geometry mapping (mm-to-dimensionless normalization, recorded in the
manifest): the fan-beam geometry uses a virtual flat detector through the
rotation center, so the physical detector pitch is demagnified by
distanceSourceOrigin / distanceSourceDetector.  All lengths are then divided
by the field-of-view radius (0.95 of the largest parallel offset the detector
covers), so the emitted geometry has fov == 1.0 and the manifest's
``mm_per_unit`` restores physical units.

Conversion is deterministic: converting the same file twice produces
byte-identical outputs, which the manifest's SHA-256 checksums make cheap to
confirm with ``verify``.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import raster
from .matfile import HtcRecord, load_record, load_segmentation

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1

SINOGRAM_FILE = "sinogram.raster"
MASK_FILE = "mask.raster"
SEGMENTATION_FILE = "segmentation.raster"
GEOMETRY_FILE = "geometry.json"

FOV_SHADOW_FRACTION = 0.95


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def geometry_json(record: HtcRecord) -> dict:
    """Normalized fan-beam geometry document for the reconstruction toolkit."""
    magnification = record.source_detector_mm / record.source_origin_mm
    virtual_pitch_mm = record.detector_pixel_mm / magnification
    extent_mm = record.detector_bin_count * virtual_pitch_mm
    R_mm = record.source_origin_mm
    half = extent_mm / 2.0
    s_max_mm = half * R_mm / np.hypot(R_mm, half)
    fov_mm = FOV_SHADOW_FRACTION * s_max_mm
    return {
        "R": R_mm / fov_mm,
        "bins": record.detector_bin_count,
        "extent": extent_mm / fov_mm,
        "angles_deg": [float(a) for a in record.angles_deg],
        "fov": 1.0,
    }, fov_mm


def convert(in_path, out_dir, segmentation_path=None) -> dict:
    """Convert one HTC container; returns the manifest that was written."""
    in_path = Path(in_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    record = load_record(in_path)
    geom, fov_mm = geometry_json(record)

    raster.write(out / SINOGRAM_FILE, record.sinogram)
    mask = np.ones(record.sinogram.shape, dtype=np.uint8)
    raster.write(out / MASK_FILE, mask)
    outputs = [SINOGRAM_FILE, MASK_FILE]

    if segmentation_path is not None:
        seg = load_segmentation(segmentation_path)
        raster.write(out / SEGMENTATION_FILE, seg)
        outputs.append(SEGMENTATION_FILE)

    (out / GEOMETRY_FILE).write_text(json.dumps(geom, sort_keys=True, indent=1))
    outputs.append(GEOMETRY_FILE)

    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "source": {
            "filename": in_path.name,
            "sha256": _sha256(in_path),
            "bytes": in_path.stat().st_size,
            "struct": record.struct_name,
        },
        "arc": {
            "start_deg": float(record.angles_deg[0]),
            "span_deg": record.arc_span_deg,
            "angle_count": int(len(record.angles_deg)),
        },
        "geometry_normalization": {"mm_per_unit": fov_mm},
        "sinogram_dtype": str(record.sinogram.dtype),
        "outputs": {
            name: {"sha256": _sha256(out / name),
                   "bytes": (out / name).stat().st_size}
            for name in outputs
        },
    }
    if segmentation_path is not None:
        manifest["source"]["segmentation_filename"] = Path(segmentation_path).name
        manifest["source"]["segmentation_sha256"] = _sha256(Path(segmentation_path))
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, sort_keys=True, indent=1))
    return manifest


def verify(out_dir) -> dict:
    """Re-check a converted directory; returns {'ok': bool, 'problems': [...]}.

    Checks: manifest present and parsable, every listed output present with
    matching size and SHA-256, raster headers consistent with their payloads,
    geometry JSON consistent with the sinogram shape.
    """
    out = Path(out_dir)
    problems: list[str] = []
    manifest_path = out / MANIFEST_NAME
    if not manifest_path.exists():
        return {"ok": False, "problems": [f"{MANIFEST_NAME}: missing"]}
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        return {"ok": False, "problems": [f"{MANIFEST_NAME}: unparsable: {e}"]}

    for name, expect in sorted(manifest.get("outputs", {}).items()):
        path = out / name
        if not path.exists():
            problems.append(f"{name}: missing")
            continue
        size = path.stat().st_size
        if size != expect["bytes"]:
            problems.append(f"{name}: {size} bytes on disk, manifest says "
                            f"{expect['bytes']}")
            continue
        digest = _sha256(path)
        if digest != expect["sha256"]:
            problems.append(f"{name}: checksum mismatch")
            continue
        if name.endswith(".raster"):
            try:
                raster.read(path)
            except raster.RasterError as e:
                problems.append(str(e))

    if not problems:
        sino = raster.read(out / SINOGRAM_FILE)
        geom = json.loads((out / GEOMETRY_FILE).read_text())
        if sino.shape[0] != len(geom["angles_deg"]):
            problems.append(
                f"{SINOGRAM_FILE}: {sino.shape[0]} rows but geometry lists "
                f"{len(geom['angles_deg'])} angles")
        if sino.shape[1] != geom["bins"]:
            problems.append(
                f"{SINOGRAM_FILE}: {sino.shape[1]} columns but geometry says "
                f"{geom['bins']} bins")
        mask = raster.read(out / MASK_FILE)
        if mask.shape != sino.shape:
            problems.append(f"{MASK_FILE}: shape {mask.shape} differs from "
                            f"sinogram {sino.shape}")
        seg_path = out / SEGMENTATION_FILE
        if seg_path.exists():
            seg = raster.read(seg_path)
            bad = np.setdiff1d(np.unique(seg), [0, 1])
            if bad.size:
                problems.append(f"{SEGMENTATION_FILE}: non-binary values {bad[:8]}")
    return {"ok": not problems, "problems": problems}
