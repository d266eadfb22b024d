"""Reading HTC-2022 MATLAB container files into a typed record.

The dataset ships CT scans as MAT-files holding one struct (``CtDataFull``,
``CtDataLimited``, or ``CtData``) with two fields: ``sinogram`` (angles x
detector bins) and ``parameters`` (acquisition metadata).  Ground-truth
segmentations come as a separate MAT-file holding one binary image array.
Files are either classic MAT (read with scipy.io) or v7.3/HDF5 (read with
h5py; arrays are transposed back from HDF5's column-major storage).

Every parameter field is checked against the documented schema: required
fields missing and fields that are not in the documented set both raise
``HtcFormatError`` naming the field, so nothing is silently guessed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

DATA_STRUCT_NAMES = ("CtDataFull", "CtDataLimited", "CtData")

REQUIRED_PARAMETERS = (
    "distanceSourceDetector",   # mm
    "distanceSourceOrigin",     # mm
    "angles",                   # degrees, one per sinogram row
)

# one of each group must be present
DETECTOR_COUNT_FIELDS = ("numDetectorsPost", "numDetectors")
PIXEL_SIZE_FIELDS = ("pixelSizePost", "pixelSize", "effectivePixelSize")

# documented fields that carry no geometric information for reconstruction
IGNORED_PARAMETERS = frozenset({
    "geometricMagnification", "numberImages", "binningPost", "binningFactor",
    "detector", "detectorType", "source", "exposureTime", "tube", "tubeVoltage",
    "tubeCurrent", "distanceObjectDetector", "freeRay", "freeRayAtBoundary",
    "significantZeroRange", "projectionRotationAngle", "scanner", "date",
    "sampleName", "filterThickness", "filterMaterial", "xRayFilter",
})


class HtcFormatError(ValueError):
    pass


@dataclass
class HtcRecord:
    sinogram: np.ndarray          # (n_angles, n_bins), float32 or float64
    angles_deg: np.ndarray        # (n_angles,)
    detector_bin_count: int
    detector_pixel_mm: float      # at the physical detector
    source_detector_mm: float
    source_origin_mm: float
    struct_name: str

    def __post_init__(self):
        if self.sinogram.ndim != 2:
            raise HtcFormatError(
                f"sinogram must be 2-D, got shape {self.sinogram.shape}")
        if len(self.angles_deg) != self.sinogram.shape[0]:
            raise HtcFormatError(
                f"{len(self.angles_deg)} angles but {self.sinogram.shape[0]} "
                "sinogram rows")
        if self.sinogram.shape[1] != self.detector_bin_count:
            raise HtcFormatError(
                f"parameters give {self.detector_bin_count} detector bins but "
                f"the sinogram has {self.sinogram.shape[1]} columns")
        for name, arr in (("sinogram", self.sinogram), ("angles", self.angles_deg)):
            if not np.all(np.isfinite(arr)):
                raise HtcFormatError(f"non-finite values in {name}")

    @property
    def arc_span_deg(self) -> float:
        a = np.sort(self.angles_deg)
        if len(a) < 2:
            return 0.0
        step = float(np.median(np.diff(a)))
        return float(a[-1] - a[0] + step)


def _is_hdf5(path) -> bool:
    with open(path, "rb") as f:
        return f.read(8) == b"\x89HDF\r\n\x1a\n"


def _scalar(value, field: str) -> float:
    arr = np.asarray(value, dtype=float).ravel()
    if arr.size != 1:
        raise HtcFormatError(f"parameter {field!r} is not a scalar")
    return float(arr[0])


def _first_present(params: dict, candidates, group: str) -> str:
    for name in candidates:
        if name in params:
            return name
    raise HtcFormatError(
        f"missing {group} parameter: expected one of {', '.join(candidates)}")


def _build_record(struct_name: str, sinogram: np.ndarray, params: dict) -> HtcRecord:
    for field in REQUIRED_PARAMETERS:
        if field not in params:
            raise HtcFormatError(f"missing required parameter {field!r}")
    count_field = _first_present(params, DETECTOR_COUNT_FIELDS, "detector count")
    pitch_field = _first_present(params, PIXEL_SIZE_FIELDS, "detector pixel size")
    known = (set(REQUIRED_PARAMETERS) | set(DETECTOR_COUNT_FIELDS)
             | set(PIXEL_SIZE_FIELDS) | IGNORED_PARAMETERS)
    unknown = sorted(set(params) - known)
    if unknown:
        raise HtcFormatError(
            "cannot map parameter field(s): " + ", ".join(repr(u) for u in unknown))
    if sinogram.dtype not in (np.float32, np.float64):
        sinogram = sinogram.astype(np.float64)
    return HtcRecord(
        sinogram=sinogram,
        angles_deg=np.asarray(params["angles"], dtype=float).ravel(),
        detector_bin_count=int(_scalar(params[count_field], count_field)),
        detector_pixel_mm=_scalar(params[pitch_field], pitch_field),
        source_detector_mm=_scalar(params["distanceSourceDetector"],
                                   "distanceSourceDetector"),
        source_origin_mm=_scalar(params["distanceSourceOrigin"],
                                 "distanceSourceOrigin"),
        struct_name=struct_name,
    )


def _load_classic(path):
    import scipy.io

    try:
        doc = scipy.io.loadmat(path, squeeze_me=False, struct_as_record=True)
    except Exception as e:
        raise HtcFormatError(f"{path}: not a readable MAT-file: {e}") from e
    return {k: v for k, v in doc.items() if not k.startswith("__")}


def _classic_struct_fields(struct) -> dict:
    # scipy returns a (1, 1) structured array for a MATLAB struct
    rec = struct[0, 0]
    return {name: rec[name] for name in rec.dtype.names or ()}


def _load_hdf5_value(node):
    import h5py

    if isinstance(node, h5py.Dataset):
        arr = np.asarray(node)
        return arr.T if arr.ndim >= 2 else arr  # undo column-major storage
    return {k: _load_hdf5_value(v) for k, v in node.items()}


def load_record(path) -> HtcRecord:
    """Read one HTC CT-data container (classic or v7.3 MAT) into an HtcRecord."""
    path = Path(path)
    if not path.exists():
        raise HtcFormatError(f"{path}: no such file")
    if _is_hdf5(path):
        import h5py

        with h5py.File(path, "r") as f:
            names = [k for k in f.keys() if not k.startswith("#")]
            struct_name = next((n for n in DATA_STRUCT_NAMES if n in names), None)
            if struct_name is None:
                raise HtcFormatError(
                    f"{path}: no CT data struct found (have: {', '.join(names)}; "
                    f"expected one of {', '.join(DATA_STRUCT_NAMES)})")
            doc = _load_hdf5_value(f[struct_name])
    else:
        variables = _load_classic(path)
        struct_name = next((n for n in DATA_STRUCT_NAMES if n in variables), None)
        if struct_name is None:
            raise HtcFormatError(
                f"{path}: no CT data struct found (have: "
                f"{', '.join(sorted(variables))}; expected one of "
                f"{', '.join(DATA_STRUCT_NAMES)})")
        doc = _classic_struct_fields(variables[struct_name])
    if "sinogram" not in doc:
        raise HtcFormatError(f"{path}: struct {struct_name} has no 'sinogram' field")
    if "parameters" not in doc:
        raise HtcFormatError(f"{path}: struct {struct_name} has no 'parameters' field")
    params = doc["parameters"]
    if not isinstance(params, dict):
        params = _classic_struct_fields(params)
    sinogram = np.asarray(doc["sinogram"])
    return _build_record(struct_name, sinogram, params)


SEGMENTATION_NAMES = ("segmentation", "groundTruth", "reconstruction")


def load_segmentation(path) -> np.ndarray:
    """Read a ground-truth segmentation MAT-file into a {0,1} uint8 array."""
    path = Path(path)
    if not path.exists():
        raise HtcFormatError(f"{path}: no such file")
    if _is_hdf5(path):
        import h5py

        with h5py.File(path, "r") as f:
            names = [k for k in f.keys() if not k.startswith("#")]
            name = next((n for n in SEGMENTATION_NAMES if n in names), None)
            if name is None:
                raise HtcFormatError(
                    f"{path}: no segmentation array found (have: "
                    f"{', '.join(names)})")
            arr = _load_hdf5_value(f[name])
    else:
        variables = _load_classic(path)
        name = next((n for n in SEGMENTATION_NAMES if n in variables), None)
        if name is None:
            raise HtcFormatError(
                f"{path}: no segmentation array found (have: "
                f"{', '.join(sorted(variables))})")
        arr = np.asarray(variables[name])
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise HtcFormatError(f"{path}: segmentation must be 2-D, got {arr.shape}")
    values = np.unique(arr)
    if not np.all(np.isin(values, (0, 1))):
        raise HtcFormatError(
            f"{path}: segmentation values must be 0/1, found {values[:8]}")
    return arr.astype(np.uint8)
