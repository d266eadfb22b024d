"""Factories for synthetic HTC-style MAT containers (classic and v7.3)."""

import numpy as np
import scipy.io


def default_parameters(n_angles=181, bins=140):
    return {
        "distanceSourceDetector": 553.74,
        "distanceSourceOrigin": 410.66,
        "numDetectorsPost": float(bins),
        "pixelSizePost": 1.1,
        "angles": np.arange(n_angles, dtype=float) * 0.5,
        # documented but geometry-irrelevant extras
        "geometricMagnification": 553.74 / 410.66,
        "numberImages": float(n_angles),
        "binningPost": 4.0,
        "exposureTime": 1000.0,
    }


def make_sinogram(n_angles=181, bins=140, seed=0, dtype=np.float32):
    rng = np.random.default_rng(seed)
    return rng.random((n_angles, bins)).astype(dtype)


def write_classic_mat(path, sinogram, params, struct_name="CtDataLimited",
                      extra_vars=None):
    doc = {struct_name: {"sinogram": sinogram, "parameters": params}}
    doc.update(extra_vars or {})
    scipy.io.savemat(path, doc)
    return path


def write_hdf5_mat(path, sinogram, params, struct_name="CtDataLimited"):
    import h5py

    with h5py.File(path, "w") as f:
        g = f.create_group(struct_name)
        g.create_dataset("sinogram", data=np.asarray(sinogram).T)  # column-major
        p = g.create_group("parameters")
        for k, v in params.items():
            p.create_dataset(k, data=np.atleast_2d(np.asarray(v, dtype=float)).T)
    return path
