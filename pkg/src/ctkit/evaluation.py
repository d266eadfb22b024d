"""Scoring protocol: clip negatives, Otsu threshold, Matthews correlation,
and per-angular-span comparison across reconstruction methods."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .extrapolation import Extrapolator, KnownMask
from .filtering import FilterSpec, fbp
from .model import FnoBpModel, reconstruct
from .phantoms import load_manifest, load_sample, wedge_mask
from .projector import Image, Sinogram

METHODS = ("fbp", "fbp-range", "fnobp")


def otsu(img: Image | np.ndarray, bins: int = 256) -> np.ndarray:
    """Threshold maximizing inter-class variance over a bins-bin histogram.

    Expects negatives to be clipped already; returns the mask img > threshold.
    """
    values = img.values if isinstance(img, Image) else np.asarray(img, dtype=float)
    flat = values.ravel()
    vmax = flat.max()
    if np.all(flat == flat[0]):
        raise ValueError("Otsu threshold undefined for a constant image")
    hist, edges = np.histogram(flat, bins=bins, range=(0.0, vmax))
    p = hist.astype(float) / flat.size
    omega = np.cumsum(p)                      # class-0 mass up to each boundary
    mids = (edges[:-1] + edges[1:]) / 2.0
    mu = np.cumsum(p * mids)
    mu_total = mu[-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        sigma_b = (mu_total * omega - mu) ** 2 / (omega * (1.0 - omega))
    sigma_b[~np.isfinite(sigma_b)] = -np.inf
    best = int(np.argmax(sigma_b[:-1]))       # boundary after bin `best`
    threshold = edges[best + 1]
    return values > threshold


def mcc(pred: np.ndarray, truth: np.ndarray) -> float:
    """Matthews correlation coefficient; 0 when the denominator vanishes."""
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if pred.shape != truth.shape:
        raise ValueError("mask shapes differ")
    tp = float(np.count_nonzero(pred & truth))
    tn = float(np.count_nonzero(~pred & ~truth))
    fp = float(np.count_nonzero(pred & ~truth))
    fn = float(np.count_nonzero(~pred & truth))
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / np.sqrt(denom)


@dataclass
class ScoreReport:
    rows: list = field(default_factory=list)  # dicts: method, span_deg, sample, mcc

    def mean(self, method: str, span_deg: float) -> float:
        vals = [r["mcc"] for r in self.rows
                if r["method"] == method and r["span_deg"] == span_deg]
        return float(np.mean(vals)) if vals else float("nan")

    def summary_rows(self):
        keys = sorted({(r["method"], r["span_deg"]) for r in self.rows},
                      key=lambda t: (t[0], -t[1]))
        return [{"method": m, "span_deg": s, "mean_mcc": self.mean(m, s)}
                for m, s in keys]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(["method", "span_deg", "sample", "mcc"])
            for r in self.rows:
                wr.writerow([r["method"], r["span_deg"], r["sample"], r["mcc"]])

    def format_table(self) -> str:
        spans = sorted({r["span_deg"] for r in self.rows}, reverse=True)
        methods = sorted({r["method"] for r in self.rows},
                         key=lambda m: METHODS.index(m) if m in METHODS else 99)
        lines = ["method      " + "".join(f"{s:>8.0f}" for s in spans)]
        for m in methods:
            lines.append(f"{m:<12}" + "".join(f"{self.mean(m, s):8.3f}" for s in spans))
        return "\n".join(lines)


def score_reconstruction(img: Image, truth_seg: np.ndarray, bins: int = 256) -> float:
    clipped = np.maximum(img.values, 0.0)
    return mcc(otsu(clipped, bins=bins), truth_seg)


def evaluate(methods, data_dir, spans_deg, model: FnoBpModel | None = None,
             fbp_scale: float | None = None,
             filter_spec: FilterSpec = FilterSpec(),
             extrapolator: Extrapolator | None = None,
             mask_seed: int = 12345, log=None) -> ScoreReport:
    """Score methods over a test dataset at each angular span.

    Each sample's full sinogram is re-masked per span with a deterministic
    wedge start, reconstructed, clipped, thresholded, and scored against the
    stored segmentation.  The same protocol is applied to every method.
    """
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; valid: {', '.join(METHODS)}")
    if "fnobp" in methods and model is None:
        raise ValueError("fnobp evaluation needs a trained model checkpoint")
    manifest = load_manifest(data_dir)
    from .geometry import FanGeometry, ImageGrid
    geom = FanGeometry.from_json_dict(manifest["geometry"])
    grid = ImageGrid(**manifest["grid"])
    if model is not None:
        if fbp_scale is None:
            fbp_scale = model.fbp_scale
        if extrapolator is None:
            extrapolator = model.extrapolator
        filter_spec = model.filter_spec
    if extrapolator is None and "fbp-range" in methods:
        extrapolator = Extrapolator(geom)
    if fbp_scale is None:
        raise ValueError("fbp_scale required (calibrate once per geometry)")

    report = ScoreReport()
    for span in spans_deg:
        for idx, entry in enumerate(manifest["samples"]):
            smp = load_sample(data_dir, entry["stem"])
            start = int(np.random.default_rng((mask_seed, int(span), idx))
                        .integers(0, geom.n_angles))
            mask = wedge_mask(geom, span, start)
            g_masked = Sinogram(geom, np.where(mask.values, smp.full_sinogram, 0.0))
            for method in methods:
                if method == "fbp":
                    rec = fbp(g_masked, grid, filter_spec, scale=fbp_scale)
                elif method == "fbp-range":
                    g_ext = extrapolator.extrapolate(g_masked, mask)
                    rec = fbp(g_ext, grid, filter_spec, scale=fbp_scale)
                else:
                    rec = reconstruct(g_masked, mask, model)
                score = score_reconstruction(rec, smp.segmentation)
                report.rows.append({"method": method, "span_deg": float(span),
                                    "sample": entry["stem"], "mcc": score})
        if log:
            for method in methods:
                log(f"span {span:5.1f} deg  {method:<10} mean MCC "
                    f"{report.mean(method, float(span)):.3f}")
    return report
