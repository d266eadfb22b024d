"""Range-condition sinogram extrapolation.

A consistent sinogram, written in parallel coordinates (theta, s), expands in
the basis exp(i k theta) * U_n(s / r_fov) * W(s) with coefficients c_{n,k}
that vanish unless |k| <= n and k + n is even.  Working with k >= 0 only
(conjugate symmetry covers k < 0) gives 650 complex coefficients for 50 radial
orders.  Fitting those coefficients on the measured wedge by ridge regression
and synthesizing the basis on the unmeasured wedge fills the sinogram.

The basis is evaluated directly on the fan-beam lattice through the
coordinate change; since theta(beta, u) = beta + alpha(u) with alpha depending
only on u, every basis function factorizes over angles and bins, which keeps
synthesize/analyze far cheaper than materializing the full basis matrix.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .geometry import FanGeometry
from .projector import Sinogram


@dataclass(frozen=True)
class BasisSpec:
    order_count: int = 50
    family: str = "chebyshev2"  # or "chebyshev1"

    def __post_init__(self):
        if self.order_count < 1:
            raise ValueError("order_count must be positive")
        if self.family not in ("chebyshev2", "chebyshev1"):
            raise ValueError(f"unknown polynomial family {self.family!r}")

    def slots(self) -> list[tuple[int, int]]:
        """(n, k) index pairs: 0 <= k <= n, k congruent to n mod 2."""
        return [(n, k) for n in range(self.order_count) for k in range(n % 2, n + 1, 2)]

    @property
    def coefficient_count(self) -> int:
        return sum(n // 2 + 1 for n in range(self.order_count))

    def to_json_dict(self) -> dict:
        return {"order_count": self.order_count, "family": self.family}

    @classmethod
    def from_json_dict(cls, d: dict) -> "BasisSpec":
        return cls(int(d["order_count"]), str(d["family"]))


@dataclass
class BasisCoefficients:
    spec: BasisSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.spec.coefficient_count,):
            raise ValueError(
                f"expected {self.spec.coefficient_count} coefficients, "
                f"got shape {self.values.shape}"
            )


@dataclass
class KnownMask:
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=bool)
        if self.values.ndim != 2:
            raise ValueError("mask must be 2D (angles x bins)")
        if not self.values.any():
            raise ValueError("mask must mark at least one measured bin")


@dataclass
class GramCache:
    matrix: np.ndarray = field(repr=False)
    geometry_hash: str
    mask_hash: str
    spec_hash: str


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def geometry_hash(geom: FanGeometry) -> str:
    return _sha(json.dumps(geom.to_json_dict(), sort_keys=True).encode())


def mask_hash(mask: KnownMask) -> str:
    return _sha(np.packbits(mask.values).tobytes() + str(mask.values.shape).encode())


def spec_hash(spec: BasisSpec) -> str:
    return _sha(json.dumps(spec.to_json_dict(), sort_keys=True).encode())


class _BasisTables:
    """Precomputed per-geometry factors of the basis functions.

    basis function (n, k) at lattice point (i, j) is
        exp(i k beta_i) * d[k, j] * radial[n, j]
    with d[k, j] = exp(i k alpha_j), alpha_j = arctan(u_j / R) - pi/2, and
    radial[n, j] = U_n(s_j / r_fov) * W(s_j).
    """

    def __init__(self, geom: FanGeometry, spec: BasisSpec):
        self.geom = geom
        self.spec = spec
        N = spec.order_count
        R = geom.source_radius
        u = geom.detector_us()
        s = u * R / np.sqrt(R * R + u * u)
        x = s / geom.fov_radius
        inside = np.abs(x) <= 1.0
        xc = np.clip(x, -1.0, 1.0)
        W = np.where(inside, np.sqrt(np.maximum(1.0 - xc * xc, 0.0)), 0.0)

        poly = np.zeros((N, u.size))
        if N >= 1:
            poly[0] = 1.0
        if spec.family == "chebyshev2":
            if N >= 2:
                poly[1] = 2 * xc
            for n in range(2, N):
                poly[n] = 2 * xc * poly[n - 1] - poly[n - 2]
        else:  # chebyshev1
            if N >= 2:
                poly[1] = xc
            for n in range(2, N):
                poly[n] = 2 * xc * poly[n - 1] - poly[n - 2]
        self.radial = poly * W[None, :] * inside[None, :]   # (N, U)

        alpha = np.arctan2(u, R) - np.pi / 2.0
        ks = np.arange(N)
        self.det_phase = np.exp(1j * np.outer(ks, alpha))    # (N, U)
        self.ang_phase = np.exp(1j * np.outer(ks, geom.angles))  # (N, L)

        slots = spec.slots()
        self.slot_n = np.array([n for n, _ in slots])
        self.slot_k = np.array([k for _, k in slots])
        self.mult = np.where(self.slot_k == 0, 1.0, 2.0)
        # detector-side complex profile of each slot: d[k] * radial[n]
        self.slot_det = self.det_phase[self.slot_k] * self.radial[self.slot_n]


_TABLE_CACHE: dict[tuple[int, str], _BasisTables] = {}


def _tables(geom: FanGeometry, spec: BasisSpec) -> _BasisTables:
    key = (id(geom), geometry_hash(geom) + spec_hash(spec))
    hit = _TABLE_CACHE.get(key)
    if hit is None:
        hit = _BasisTables(geom, spec)
        _TABLE_CACHE.clear()  # keep at most one; tables are cheap to rebuild
        _TABLE_CACHE[key] = hit
    return hit


def synthesize(c: BasisCoefficients, geom: FanGeometry,
               spec: BasisSpec | None = None) -> Sinogram:
    """Evaluate the truncated basis series on the fan-beam lattice.

    The k = 0 term enters once, k > 0 terms enter as 2 * Re (their conjugate
    partners are implied by the sinogram being real).
    """
    spec = spec or c.spec
    tb = _tables(geom, spec)
    L, U = geom.n_angles, geom.detector_bin_count
    out = np.zeros((L, U))
    weighted = (tb.mult * c.values)[:, None] * tb.slot_det   # (650, U)
    for k in range(spec.order_count):
        sel = tb.slot_k == k
        if not sel.any():
            continue
        det = weighted[sel].sum(axis=0)                      # (U,)
        out += np.real(np.outer(tb.ang_phase[k], det))
    return Sinogram(geom, out)


def analyze(g: Sinogram, mask: KnownMask, geom: FanGeometry,
            spec: BasisSpec) -> BasisCoefficients:
    """Adjoint of synthesize restricted to the mask.

    a_{n,k} = m_k * sum over masked bins of g * conj(basis function), so that
    <synthesize(c) on mask, g> = Re <analyze(g), c>.
    """
    if g.values.shape != mask.values.shape:
        raise ValueError("sinogram and mask shapes differ")
    tb = _tables(geom, spec)
    gm = np.where(mask.values, g.values, 0.0)
    # per-k angle sums: t[k, j] = sum_i conj(exp(i k beta_i)) gm[i, j]
    t = np.conj(tb.ang_phase) @ gm                            # (N, U)
    a = tb.mult * np.sum(np.conj(tb.slot_det) * t[tb.slot_k], axis=1)
    return BasisCoefficients(spec, a)


def compute_gram(mask: KnownMask, geom: FanGeometry, spec: BasisSpec,
                 cache_dir: str | os.PathLike | None = None) -> GramCache:
    """Hermitian Gram matrix of the masked, multiplicity-scaled basis columns.

    Entry (p, q) = sqrt(m_p m_q) * sum over masked bins of conj(b_p) b_q.
    Persisted to cache_dir (or $CTKIT_CACHE_DIR) keyed by geometry, mask, and
    spec hashes.
    """
    hashes = (geometry_hash(geom), mask_hash(mask), spec_hash(spec))
    cache_dir = cache_dir or os.environ.get("CTKIT_CACHE_DIR")
    cache_path = None
    if cache_dir:
        key = _sha("".join(hashes).encode())[:32]
        cache_path = Path(cache_dir) / f"gram_{key}"
        loaded = _load_gram(cache_path, hashes)
        if loaded is not None:
            return loaded

    tb = _tables(geom, spec)
    N = spec.order_count
    P = tb.slot_n.size
    # mask angle sums per k-difference: S[d, j] = sum_i mask[i, j] e^{i d beta_i}
    ds = np.arange(-(N - 1), N)
    phase = np.exp(1j * np.outer(ds, geom.angles))            # (2N-1, L)
    S = phase @ mask.values.astype(float)                     # (2N-1, U)

    scaled = np.sqrt(tb.mult)[:, None] * tb.slot_det          # (P, U)
    G = np.empty((P, P), dtype=complex)
    for p in range(P):
        d_idx = tb.slot_k - tb.slot_k[p] + (N - 1)            # (P,)
        G[p] = np.sum(np.conj(scaled[p])[None, :] * scaled * S[d_idx], axis=1)
    G = 0.5 * (G + G.conj().T)
    cache = GramCache(G, *hashes)
    if cache_path is not None:
        _store_gram(cache_path, cache)
    return cache


def _load_gram(cache_path: Path, hashes) -> GramCache | None:
    from . import raster

    sidecar = cache_path.with_suffix(".json")
    if not sidecar.exists():
        return None
    try:
        meta = json.loads(sidecar.read_text())
        if (meta["geometry_hash"], meta["mask_hash"], meta["spec_hash"]) != hashes:
            return None
        re = raster.read(cache_path.with_suffix(".re"))
        im = raster.read(cache_path.with_suffix(".im"))
    except (OSError, KeyError, raster.RasterError):
        return None
    return GramCache(re + 1j * im, *hashes)


def _store_gram(cache_path: Path, cache: GramCache) -> None:
    from . import raster

    cache_path.parent.mkdir(parents=True, exist_ok=True)
    raster.write(cache_path.with_suffix(".re"), np.ascontiguousarray(cache.matrix.real))
    raster.write(cache_path.with_suffix(".im"), np.ascontiguousarray(cache.matrix.imag))
    cache_path.with_suffix(".json").write_text(json.dumps({
        "geometry_hash": cache.geometry_hash,
        "mask_hash": cache.mask_hash,
        "spec_hash": cache.spec_hash,
    }, sort_keys=True))


def default_ridge_lambda(gram: GramCache, factor: float = 1e-3) -> float:
    n = gram.matrix.shape[0]
    return factor * float(np.trace(gram.matrix).real) / n


def default_ridge_profile(gram: GramCache, spec: BasisSpec,
                          factor: float = 3e-2, power: int = 4) -> np.ndarray:
    """Per-coefficient ridge strengths growing with angular order.

    Extrapolating a wedge is analytic continuation in the angle variable: the
    k-th angular harmonic of the fill is amplified roughly exponentially in k
    outside the measured arc, so a flat ridge lets high-k coefficients inject
    oscillatory garbage into the unmeasured wedge.  Penalizing slot (n, k)
    by (1 + k)^power keeps the well-determined low-order moments while
    suppressing the unstable tail.  The profile depends only on |k|, so the
    wedge rotation symmetry used by Extrapolator is preserved exactly.
    """
    base = factor * float(np.trace(gram.matrix).real) / gram.matrix.shape[0]
    k = np.array([k for (_, k) in spec.slots()], dtype=float)
    return base * (1.0 + k) ** power


def fit(g: Sinogram, mask: KnownMask, lam, gram: GramCache,
        geom: FanGeometry, spec: BasisSpec) -> BasisCoefficients:
    """Ridge solution of the masked basis fit: (G + diag(lam)) c = analyze(g).

    lam is a nonnegative scalar (classical ridge, G + lam I) or a vector of
    per-coefficient strengths such as default_ridge_profile.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("lambda must be nonnegative")
    if lam.ndim not in (0, 1) or (lam.ndim == 1
                                  and lam.size != gram.matrix.shape[0]):
        raise ValueError("lambda must be a scalar or one value per coefficient")
    a = analyze(g, mask, geom, spec).values
    A = gram.matrix + np.diag(np.broadcast_to(lam, (gram.matrix.shape[0],)))
    try:
        c = scipy.linalg.solve(A, a, assume_a="her")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        raise np.linalg.LinAlgError(
            "singular Gram system; use lambda > 0 (e.g. default_ridge_lambda)")
    norm_a = np.linalg.norm(a)
    if norm_a > 0:
        residual = np.linalg.norm(A @ c - a) / norm_a
        if residual > 1e-8:
            raise np.linalg.LinAlgError(
                f"ill-conditioned Gram solve (residual {residual:.2e}); "
                "increase lambda")
    return BasisCoefficients(spec, c)


def extrapolate(g: Sinogram, mask: KnownMask, lam, gram: GramCache,
                geom: FanGeometry, spec: BasisSpec) -> Sinogram:
    """Keep measured bins verbatim; fill unmeasured bins from the fitted basis."""
    c = fit(g, mask, lam, gram, geom, spec)
    synth = synthesize(c, geom, spec)
    return Sinogram(geom, np.where(mask.values, g.values, synth.values))


def range_residual(g: Sinogram, geom: FanGeometry, spec: BasisSpec,
                   gram: GramCache | None = None) -> np.ndarray:
    """Relative L2 residual of g after projection onto orders <= n, per n.

    Diagnostic for range membership of full-scan data: consistent sinograms
    have a small tail residual, inconsistent ones do not.  Non-increasing in n.
    """
    full = KnownMask(np.ones(g.values.shape, dtype=bool))
    if gram is None:
        gram = compute_gram(full, geom, spec)
    a = analyze(g, full, geom, spec).values
    tb = _tables(geom, spec)
    norm_g = np.linalg.norm(g.values)
    if norm_g == 0:
        return np.zeros(spec.order_count)
    lam = 1e-9 * float(np.trace(gram.matrix).real) / gram.matrix.shape[0]
    res = np.empty(spec.order_count)
    for n in range(spec.order_count):
        sel = tb.slot_n <= n
        A = gram.matrix[np.ix_(sel, sel)] + lam * np.eye(int(sel.sum()))
        c_sub = scipy.linalg.solve(A, a[sel], assume_a="her")
        c_full = np.zeros(a.size, dtype=complex)
        c_full[sel] = c_sub
        proj = synthesize(BasisCoefficients(spec, c_full), geom, spec)
        res[n] = np.linalg.norm(g.values - proj.values) / norm_g
    return res


def wedge_roll(mask: KnownMask, geom: FanGeometry) -> tuple[int, KnownMask] | None:
    """Detect a cyclically contiguous row wedge on a uniform full-circle scan.

    Returns (roll, canonical_mask) such that mask == roll(canonical, roll)
    along the angle axis and the canonical wedge starts at row 0, or None if
    the mask has no such structure.  Lets one Gram factorization serve every
    rotated copy of the same wedge.
    """
    m = mask.values
    rows_true = m.all(axis=1)
    rows_false = ~m.any(axis=1)
    if not np.all(rows_true | rows_false):
        return None
    b = geom.angles
    d = np.diff(b)
    if b.size < 2 or not (np.allclose(d, d[0], rtol=1e-9, atol=1e-12)
                          and np.isclose(d[0] * b.size, 2 * np.pi, rtol=1e-6)):
        return None
    if rows_true.all():
        return 0, mask
    # contiguous cyclic run of true rows starting right after a false row
    starts = np.flatnonzero(rows_true & np.roll(rows_false, 1))
    if starts.size != 1:
        return None
    r = int(starts[0])
    width = int(rows_true.sum())
    canonical_rows = np.zeros(b.size, dtype=bool)
    canonical_rows[:width] = True
    if not np.array_equal(np.roll(canonical_rows, r), rows_true):
        return None
    canonical = np.zeros_like(m)
    canonical[:width] = True
    return r, KnownMask(canonical)


class Extrapolator:
    """Caches Gram factorizations and exploits wedge rotation symmetry.

    On a uniform full-circle angle grid, rotating a wedge mask by r rows is
    equivalent to rolling the sinogram rows by -r, extrapolating against the
    canonical wedge, and rolling back, because each basis function picks up
    only a phase under the rotation.  One factorization therefore serves all
    rotated copies of a wedge.
    """

    def __init__(self, geom: FanGeometry, spec: BasisSpec | None = None,
                 lam: float | None = None, cache_dir=None):
        self.geom = geom
        self.spec = spec or BasisSpec()
        self.lam = lam
        self.cache_dir = cache_dir
        self._grams: dict[str, GramCache] = {}

    def gram_for(self, mask: KnownMask) -> GramCache:
        key = mask_hash(mask)
        if key not in self._grams:
            self._grams[key] = compute_gram(mask, self.geom, self.spec,
                                            cache_dir=self.cache_dir)
        return self._grams[key]

    def _lam_for(self, gram: GramCache):
        if self.lam is not None:
            return self.lam
        return default_ridge_profile(gram, self.spec)

    def extrapolate(self, g: Sinogram, mask: KnownMask) -> Sinogram:
        rolled = wedge_roll(mask, self.geom)
        if rolled is None:
            gram = self.gram_for(mask)
            return extrapolate(g, mask, self._lam_for(gram), gram,
                               self.geom, self.spec)
        r, canonical = rolled
        gram = self.gram_for(canonical)
        g_can = Sinogram(self.geom, np.roll(g.values, -r, axis=0))
        out = extrapolate(g_can, canonical, self._lam_for(gram), gram,
                          self.geom, self.spec)
        return Sinogram(self.geom, np.roll(out.values, r, axis=0))
