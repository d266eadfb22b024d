"""Range-condition basis: synthesis/analysis adjointness, Gram caching,
ridge fitting, wedge in-fill, and the rotation shortcut."""

import numpy as np
import pytest

from ctkit.extrapolation import (
    BasisCoefficients,
    BasisSpec,
    Extrapolator,
    KnownMask,
    analyze,
    compute_gram,
    default_ridge_lambda,
    default_ridge_profile,
    extrapolate,
    fit,
    mask_hash,
    range_residual,
    synthesize,
    wedge_roll,
)
from ctkit.geometry import FanCoords, ImageGrid, fan_to_parallel
from ctkit.projector import Sinogram, forward_project

from ct_factories import disc_image, make_geom

N_SMALL = 12  # small radial order for fast module tests


@pytest.fixture(scope="module")
def geom():
    return make_geom(R=3.0, bins=32, n_angles=60, fov=1.0)


@pytest.fixture(scope="module")
def spec():
    return BasisSpec(order_count=N_SMALL)


@pytest.fixture(scope="module")
def full_mask(geom):
    return KnownMask(np.ones((geom.n_angles, geom.detector_bin_count), bool))


@pytest.fixture(scope="module")
def full_gram(geom, spec, full_mask):
    return compute_gram(full_mask, geom, spec)


def random_coeffs(spec, rng):
    # k = 0 harmonics of a real sinogram carry no imaginary part, so plants
    # keep those slots real to stay identifiable
    vals = rng.standard_normal(spec.coefficient_count) \
        + 1j * rng.standard_normal(spec.coefficient_count)
    for i, (n, k) in enumerate(spec.slots()):
        if k == 0:
            vals[i] = vals[i].real
    return BasisCoefficients(spec, vals)


class TestBasisSpec:
    def test_650_coefficients_for_default(self):
        assert BasisSpec().coefficient_count == 650

    def test_count_formula(self):
        for N in [1, 2, 5, 12, 50]:
            expected = sum(n // 2 + 1 for n in range(N))
            assert BasisSpec(order_count=N).coefficient_count == expected
            assert len(BasisSpec(order_count=N).slots()) == expected

    def test_parity_structure(self, spec):
        for n, k in spec.slots():
            assert 0 <= k <= n
            assert (n - k) % 2 == 0

    def test_odd_parity_slot_absent(self, spec):
        assert (2, 1) not in spec.slots()
        assert (3, 0) not in spec.slots()

    def test_bad_family_rejected(self):
        with pytest.raises(ValueError):
            BasisSpec(family="legendre")


class TestSynthesize:
    def test_zero_coefficients(self, geom, spec):
        c = BasisCoefficients(spec, np.zeros(spec.coefficient_count, complex))
        assert np.all(synthesize(c, geom, spec).values == 0.0)

    def test_c00_gives_weighted_constant(self, geom, spec):
        vals = np.zeros(spec.coefficient_count, complex)
        vals[spec.slots().index((0, 0))] = 1.0
        g = synthesize(BasisCoefficients(spec, vals), geom, spec)
        # theta-independent: every row identical
        assert np.allclose(g.values, g.values[0], atol=1e-12)
        # profile equals U_0 * W = W at the parallel coordinate of each bin
        r = geom.fov_radius
        for j in [3, 10, 16, 25]:
            u = geom.detector_us()[j]
            s = fan_to_parallel(FanCoords(0.0, u), geom.source_radius).s
            x = s / r
            w = np.sqrt(max(1 - x * x, 0.0)) if abs(x) < 1 else 0.0
            assert g.values[0, j] == pytest.approx(w, abs=1e-12)

    def test_linearity(self, geom, spec, rng):
        c1, c2 = random_coeffs(spec, rng), random_coeffs(spec, rng)
        both = BasisCoefficients(spec, c1.values + c2.values)
        lhs = synthesize(both, geom, spec).values
        rhs = synthesize(c1, geom, spec).values + synthesize(c2, geom, spec).values
        assert np.allclose(lhs, rhs, atol=1e-12)

    def test_vanishes_outside_fov_support(self, geom, spec, rng):
        g = synthesize(random_coeffs(spec, rng), geom, spec)
        R, r = geom.source_radius, geom.fov_radius
        s = np.array([fan_to_parallel(FanCoords(0.0, u), R).s
                      for u in geom.detector_us()])
        outside = np.abs(s) >= r
        assert np.all(g.values[:, outside] == 0.0)


class TestAnalyze:
    def test_adjoint_identity(self, geom, spec, full_mask, rng):
        shape = (geom.n_angles, geom.detector_bin_count)
        for _ in range(20):
            c = random_coeffs(spec, rng)
            g = rng.standard_normal(shape)
            # real pairing on sinograms, complex pairing on coefficients
            lhs = np.sum(synthesize(c, geom, spec).values * g)
            a = analyze(Sinogram(geom, g), full_mask, geom, spec).values
            rhs = np.real(np.vdot(c.values, a))
            assert abs(lhs - rhs) / max(abs(lhs), 1e-12) < 1e-10

    def test_adjoint_identity_masked(self, geom, spec, rng):
        shape = (geom.n_angles, geom.detector_bin_count)
        mask = KnownMask(rng.random(shape) > 0.5)
        for _ in range(5):
            c = random_coeffs(spec, rng)
            g = rng.standard_normal(shape)
            lhs = np.sum(synthesize(c, geom, spec).values * np.where(mask.values, g, 0.0))
            a = analyze(Sinogram(geom, g), mask, geom, spec).values
            rhs = np.real(np.vdot(c.values, a))
            assert abs(lhs - rhs) / max(abs(lhs), 1e-12) < 1e-10

    def test_zero_sinogram(self, geom, spec, full_mask):
        shape = (geom.n_angles, geom.detector_bin_count)
        a = analyze(Sinogram(geom, np.zeros(shape)), full_mask, geom, spec)
        assert np.all(a.values == 0.0)

    def test_all_false_mask_rejected(self, geom):
        with pytest.raises(ValueError):
            KnownMask(np.zeros((geom.n_angles, geom.detector_bin_count), bool))


class TestComputeGram:
    def test_shape_and_hermitian(self, full_gram, spec):
        n = spec.coefficient_count
        G = full_gram.matrix
        assert G.shape == (n, n)
        assert np.allclose(G, G.conj().T, atol=1e-12)

    def test_positive_semidefinite_and_diagonal(self, full_gram):
        eigs = np.linalg.eigvalsh(full_gram.matrix)
        assert eigs.min() > -1e-8 * eigs.max()
        assert np.all(np.diag(full_gram.matrix).real > 0)

    def test_matches_analyze_columns(self, geom, spec, full_mask, full_gram):
        # column q of the Gram is analyze(synthesize(e_q))
        n = spec.coefficient_count
        for q in [0, n // 2, n - 1]:
            e = np.zeros(n, complex)
            e[q] = 1.0
            g = synthesize(BasisCoefficients(spec, e), geom, spec)
            col = analyze(g, full_mask, geom, spec).values
            assert np.allclose(full_gram.matrix[:, q], col, atol=1e-10)

    def test_disk_cache_roundtrip(self, geom, spec, full_mask, tmp_path):
        g1 = compute_gram(full_mask, geom, spec, cache_dir=tmp_path)
        files = sorted(p.name for p in tmp_path.rglob("*") if p.is_file())
        assert files  # persisted
        g2 = compute_gram(full_mask, geom, spec, cache_dir=tmp_path)
        assert np.array_equal(g1.matrix.view(float), g2.matrix.view(float))
        assert g1.mask_hash == g2.mask_hash == mask_hash(full_mask)


class TestFit:
    def test_exact_recovery(self, geom, spec, full_mask, full_gram, rng):
        c_star = random_coeffs(spec, rng)
        g = synthesize(c_star, geom, spec)
        c_hat = fit(g, full_mask, 1e-12, full_gram, geom, spec)
        rel = np.linalg.norm(c_hat.values - c_star.values) / np.linalg.norm(c_star.values)
        assert rel < 1e-4

    def test_huge_lambda_shrinks_to_zero(self, geom, spec, full_mask, full_gram, rng):
        g = synthesize(random_coeffs(spec, rng), geom, spec)
        c = fit(g, full_mask, 1e15, full_gram, geom, spec)
        assert np.linalg.norm(c.values) < 1e-8

    def test_zero_data_zero_fit(self, geom, spec, full_mask, full_gram):
        shape = (geom.n_angles, geom.detector_bin_count)
        c = fit(Sinogram(geom, np.zeros(shape)), full_mask, 1.0, full_gram, geom, spec)
        assert np.all(c.values == 0.0)

    def test_singular_system_recommends_lambda(self, geom, spec, rng):
        # one known row cannot determine the basis; lam=0 must fail loudly
        shape = (geom.n_angles, geom.detector_bin_count)
        m = np.zeros(shape, bool)
        m[0] = True
        mask = KnownMask(m)
        gram = compute_gram(mask, geom, spec)
        g = Sinogram(geom, rng.standard_normal(shape))
        with pytest.raises(np.linalg.LinAlgError, match="lambda"):
            fit(g, mask, 0.0, gram, geom, spec)

    def test_negative_lambda_rejected(self, geom, spec, full_mask, full_gram):
        shape = (geom.n_angles, geom.detector_bin_count)
        g = Sinogram(geom, np.zeros(shape))
        with pytest.raises(ValueError):
            fit(g, full_mask, -1.0, full_gram, geom, spec)

    def test_vector_lambda(self, geom, spec, full_mask, full_gram, rng):
        g = synthesize(random_coeffs(spec, rng), geom, spec)
        lam = np.full(spec.coefficient_count, 1e-12)
        c_vec = fit(g, full_mask, lam, full_gram, geom, spec)
        c_scl = fit(g, full_mask, 1e-12, full_gram, geom, spec)
        assert np.allclose(c_vec.values, c_scl.values, atol=1e-10)
        with pytest.raises(ValueError):
            fit(g, full_mask, np.ones(3), full_gram, geom, spec)


class TestExtrapolate:
    def test_all_true_mask_identity(self, geom, spec, full_mask, full_gram, rng):
        shape = (geom.n_angles, geom.detector_bin_count)
        g = Sinogram(geom, rng.standard_normal(shape))
        out = extrapolate(g, full_mask, 1.0, full_gram, geom, spec)
        assert np.array_equal(out.values, g.values)

    def test_idempotent(self, geom, spec):
        grid = ImageGrid(64, 2.05 / 64)
        f = disc_image(grid, 0.5)
        g = forward_project(f, geom)
        m = np.ones((geom.n_angles, geom.detector_bin_count), bool)
        m[10:25] = False  # hide a 90-degree wedge
        mask = KnownMask(m)
        extr = Extrapolator(geom, spec)
        e1 = extr.extrapolate(Sinogram(geom, np.where(m, g.values, 0.0)), mask)
        e2 = extr.extrapolate(e1, mask)
        assert np.max(np.abs(e2.values - e1.values)) < 1e-10

    def test_hidden_wedge_fill_beats_zero_fill(self, geom, spec):
        grid = ImageGrid(64, 2.05 / 64)
        f = disc_image(grid, 0.45, center=(0.15, -0.1))
        g_true = forward_project(f, geom).values
        m = np.ones((geom.n_angles, geom.detector_bin_count), bool)
        m[20:35] = False
        mask = KnownMask(m)
        extr = Extrapolator(geom, spec)
        out = extr.extrapolate(Sinogram(geom, np.where(m, g_true, 0.0)), mask)
        hidden = ~m
        e_fill = np.linalg.norm((out.values - g_true)[hidden])
        e_zero = np.linalg.norm(g_true[hidden])
        assert e_fill <= 0.5 * e_zero

    def test_fill_vanishes_outside_support(self, geom, spec, rng):
        shape = (geom.n_angles, geom.detector_bin_count)
        m = np.ones(shape, bool)
        m[5:20] = False
        mask = KnownMask(m)
        gram = compute_gram(mask, geom, spec)
        g = Sinogram(geom, np.where(m, rng.standard_normal(shape), 0.0))
        out = extrapolate(g, mask, default_ridge_profile(gram, spec), gram, geom, spec)
        R, r = geom.source_radius, geom.fov_radius
        s = np.array([fan_to_parallel(FanCoords(0.0, u), R).s
                      for u in geom.detector_us()])
        outside = np.abs(s) >= r
        assert np.all(out.values[np.ix_(~m[:, 0], outside)] == 0.0)


class TestRangeResidual:
    def test_consistent_data_small_tail(self, geom, spec):
        grid = ImageGrid(64, 2.05 / 64)
        f = disc_image(grid, 0.5)
        g = forward_project(f, geom)
        r = range_residual(g, geom, spec)
        assert r.shape == (N_SMALL,)
        assert np.all(np.diff(r) < 1e-9)  # non-increasing
        assert r[-1] < 0.2  # N=12 truncation; the N=50 bound lives in acceptance

    def test_synthesized_data_in_span(self, geom, spec, rng):
        g = synthesize(random_coeffs(spec, rng), geom, spec)
        r = range_residual(g, geom, spec)
        assert r[-1] < 1e-8

    def test_white_noise_near_one(self, geom, spec, rng):
        shape = (geom.n_angles, geom.detector_bin_count)
        g = Sinogram(geom, rng.standard_normal(shape))
        r = range_residual(g, geom, spec)
        assert r[-1] > 0.5


class TestWedgeRoll:
    def test_detects_rolled_wedge(self, geom):
        L, U = geom.n_angles, geom.detector_bin_count
        rows = np.zeros(L, bool)
        rows[:13] = True
        m = np.zeros((L, U), bool)
        m[np.roll(rows, 7)] = True
        r, canonical = wedge_roll(KnownMask(m), geom)
        assert r == 7
        assert np.array_equal(np.roll(canonical.values, 7, axis=0), m)

    def test_non_wedge_returns_none(self, geom, rng):
        m = rng.random((geom.n_angles, geom.detector_bin_count)) > 0.5
        m[0, 0] = True
        assert wedge_roll(KnownMask(m), geom) is None

    def test_roll_shortcut_matches_direct(self, geom, spec):
        grid = ImageGrid(64, 2.05 / 64)
        f = disc_image(grid, 0.5, center=(0.1, 0.2))
        g_true = forward_project(f, geom).values
        L, U = geom.n_angles, geom.detector_bin_count
        rows = np.zeros(L, bool)
        rows[:40] = True
        out = {}
        for start in [0, 17]:
            m = np.zeros((L, U), bool)
            m[np.roll(rows, start)] = True
            mask = KnownMask(m)
            g = Sinogram(geom, np.where(m, g_true, 0.0))
            extr = Extrapolator(geom, spec)
            out[start] = extr.extrapolate(g, mask).values
            # oracle: direct Gram for this very mask, no rolling
            gram = compute_gram(mask, geom, spec)
            direct = extrapolate(g, mask, default_ridge_profile(gram, spec),
                                 gram, geom, spec)
            assert np.allclose(out[start], direct.values, atol=1e-9)


class TestRidgeDefaults:
    def test_scalar_default_scales_with_trace(self, full_gram):
        lam = default_ridge_lambda(full_gram)
        n = full_gram.matrix.shape[0]
        assert lam == pytest.approx(1e-3 * np.trace(full_gram.matrix).real / n)

    def test_profile_depends_only_on_angular_order(self, full_gram, spec):
        prof = default_ridge_profile(full_gram, spec)
        assert prof.shape == (spec.coefficient_count,)
        base = {}
        for (n, k), v in zip(spec.slots(), prof):
            base.setdefault(k, v)
            assert v == base[k]  # same k, same strength, any n
        ks = sorted(base)
        assert all(base[a] < base[b] for a, b in zip(ks, ks[1:]))  # grows with k
