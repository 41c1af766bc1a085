import numpy as np
import pytest

from latfield.spectral import TorusSpec, build_frequency_lattice, fft_forward
from latfield.gff import (SpectralCovariance, rng_stream, sample_gff,
                          sample_gff_batch, relative_entropy_density,
                          gaussian_w2_h1m, wick_mass_log_mgf,
                          talagrand_gaussian_check)

TORUS = TorusSpec(6.0, 12)


def test_rng_stream_reproducible_and_independent():
    a = rng_stream(7, 1).standard_normal(5)
    b = rng_stream(7, 1).standard_normal(5)
    c = rng_stream(7, 2).standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_covariance_site_variance_is_tadpole():
    cov = SpectralCovariance.build(0.8, TORUS, "lattice")
    lat = build_frequency_lattice(TORUS)
    direct = float(np.sum(1.0 / (0.64 + lat.sym_lattice)) / 36.0)
    assert cov.site_variance == pytest.approx(direct, rel=1e-14)
    with pytest.raises(ValueError):
        SpectralCovariance.build(0.0, TORUS)
    with pytest.raises(ValueError):
        SpectralCovariance.build(1.0, TORUS, "bogus")


def test_sampler_mode_variances_match_covariance():
    m = 0.7
    cov = SpectralCovariance.build(m, TORUS, "lattice")
    rng = rng_stream(11, 5)
    z = sample_gff_batch(cov, 1, 60000, rng)
    modes = fft_forward(z[:, 0], TORUS)
    v_emp = (np.abs(modes) ** 2).mean(axis=0) / TORUS.side_length ** 2
    # per-mode relative error ~ sqrt(2/S) ~ 0.6%; allow 5 sigma
    rel = np.abs(v_emp - cov.variances) / cov.variances
    assert np.max(rel) < 5.0 * np.sqrt(2.0 / 60000)
    # zero mode variance L^2/m^2 via the covariance table
    assert cov.variances[0, 0] == pytest.approx(1.0 / m ** 2, rel=1e-14)


def test_sampler_site_variance_and_field_config():
    cov = SpectralCovariance.build(0.7, TORUS, "lattice")
    rng = rng_stream(3, 1)
    f = sample_gff(cov, 3, rng, lineage="test")
    assert f.values.shape == (3, 12, 12)
    assert f.components == 3
    assert f.metadata["scheme"] == "lattice_tadpole"
    z = sample_gff_batch(cov, 2, 20000, rng)
    emp = z.var()
    se = np.sqrt(2.0 / (20000 * 2)) * cov.site_variance  # crude (sites correlate)
    assert abs(emp - cov.site_variance) < 30 * se


def test_relative_entropy_density_matches_per_mode_oracle():
    lat = build_frequency_lattice(TORUS)
    s = lat.sym_continuum
    m_star, m = 0.4, 0.9
    v1 = 1.0 / (m_star ** 2 + s)
    v2 = 1.0 / (m ** 2 + s)
    oracle = 0.5 * np.sum(v1 / v2 - 1.0 - np.log(v1 / v2)) / 36.0
    ed = relative_entropy_density(m_star, m, TORUS)
    assert ed.value == pytest.approx(oracle, abs=1e-12)
    assert ed.value >= 0
    assert ed.tail_bound >= 0
    assert relative_entropy_density(0.7, 0.7, TORUS).value == 0.0


def test_w2_matches_comonotone_oracle_and_vanishes_on_diagonal():
    lat = build_frequency_lattice(TORUS)
    s = lat.sym_continuum
    m1, m2, mc = 0.4, 0.9, 0.6
    d = (1.0 / np.sqrt(m1 ** 2 + s) - 1.0 / np.sqrt(m2 ** 2 + s)) ** 2
    oracle = np.sum((mc ** 2 + s) * d) / 36.0
    assert gaussian_w2_h1m(m1, m2, mc, TORUS) == pytest.approx(oracle, abs=1e-12)
    assert gaussian_w2_h1m(0.5, 0.5, 1.0, TORUS) == 0.0


def test_log_mgf_against_mc_and_divergence_guard():
    m, N, A = 0.8, 3, 0.05
    val = wick_mass_log_mgf(A, m, TORUS, N)
    cov = SpectralCovariance.build(m, TORUS, "lattice")
    rng = rng_stream(2, 4)
    z = sample_gff_batch(cov, N, 150000, rng)
    c = cov.site_variance
    eps2 = TORUS.spacing ** 2
    x = A * eps2 * np.sum(np.sum(z ** 2, axis=1) - N * c, axis=(1, 2))
    shift = x.max()
    mc = np.log(np.mean(np.exp(x - shift))) + shift
    # log-MGF of a heavy-ish tail: generous MC tolerance
    assert val == pytest.approx(mc, abs=0.02)
    # A too large: the zero mode 1 - 2A L^2/m^2 goes nonpositive
    with pytest.raises(ValueError, match="mode"):
        wick_mass_log_mgf(10.0, m, TORUS, N)


def test_log_mgf_small_a_quadratic_behaviour():
    # leading order: (N/2) sum (2 A v)^2 / 2 = N A^2 sum v^2
    m = 1.0
    lat = build_frequency_lattice(TORUS)
    v = 1.0 / (m ** 2 + lat.sym_lattice)
    for A in (1e-4, 1e-5):
        val = wick_mass_log_mgf(A, m, TORUS, 2)
        lead = 2 * A ** 2 * np.sum(v ** 2)
        assert val == pytest.approx(lead, rel=5e-3 * (A / 1e-5))


def test_talagrand_inequality_and_mean_shift_equality():
    rng = np.random.default_rng(9)
    for _ in range(100):
        d = int(rng.integers(1, 10))
        a = rng.normal(size=d)
        r = np.exp(rng.normal(scale=0.8, size=d))
        sig = np.exp(rng.normal(scale=0.5, size=d))
        w2, two_h = talagrand_gaussian_check(a, r, sig)
        assert w2 <= two_h * (1.0 + 1e-12) + 1e-15
    # pure mean shift: equality exactly
    a = np.array([0.3, -1.2, 2.0])
    w2, two_h = talagrand_gaussian_check(a, np.ones(3), np.array([2.0, 0.5, 1.0]))
    assert w2 == pytest.approx(two_h, abs=1e-12)
    with pytest.raises(ValueError):
        talagrand_gaussian_check(np.zeros(2), np.array([1.0, -1.0]))
