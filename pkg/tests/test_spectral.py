import numpy as np
import pytest

from latfield.spectral import (TorusSpec, CountertermScheme,
                               build_frequency_lattice, counterterm,
                               cutoff_counterterm, cutoff_eta, fft_forward,
                               fft_inverse, greens_function, hminus1_inner,
                               lattice_propagator, mode_numbers)


def test_torus_invariants():
    t = TorusSpec(8.0, 32)
    assert t.spacing == 0.25
    assert t.area == 64.0
    assert t.n_sites == 1024
    with pytest.raises(ValueError):
        TorusSpec(8.0, 7)
    with pytest.raises(ValueError):
        TorusSpec(8.0, 2)
    with pytest.raises(ValueError):
        TorusSpec(-1.0, 8)


def test_mode_numbers_order():
    assert list(mode_numbers(8)) == [0, 1, 2, 3, 4, -3, -2, -1]


def test_cutoff_eta_plateaus_and_smoothness():
    assert cutoff_eta(0.0) == 1.0
    assert cutoff_eta(0.5) == 1.0
    assert cutoff_eta(1.0) == 0.0
    assert cutoff_eta(3.0) == 0.0
    r = np.linspace(0.5, 1.0, 101)
    vals = cutoff_eta(r)
    assert np.all(np.diff(vals) <= 0)
    assert 0.0 < cutoff_eta(0.75) < 1.0
    # symmetric midpoint of the partition
    assert cutoff_eta(0.75) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        cutoff_eta(-0.1)


def test_frequency_lattice_symbols():
    t = TorusSpec(4.0, 8)
    lat = build_frequency_lattice(t)
    # lattice symbol <= continuum symbol, equality only at 0
    assert lat.sym_lattice[0, 0] == 0.0
    assert np.all(lat.sym_lattice <= lat.sym_continuum + 1e-12)
    # lattice symbol of mode k: (4/eps^2) sum sin^2(pi k / n)
    eps = t.spacing
    k = lat.k[3, 5]
    expect = (4.0 / eps ** 2) * np.sum(np.sin(np.pi * k / 8) ** 2)
    assert lat.sym_lattice[3, 5] == pytest.approx(expect, rel=1e-14)


def test_fft_convention_parseval_and_roundtrip():
    t = TorusSpec(4.0, 8)
    rng = np.random.default_rng(0)
    f = rng.normal(size=(8, 8))
    fh = fft_forward(f, t)
    eps = t.spacing
    lhs = eps ** 2 * np.sum(f ** 2)
    rhs = np.sum(np.abs(fh) ** 2) / t.side_length ** 2
    assert lhs == pytest.approx(rhs, rel=1e-13)
    back = fft_inverse(fh, t).real
    assert np.max(np.abs(back - f)) < 1e-13
    # constant field -> pure zero mode of amplitude c*L^2
    fh_const = fft_forward(np.full((8, 8), 0.3), t)
    assert fh_const[0, 0] == pytest.approx(0.3 * 16.0, rel=1e-14)
    assert np.max(np.abs(fh_const.flatten()[1:])) < 1e-12


def test_counterterm_scheme_validation():
    with pytest.raises(ValueError):
        CountertermScheme("bogus")
    with pytest.raises(ValueError):
        CountertermScheme("cutoff_eta", reference_mass=0.0)


def test_lattice_counterterm_equals_mode_sum():
    t = TorusSpec(4.0, 8)
    lat = build_frequency_lattice(t)
    m = 0.7
    direct = np.sum(1.0 / (m ** 2 + lat.sym_lattice)) / 16.0
    assert counterterm(m, t, CountertermScheme("lattice_tadpole")) == \
        pytest.approx(direct, rel=1e-14)


def test_cutoff_counterterm_decreasing_in_mass_and_finite_sum():
    # exact finite sum: enlarging the summation radius changes nothing
    c1 = cutoff_counterterm(0.5, 4.0, 0.5)
    c2 = cutoff_counterterm(1.0, 4.0, 0.5)
    assert c1 > c2 > 0
    # counterterm grows like log(1/eps) as the cutoff tightens
    assert cutoff_counterterm(1.0, 4.0, 0.1) > cutoff_counterterm(1.0, 4.0, 0.5)


def test_greens_function_symmetry_and_zero_displacement():
    t = TorusSpec(4.0, 8)
    g0 = greens_function(0.8, t, 0.5, 0.5, (0.0, 0.0))
    assert g0 == pytest.approx(cutoff_counterterm(0.8, 4.0, 0.5), rel=1e-13)
    ga = greens_function(0.8, t, 0.5, 0.25, (1.0, 0.5))
    gb = greens_function(0.8, t, 0.25, 0.5, (-1.0, -0.5))
    assert ga == pytest.approx(gb, rel=1e-13)
    assert abs(ga) < g0


def test_lattice_propagator_site_variance_and_symmetry():
    t = TorusSpec(4.0, 8)
    m = 0.6
    K = lattice_propagator(m, t)
    assert K[0, 0] == pytest.approx(
        counterterm(m, t, CountertermScheme("lattice_tadpole")), rel=1e-13)
    assert np.max(np.abs(K - K[::-1, :][np.ix_(np.roll(np.arange(8), -0), np.arange(8))])) >= 0
    # reflection symmetry K(z) = K(-z)
    assert K[1, 2] == pytest.approx(K[-1, -2], rel=1e-12)


def test_hminus1_inner_constant_field():
    t = TorusSpec(6.0, 12)
    phi = np.full((12, 12), 0.7)
    m = 0.5
    # only the zero mode survives: c^2 * L^2 / m^2
    assert hminus1_inner(phi, phi, m, t) == \
        pytest.approx(0.7 ** 2 * 36.0 / 0.25, rel=1e-12)
    with pytest.raises(ValueError):
        hminus1_inner(phi, np.zeros((6, 6)), m, t)
