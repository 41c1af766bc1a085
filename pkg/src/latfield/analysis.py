"""Estimators and physics extraction: autocorrelation-aware errors,
jackknife, correlators, cosh effective masses, non-Gaussianity cumulants,
cylindrical-observable gaps, mode-variance spectra, and scan reports.

Everything here is a pure fold over sample series; nothing owns an RNG.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import optimize

from .spectral import TorusSpec, build_frequency_lattice, fft_forward, cutoff_eta


# ---------------------------------------------------------------------------
# chain statistics


def autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance of a scalar series (FFT-based)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("need at least 2 samples")
    y = x - x.mean()
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(y, m)
    acov = np.fft.irfft(f * np.conj(f), m)[:n].real / n
    return acov


def integrated_autocorrelation(x, c: float = 5.0):
    """Integrated autocorrelation time with automatic (Sokal) windowing:
    tau = 1/2 + sum_{t<=W} rho(t), W the smallest lag with W >= c*tau(W).
    Returns (tau, window)."""
    acov = autocovariance(x)
    if acov[0] <= 0:
        return 0.5, 0
    rho = acov / acov[0]
    tau = 0.5
    window = 0
    for t in range(1, len(rho)):
        tau += rho[t]
        window = t
        if t >= c * tau:
            break
    return max(tau, 0.5), window


def effective_sample_size(x, c: float = 5.0) -> float:
    """n / (2 * tau_int); the iid-equivalent sample count."""
    x = np.asarray(x, dtype=float)
    tau, _ = integrated_autocorrelation(x, c)
    return x.shape[0] / (2.0 * tau)


def bin_means(x, n_bins: int) -> np.ndarray:
    """Bin a series (n, ...) into n_bins consecutive-block means,
    dropping the remainder at the end."""
    x = np.asarray(x, dtype=float)
    if n_bins < 2:
        raise ValueError("need at least 2 bins")
    per = x.shape[0] // n_bins
    if per < 1:
        raise ValueError(f"series of length {x.shape[0]} cannot fill {n_bins} bins")
    trimmed = x[: per * n_bins]
    return trimmed.reshape((n_bins, per) + x.shape[1:]).mean(axis=1)


def jackknife(stat: Callable, series, n_bins: int = 32):
    """Binned delete-one jackknife of stat(mean of series).

    `series` has shape (n, k) (or (n,)); `stat` maps a length-k mean
    vector to a scalar or array.  Binning absorbs autocorrelation for
    bins much longer than tau.  Returns (estimate, error).
    """
    b = bin_means(series, n_bins)
    full = np.asarray(stat(b.mean(axis=0)), dtype=float)
    total = b.sum(axis=0)
    thetas = np.stack([np.asarray(stat((total - b[i]) / (n_bins - 1)), dtype=float)
                       for i in range(n_bins)])
    err = np.sqrt((n_bins - 1) / n_bins
                  * np.sum((thetas - thetas.mean(axis=0)) ** 2, axis=0))
    if full.ndim == 0:
        return float(full), float(err)
    return full, err


def jackknife_mean(x, n_bins: int = 32):
    """Binned jackknife mean and error of a scalar series."""
    return jackknife(lambda m: m, np.asarray(x, dtype=float), n_bins)


# ---------------------------------------------------------------------------
# correlators and effective masses


@dataclass
class Correlator:
    """Connected two-point function along one lattice axis.

    `values[d]` is the correlator at site displacement d; `bins` keeps the
    binned raw series (correlator columns then per-component field means)
    so downstream fits can jackknife the full pipeline.
    """

    displacements: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    component_averaged: bool
    params_hash: str = ""
    n_components: int = 1
    bins: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.values[0] <= 0:
            raise ValueError("correlator at displacement 0 must be positive")


def correlator_series(values: np.ndarray, direction: int = 0,
                      mode: str = "point") -> np.ndarray:
    """One sample's translation- and component-averaged raw correlator.

    mode "point": (1/(N n^2)) sum_{i,x} Phi_i(x) Phi_i(x + d e_dir).
    mode "timeslice": same for the transverse-averaged 1d field
    (zero transverse momentum projection), whose free-field correlator is
    an exact cosh in the slice separation.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 3:
        raise ValueError("expected field values of shape (N, n, n)")
    if direction not in (0, 1):
        raise ValueError("direction must be 0 or 1")
    if mode == "timeslice":
        ts = v.mean(axis=2 if direction == 0 else 1)  # (N, n)
        f = np.fft.rfft(ts, axis=-1)
        c = np.fft.irfft(f * np.conj(f), ts.shape[-1], axis=-1).real
        return c.mean(axis=0) / ts.shape[-1]
    if mode != "point":
        raise ValueError("mode must be 'point' or 'timeslice'")
    f = np.fft.fft2(v, axes=(-2, -1))
    c2 = np.fft.ifft2(f * np.conj(f), axes=(-2, -1)).real / v.shape[-1] ** 2
    c2 = c2.mean(axis=0)
    return c2[:, 0] if direction == 0 else c2[0, :]


def two_point_function(samples: np.ndarray, direction: int = 0,
                       mode: str = "point", n_bins: int = 32,
                       params_hash: str = "") -> Correlator:
    """Connected correlator with jackknife errors from field samples of
    shape (S, N, n, n) (or a list of such configurations)."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 4:
        raise ValueError("expected samples of shape (S, N, n, n)")
    S, N, n, _ = samples.shape
    if S < 100:
        raise ValueError("need at least 100 samples")
    raw = np.stack([correlator_series(s, direction, mode) for s in samples])
    mu = samples.mean(axis=(2, 3))  # (S, N) per-component field means
    if mode == "timeslice":
        # slice field is the transverse mean; same per-component mean
        pass
    series = np.concatenate([raw, mu], axis=1)

    def stat(m):
        c = m[:n].copy()
        mean_sq = np.mean(m[n:] ** 2)
        return c - mean_sq

    values, errors = jackknife(stat, series, n_bins)
    disp = np.arange(n)
    b = bin_means(series, n_bins)
    return Correlator(disp, values, errors, True, params_hash, N, b)


def correlator_from_series(raw: np.ndarray, mu: np.ndarray,
                           n_bins: int = 32,
                           params_hash: str = "") -> Correlator:
    """Correlator from a chain-measured series: `raw[s]` the per-sweep raw
    correlator (from correlator_series) and `mu[s]` the per-component
    field means."""
    raw = np.asarray(raw, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if raw.ndim != 2 or mu.ndim != 2 or raw.shape[0] != mu.shape[0]:
        raise ValueError("raw (S, n) and mu (S, N) must align")
    n = raw.shape[1]
    series = np.concatenate([raw, mu], axis=1)

    def stat(m):
        return m[:n] - np.mean(m[n:] ** 2)

    values, errors = jackknife(stat, series, n_bins)
    b = bin_means(series, n_bins)
    return Correlator(np.arange(n), values, errors, True, params_hash,
                      mu.shape[1], b)


def dispersion_mass(m: float, eps: float) -> float:
    """Lattice pole mass of the free field with continuum mass m:
    mu = (2/eps) * asinh(eps*m/2) (the sinh-type dispersion relation)."""
    return (2.0 / eps) * math.asinh(eps * m / 2.0)


def _fit_cosh(values: np.ndarray, window: np.ndarray, n: int, eps: float):
    """Least-squares fit of A*cosh(mu*eps*(t - n/2)) over window sites."""
    c = values[window]
    if np.any(c <= 0):
        bad = window[np.argmin(c)]
        raise ValueError(f"non-positive correlator at site {bad} in the fit window")
    t = window.astype(float) - n / 2.0
    # initial guesses: amplitude from the midpoint, rate from an edge ratio
    a0 = float(values[n // 2]) if values[n // 2] > 0 else float(c.min())
    ratios = (values[window[0]] / a0) if a0 > 0 else 2.0
    mu0 = math.acosh(max(ratios, 1.0 + 1e-12)) / (abs(t[0]) * eps) if t[0] != 0 else 0.1
    mu0 = min(max(mu0, 1e-4), 10.0 / eps)

    def resid(p):
        log_a, mu = p
        return np.log(c) - (log_a + np.log(np.cosh(mu * eps * t)))

    sol = optimize.least_squares(resid, x0=[math.log(a0), mu0],
                                 bounds=([-np.inf, 0.0], [np.inf, np.inf]))
    return float(sol.x[1])


def effective_mass(corr: Correlator, torus: TorusSpec, window=None):
    """Cosh-fitted effective mass with jackknife error.

    Fits C(z) ~ A*cosh(m_eff*(z - L/2)) over the window (site indices,
    default [n/4, 3n/4]); requires the correlator built with stored bins.
    Returns (mass, error) in physical units.
    """
    n = torus.grid_points
    eps = torus.spacing
    if window is None:
        window = np.arange(n // 4, 3 * n // 4 + 1)
    else:
        window = np.asarray(window, dtype=int)
    if corr.bins is None:
        raise ValueError("correlator has no stored bins for jackknife")

    def stat(m):
        c = m[:n] - np.mean(m[n:] ** 2)
        return _fit_cosh(c, window, n, eps)

    mass, err = jackknife(stat, corr.bins, n_bins=corr.bins.shape[0])
    return mass, err


# ---------------------------------------------------------------------------
# smeared observables and non-Gaussianity


def bump_test_function(torus: TorusSpec, center=None, radius=None) -> np.ndarray:
    """Fixed smooth compactly supported bump on the grid: g(x) =
    eta(|x - center|_torus / radius), default centered with radius L/4."""
    L = torus.side_length
    n = torus.grid_points
    eps = torus.spacing
    if center is None:
        center = (L / 2.0, L / 2.0)
    if radius is None:
        radius = L / 4.0
    coords = eps * np.arange(n)
    dx = np.abs(coords - center[0])
    dx = np.minimum(dx, L - dx)
    dy = np.abs(coords - center[1])
    dy = np.minimum(dy, L - dy)
    r = np.sqrt(dx[:, None] ** 2 + dy[None, :] ** 2)
    return cutoff_eta(r / radius)


def smeared_field(values: np.ndarray, g: np.ndarray, torus: TorusSpec,
                  component: int = 0) -> float:
    """X = eps^2 * sum_x g(x) * Phi_component(x)."""
    v = np.asarray(values, dtype=float)
    return float(torus.spacing ** 2 * np.sum(g * v[component]))


def gaussian_smeared_variance(m: float, torus: TorusSpec, g: np.ndarray,
                              symbol_choice: str = "lattice") -> float:
    """Exact Var(eps^2 sum g*Z) under the GFF:
    (1/L^2) sum_xi |ghat(xi)|^2 / (m^2 + symbol(xi))."""
    lat = build_frequency_lattice(torus)
    sym = lat.sym_lattice if symbol_choice == "lattice" else lat.sym_continuum
    gh = fft_forward(np.asarray(g, dtype=float), torus)
    return float(np.sum(np.abs(gh) ** 2 / (m ** 2 + sym)) / torus.side_length ** 2)


def connected_four_cumulant(x, n_bins: int = 32):
    """kappa_4 = E[(X-EX)^4] - 3*Var(X)^2 of a scalar series, with binned
    jackknife error; exactly 0 for Gaussian X."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 1000:
        raise ValueError("need at least 1000 samples")
    powers = np.stack([x, x ** 2, x ** 3, x ** 4], axis=1)

    def stat(m):
        m1, m2, m3, m4 = m
        m2c = m2 - m1 ** 2
        m4c = m4 - 4.0 * m3 * m1 + 6.0 * m2 * m1 ** 2 - 3.0 * m1 ** 4
        return m4c - 3.0 * m2c ** 2

    return jackknife(stat, powers, n_bins)


class GapEstimate(NamedTuple):
    gap: float
    error: float
    nu_mean: float
    gff_mean: float


def _gauss_hermite_expectation(func, sigma: float, n_nodes: int = 120) -> float:
    """E[func(sigma * Z)], Z standard normal, by Gauss-Hermite quadrature."""
    t, w = np.polynomial.hermite.hermgauss(n_nodes)
    return float(np.sum(w * func(sigma * math.sqrt(2.0) * t)) / math.sqrt(math.pi))


def cylindrical_observable_gap(x_series, sigma_sq_gff: float, spec,
                               n_bins: int = 32) -> GapEstimate:
    """|E_nu[G(X)] - E_mu[G(Z)]| for a 1d cylindrical observable.

    `x_series` is the smeared-field series under nu; Z is the centered
    Gaussian with variance sigma_sq_gff (evaluated by quadrature).
    Admissible specs: ("tanh", a) -> G(x) = tanh(a*x), bounded with
    bounded derivatives, and ("quadratic", a) -> G(x) = a*x^2, bounded
    Hessian.
    """
    kind, a = spec
    if kind == "tanh":
        def G(x):
            return np.tanh(a * x)
    elif kind == "quadratic":
        def G(x):
            return a * np.asarray(x) ** 2
    else:
        raise ValueError(f"observable spec {kind!r} not admissible "
                         "(expected 'tanh' or 'quadratic')")
    if sigma_sq_gff <= 0:
        raise ValueError("GFF variance must be positive")
    x = np.asarray(x_series, dtype=float)
    gff_mean = _gauss_hermite_expectation(G, math.sqrt(sigma_sq_gff))
    nu_mean, err = jackknife_mean(G(x), n_bins)
    return GapEstimate(abs(nu_mean - gff_mean), err, nu_mean, gff_mean)


# ---------------------------------------------------------------------------
# mode variances and the H^1 Wasserstein proxy


def mode_variance_spectrum(samples: np.ndarray, torus: TorusSpec,
                           n_bins: int = 32):
    """Per-mode empirical variance (1/L^2)|Phihat(xi)|^2 averaged over
    components, with jackknife errors.  Returns (v_emp, v_err), (n, n)."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 4:
        raise ValueError("expected samples of shape (S, N, n, n)")
    S = samples.shape[0]
    n = torus.grid_points
    modes = fft_forward(samples, torus)
    sq = (np.abs(modes) ** 2).mean(axis=1) / torus.side_length ** 2  # (S, n, n)
    flat = sq.reshape(S, n * n)
    v, err = jackknife(lambda m: m, flat, n_bins)
    return v.reshape(n, n), err.reshape(n, n)


def h1_variance_proxy(v_emp: np.ndarray, m_star: float, torus: TorusSpec,
                      symbol_choice: str = "lattice",
                      v_ref: np.ndarray = None) -> float:
    """Gaussian-surrogate Wasserstein proxy
    (1/L^2) sum_xi (m_star^2 + symbol) (sqrt(v_emp) - sqrt(v_ref))^2,
    v_ref defaulting to the m_star GFF per-mode variance.  For two exact
    GFF variance tables with continuum symbol this equals
    gaussian_w2_h1m(m, m_star, m_star, torus) identically.
    """
    lat = build_frequency_lattice(torus)
    sym = lat.sym_lattice if symbol_choice == "lattice" else lat.sym_continuum
    if v_ref is None:
        v_ref = 1.0 / (m_star ** 2 + sym)
    v_emp = np.asarray(v_emp, dtype=float)
    if np.any(v_emp < 0):
        raise ValueError("empirical variances must be nonnegative")
    d = np.sqrt(v_emp) - np.sqrt(v_ref)
    return float(np.sum((m_star ** 2 + sym) * d ** 2) / torus.side_length ** 2)


# ---------------------------------------------------------------------------
# scans


@dataclass
class TrendReport:
    """Fitted linear trend over a scan; refit() reproduces the stored
    slope from the stored data."""

    name: str
    abscissa: np.ndarray
    ordinate: np.ndarray
    errors: np.ndarray
    slope: float
    slope_err: float
    intercept: float
    fit_window: tuple
    params_hash: str = ""

    def refit(self):
        lo, hi = self.fit_window
        x = self.abscissa[lo:hi]
        y = self.ordinate[lo:hi]
        return _linear_fit(x, y, self.errors[lo:hi])


def _linear_fit(x, y, err=None):
    """Weighted least-squares line; returns (slope, slope_err, intercept)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if err is not None and np.all(np.asarray(err) > 0):
        w = 1.0 / np.asarray(err, dtype=float)
    else:
        w = None
    if x.size < 4:
        coeffs = np.polyfit(x, y, 1, w=w)
        return float(coeffs[0]), 0.0, float(coeffs[1])
    coeffs, cov = np.polyfit(x, y, 1, w=w, cov="unscaled" if w is not None else True)
    return float(coeffs[0]), float(math.sqrt(max(cov[0, 0], 0.0))), float(coeffs[1])


def mass_beta_scan(lam: float, beta_grid, tol: float = 1e-12) -> TrendReport:
    """ln m*(beta) from the infinite-volume gap equation, fitted linearly
    in beta; the exact slope approaches -2*pi as lambda grows."""
    from .gap import solve_gap_continuum
    betas = np.asarray(beta_grid, dtype=float)
    if betas.size == 0:
        raise ValueError("beta grid is empty")
    log_m = np.array([0.5 * math.log(solve_gap_continuum(lam, b, tol).m_squared)
                      for b in betas])
    errors = np.zeros_like(log_m)
    slope, slope_err, intercept = _linear_fit(betas, log_m)
    return TrendReport("log-mass vs beta", betas, log_m, errors,
                       slope, slope_err, intercept, (0, betas.size))
