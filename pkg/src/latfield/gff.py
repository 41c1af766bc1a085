"""Exact sampling of the massive Gaussian Free Field on the torus and
closed-form Gaussian information geometry.

All mode bookkeeping (conjugate symmetry, per-mode variances) lives here
and in :mod:`latfield.spectral`; the sampler, the quadratic-mass MGF and
the entropy formulas share the same mode table so they cannot drift
apart by factors of two.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .spectral import TorusSpec, build_frequency_lattice, fft_forward

SYMBOL_CHOICES = ("continuum", "lattice")


def rng_stream(seed: int, *stream_key: int) -> np.random.Generator:
    """Counter-based RNG stream keyed by (seed, stream ids); any draw is
    reproducible in isolation."""
    return np.random.Generator(np.random.Philox(key=np.uint64(seed),
                                                counter=list(stream_key) + [0] * (4 - len(stream_key))))


@dataclass(frozen=True)
class SpectralCovariance:
    """Per-mode variance table 1/(m^2 + symbol(xi)) of a massive GFF."""

    mass: float
    torus: TorusSpec
    symbol_choice: str
    variances: np.ndarray = field(repr=False)  # (n, n)

    @staticmethod
    def build(mass: float, torus: TorusSpec,
              symbol_choice: str = "lattice") -> "SpectralCovariance":
        if mass <= 0:
            raise ValueError("mass must be positive")
        if symbol_choice not in SYMBOL_CHOICES:
            raise ValueError(f"symbol_choice must be one of {SYMBOL_CHOICES}")
        lat = build_frequency_lattice(torus)
        sym = lat.sym_lattice if symbol_choice == "lattice" else lat.sym_continuum
        v = 1.0 / (mass ** 2 + sym)
        v.setflags(write=False)
        return SpectralCovariance(mass, torus, symbol_choice, v)

    @property
    def site_variance(self) -> float:
        """E[Z(x)^2]; equals the matching tadpole counterterm."""
        return float(np.sum(self.variances) / self.torus.side_length ** 2)


@dataclass
class FieldConfig:
    """N-component real field on the grid, shape (N, n, n), with
    provenance metadata (counterterm scheme, reference mass, RNG lineage)."""

    values: np.ndarray
    torus: TorusSpec
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        n = self.torus.grid_points
        if self.values.ndim != 3 or self.values.shape[1:] != (n, n):
            raise ValueError(f"field shape {self.values.shape} does not match grid n={n}")
        if self.values.shape[0] < 1:
            raise ValueError("need at least one component")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @property
    def components(self) -> int:
        return self.values.shape[0]


def _draw_components(cov: SpectralCovariance, shape: tuple,
                     rng: np.random.Generator) -> np.ndarray:
    """Draw iid GFF components of the given leading shape.

    Spectral filtering of white noise: conjugate mode pairs automatically
    share one complex Gaussian and self-conjugate modes come out real, so
    the law is exactly the centered Gaussian with the per-mode variances.
    """
    n = cov.torus.grid_points
    eps = cov.torus.spacing
    w = rng.standard_normal(shape + (n, n))
    modes = np.fft.fft2(w, axes=(-2, -1)) * np.sqrt(cov.variances)
    return np.fft.ifft2(modes, axes=(-2, -1)).real / eps


def sample_gff(cov: SpectralCovariance, N: int, rng: np.random.Generator,
               lineage: str = "") -> FieldConfig:
    """One N-component GFF configuration."""
    if N < 1:
        raise ValueError("N must be >= 1")
    values = _draw_components(cov, (N,), rng)
    meta = {
        "scheme": "lattice_tadpole" if cov.symbol_choice == "lattice" else "cutoff_eta",
        "reference_mass": cov.mass,
        "rng_lineage": lineage,
    }
    return FieldConfig(values, cov.torus, meta)


def sample_gff_batch(cov: SpectralCovariance, N: int, n_samples: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Stack of independent configurations, shape (n_samples, N, n, n)."""
    return _draw_components(cov, (n_samples, N), rng)


class EntropyDensity(NamedTuple):
    value: float
    tail_bound: float


def relative_entropy_density(m_star: float, m: float,
                             torus: TorusSpec) -> EntropyDensity:
    """Relative entropy per unit volume of the m_star-GFF with respect to
    the m-GFF, truncated to the n^2 grid modes (continuum symbol).  The
    m_star mode variance is v* = 1/(|xi|^2+m_star^2), so per mode
    KL = (1/2)[ v*/v - 1 - ln(v*/v) ] with v*/v = (|xi|^2+m^2)/(|xi|^2+m_star^2):

        (1/2L^2) sum_xi [ (|xi|^2+m^2)/(|xi|^2+m_star^2) - 1
                          + ln((|xi|^2+m_star^2)/(|xi|^2+m^2)) ].

    The omitted tail over |xi| > pi/eps decays like |xi|^-4 and its bound
    is returned alongside the value.
    """
    if m_star <= 0 or m <= 0:
        raise ValueError("masses must be positive")
    lat = build_frequency_lattice(torus)
    s = lat.sym_continuum
    a = m_star ** 2
    b = m ** 2
    terms = (s + b) / (s + a) - 1.0 + np.log((s + a) / (s + b))
    value = float(np.sum(terms) / (2.0 * torus.side_length ** 2))
    # |per-mode term| <= (a-b)^2 / (2 (s+a)(s+b)) <= (a-b)^2 / (2 |xi|^4);
    # majorize the mode sum beyond R = pi/eps by the integral.
    R = np.pi / torus.spacing
    margin = R - np.sqrt(2.0) * 2.0 * np.pi / torus.side_length
    margin = max(margin, R / 2.0)
    tail = (a - b) ** 2 / (2.0 * (2.0 * np.pi) ** 2) * np.pi / margin ** 2
    return EntropyDensity(value, float(tail))


def gaussian_w2_h1m(m1: float, m2: float, cost_mass: float,
                    torus: TorusSpec) -> float:
    """Squared 2-Wasserstein distance per unit volume between the m1- and
    m2-GFFs with H^1_{cost_mass} transport cost, via simultaneous
    diagonalization (comonotone per-mode coupling):

        (1/L^2) sum_xi (cost_mass^2+|xi|^2)
                 * ((m1^2+|xi|^2)^{-1/2} - (m2^2+|xi|^2)^{-1/2})^2.
    """
    if m1 <= 0 or m2 <= 0 or cost_mass <= 0:
        raise ValueError("masses must be positive")
    lat = build_frequency_lattice(torus)
    s = lat.sym_continuum
    d = 1.0 / np.sqrt(m1 ** 2 + s) - 1.0 / np.sqrt(m2 ** 2 + s)
    return float(np.sum((cost_mass ** 2 + s) * d ** 2) / torus.side_length ** 2)


def wick_mass_log_mgf(A: float, m: float, torus: TorusSpec, N: int,
                      symbol_choice: str = "lattice") -> float:
    """log E[exp(A * integral of (|Phi|^2 - N C) dx)] for the N-component
    GFF, in closed form over the grid modes:

        -(N/2) sum_xi [ ln(1 - 2A/(m^2+symbol(xi))) + 2A/(m^2+symbol(xi)) ].

    Requires 1 - 2A/(m^2+symbol(xi)) > 0 for every mode.
    """
    cov = SpectralCovariance.build(m, torus, symbol_choice)
    v = cov.variances
    arg = 1.0 - 2.0 * A * v
    if np.any(arg <= 0):
        idx = np.unravel_index(int(np.argmin(arg)), arg.shape)
        lat = build_frequency_lattice(torus)
        raise ValueError(
            f"log-MGF diverges: 1-2A*v <= 0 first at mode k={tuple(lat.k[idx])} "
            f"(variance {v[idx]:.6g}, A={A})")
    return float(-(N / 2.0) * np.sum(np.log(arg) + 2.0 * A * v))


def talagrand_gaussian_check(mean_shift, diag_cov_ratio, sigma_diag=None):
    """Exact finite-dimensional Talagrand pair for diagonal Gaussians.

    Reference is N(0, diag(sigma_diag)); candidate is
    N(mean_shift, diag(ratio_i * sigma_i)).  Returns (w2_sq, two_h) where
    w2_sq is the squared Sigma^{-1}-weighted 2-Wasserstein distance and
    two_h is twice the relative entropy; Talagrand says w2_sq <= two_h.
    """
    a = np.asarray(mean_shift, dtype=float)
    r = np.asarray(diag_cov_ratio, dtype=float)
    if a.shape != r.shape or a.ndim != 1 or a.size < 1:
        raise ValueError("mean_shift and diag_cov_ratio must be equal-length vectors")
    if np.any(r <= 0):
        raise ValueError("covariance ratios must be positive")
    if sigma_diag is None:
        sig = np.ones_like(a)
    else:
        sig = np.asarray(sigma_diag, dtype=float)
        if sig.shape != a.shape or np.any(sig <= 0):
            raise ValueError("sigma_diag must be positive and match mean_shift")
    w2_sq = float(np.sum(a ** 2 / sig) + np.sum((np.sqrt(r) - 1.0) ** 2))
    two_h = float(np.sum(a ** 2 / sig) + np.sum(r - 1.0 - np.log(r)))
    return w2_sq, two_h
