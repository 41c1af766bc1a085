"""Hermite polynomials, Wick powers, the quartic action, and the exact
covariance identities they satisfy under the GFF."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import (CountertermScheme, TorusSpec, greens_function,
                       lattice_propagator)
from .gff import FieldConfig, SpectralCovariance, sample_gff_batch


def hermite(order: int, z):
    """Probabilists' Hermite polynomial, positive leading coefficient:
    H1=z, H2=z^2-1, H3=z^3-3z, H4=z^4-6z^2+3."""
    z = np.asarray(z, dtype=float)
    if order == 1:
        out = z
    elif order == 2:
        out = z ** 2 - 1.0
    elif order == 3:
        out = z ** 3 - 3.0 * z
    elif order == 4:
        out = z ** 4 - 6.0 * z ** 2 + 3.0
    else:
        raise ValueError("hermite order must be in {1, 2, 3, 4}")
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class WickContext:
    """Counterterm value C and component count N fixing the Wick ordering."""

    c: float
    n_components: int
    scheme: CountertermScheme | None = None

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("counterterm must be nonnegative")
        if self.n_components < 1:
            raise ValueError("need at least one component")


def _values(field) -> np.ndarray:
    if isinstance(field, FieldConfig):
        return field.values
    return np.asarray(field, dtype=float)


def wick_norm2(field, ctx: WickContext) -> np.ndarray:
    """Per-site :|Phi(x)|^2: = sum_i Phi_i(x)^2 - N*C."""
    v = _values(field)
    if v.shape[0] != ctx.n_components:
        raise ValueError(f"field has {v.shape[0]} components, context expects {ctx.n_components}")
    return np.sum(v ** 2, axis=0) - ctx.n_components * ctx.c


def wick_norm4(field, ctx: WickContext) -> np.ndarray:
    """Per-site :|Phi(x)|^4: via the collapsed polynomial
    |Phi|^4 - C(2N+4)|Phi|^2 + C^2(N^2+2N)."""
    v = _values(field)
    N = ctx.n_components
    if v.shape[0] != N:
        raise ValueError(f"field has {v.shape[0]} components, context expects {N}")
    s = np.sum(v ** 2, axis=0)
    c = ctx.c
    return s ** 2 - c * (2 * N + 4) * s + c ** 2 * (N ** 2 + 2 * N)


def wick_norm4_hermite(field, ctx: WickContext) -> np.ndarray:
    """Independent O(N^2)-flavored evaluation of :|Phi|^4: from the
    Hermite-product definition (test oracle for wick_norm4):
    sum_{i != j} :Phi_i^2::Phi_j^2: + sum_i C^2 H4(Phi_i/sqrt(C))."""
    v = _values(field)
    N = ctx.n_components
    if v.shape[0] != N:
        raise ValueError(f"field has {v.shape[0]} components, context expects {N}")
    c = ctx.c
    h2 = v ** 2 - c                        # C * H2(phi/sqrt(C)), valid for c=0 too
    h4 = v ** 4 - 6.0 * c * v ** 2 + 3.0 * c ** 2
    cross = np.sum(h2, axis=0) ** 2 - np.sum(h2 ** 2, axis=0)
    return cross + np.sum(h4, axis=0)


def quartic_action(field, ctx: WickContext, torus: TorusSpec | None = None,
                   region: np.ndarray | None = None) -> float:
    """F = (1/4N) * eps^2 * sum_{x in region} :|Phi(x)|^4:.

    `region` is a boolean site mask (default: whole torus)."""
    if isinstance(field, FieldConfig) and torus is None:
        torus = field.torus
    if torus is None:
        raise ValueError("torus required when field is a bare array")
    w4 = wick_norm4(field, ctx)
    if region is None:
        total = np.sum(w4)
    else:
        region = np.asarray(region, dtype=bool)
        if not region.any():
            raise ValueError("region mask is empty")
        total = np.sum(w4[region])
    return float(torus.spacing ** 2 * total / (4.0 * ctx.n_components))


def action_lower_bound(ctx: WickContext, area: float) -> float:
    """Greatest lower bound of the Wick quartic action over a region of
    the given area: -(C^2/2)(1+2/N)*area, attained exactly when
    |Phi(x)|^2 = C(N+2) at every site (sum-of-squares identity
    F = (1/4N) * int (|Phi|^2 - C(N+2))^2 + bound)."""
    if area <= 0:
        raise ValueError("area must be positive")
    N = ctx.n_components
    return -(ctx.c ** 2 / 2.0) * (1.0 + 2.0 / N) * area


def quartic_covariance_exact(m: float, torus: TorusSpec, displacement,
                             N: int, eps1: float, eps2: float) -> float:
    """Exact covariance of (1/N):|Z_eps1(x)|^4: and (1/N):|Z_eps2(y)|^4:
    under the GFF: 8*(1+2/N) * G_{eps1,eps2}(x-y)^4.

    The constant is forced by Hermite orthogonality: the diagonal
    :Z_i^4: terms pair with weight 4! = 24 each, the i != j cross terms
    with weight 2*(2G^2)^2 each, so the sum is
    24N + 8N(N-1) = 8N^2(1+2/N)."""
    g = greens_function(m, torus, eps1, eps2, displacement)
    return 8.0 * (1.0 + 2.0 / N) * g ** 4


def quartic_covariance_exact_lattice(m: float, torus: TorusSpec,
                                     displacement_sites, N: int) -> float:
    """Same identity for the lattice-sampled GFF, with the exact lattice
    propagator in place of the smooth-cutoff Green's function.
    `displacement_sites` is an integer lattice vector."""
    K = lattice_propagator(m, torus)
    i, j = (int(displacement_sites[0]) % torus.grid_points,
            int(displacement_sites[1]) % torus.grid_points)
    return 8.0 * (1.0 + 2.0 / N) * K[i, j] ** 4


def mc_quartic_second_moment(cov: SpectralCovariance, N: int, phi: np.ndarray,
                             n_samples: int, rng: np.random.Generator,
                             batch: int = 2000):
    """MC estimate of E[(int (1/N):|Z|^4: phi dx)^2] with its standard
    error, Wick-ordered with the tadpole matching the sampler."""
    if n_samples < 100:
        raise ValueError("need at least 100 samples")
    phi = np.asarray(phi, dtype=float)
    torus = cov.torus
    ctx = WickContext(cov.site_variance, N)
    eps2 = torus.spacing ** 2
    vals = np.empty(n_samples)
    done = 0
    while done < n_samples:
        b = min(batch, n_samples - done)
        z = sample_gff_batch(cov, N, b, rng)
        w4 = (np.sum(z ** 2, axis=1) ** 2
              - ctx.c * (2 * N + 4) * np.sum(z ** 2, axis=1)
              + ctx.c ** 2 * (N ** 2 + 2 * N))
        vals[done:done + b] = eps2 * np.einsum("sxy,xy->s", w4, phi) / N
        done += b
    sq = vals ** 2
    est = float(np.mean(sq))
    se = float(np.std(sq, ddof=1) / np.sqrt(n_samples))
    return est, se
