"""Torus geometry, momentum lattices, the smooth cutoff, counterterms,
and Green's-function sums.

Conventions (frozen; checkpoints and mode tables depend on them):

* The torus has physical side L and n grid points per side, spacing
  eps = L/n.  Grid sites are x = eps*(i, j) with i, j in {0, ..., n-1}.
* Integer modes run over k in {-n/2+1, ..., n/2}^2, stored in numpy FFT
  index order (index i maps to k = i for i <= n/2, k = i - n otherwise),
  row-major and deterministic.  Frequencies are xi = (2*pi/L)*k.
* The forward transform is Fhat(xi) = eps^2 * sum_x f(x) exp(-i xi.x),
  i.e. ``eps**2 * np.fft.fft2``.  With this normalization Parseval reads
  eps^2 * sum_x |f|^2 = (1/L^2) * sum_xi |Fhat|^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TAU = 2.0 * np.pi


@dataclass(frozen=True)
class TorusSpec:
    """Square periodic torus of physical side `side_length` with an
    n x n grid, n = `grid_points` (even, >= 4)."""

    side_length: float
    grid_points: int

    def __post_init__(self):
        if self.side_length <= 0:
            raise ValueError("side_length must be positive")
        n = self.grid_points
        if n < 4 or n % 2 != 0:
            raise ValueError("grid_points must be an even integer >= 4")

    @property
    def spacing(self) -> float:
        return self.side_length / self.grid_points

    @property
    def area(self) -> float:
        return self.side_length ** 2

    @property
    def n_sites(self) -> int:
        return self.grid_points ** 2


def mode_numbers(n: int) -> np.ndarray:
    """Integer mode numbers in FFT index order, Nyquist mapped to +n/2."""
    k = np.arange(n)
    k = np.where(k <= n // 2, k, k - n)
    return k


def _phi(t):
    """exp(-1/t) for t > 0, else 0.  Building block of the smooth bump."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def cutoff_eta(r):
    """Fixed smooth radial cutoff: 1 on [0, 1/2], 0 on [1, inf), and the
    standard smooth partition phi(2-2r)/(phi(2-2r)+phi(2r-1)) in between."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("cutoff_eta requires r >= 0")
    out = np.zeros(r.shape)
    out[r <= 0.5] = 1.0
    mid = (r > 0.5) & (r < 1.0)
    if np.any(mid):
        a = _phi(2.0 - 2.0 * r[mid])
        b = _phi(2.0 * r[mid] - 1.0)
        out[mid] = a / (a + b)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class FrequencyLattice:
    """All n^2 grid modes of a torus with their momentum symbols.

    ``sym_continuum`` is |xi|^2, ``sym_lattice`` is the discrete-Laplacian
    eigenvalue (4/eps^2) * sum_i sin^2(eps*xi_i/2), and ``eta_weights`` is
    the smooth cutoff eta(eps*|xi|) evaluated per mode.
    """

    torus: TorusSpec
    k: np.ndarray = field(repr=False)            # (n, n, 2) ints
    xi: np.ndarray = field(repr=False)           # (n, n, 2)
    sym_continuum: np.ndarray = field(repr=False)  # (n, n)
    sym_lattice: np.ndarray = field(repr=False)    # (n, n)
    eta_weights: np.ndarray = field(repr=False)    # (n, n)

    @property
    def mode_count(self) -> int:
        return self.torus.n_sites


def build_frequency_lattice(torus: TorusSpec) -> FrequencyLattice:
    n = torus.grid_points
    L = torus.side_length
    eps = torus.spacing
    k1 = mode_numbers(n)
    kx, ky = np.meshgrid(k1, k1, indexing="ij")
    k = np.stack([kx, ky], axis=-1)
    xi = (TAU / L) * k.astype(float)
    sym_cont = np.sum(xi ** 2, axis=-1)
    sym_lat = (4.0 / eps ** 2) * np.sum(np.sin(eps * xi / 2.0) ** 2, axis=-1)
    eta_w = cutoff_eta(eps * np.sqrt(sym_cont))
    for arr in (k, xi, sym_cont, sym_lat, eta_w):
        arr.setflags(write=False)
    return FrequencyLattice(torus, k, xi, sym_cont, sym_lat, eta_w)


@dataclass(frozen=True)
class CountertermScheme:
    """Which regularization's tadpole defines the Wick counterterm.

    tag is "cutoff_eta" (smooth momentum cutoff over the infinite
    frequency lattice) or "lattice_tadpole" (exact sum over the n^2
    grid modes with the discrete-Laplacian symbol).
    """

    tag: str
    reference_mass: float = 1.0

    def __post_init__(self):
        if self.tag not in ("cutoff_eta", "lattice_tadpole"):
            raise ValueError(f"unknown counterterm scheme tag {self.tag!r}")
        if self.reference_mass <= 0:
            raise ValueError("reference_mass must be positive")


def _infinite_lattice_xi(side_length: float, radius: float):
    """All frequencies xi = (2*pi/L)*k with |xi| < radius, as flat arrays."""
    L = side_length
    kmax = int(np.ceil(radius * L / TAU))
    k1 = np.arange(-kmax, kmax + 1)
    kx, ky = np.meshgrid(k1, k1, indexing="ij")
    xi = (TAU / L) * np.stack([kx.ravel(), ky.ravel()], axis=-1).astype(float)
    r = np.sqrt(np.sum(xi ** 2, axis=-1))
    keep = r < radius
    return xi[keep], r[keep]


def cutoff_counterterm(m: float, side_length: float, eps: float) -> float:
    """Smooth-cutoff tadpole (1/L^2) sum_xi eta(eps|xi|)^2/(m^2+|xi|^2)
    over the infinite frequency lattice; exact finite sum since eta
    vanishes for |xi| >= 1/eps."""
    if m <= 0 or eps <= 0 or side_length <= 0:
        raise ValueError("mass, eps and side_length must be positive")
    xi, r = _infinite_lattice_xi(side_length, 1.0 / eps)
    w = cutoff_eta(eps * r) ** 2
    return float(np.sum(w / (m ** 2 + r ** 2)) / side_length ** 2)


def counterterm(m: float, torus: TorusSpec, scheme: CountertermScheme) -> float:
    """Tadpole C = E[Z(x)^2] under the chosen regularization; an exact
    finite sum in both schemes (the smooth cutoff truncates the infinite
    frequency lattice at |xi| >= 1/eps)."""
    if m <= 0:
        raise ValueError("mass must be positive")
    L = torus.side_length
    if scheme.tag == "lattice_tadpole":
        lat = build_frequency_lattice(torus)
        return float(np.sum(1.0 / (m ** 2 + lat.sym_lattice)) / L ** 2)
    return cutoff_counterterm(m, L, torus.spacing)


def greens_function(m: float, torus: TorusSpec, eps1: float, eps2: float,
                    displacement) -> float:
    """Doubly regularized Green's function
    (1/L^2) sum_xi eta(eps1|xi|) eta(eps2|xi|) cos(xi.z) / (m^2+|xi|^2),
    summed over the infinite frequency lattice (exact: eta truncates)."""
    if m <= 0 or eps1 <= 0 or eps2 <= 0:
        raise ValueError("mass and cutoff scales must be positive")
    z = np.asarray(displacement, dtype=float)
    xi, r = _infinite_lattice_xi(torus.side_length, 1.0 / max(eps1, eps2))
    w = cutoff_eta(eps1 * r) * cutoff_eta(eps2 * r)
    phase = np.cos(xi @ z)
    return float(np.sum(w * phase / (m ** 2 + r ** 2)) / torus.side_length ** 2)


def lattice_propagator(m: float, torus: TorusSpec) -> np.ndarray:
    """Exact propagator of the lattice GFF on the grid:
    K(z) = (1/L^2) sum over grid modes of cos(xi.z)/(m^2 + lattice symbol),
    returned as an (n, n) array indexed by the lattice displacement."""
    lat = build_frequency_lattice(torus)
    v = 1.0 / (m ** 2 + lat.sym_lattice)
    eps = torus.spacing
    return np.fft.ifft2(v).real / eps ** 2


def fft_forward(grid: np.ndarray, torus: TorusSpec) -> np.ndarray:
    """Mode grid Fhat(xi) = eps^2 * sum_x f(x) exp(-i xi.x); acts on the
    last two axes, which must both have length n."""
    n = torus.grid_points
    if grid.shape[-2:] != (n, n):
        raise ValueError(f"grid shape {grid.shape} does not match n={n}")
    return torus.spacing ** 2 * np.fft.fft2(grid, axes=(-2, -1))


def fft_inverse(modes: np.ndarray, torus: TorusSpec) -> np.ndarray:
    """Inverse of fft_forward; round trip is the identity to ~1e-15."""
    n = torus.grid_points
    if modes.shape[-2:] != (n, n):
        raise ValueError(f"mode grid shape {modes.shape} does not match n={n}")
    return np.fft.ifft2(modes, axes=(-2, -1)) / torus.spacing ** 2


def hminus1_inner(phi: np.ndarray, psi: np.ndarray, m: float,
                  torus: TorusSpec) -> float:
    """H^{-1}_m inner product
    (1/L^2) sum_xi Phihat(xi) conj(Psihat(xi)) / (m^2+|xi|^2), summed over
    grid modes and components.  Fields are (n, n) or (N, n, n) grids."""
    if m <= 0:
        raise ValueError("mass must be positive")
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if phi.shape != psi.shape:
        raise ValueError(f"field shapes differ: {phi.shape} vs {psi.shape}")
    lat = build_frequency_lattice(torus)
    f = fft_forward(phi, torus)
    g = fft_forward(psi, torus)
    val = np.sum((f * np.conj(g)).real / (m ** 2 + lat.sym_continuum))
    return float(val / torus.side_length ** 2)
