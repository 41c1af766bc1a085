"""Gap-equation solvers (continuum, finite volume, momentum cutoff,
lattice) and the numerical certificates for the integral estimates that
control their truncations.

The finite-volume frequency sum h_L is evaluated through its
exponentially convergent Bessel (heat-kernel periodization)
representation

    h_L(m^2) = (1/4pi) ln(m^2)
               + (1/2pi) sum_{0 != n in Z^2} [K0(L|n|) - K0(m L |n|)],

which carries an explicit analytic tail bound; the paired power-law
summand (m^2-1)/((1+|xi|^2)(m^2+|xi|^2)) is kept as an independent
cross-check at small L in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate, special

from .spectral import (CountertermScheme, TorusSpec, counterterm,
                       cutoff_counterterm)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class GapProblem:
    """One gap-equation instance.  regularization is "continuum",
    "finite_volume", "cutoff" (requires eps) or "lattice" (requires torus)."""

    lam: float
    beta: float
    regularization: str
    n_components: float = math.inf
    volume_side: float = math.inf
    eps: float | None = None
    torus: TorusSpec | None = None

    def __post_init__(self):
        if self.lam <= 0 or self.beta < 0:
            raise ValueError("need lambda > 0 and beta >= 0")
        reg = self.regularization
        if reg == "continuum":
            if math.isfinite(self.n_components) or math.isfinite(self.volume_side):
                raise ValueError("continuum regularization requires N = L = infinity")
        elif reg == "finite_volume":
            if not math.isfinite(self.volume_side):
                raise ValueError("finite_volume requires finite L")
        elif reg == "cutoff":
            if self.eps is None or not math.isfinite(self.volume_side):
                raise ValueError("cutoff requires finite L and eps")
        elif reg == "lattice":
            if self.torus is None:
                raise ValueError("lattice requires a torus")
        else:
            raise ValueError(f"unknown regularization {reg!r}")

    def solve(self, tol: float = 1e-10) -> "GapSolution":
        if self.regularization == "continuum":
            return solve_gap_continuum(self.lam, self.beta, tol)
        if self.regularization == "finite_volume":
            return solve_gap_finite(self.lam, self.beta, self.n_components,
                                    self.volume_side, tol)
        if self.regularization == "cutoff":
            return solve_gap_cutoff(self.lam, self.beta, self.n_components,
                                    self.volume_side, self.eps, tol)
        return solve_gap_lattice(self.lam, self.beta, self.n_components,
                                 self.torus, tol)


@dataclass(frozen=True)
class GapSolution:
    """Solved squared mass with a residual certificate."""

    m_squared: float
    residual: float
    bracket: tuple
    truncation_certificate: float

    def __post_init__(self):
        if not (0.0 < self.m_squared < 1.0):
            raise ValueError("gap mass squared must lie in (0, 1)")

    @property
    def mass(self) -> float:
        return math.sqrt(self.m_squared)


def _bisect_newton(g: Callable[[float], float],
                   gprime: Callable[[float], float],
                   tol: float, lo: float = 1e-300, hi: float = 1.0,
                   increasing: bool = True):
    """Root of g on (lo, hi): bisection to bracket width 1e-6, then Newton
    polished to |g| <= tol.  g must be monotone with a sign change."""
    sgn = 1.0 if increasing else -1.0
    a, b = lo, hi
    while b - a > 1e-6:
        mid = 0.5 * (a + b)
        if sgn * g(mid) < 0:
            a = mid
        else:
            b = mid
    bracket = (a, b)
    x = 0.5 * (a + b)
    for _ in range(100):
        gx = g(x)
        if abs(gx) <= tol:
            break
        step = gx / gprime(x)
        xn = x - step
        if not (a < xn < b):
            # Newton left the bracket; fall back to one bisection step.
            if sgn * gx < 0:
                a = x
            else:
                b = x
            xn = 0.5 * (a + b)
        x = xn
    return x, g(x), bracket


def solve_gap_continuum(lam: float, beta: float, tol: float = 1e-12) -> GapSolution:
    """m*^2 solving m*^2/lam + (1/4pi) ln(m*^2) = -beta on (0, 1)."""
    if lam <= 0 or beta < 0 or tol <= 0:
        raise ValueError("need lambda > 0, beta >= 0, tol > 0")

    def g(x):
        return x / lam + math.log(x) / (4.0 * math.pi) + beta

    def gp(x):
        return 1.0 / lam + 1.0 / (4.0 * math.pi * x)

    x, resid, bracket = _bisect_newton(g, gp, tol)
    return GapSolution(x, resid, bracket, 0.0)


def solve_gap_n_continuum(lam: float, beta: float, N: int,
                          tol: float = 1e-12) -> GapSolution:
    """m**^2 solving m**^2/lam + (1+2/N)(1/4pi) ln(m**^2) = -beta
    (the N-dependent infinite-volume equation)."""
    c = 1.0 + 2.0 / N

    def g(x):
        return x / lam + c * math.log(x) / (4.0 * math.pi) + beta

    def gp(x):
        return 1.0 / lam + c / (4.0 * math.pi * x)

    x, resid, bracket = _bisect_newton(g, gp, tol)
    return GapSolution(x, resid, bracket, 0.0)


class LatticeSum(NamedTuple):
    value: float
    tail_bound: float


def _k0_sum(a: float, R: int) -> float:
    """sum over 0 != n in Z^2, |n| <= R, of K0(a|n|)."""
    k1 = np.arange(-R, R + 1)
    kx, ky = np.meshgrid(k1, k1, indexing="ij")
    r = np.sqrt(kx.astype(float) ** 2 + ky.astype(float) ** 2)
    mask = (r > 0) & (r <= R)
    return float(np.sum(special.k0(a * r[mask])))


def _k0_tail(a: float, R: int) -> float:
    """Upper bound for sum over |n| > R of K0(a|n|):
    integral majorization over {|y| > R - sqrt(2)}."""
    rho = R - math.sqrt(2.0)
    if rho <= 0:
        return math.inf
    return TWO_PI * rho / a * float(special.k1(a * rho))


def lattice_sum_h(m_squared: float, L: float, tol: float = 1e-12) -> LatticeSum:
    """h_L(m^2) = (1/L^2) sum_xi [1/(1+|xi|^2) - 1/(m^2+|xi|^2)] with a
    certified truncation tail (Bessel representation, see module docs)."""
    if not (0.0 < m_squared <= 1.0):
        raise ValueError("m_squared must lie in (0, 1]")
    if L <= 0 or tol <= 0:
        raise ValueError("need L > 0 and tol > 0")
    if m_squared == 1.0:
        return LatticeSum(0.0, 0.0)
    m = math.sqrt(m_squared)
    a = m * L  # slowest-decaying scale
    R = max(4, int(math.ceil(12.0 / a)))
    while True:
        tail = (_k0_tail(a, R) + _k0_tail(L, R)) / TWO_PI
        if tail <= tol:
            break
        if R > 100000:
            raise ArithmeticError(
                f"requested tail tolerance {tol} unreachable (R={R}, mL={a:.3g})")
        R *= 2
    corr = (_k0_sum(L, R) - _k0_sum(a, R)) / TWO_PI
    value = math.log(m_squared) / (4.0 * math.pi) + corr
    return LatticeSum(value, tail)


def lattice_sum_h_derivative(m_squared: float, L: float,
                             tol: float = 1e-12) -> float:
    """d h_L / d(m^2) = (1/L^2) sum_xi 1/(m^2+|xi|^2)^2 > 0."""
    m = math.sqrt(m_squared)
    a = m * L
    R = max(4, int(math.ceil(12.0 / a)))
    while (_k0_tail(a, R) / TWO_PI) * L / (2.0 * m) > tol and R <= 100000:
        R *= 2
    k1 = np.arange(-R, R + 1)
    kx, ky = np.meshgrid(k1, k1, indexing="ij")
    r = np.sqrt(kx.astype(float) ** 2 + ky.astype(float) ** 2)
    mask = (r > 0) & (r <= R)
    s = float(np.sum(r[mask] * special.k1(a * r[mask])))
    return 1.0 / (4.0 * math.pi * m_squared) + L * s / (4.0 * math.pi * m)


def solve_gap_finite(lam: float, beta: float, N: int, L: float,
                     tol: float = 1e-10) -> GapSolution:
    """m^2 solving m^2/lam + (1+2/N) h_L(m^2) = -beta on (0, 1)."""
    if lam <= 0 or beta < 0 or N < 1 or L <= 0:
        raise ValueError("bad gap-equation parameters")
    c = 1.0 + 2.0 / N
    htol = min(tol, 1e-12)

    def g(x):
        return x / lam + c * lattice_sum_h(x, L, htol).value + beta

    def gp(x):
        return 1.0 / lam + c * lattice_sum_h_derivative(x, L, htol)

    x, resid, bracket = _bisect_newton(g, gp, tol)
    cert = c * lattice_sum_h(x, L, htol).tail_bound
    return GapSolution(x, resid, bracket, cert)


def solve_gap_cutoff(lam: float, beta: float, N: int, L: float, eps: float,
                     tol: float = 1e-10) -> GapSolution:
    """m_eps^2 solving
    (1+2/N) C^1_{eps,L} + beta = (1+2/N) C^{m_eps}_{eps,L} - m_eps^2/lam
    with the smooth-cutoff counterterms (exact finite sums)."""
    if eps > 1:
        raise ValueError("cutoff solver is stated for eps <= 1")
    c = 1.0 + 2.0 / N
    c_ref = cutoff_counterterm(1.0, L, eps)

    def g(x):
        return c * (cutoff_counterterm(math.sqrt(x), L, eps) - c_ref) - x / lam - beta

    # decreasing in x; use a numerical derivative for the Newton polish
    def gp(x):
        h = max(1e-7, 1e-7 * x)
        return (g(x + h) - g(x - h)) / (2.0 * h)

    x, resid, bracket = _bisect_newton(g, gp, tol, increasing=False)
    return GapSolution(x, resid, bracket, 0.0)


def solve_gap_lattice(lam: float, beta: float, N: int, torus: TorusSpec,
                      tol: float = 1e-10) -> GapSolution:
    """m_lat^2 solving
    (1+2/N) C_lat(1) + beta = (1+2/N) C_lat(m_lat) - m_lat^2/lam
    with the exact grid-mode tadpole, so that the simulated lattice
    measure coincides with the strictly convex model at mass m_lat."""
    c = 1.0 + 2.0 / N
    scheme = CountertermScheme("lattice_tadpole")
    c_ref = counterterm(1.0, torus, scheme)

    def g(x):
        return c * (counterterm(math.sqrt(x), torus, scheme) - c_ref) - x / lam - beta

    def gp(x):
        h = max(1e-7, 1e-7 * x)
        return (g(x + h) - g(x - h)) / (2.0 * h)

    x, resid, bracket = _bisect_newton(g, gp, tol, increasing=False)
    return GapSolution(x, resid, bracket, 0.0)


class PoissonCheck(NamedTuple):
    lhs: float
    rhs: float
    residual: float


def _theta2(c: float) -> float:
    """theta(c) = sum over n in Z^2 of exp(-c |n|^2), c > 0."""
    if c >= 0.5:
        kmax = int(math.ceil(math.sqrt(745.0 / c))) + 1
        k = np.arange(-kmax, kmax + 1)
        e = np.exp(-c * k.astype(float) ** 2)
        s1 = float(np.sum(e))
        return s1 * s1
    # modular transform for small c
    return (math.pi / c) * _theta2(math.pi ** 2 / c)


def verify_poisson_identity(m: float, L: float, quad_tol: float = 1e-10) -> PoissonCheck:
    """Both sides of the heat-kernel resummation identity

        sum_k m^2/(m^2 L^2 + |2 pi k|^2)^2
          = int_0^inf e^{-s L^2} (1/4pi) sum_k e^{-m^2 |k|^2 / (4s)} ds,

    evaluated independently (truncated sum vs adaptive quadrature)."""
    if m <= 0 or L <= 0:
        raise ValueError("need m, L > 0")
    # left side: absolutely convergent sum, |k|^{-8} tail
    K = 16
    prev = None
    while True:
        k1 = np.arange(-K, K + 1)
        kx, ky = np.meshgrid(k1, k1, indexing="ij")
        q2 = (TWO_PI ** 2) * (kx.astype(float) ** 2 + ky.astype(float) ** 2)
        lhs = float(np.sum(m ** 2 / (m ** 2 * L ** 2 + q2) ** 2))
        tail = m ** 2 / (TWO_PI ** 8) * math.pi / (3.0 * (K - 2.0) ** 6)
        if prev is not None and abs(lhs - prev) < quad_tol / 10 and tail < quad_tol / 10:
            break
        prev = lhs
        K *= 2
        if K > 4096:
            break

    def integrand(s):
        if s <= 0:
            return 0.0
        return math.exp(-s * L ** 2) * _theta2(m ** 2 / (4.0 * s)) / (4.0 * math.pi)

    upper = max(80.0 / L ** 2, 10.0)
    rhs, err = integrate.quad(integrand, 0.0, upper, limit=400,
                              epsabs=quad_tol / 10, epsrel=quad_tol / 10)
    # tail beyond `upper`: theta(m^2/4s) <= 1 + 4 pi s / m^2 there, so the
    # remaining integral is bounded by an exponentially small closed form.
    tail_rhs = (math.exp(-upper * L ** 2) / (4.0 * math.pi * L ** 2)
                * (1.0 + 4.0 * math.pi * (upper + 1.0 / L ** 2) / m ** 2))
    rhs += tail_rhs
    if err > quad_tol:
        raise ArithmeticError(f"quadrature did not converge: error estimate {err}")
    residual = abs(lhs - rhs)
    return PoissonCheck(lhs, rhs, residual)


class RiemannReport(NamedTuple):
    name: str
    riemann_sum: float
    integral: float
    quarter_bound_ok: bool
    gap: float
    gap_bound: float
    gap_bound_ok: bool
    sum_uncertainty: float


def _riemann_sum_radial(f, L: float, radius: float, tail_integral: float,
                        tail_axis: float):
    """(2pi/L)^2 * sum over the frequency lattice of a radial decreasing f,
    truncated at |xi| <= radius; the remainder is replaced by its integral
    with a boundary-term uncertainty bound."""
    h = TWO_PI / L
    kmax = int(math.ceil(radius / h))
    k1 = np.arange(-kmax, kmax + 1)
    kx, ky = np.meshgrid(k1, k1, indexing="ij")
    r = h * np.sqrt(kx.astype(float) ** 2 + ky.astype(float) ** 2)
    mask = r <= radius
    s = h ** 2 * float(np.sum(f(r[mask])))
    # exterior: Riemann sum ~ integral, with boundary-term uncertainty
    uncertainty = 3.0 * h ** 2 * f(radius) + 4.0 * h * tail_axis
    return s + tail_integral, uncertainty


def verify_riemann_bounds(m: float, L: float) -> list[RiemannReport]:
    """Checks the quarter-integral lower bound and the boundary-term gap
    bound for the two radial integrand families used by the gap analysis."""
    if not (0.0 < m < 1.0):
        raise ValueError("need 0 < m < 1 for the paired-summand family")
    h = TWO_PI / L
    reports = []

    # family 1: (1-m^2)/((1+r^2)(m^2+r^2)); |xi|^{-4} decay
    def f1(r):
        return (1.0 - m ** 2) / ((1.0 + r ** 2) * (m ** 2 + r ** 2))

    I1 = -math.pi * math.log(m ** 2)
    axis1_total = math.pi / (2.0 * m) - math.pi / 2.0
    R1 = max(200.0, 50.0 * h)
    tail_int1 = (1.0 - m ** 2) * math.pi / R1 ** 2 * (1.0 + 5.0 / R1 ** 2)
    axis_tail1, _ = integrate.quad(f1, R1, np.inf)
    s1, u1 = _riemann_sum_radial(f1, L, R1, tail_int1, axis_tail1)
    gap1 = abs(I1 - s1)
    bound1 = 3.0 * h ** 2 * f1(0.0) + 4.0 * h * axis1_total
    reports.append(RiemannReport("paired_summand", s1, I1, s1 >= 0.25 * I1 - u1,
                                 gap1, bound1, gap1 <= bound1 + u1, u1))

    # family 2: (m^2+r^2)^{-4/3}; |xi|^{-8/3} decay
    def f2(r):
        return (m ** 2 + r ** 2) ** (-4.0 / 3.0)

    I2 = 3.0 * math.pi * m ** (-2.0 / 3.0)
    axis2_total, _ = integrate.quad(f2, 0.0, np.inf)
    R2 = max(400.0, 50.0 * h)
    tail_int2 = 3.0 * math.pi * (m ** 2 + R2 ** 2) ** (-1.0 / 3.0)
    axis_tail2, _ = integrate.quad(f2, R2, np.inf)
    s2, u2 = _riemann_sum_radial(f2, L, R2, tail_int2, axis_tail2)
    gap2 = abs(I2 - s2)
    bound2 = 3.0 * h ** 2 * f2(0.0) + 4.0 * h * axis2_total
    reports.append(RiemannReport("four_thirds_power", s2, I2, s2 >= 0.25 * I2 - u2,
                                 gap2, bound2, gap2 <= bound2 + u2, u2))
    return reports


class NelsonCheck(NamedTuple):
    lhs_log: float
    rhs_log: float
    tail_bound: float


def verify_nelson_integral_bound(lam: float) -> NelsonCheck:
    """log of both sides of
    int_0^inf exp(lam*M - exp(sqrt(M))) dM <= 50 lam exp(16 lam (ln lam)^2),
    valid for lam >= e; evaluated in log space so large lam cannot overflow."""
    if lam < math.e:
        raise ValueError("bound is stated for lambda >= e")
    upper = 48.0 * lam
    M = np.linspace(1e-12, upper, 200001)
    logf = lam * M - np.exp(np.sqrt(M))
    # trapezoid rule in log space
    dm = M[1] - M[0]
    peak = float(np.max(logf))
    lhs_log = peak + math.log(float(np.trapezoid(np.exp(logf - peak), dx=dm)))
    log_tail = math.log(4.0) - 12.0 * lam  # integrand tail beyond 48*lam
    lhs_log = float(np.logaddexp(lhs_log, log_tail))
    tail = math.exp(max(log_tail, -745.0)) if log_tail > -745.0 else 0.0
    rhs_log = math.log(50.0 * lam) + 16.0 * lam * math.log(lam) ** 2
    return NelsonCheck(lhs_log, rhs_log, tail)
