"""Exact-target HMC for the lattice O(N) linear sigma model, plus
thermodynamic integration of the log-partition function and the relative
entropy with respect to the reference GFF.

Two equivalent potentials are implemented:

* "beta" form: S = (eps^2/2) sum ||grad Phi||^2
               + (lam/4) eps^2 sum [ (1/N)||Phi||^4
                                     - 2((1+2/N) C_ref + beta) ||Phi||^2 ]
  with C_ref the scheme counterterm at the reference mass.
* "mass" form: kinetic + (m^2/2) eps^2 sum ||Phi||^2
               + (lam/4N) eps^2 sum :||Phi||^4:_m
  Wick-ordered with C_m at the simulation mass m.

When m solves the scheme-consistent lattice gap equation the two differ
by the exact configuration-independent constant
(lam/4) C_m^2 (N+2) L^2; `action_form_shift` returns both the quadratic
coefficient mismatch and that constant so the identity can be asserted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .spectral import CountertermScheme, TorusSpec, counterterm
from .gff import SpectralCovariance, rng_stream, sample_gff_batch
from .wick import WickContext, quartic_action, wick_norm4
from .analysis import integrated_autocorrelation, jackknife_mean

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ModelParams:
    """Full parameter pack of one lattice model instance.

    `mass` is the scheme-consistent gap mass (or the free mass when
    lam = 0); c_ref/c_mass are the counterterms at the reference mass and
    at `mass`, revalidated on construction so stale values cannot leak in.
    """

    lam: float
    beta: float
    n_components: int
    torus: TorusSpec
    scheme: CountertermScheme
    mass: float
    c_ref: float
    c_mass: float
    form: str = "beta"

    def __post_init__(self):
        if self.lam < 0 or self.beta < 0:
            raise ValueError("need lam >= 0 and beta >= 0")
        if self.n_components < 1:
            raise ValueError("need at least one component")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.form not in ("beta", "mass"):
            raise ValueError("form must be 'beta' or 'mass'")
        if self.form == "beta" and self.lam == 0:
            raise ValueError("beta form requires lam > 0 (no confining term at lam=0)")
        if self.c_ref != counterterm(self.scheme.reference_mass, self.torus, self.scheme):
            raise ValueError("c_ref does not match the scheme counterterm")
        if self.c_mass != counterterm(self.mass, self.torus, self.scheme):
            raise ValueError("c_mass does not match the scheme counterterm at `mass`")

    @staticmethod
    def build(lam: float, beta: float, N: int, torus: TorusSpec,
              mass: float = None, form: str = "beta",
              scheme_tag: str = "lattice_tadpole") -> "ModelParams":
        scheme = CountertermScheme(scheme_tag)
        if mass is None:
            from .gap import solve_gap_lattice
            if lam == 0:
                raise ValueError("lam=0 requires an explicit mass")
            mass = solve_gap_lattice(lam, beta, N, torus).mass
        c_ref = counterterm(scheme.reference_mass, torus, scheme)
        c_mass = counterterm(mass, torus, scheme)
        return ModelParams(lam, beta, N, torus, scheme, mass, c_ref, c_mass, form)

    @property
    def kappa(self) -> float:
        """Quadratic coefficient (1+2/N) C_ref + beta of the beta form."""
        return (1.0 + 2.0 / self.n_components) * self.c_ref + self.beta

    def wick_context(self) -> WickContext:
        return WickContext(self.c_mass, self.n_components, self.scheme)

    def with_form(self, form: str) -> "ModelParams":
        return replace(self, form=form)


def _values(f) -> np.ndarray:
    return f.values if hasattr(f, "values") else np.asarray(f, dtype=float)


def _kinetic(v: np.ndarray) -> float:
    """(eps^2/2) sum_x ||grad_eps Phi||^2; the eps factors cancel in 2d."""
    total = 0.0
    for axis in (1, 2):
        d = np.roll(v, -1, axis=axis) - v
        total += float(np.sum(d ** 2))
    return 0.5 * total


def lattice_action(f, params: ModelParams, form: str = None) -> float:
    """S(Phi) in the chosen form (default params.form)."""
    v = _values(f)
    N = params.n_components
    if v.ndim != 3 or v.shape[0] != N or v.shape[1:] != (params.torus.grid_points,) * 2:
        raise ValueError(f"field shape {v.shape} does not match params")
    form = form or params.form
    eps2 = params.torus.spacing ** 2
    s = np.sum(v ** 2, axis=0)
    kin = _kinetic(v)
    if form == "beta":
        pot = (params.lam / 4.0) * eps2 * float(
            np.sum(s ** 2) / N - 2.0 * params.kappa * np.sum(s))
        return kin + pot
    quad = 0.5 * params.mass ** 2 * eps2 * float(np.sum(s))
    quart = params.lam * quartic_action(v, params.wick_context(), params.torus)
    return kin + quad + quart


def action_gradient(f, params: ModelParams, form: str = None) -> np.ndarray:
    """Exact gradient of lattice_action with respect to every field value."""
    v = _values(f)
    N = params.n_components
    form = form or params.form
    eps2 = params.torus.spacing ** 2
    lap = np.zeros_like(v)
    for axis in (1, 2):
        lap += np.roll(v, -1, axis=axis) + np.roll(v, 1, axis=axis) - 2.0 * v
    s = np.sum(v ** 2, axis=0)
    if form == "beta":
        force = params.lam * eps2 * (s / N - params.kappa) * v
        return -lap + force
    c = params.c_mass
    quart = (params.lam / N) * eps2 * (s - c * (N + 2)) * v
    return -lap + params.mass ** 2 * eps2 * v + quart


def action_form_shift(params: ModelParams):
    """(quadratic coefficient difference, constant) such that for every
    configuration
        S_mass - S_beta = coeff_diff * eps^2 * sum ||Phi||^2 + constant.
    With the scheme-consistent gap mass the coefficient difference is the
    gap-equation residual (zero to solver tolerance)."""
    N = params.n_components
    coeff_mass = 0.5 * params.mass ** 2 \
        - 0.5 * params.lam * (1.0 + 2.0 / N) * params.c_mass
    coeff_beta = -0.5 * params.lam * params.kappa
    constant = (params.lam / 4.0) * params.c_mass ** 2 * (N + 2) \
        * params.torus.area
    return coeff_mass - coeff_beta, constant


@dataclass
class ChainState:
    """Mutable HMC chain state (one worker owns it at a time)."""

    values: np.ndarray
    step_size: float
    n_leapfrog: int
    rng: np.random.Generator
    sweep: int = 0
    accepted: int = 0
    proposed: int = 0
    flagged: int = 0  # non-finite-energy proposals

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else 0.0


def hmc_step(state: ChainState, params: ModelParams):
    """One leapfrog trajectory + Metropolis test; mutates `state` and
    returns the energy change dH of the proposal.  Non-finite energies
    reject the proposal and increment the flag counter."""
    v = state.values
    dt = state.step_size
    p = state.rng.standard_normal(v.shape)
    h0 = lattice_action(v, params) + 0.5 * float(np.sum(p ** 2))
    q = v.copy()
    p = p - 0.5 * dt * action_gradient(q, params)
    for _ in range(state.n_leapfrog - 1):
        q += dt * p
        p -= dt * action_gradient(q, params)
    q += dt * p
    p -= 0.5 * dt * action_gradient(q, params)
    h1 = lattice_action(q, params) + 0.5 * float(np.sum(p ** 2))
    dh = h1 - h0
    state.proposed += 1
    state.sweep += 1
    if not math.isfinite(dh):
        state.flagged += 1
        return math.inf
    if state.rng.random() < math.exp(-max(dh, 0.0)):
        state.values = q
        state.accepted += 1
    return dh


@dataclass(frozen=True)
class Schedule:
    n_therm: int
    n_sweeps: int
    stride: int = 1

    def __post_init__(self):
        if self.n_therm < 0 or self.n_sweeps < 1 or self.stride < 1:
            raise ValueError("schedule entries must be positive")


@dataclass(frozen=True)
class MeasurementRecord:
    """One self-describing measurement line."""

    schema_version: int
    config_hash: str
    observable: str
    sweep: int
    value: float
    error: float = None
    n_eff: float = None


@dataclass
class ChainResult:
    """Measurement series plus run diagnostics."""

    measurements: dict
    dh: np.ndarray
    action_series: np.ndarray
    acceptance: float
    step_size: float
    thermalized: bool
    flagged: int
    final_values: np.ndarray
    config_hash: str = ""

    def tau_int(self, name: str):
        x = np.asarray(self.measurements[name], dtype=float)
        if x.ndim > 1:
            x = x.reshape(x.shape[0], -1).mean(axis=1)
        return integrated_autocorrelation(x)[0]

    def n_eff(self, name: str) -> float:
        x = self.measurements[name]
        return len(x) / (2.0 * self.tau_int(name))

    def summary_records(self) -> list:
        out = []
        for name, series in self.measurements.items():
            x = np.asarray(series, dtype=float)
            if x.ndim > 1:
                continue  # array observables summarize downstream
            mean, err = jackknife_mean(x, n_bins=min(32, max(2, len(x) // 4)))
            out.append(MeasurementRecord(SCHEMA_VERSION, self.config_hash,
                                         name, len(x), mean, err,
                                         self.n_eff(name)))
        return out

    def exp_dh_check(self):
        """(mean, err) of exp(-dH); equals 1 for an exact sampler."""
        w = np.exp(-np.clip(self.dh[np.isfinite(self.dh)], -50.0, 50.0))
        return jackknife_mean(w, n_bins=min(32, max(2, len(w) // 4)))


def _tune_step(state: ChainState, window_accept: float):
    """Nudge the step size toward the 70-85% acceptance band."""
    if window_accept < 0.70:
        state.step_size *= 0.8
    elif window_accept > 0.85:
        state.step_size *= 1.15


def initial_field(params: ModelParams, rng: np.random.Generator) -> np.ndarray:
    """A GFF draw at the model mass: a hot but well-scaled start."""
    cov = SpectralCovariance.build(
        params.mass, params.torus,
        "lattice" if params.scheme.tag == "lattice_tadpole" else "continuum")
    return sample_gff_batch(cov, params.n_components, 1, rng)[0]


def run_chain(params: ModelParams, schedule: Schedule, observables: dict,
              seed: int, step_size: float = 0.15, n_leapfrog: int = 10,
              initial: np.ndarray = None, tune: bool = True,
              config_hash: str = "", stream: Callable = None) -> ChainResult:
    """HMC run: thermalize (with step-size auto-tuning, then frozen),
    then measure every `stride` sweeps.

    `observables` maps name -> callable(values, params) returning a float
    or ndarray.  `stream`, if given, receives a MeasurementRecord per
    scalar measurement as it is produced.  Fully deterministic in
    (seed, schedule, params, step_size, n_leapfrog).
    """
    rng = rng_stream(seed, 1)
    values = initial.copy() if initial is not None else initial_field(params, rng)
    state = ChainState(values, step_size, n_leapfrog, rng)

    therm_actions = []
    window = 50
    acc_before = 0
    for i in range(schedule.n_therm):
        hmc_step(state, params)
        therm_actions.append(lattice_action(state.values, params))
        if tune and (i + 1) % window == 0:
            _tune_step(state, (state.accepted - acc_before) / window)
            acc_before = state.accepted

    thermalized = True
    if schedule.n_therm >= 90:
        # monotone-drift test: first vs last third of the window
        a = np.asarray(therm_actions)
        third = len(a) // 3
        lo, hi = a[:third], a[-third:]
        se = math.sqrt(lo.var(ddof=1) / third + hi.var(ddof=1) / third)
        if se > 0 and abs(hi.mean() - lo.mean()) > 5.0 * se:
            thermalized = False

    state.accepted = state.proposed = 0
    series = {name: [] for name in observables}
    dh_list = []
    actions = []
    for i in range(schedule.n_sweeps):
        dh = hmc_step(state, params)
        if (i + 1) % schedule.stride == 0:
            dh_list.append(dh)
            actions.append(lattice_action(state.values, params))
            for name, fn in observables.items():
                val = fn(state.values, params)
                series[name].append(val)
                if stream is not None and np.ndim(val) == 0:
                    stream(MeasurementRecord(SCHEMA_VERSION, config_hash,
                                             name, state.sweep, float(val)))

    measurements = {name: np.asarray(v) for name, v in series.items()}
    return ChainResult(measurements, np.asarray(dh_list), np.asarray(actions),
                       state.acceptance_rate, state.step_size, thermalized,
                       state.flagged, state.values, config_hash)


# ---------------------------------------------------------------------------
# standard observables


def obs_action_density(values, params: ModelParams) -> float:
    return lattice_action(values, params) / params.torus.area


def obs_wick_norm2_mean(values, params: ModelParams) -> float:
    """Mean per site of :||Phi||^2: at the model mass."""
    s = np.sum(values ** 2, axis=0)
    return float(np.mean(s)) - params.n_components * params.c_mass


def obs_quartic_action(values, params: ModelParams) -> float:
    """F = (1/4N) integral of :||Phi||^4:_m (the TI integrand)."""
    return quartic_action(values, params.wick_context(), params.torus)


# ---------------------------------------------------------------------------
# thermodynamic integration and relative entropy


class RunningMoments:
    """Streaming mean/variance accumulator for scalars or arrays
    (Welford), for observables too large to keep as full series."""

    def __init__(self):
        self.count = 0
        self.mean = None
        self._m2 = None

    def add(self, x):
        x = np.asarray(x, dtype=float)
        if self.mean is None:
            self.mean = np.zeros_like(x)
            self._m2 = np.zeros_like(x)
        self.count += 1
        d = x - self.mean
        self.mean = self.mean + d / self.count
        self._m2 = self._m2 + d * (x - self.mean)

    @property
    def variance(self):
        if self.count < 2:
            raise ValueError("need at least 2 samples")
        return self._m2 / (self.count - 1)

    def mean_error(self, n_eff: float = None):
        n = self.count if n_eff is None else n_eff
        return np.sqrt(self.variance / n)


@dataclass(frozen=True)
class ThermoResult:
    log_z: float
    error: float
    lambda_grid: np.ndarray
    integrand: np.ndarray          # E_{nu_s}[F] per node
    integrand_errors: np.ndarray
    refinement_gap: float          # |full - half-grid| quadrature estimate

    @property
    def per_unit_volume(self):
        return self.log_z, self.error


def thermo_integrate_logz(params: ModelParams, lambda_grid, schedule: Schedule,
                          seed: int, n_leapfrog: int = 10,
                          step_size: float = 0.15) -> ThermoResult:
    """log Z(lam) = -int_0^lam E_{nu_s}[F] ds by per-node chains (mass
    form at the fixed model mass) and composite trapezoid quadrature.

    The node at s=0 is the GFF itself, where E[F] = 0 exactly by Wick
    ordering, so no chain is run there.
    """
    grid = np.asarray(lambda_grid, dtype=float)
    if grid.size < 2 or grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise ValueError("lambda grid must start at 0 and increase")
    means = np.zeros(grid.size)
    errors = np.zeros(grid.size)
    for j, s in enumerate(grid):
        if s == 0.0:
            continue
        node = replace(params, lam=float(s), form="mass")
        res = run_chain(node, schedule, {"F": obs_quartic_action},
                        seed=seed + 1000 * j, step_size=step_size,
                        n_leapfrog=n_leapfrog)
        f = res.measurements["F"]
        tau = res.tau_int("F")
        mean, err = jackknife_mean(f, n_bins=min(32, max(2, len(f) // 4)))
        # widen the jackknife error if binning under-resolves tau
        iid_err = float(np.std(f, ddof=1) / math.sqrt(len(f) / (2.0 * tau)))
        means[j] = mean
        errors[j] = max(err, iid_err)
    log_z = -float(np.trapezoid(means, grid))
    err = float(np.sqrt(np.sum((np.gradient(grid) * errors) ** 2)))
    if grid.size >= 3:
        half = -float(np.trapezoid(means[::2], grid[::2]))
        refinement = abs(log_z - half)
    else:
        refinement = 0.0
    return ThermoResult(log_z, err, grid, means, errors, refinement)


class EntropyEstimate:
    def __init__(self, value, error, log_z, area):
        self.value = value
        self.error = error
        self.log_z = log_z
        self.area = area

    @property
    def per_unit_volume(self):
        return self.value / self.area, self.error / self.area


def estimate_relative_entropy(params: ModelParams, lambda_grid,
                              schedule: Schedule, seed: int,
                              thermo: ThermoResult = None,
                              n_leapfrog: int = 10,
                              step_size: float = 0.15) -> EntropyEstimate:
    """H(nu | mu_m) = -lam * E_nu[F] - log Z(lam), with the final-node
    chain supplying E_nu[F] and thermodynamic integration supplying logZ."""
    grid = np.asarray(lambda_grid, dtype=float)
    if abs(grid[-1] - params.lam) > 1e-12:
        raise ValueError("lambda grid must end at params.lam")
    if thermo is None:
        thermo = thermo_integrate_logz(params, grid, schedule, seed,
                                       n_leapfrog, step_size)
    e_f = thermo.integrand[-1]
    e_f_err = thermo.integrand_errors[-1]
    value = -params.lam * e_f - thermo.log_z
    error = math.hypot(params.lam * e_f_err, thermo.error)
    return EntropyEstimate(value, error, thermo, params.torus.area)


def direct_partition_estimate(params: ModelParams, n_samples: int, seed: int,
                              batch: int = 500):
    """Direct GFF MC of E_mu[exp(-lam F)] with standard error (small-lam
    cross-check of the thermodynamic integration; Jensen gives >= 1)."""
    cov = SpectralCovariance.build(
        params.mass, params.torus,
        "lattice" if params.scheme.tag == "lattice_tadpole" else "continuum")
    rng = rng_stream(seed, 7)
    ctx = params.wick_context()
    eps2 = params.torus.spacing ** 2
    N = params.n_components
    vals = np.empty(n_samples)
    done = 0
    while done < n_samples:
        b = min(batch, n_samples - done)
        z = sample_gff_batch(cov, N, b, rng)
        w4 = np.stack([np.sum(wick_norm4(z[i], ctx)) for i in range(b)])
        f = eps2 * w4 / (4.0 * N)
        vals[done:done + b] = np.exp(-params.lam * f)
        done += b
    est = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(n_samples))
    return est, se
