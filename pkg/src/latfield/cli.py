"""Command-line orchestration: experiment verbs, measurement streams,
checkpoint/resume, and plain-text reports.

Every output line carries the config hash; identity violations exit
nonzero while statistical-tolerance misses are recorded as warning flags.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import analysis, gap, gff, mcmc, wick
from .checkpoint import load_checkpoint, save_checkpoint
from .runcfg import ConfigError, RunConfig, parse_config, with_overrides
from .spectral import TorusSpec

SCHEMA_VERSION = mcmc.SCHEMA_VERSION


# ---------------------------------------------------------------------------
# plumbing


def _load_config(args) -> RunConfig:
    with open(args.config, encoding="utf-8") as fh:
        cfg = parse_config(fh.read())
    cfg = with_overrides(cfg, seed=args.seed, out=args.out, threads=args.threads)
    env_out = os.environ.get("LATFIELD_OUT")
    if env_out and args.out is None:
        cfg = with_overrides(cfg, out=env_out)
    return cfg


def _prepare_outdir(cfg: RunConfig) -> str:
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.resolved"), "w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={cfg.config_hash}\n")
        fh.write(cfg.canonical_text())
    return out


def _record(cfg, observable, sweep, value, error=None, n_eff=None) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "config_hash": cfg.config_hash,
        "observable": observable,
        "sweep": int(sweep),
        "value": None if value is None else float(value),
        "error": None if error is None else float(error),
        "n_eff": None if n_eff is None else float(n_eff),
    }


class StreamWriter:
    def __init__(self, path, append=False):
        self._fh = open(path, "a" if append else "w", encoding="utf-8")

    def write(self, rec: dict):
        self._fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def close(self):
        self._fh.flush()
        self._fh.close()


def _read_stream(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def _write_summary(out, lines):
    with open(os.path.join(out, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    for line in lines:
        print(line)


def _torus(cfg) -> TorusSpec:
    return TorusSpec(cfg.get("model", "side_length"),
                     cfg.get("model", "grid_points"))


def _model_params(cfg, form=None) -> mcmc.ModelParams:
    mass = cfg.get("model", "mass")
    return mcmc.ModelParams.build(
        cfg.get("model", "lambda"), cfg.get("model", "beta"),
        cfg.get("model", "n_components"), _torus(cfg),
        mass=(mass if mass > 0 else None),
        form=form or cfg.get("model", "form"),
        scheme_tag=cfg.get("model", "scheme"))


# ---------------------------------------------------------------------------
# verbs


def _cmd_gap_solve(cfg: RunConfig) -> int:
    out = _prepare_outdir(cfg)
    stream = StreamWriter(os.path.join(out, "stream.jsonl"))
    reg = cfg.get("gap", "regularization")
    tol = cfg.get("gap", "tolerance")
    N = cfg.get("model", "n_components")
    L = cfg.get("model", "side_length")
    lines = [f"# gap-solve ({reg})  config_hash={cfg.config_hash}",
             f"{'lambda':>12} {'beta':>8} {'m':>18} {'residual':>12}"]
    idx = 0
    for lam in cfg.get("grid", "lambdas"):
        for beta in cfg.get("grid", "betas"):
            if reg == "continuum":
                sol = gap.solve_gap_continuum(lam, beta, min(tol, 1e-12))
            elif reg == "n_continuum":
                sol = gap.solve_gap_n_continuum(lam, beta, N, min(tol, 1e-12))
            elif reg == "finite_volume":
                sol = gap.solve_gap_finite(lam, beta, N, L, tol)
            elif reg == "cutoff":
                sol = gap.solve_gap_cutoff(lam, beta, N, L,
                                           _torus(cfg).spacing, tol)
            else:
                sol = gap.solve_gap_lattice(lam, beta, N, _torus(cfg), tol)
            stream.write(_record(cfg, f"gap_mass[lam={lam},beta={beta}]",
                                 idx, sol.mass, abs(sol.residual)))
            lines.append(f"{lam:>12.6g} {beta:>8.4g} {sol.mass:>18.12f} "
                         f"{abs(sol.residual):>12.3e}")
            idx += 1
    stream.close()
    _write_summary(out, lines)
    return 0


def _cmd_gff_sample(cfg: RunConfig) -> int:
    out = _prepare_outdir(cfg)
    stream = StreamWriter(os.path.join(out, "stream.jsonl"))
    torus = _torus(cfg)
    mass = cfg.get("model", "mass")
    if mass <= 0:
        mass = gap.solve_gap_lattice(cfg.get("model", "lambda"),
                                     cfg.get("model", "beta"),
                                     cfg.get("model", "n_components"),
                                     torus).mass
    symbol = "lattice" if cfg.get("model", "scheme") == "lattice_tadpole" \
        else "continuum"
    cov = gff.SpectralCovariance.build(mass, torus, symbol)
    N = cfg.get("model", "n_components")
    n_samples = cfg.get("gff", "n_samples")
    rng = gff.rng_stream(cfg.seed, 2)
    c = cov.site_variance
    wick2 = np.empty(n_samples)
    for i in range(n_samples):
        z = gff.sample_gff_batch(cov, N, 1, rng)[0]
        wick2[i] = float(np.mean(np.sum(z ** 2, axis=0))) - N * c
        stream.write(_record(cfg, "wick_norm2_mean", i, wick2[i]))
    mean, err = analysis.jackknife_mean(wick2, n_bins=min(32, n_samples // 4))
    stream.write(_record(cfg, "wick_norm2_mean:summary", n_samples, mean, err,
                         analysis.effective_sample_size(wick2)))
    stream.close()
    lines = [f"# gff-sample  config_hash={cfg.config_hash}",
             f"mass               {mass:.12f}",
             f"site_variance      {c:.12f}",
             f"wick_norm2_mean    {mean:.6e} +- {err:.3e}  (exact 0)"]
    _write_summary(out, lines)
    return 0


def _standard_observables(torus):
    def tscorr(values, params):
        return analysis.correlator_series(values, direction=0, mode="timeslice")

    return {
        "action_density": mcmc.obs_action_density,
        "wick_norm2_mean": mcmc.obs_wick_norm2_mean,
        "quartic_F": mcmc.obs_quartic_action,
        "_tscorr": tscorr,
        "_component_means": lambda v, p: v.mean(axis=(1, 2)),
    }


def _cmd_mcmc_run(cfg: RunConfig, resume: bool) -> int:
    out = _prepare_outdir(cfg)
    params = _model_params(cfg)
    torus = params.torus
    n_therm = cfg.get("schedule", "thermalization")
    n_sweeps = cfg.get("schedule", "sweeps")
    stride = cfg.get("schedule", "stride")
    ckpt_stride = cfg.get("schedule", "checkpoint_stride")
    ckpt_path = os.path.join(out, "latest.ckpt")
    stream_path = os.path.join(out, "stream.jsonl")
    obs = _standard_observables(torus)
    ctx = params.wick_context()
    bound = wick.action_lower_bound(ctx, torus.area)

    if resume and os.path.exists(ckpt_path):
        state, header = load_checkpoint(ckpt_path)
        if header.get("config_hash") != cfg.config_hash:
            print("checkpoint config hash does not match", file=sys.stderr)
            return 2
        measured = header["measured"]
        stream = StreamWriter(stream_path, append=True)
    else:
        rng = gff.rng_stream(cfg.seed, 1)
        state = mcmc.ChainState(mcmc.initial_field(params, rng),
                                cfg.get("schedule", "step_size"),
                                cfg.get("schedule", "n_leapfrog"), rng)
        acc_before = 0
        for i in range(n_therm):
            mcmc.hmc_step(state, params)
            if (i + 1) % 50 == 0:
                mcmc._tune_step(state, (state.accepted - acc_before) / 50)
                acc_before = state.accepted
        state.accepted = state.proposed = 0
        measured = 0
        stream = StreamWriter(stream_path)

    violation = False
    dh_list = []
    max_new = cfg.get("schedule", "max_new_sweeps")
    start = measured
    while measured < n_sweeps:
        if max_new and measured - start >= max_new:
            break
        dh = mcmc.hmc_step(state, params)
        measured += 1
        if measured % stride == 0:
            dh_list.append(dh)
            f_val = mcmc.obs_quartic_action(state.values, params)
            if f_val < bound * (1.0 + 1e-9) - 1e-12:
                stream.write(_record(cfg, "flag:action_bound_breach",
                                     state.sweep, f_val))
                violation = True
            for name, fn in obs.items():
                val = fn(state.values, params)
                if np.ndim(val) == 0:
                    stream.write(_record(cfg, name, state.sweep, val))
                else:
                    for j, v in enumerate(np.asarray(val).ravel()):
                        stream.write(_record(cfg, f"{name}[{j}]",
                                             state.sweep, v))
        if measured % ckpt_stride == 0 or measured == n_sweeps:
            save_checkpoint(ckpt_path, state,
                            {"config_hash": cfg.config_hash,
                             "measured": measured})
    save_checkpoint(ckpt_path, state, {"config_hash": cfg.config_hash,
                                       "measured": measured})
    if state.flagged:
        stream.write(_record(cfg, "flag:nonfinite_energy", state.sweep,
                             state.flagged))
        violation = True
    dh_arr = np.asarray([d for d in dh_list if math.isfinite(d)])
    lines = [f"# mcmc-run  config_hash={cfg.config_hash}",
             f"acceptance  {state.acceptance_rate:.4f}",
             f"step_size   {state.step_size:.5f}"]
    if len(dh_arr) >= 8:
        w = np.exp(-np.clip(dh_arr, -50, 50))
        mean, err = analysis.jackknife_mean(w, n_bins=min(32, len(w) // 4))
        stream.write(_record(cfg, "exp_minus_dh", state.sweep, mean, err))
        lines.append(f"exp(-dH)    {mean:.4f} +- {err:.4f}  (exact 1)")
        if err > 0 and abs(mean - 1.0) > 5.0 * err:
            stream.write(_record(cfg, "flag:exp_dh_violation", state.sweep,
                                 mean, err))
            violation = True
        elif err > 0 and abs(mean - 1.0) > 3.0 * err:
            stream.write(_record(cfg, "flag:exp_dh_warning", state.sweep,
                                 mean, err))
    stream.close()
    _write_summary(out, lines)
    return 1 if violation else 0


def _cmd_thermo(cfg: RunConfig) -> int:
    out = _prepare_outdir(cfg)
    stream = StreamWriter(os.path.join(out, "stream.jsonl"))
    params = _model_params(cfg, form="mass")
    grid = cfg.get("thermo", "lambda_grid")
    if grid[-1] != params.lam:
        grid = list(grid) + [params.lam]
    schedule = mcmc.Schedule(cfg.get("schedule", "thermalization"),
                             cfg.get("schedule", "sweeps"),
                             cfg.get("schedule", "stride"))
    thermo = mcmc.thermo_integrate_logz(params, grid, schedule, cfg.seed,
                                        cfg.get("schedule", "n_leapfrog"),
                                        cfg.get("schedule", "step_size"))
    ent = mcmc.estimate_relative_entropy(params, grid, schedule, cfg.seed,
                                         thermo=thermo)
    area = params.torus.area
    for j, lam in enumerate(thermo.lambda_grid):
        stream.write(_record(cfg, f"thermo_integrand[lam={lam}]", j,
                             thermo.integrand[j], thermo.integrand_errors[j]))
    stream.write(_record(cfg, "log_z", len(grid), thermo.log_z, thermo.error))
    stream.write(_record(cfg, "log_z_density", len(grid),
                         thermo.log_z / area, thermo.error / area))
    stream.write(_record(cfg, "relative_entropy", len(grid), ent.value,
                         ent.error))
    stream.write(_record(cfg, "relative_entropy_density", len(grid),
                         ent.value / area, ent.error / area))
    warn = thermo.log_z < -3.0 * thermo.error or ent.value < -3.0 * ent.error
    if warn:
        stream.write(_record(cfg, "flag:positivity_warning", len(grid),
                             thermo.log_z, thermo.error))
    stream.close()
    lines = [f"# thermo-integrate  config_hash={cfg.config_hash}",
             f"log_z               {thermo.log_z:.6f} +- {thermo.error:.6f}",
             f"log_z_density       {thermo.log_z / area:.6f} +- {thermo.error / area:.6f}",
             f"relative_entropy    {ent.value:.6f} +- {ent.error:.6f}",
             f"entropy_density     {ent.value / area:.6f} +- {ent.error / area:.6f}",
             f"refinement_gap      {thermo.refinement_gap:.6f}"]
    _write_summary(out, lines)
    return 0


def _series(records, name):
    vals = [(r["sweep"], r["value"]) for r in records if r["observable"] == name]
    vals.sort()
    return np.array([v for _, v in vals])


def _cmd_analyze(cfg: RunConfig) -> int:
    out = _prepare_outdir(cfg)
    source = cfg.get("analyze", "source") or cfg.out_dir
    stream_path = os.path.join(source, "stream.jsonl")
    if not os.path.exists(stream_path):
        _write_summary(out, [f"# analyze  config_hash={cfg.config_hash}",
                             "no data"])
        return 0
    records = _read_stream(stream_path)
    names = sorted({r["observable"] for r in records
                    if not r["observable"].startswith(("flag:", "_"))
                    and "[" not in r["observable"]})
    lines = [f"# analyze  config_hash={cfg.config_hash}  source={source}",
             f"{'observable':<24} {'mean':>14} {'error':>12} {'tau_int':>9} {'n_eff':>10}"]
    n_bins = cfg.get("analyze", "n_bins")
    stream = StreamWriter(os.path.join(out, "stream.jsonl"))
    for name in names:
        x = _series(records, name)
        if len(x) < 8:
            continue
        tau, _ = analysis.integrated_autocorrelation(x)
        mean, err = analysis.jackknife_mean(x, n_bins=min(n_bins, len(x) // 4))
        n_eff = len(x) / (2.0 * tau)
        stream.write(_record(cfg, f"{name}:summary", len(x), mean, err, n_eff))
        lines.append(f"{name:<24} {mean:>14.6e} {err:>12.3e} {tau:>9.2f} "
                     f"{n_eff:>10.1f}")
    # correlator + effective mass, if the run recorded timeslices
    corr_names = sorted({r["observable"] for r in records
                         if r["observable"].startswith("_tscorr[")},
                        key=lambda s: int(s.split("[")[1].rstrip("]")))
    if corr_names:
        raw = np.stack([_series(records, nm) for nm in corr_names], axis=1)
        mu_names = sorted({r["observable"] for r in records
                           if r["observable"].startswith("_component_means[")},
                          key=lambda s: int(s.split("[")[1].rstrip("]")))
        mu = np.stack([_series(records, nm) for nm in mu_names], axis=1)
        n = raw.shape[1]
        src_cfg_lines = open(os.path.join(source, "config.resolved"),
                             encoding="utf-8").read()
        torus = None
        for line in src_cfg_lines.splitlines():
            if line.startswith("model.side_length="):
                L = float(line.split("=")[1])
            if line.startswith("model.grid_points="):
                torus_n = int(line.split("=")[1])
        torus = TorusSpec(L, torus_n)
        corr = analysis.correlator_from_series(
            raw, mu, n_bins=min(n_bins, raw.shape[0] // 4),
            params_hash=cfg.config_hash)
        for d in range(n):
            stream.write(_record(cfg, f"correlator[{d}]", len(raw),
                                 corr.values[d], corr.errors[d]))
        try:
            m_eff, m_err = analysis.effective_mass(corr, torus)
            stream.write(_record(cfg, "effective_mass", len(raw), m_eff, m_err))
            lines.append(f"{'effective_mass':<24} {m_eff:>14.6e} {m_err:>12.3e}")
        except ValueError as exc:
            lines.append(f"effective_mass: fit rejected ({exc})")
    stream.close()
    _write_summary(out, lines)
    return 0


def _cmd_verify(cfg: RunConfig) -> int:
    out = _prepare_outdir(cfg)
    stream = StreamWriter(os.path.join(out, "stream.jsonl"))
    results = []

    for m in (0.5, 1.0):
        for L in (1.0, 2.0, 4.0):
            chk = gap.verify_poisson_identity(m, L)
            results.append((f"poisson(m={m},L={L})", chk.residual < 1e-8))
    for L in (1.0, 2.0, 4.0, 8.0):
        for rep in gap.verify_riemann_bounds(0.3, L):
            results.append((f"riemann:{rep.name}(L={L})",
                            rep.quarter_bound_ok and rep.gap_bound_ok))
    for lam in (math.e, 10.0, 100.0):
        chk = gap.verify_nelson_integral_bound(lam)
        results.append((f"nelson(lam={lam:.4g})", chk.lhs_log <= chk.rhs_log))
    rng = gff.rng_stream(cfg.seed, 3)
    ok = True
    for _ in range(100):
        d = rng.integers(1, 12)
        a = rng.normal(size=d)
        r = np.exp(rng.normal(scale=0.7, size=d))
        w2, two_h = gff.talagrand_gaussian_check(a, r)
        ok = ok and (w2 <= two_h * (1.0 + 1e-12) + 1e-15)
    results.append(("talagrand(100 instances)", ok))
    ok = True
    ctx = wick.WickContext(0.7, 3)
    for _ in range(20):
        v = rng.normal(size=(3, 4, 4))
        diff = np.max(np.abs(wick.wick_norm4(v, ctx)
                             - wick.wick_norm4_hermite(v, ctx)))
        ok = ok and diff < 1e-10
    results.append(("hermite/wick collapse", ok))

    n_pass = sum(1 for _, good in results if good)
    lines = [f"# verify-identities  config_hash={cfg.config_hash}"]
    for i, (name, good) in enumerate(results):
        stream.write(_record(cfg, f"verify:{name}", i, 1.0 if good else 0.0))
        lines.append(f"{'PASS' if good else 'FAIL'}  {name}")
    lines.append(f"passed {n_pass}/{len(results)}")
    stream.close()
    _write_summary(out, lines)
    return 0 if n_pass == len(results) else 1


def _cmd_scan(cfg: RunConfig) -> int:
    out = _prepare_outdir(cfg)
    stream = StreamWriter(os.path.join(out, "stream.jsonl"))
    lines = [f"# scan  config_hash={cfg.config_hash}"]
    betas = cfg.get("grid", "betas")
    lams = cfg.get("grid", "lambdas")
    ns = cfg.get("grid", "n_components")
    idx = 0
    if len(betas) >= 2:
        for lam in lams:
            rep = analysis.mass_beta_scan(lam, betas)
            stream.write(_record(cfg, f"beta_scan_slope[lam={lam}]", idx,
                                 rep.slope, rep.slope_err))
            lines.append(f"lam={lam:<10.5g} slope(ln m* vs beta) = "
                         f"{rep.slope:.8f}  (reference -2*pi = {-2 * math.pi:.8f})")
            idx += 1
    for lam in lams:
        for beta in betas:
            for N in ns:
                sol = gap.solve_gap_finite(lam, beta, N,
                                           cfg.get("model", "side_length"))
                stream.write(_record(
                    cfg, f"gap_mass[lam={lam},beta={beta},N={N}]",
                    idx, sol.mass, abs(sol.residual)))
                lines.append(f"lam={lam:<8.4g} beta={beta:<6.3g} N={N:<4d} "
                             f"m = {sol.mass:.10f}")
                idx += 1
    stream.close()
    _write_summary(out, lines)
    return 0


def _cmd_report(cfg: RunConfig) -> int:
    source = cfg.get("report", "source") or cfg.out_dir
    stream_path = os.path.join(source, "stream.jsonl")
    out = _prepare_outdir(cfg)
    if not os.path.exists(stream_path):
        _write_summary(out, [f"# report  config_hash={cfg.config_hash}",
                             "no data"])
        return 0
    records = _read_stream(stream_path)
    by_name = {}
    for r in records:
        by_name.setdefault(r["observable"], []).append(r)
    lines = [f"# report  source={source}  records={len(records)}",
             f"{'observable':<40} {'count':>7} {'last value':>16} {'error':>12}"]
    for name in sorted(by_name):
        rs = by_name[name]
        last = rs[-1]
        err = last["error"] if last["error"] is not None else float("nan")
        lines.append(f"{name:<40} {len(rs):>7} {last['value']:>16.8g} "
                     f"{err:>12.4g}")
    flags = [n for n in by_name if n.startswith("flag:")]
    lines.append(f"flags: {', '.join(flags) if flags else 'none'}")
    _write_summary(out, lines)
    return 0


# ---------------------------------------------------------------------------
# entry point


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="latfield",
        description="Lattice O(N) sigma-model toolkit")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in ("gap-solve", "gff-sample", "mcmc-run", "thermo-integrate",
                 "analyze", "verify-identities", "scan", "report"):
        p = sub.add_parser(verb)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--resume", action="store_true")
        p.add_argument("--threads", type=int, default=None)
    args = parser.parse_args(argv)

    try:
        cfg = _load_config(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    expected = args.verb
    if cfg.kind != expected:
        print(f"config kind {cfg.kind!r} does not match verb {expected!r}",
              file=sys.stderr)
        return 2
    if cfg.threads:
        os.environ.setdefault("OMP_NUM_THREADS", str(cfg.threads))

    handlers = {
        "gap-solve": lambda: _cmd_gap_solve(cfg),
        "gff-sample": lambda: _cmd_gff_sample(cfg),
        "mcmc-run": lambda: _cmd_mcmc_run(cfg, args.resume),
        "thermo-integrate": lambda: _cmd_thermo(cfg),
        "analyze": lambda: _cmd_analyze(cfg),
        "verify-identities": lambda: _cmd_verify(cfg),
        "scan": lambda: _cmd_scan(cfg),
        "report": lambda: _cmd_report(cfg),
    }
    return handlers[args.verb]()


if __name__ == "__main__":
    sys.exit(main())
