import json
import os

import numpy as np
import pytest

from latfield.cli import main, _read_stream
from latfield.checkpoint import save_checkpoint, load_checkpoint
from latfield.mcmc import ChainState, ModelParams, hmc_step
from latfield.gff import rng_stream
from latfield.spectral import TorusSpec
from latfield.runcfg import ConfigError, parse_config, with_overrides


# ---------------------------------------------------------------------------
# config parsing


def test_parse_config_defaults_and_hash_stability():
    cfg = parse_config("kind = mcmc-run\n")
    assert cfg.kind == "mcmc-run"
    assert cfg.seed == 0
    assert cfg.get("model", "grid_points") == 32
    assert cfg.get("schedule", "sweeps") == 2000
    assert len(cfg.config_hash) == 16
    # hash depends only on resolved content, not formatting
    cfg2 = parse_config("# comment\nkind=mcmc-run   # trailing\n\n")
    assert cfg2.config_hash == cfg.config_hash
    cfg3 = parse_config("kind = mcmc-run\nseed = 1\n")
    assert cfg3.config_hash != cfg.config_hash


def test_parse_config_error_reporting():
    with pytest.raises(ConfigError, match="line 3.*lamda.*nearest valid key is 'lambda'"):
        parse_config("kind = scan\n[model]\nlamda = 2.0\n")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config("kind = scan\nseed = 1\nseed = 2\n")
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("kind = scan\n[modle]\n")
    with pytest.raises(ConfigError, match="bad value"):
        parse_config("kind = scan\nseed = abc\n")
    with pytest.raises(ConfigError, match="missing required"):
        parse_config("seed = 3\n")
    with pytest.raises(ConfigError, match="must be one of"):
        parse_config("kind = everything\n")
    with pytest.raises(ConfigError, match="expected key = value"):
        parse_config("kind = scan\nnonsense line\n")


def test_with_overrides_recomputes_hash():
    cfg = parse_config("kind = report\n")
    new = with_overrides(cfg, seed=7, out="elsewhere", threads=2)
    assert new.seed == 7
    assert new.out_dir == "elsewhere"
    assert new.threads == 2
    assert new.config_hash != cfg.config_hash
    assert with_overrides(cfg).config_hash == cfg.config_hash


# ---------------------------------------------------------------------------
# checkpoints


def _tiny_state(seed=3):
    rng = rng_stream(seed, 1)
    return ChainState(rng.standard_normal((2, 8, 8)), 0.12, 7, rng,
                      sweep=41, accepted=30, proposed=40, flagged=1)


def test_checkpoint_round_trip_byte_identical(tmp_path):
    p1 = tmp_path / "a.ckpt"
    p2 = tmp_path / "b.ckpt"
    state = _tiny_state()
    save_checkpoint(str(p1), state, {"config_hash": "cafe", "measured": 41})
    loaded, header = load_checkpoint(str(p1))
    assert header["config_hash"] == "cafe"
    assert header["measured"] == 41
    assert loaded.sweep == 41 and loaded.accepted == 30
    assert loaded.flagged == 1
    assert np.array_equal(loaded.values, state.values)
    save_checkpoint(str(p2), loaded, {"config_hash": "cafe", "measured": 41})
    assert p1.read_bytes() == p2.read_bytes()
    # the restored rng continues the original bit stream
    assert loaded.rng.random() == _continue_one(seed=3)


def _continue_one(seed):
    s = _tiny_state(seed)
    return s.rng.random()


def test_checkpoint_resume_continues_chain_exactly(tmp_path):
    torus = TorusSpec(4.0, 8)
    params = ModelParams.build(1.0, 0.0, 2, torus)
    a = _tiny_state()
    b = _tiny_state()
    for _ in range(10):
        hmc_step(a, params)
        hmc_step(b, params)
    path = tmp_path / "c.ckpt"
    save_checkpoint(str(path), a, {})
    a2, _ = load_checkpoint(str(path))
    for _ in range(15):
        hmc_step(a2, params)
        hmc_step(b, params)
    assert np.array_equal(a2.values, b.values)
    assert a2.accepted == b.accepted
    with pytest.raises(ValueError):
        load_checkpoint(__file__)  # not a checkpoint file


# ---------------------------------------------------------------------------
# CLI verbs end to end


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_cli_gap_solve_and_scan(tmp_path, capsys):
    cfgp = _write(tmp_path, "gap.cfg", """
kind = gap-solve
out = {out}
[grid]
lambdas = 1.0 6.0
betas = 0.0 0.2
[gap]
regularization = continuum
""".format(out=tmp_path / "gapout"))
    assert main(["gap-solve", "--config", cfgp]) == 0
    recs = _read_stream(str(tmp_path / "gapout" / "stream.jsonl"))
    assert len(recs) == 4
    assert all(r["schema_version"] == 1 for r in recs)
    assert all(len(r["config_hash"]) == 16 for r in recs)
    assert all(0 < r["value"] < 1 for r in recs)
    out = capsys.readouterr().out
    assert "gap-solve" in out

    scanp = _write(tmp_path, "scan.cfg", """
kind = scan
out = {out}
[model]
side_length = 8.0
[grid]
lambdas = 50.0
betas = 0.0 0.1 0.2 0.3
n_components = 2
""".format(out=tmp_path / "scanout"))
    assert main(["scan", "--config", scanp]) == 0
    recs = _read_stream(str(tmp_path / "scanout" / "stream.jsonl"))
    slopes = [r for r in recs if r["observable"].startswith("beta_scan_slope")]
    assert len(slopes) == 1
    assert slopes[0]["value"] < -4.0  # near -2*pi for large lambda


def test_cli_gff_sample_and_verify(tmp_path, capsys):
    cfgp = _write(tmp_path, "gff.cfg", """
kind = gff-sample
out = {out}
seed = 5
[model]
lambda = 1.0
n_components = 2
side_length = 4.0
grid_points = 8
[gff]
n_samples = 300
""".format(out=tmp_path / "gffout"))
    assert main(["gff-sample", "--config", cfgp]) == 0
    recs = _read_stream(str(tmp_path / "gffout" / "stream.jsonl"))
    summ = [r for r in recs if r["observable"] == "wick_norm2_mean:summary"]
    assert len(summ) == 1
    assert abs(summ[0]["value"]) < 5 * summ[0]["error"]
    assert summ[0]["n_eff"] > 50

    vcfg = _write(tmp_path, "v.cfg", "kind = verify-identities\nout = %s\n"
                  % (tmp_path / "vout"))
    assert main(["verify-identities", "--config", vcfg]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert "passed" in out


def _mcmc_cfg(tmp_path, out, extra=""):
    return _write(tmp_path, os.path.basename(out) + ".cfg", """
kind = mcmc-run
out = {out}
seed = 12
[model]
lambda = 1.0
n_components = 2
side_length = 4.0
grid_points = 8
[schedule]
thermalization = 100
sweeps = 150
checkpoint_stride = 50
n_leapfrog = 12
{extra}
""".format(out=out, extra=extra))


def test_cli_mcmc_run_analyze_report(tmp_path, capsys):
    out = str(tmp_path / "run1")
    cfgp = _mcmc_cfg(tmp_path, out)
    rc = main(["mcmc-run", "--config", cfgp])
    assert rc == 0
    recs = _read_stream(os.path.join(out, "stream.jsonl"))
    names = {r["observable"] for r in recs}
    assert {"action_density", "wick_norm2_mean", "quartic_F",
            "exp_minus_dh"} <= names
    assert "_tscorr[0]" in names and "_component_means[1]" in names
    assert not any(n.startswith("flag:action_bound_breach") for n in names)
    assert os.path.exists(os.path.join(out, "latest.ckpt"))
    assert os.path.exists(os.path.join(out, "config.resolved"))

    acfg = _write(tmp_path, "an.cfg", """
kind = analyze
out = {out}
[analyze]
source = {src}
n_bins = 16
""".format(out=tmp_path / "anout", src=out))
    assert main(["analyze", "--config", acfg]) == 0
    arecs = _read_stream(str(tmp_path / "anout" / "stream.jsonl"))
    anames = {r["observable"] for r in arecs}
    assert "action_density:summary" in anames
    assert any(n.startswith("correlator[") for n in anames)

    rcfg = _write(tmp_path, "rep.cfg", """
kind = report
out = {out}
[report]
source = {src}
""".format(out=tmp_path / "repout", src=out))
    assert main(["report", "--config", rcfg]) == 0
    rep = capsys.readouterr().out
    assert "action_density" in rep
    assert "flags:" in rep

    # report on a directory with no stream
    r2 = _write(tmp_path, "rep2.cfg", """
kind = report
out = {out}
[report]
source = {src}
""".format(out=tmp_path / "rep2out", src=tmp_path / "nothing"))
    assert main(["report", "--config", r2]) == 0
    assert "no data" in capsys.readouterr().out


def test_cli_resume_identical_continuation(tmp_path):
    full_out = str(tmp_path / "full")
    full_cfg = _mcmc_cfg(tmp_path, full_out)
    assert main(["mcmc-run", "--config", full_cfg]) == 0

    chunk_out = str(tmp_path / "chunk")
    chunk_cfg = _mcmc_cfg(tmp_path, chunk_out, extra="max_new_sweeps = 60")
    assert main(["mcmc-run", "--config", chunk_cfg]) == 0
    assert main(["mcmc-run", "--config", chunk_cfg, "--resume"]) == 0
    assert main(["mcmc-run", "--config", chunk_cfg, "--resume"]) == 0

    def scalars(path):
        return [(r["observable"], r["sweep"], r["value"])
                for r in _read_stream(os.path.join(path, "stream.jsonl"))
                if r["observable"] in ("action_density", "wick_norm2_mean",
                                       "quartic_F")]

    a, b = scalars(full_out), scalars(chunk_out)
    assert len(a) == 450
    assert a == b  # bit-identical continuation across checkpoints

    # resuming against a different config is refused
    other_cfg = _mcmc_cfg(tmp_path, chunk_out, extra="max_new_sweeps = 61")
    assert main(["mcmc-run", "--config", other_cfg, "--resume"]) == 2


def test_cli_thermo_integrate(tmp_path, capsys):
    cfgp = _write(tmp_path, "th.cfg", """
kind = thermo-integrate
out = {out}
seed = 4
[model]
lambda = 1.0
n_components = 2
side_length = 4.0
grid_points = 8
form = mass
[schedule]
thermalization = 80
sweeps = 250
n_leapfrog = 12
[thermo]
lambda_grid = 0.0 0.5 1.0
""".format(out=tmp_path / "thout"))
    assert main(["thermo-integrate", "--config", cfgp]) == 0
    recs = _read_stream(str(tmp_path / "thout" / "stream.jsonl"))
    names = {r["observable"] for r in recs}
    assert {"log_z", "log_z_density", "relative_entropy",
            "relative_entropy_density"} <= names
    logz = next(r for r in recs if r["observable"] == "log_z")
    assert logz["value"] > -3 * logz["error"]


def test_cli_error_paths(tmp_path, capsys):
    cfgp = _write(tmp_path, "k.cfg", "kind = scan\n")
    assert main(["report", "--config", cfgp]) == 2  # kind/verb mismatch
    bad = _write(tmp_path, "bad.cfg", "kind = scan\nwhat = 3\n")
    assert main(["scan", "--config", bad]) == 2
    assert main(["scan", "--config", str(tmp_path / "missing.cfg")]) == 2
    capsys.readouterr()


def test_cli_out_override_and_env(tmp_path, monkeypatch):
    cfgp = _write(tmp_path, "g.cfg", """
kind = gap-solve
[grid]
lambdas = 1.0
betas = 0.0
""")
    dest = tmp_path / "cli-out"
    assert main(["gap-solve", "--config", cfgp, "--out", str(dest)]) == 0
    assert (dest / "stream.jsonl").exists()
    envdest = tmp_path / "env-out"
    monkeypatch.setenv("LATFIELD_OUT", str(envdest))
    assert main(["gap-solve", "--config", cfgp]) == 0
    assert (envdest / "stream.jsonl").exists()
