"""Line-oriented run configuration: parsing, validation with line
numbers, defaults, and content hashing.

Format: `key = value` lines, `[section]` headers, `#` comments.  Unknown
keys are rejected with the nearest valid key suggested.  The resolved
config (defaults included) has a stable canonical text whose SHA-256 is
embedded in every output record.
"""

from __future__ import annotations

import difflib
import hashlib
from dataclasses import dataclass, field

KINDS = ("gap-solve", "gff-sample", "mcmc-run", "thermo-integrate",
         "analyze", "verify-identities", "scan", "report")

FORMAT_VERSION = 1


class ConfigError(ValueError):
    """Config problem with a line number where one applies."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


def _parse_bool(s):
    if s.lower() in ("true", "yes", "1"):
        return True
    if s.lower() in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_float_list(s):
    return [float(tok) for tok in s.replace(",", " ").split()]


def _parse_int_list(s):
    return [int(tok) for tok in s.replace(",", " ").split()]


# (section, key) -> (type converter, default or REQUIRED)
_REQUIRED = object()

SCHEMA = {
    ("", "kind"): (str, _REQUIRED),
    ("", "seed"): (int, 0),
    ("", "out"): (str, "runs/out"),
    ("", "threads"): (int, 1),
    ("", "format_version"): (int, FORMAT_VERSION),
    ("model", "lambda"): (float, 1.0),
    ("model", "beta"): (float, 0.0),
    ("model", "n_components"): (int, 1),
    ("model", "side_length"): (float, 8.0),
    ("model", "grid_points"): (int, 32),
    ("model", "scheme"): (str, "lattice_tadpole"),
    ("model", "mass"): (float, 0.0),  # 0 = solve the lattice gap equation
    ("model", "form"): (str, "beta"),
    ("schedule", "thermalization"): (int, 500),
    ("schedule", "sweeps"): (int, 2000),
    ("schedule", "stride"): (int, 1),
    ("schedule", "checkpoint_stride"): (int, 500),
    ("schedule", "step_size"): (float, 0.15),
    ("schedule", "n_leapfrog"): (int, 10),
    ("schedule", "max_new_sweeps"): (int, 0),  # 0 = run to completion
    ("gff", "n_samples"): (int, 1000),
    ("grid", "lambdas"): (_parse_float_list, [1.0]),
    ("grid", "betas"): (_parse_float_list, [0.0]),
    ("grid", "n_components"): (_parse_int_list, [1]),
    ("grid", "sides"): (_parse_float_list, [8.0]),
    ("thermo", "lambda_grid"): (_parse_float_list, [0.0, 0.5, 1.0]),
    ("analyze", "source"): (str, ""),
    ("analyze", "direction"): (int, 0),
    ("analyze", "mode"): (str, "timeslice"),
    ("analyze", "n_bins"): (int, 32),
    ("gap", "regularization"): (str, "continuum"),
    ("gap", "tolerance"): (float, 1e-10),
    ("report", "source"): (str, ""),
}

_CHOICES = {
    ("", "kind"): KINDS,
    ("model", "scheme"): ("lattice_tadpole", "cutoff_eta"),
    ("model", "form"): ("beta", "mass"),
    ("analyze", "mode"): ("timeslice", "point"),
    ("gap", "regularization"): ("continuum", "n_continuum", "finite_volume",
                                "cutoff", "lattice"),
}


@dataclass
class RunConfig:
    """Fully resolved run configuration with its content hash."""

    kind: str
    seed: int
    out_dir: str
    threads: int
    values: dict = field(repr=False)  # (section, key) -> resolved value
    config_hash: str = ""

    def get(self, section, key):
        return self.values[(section, key)]

    def canonical_text(self) -> str:
        lines = []
        for (sec, key) in sorted(self.values):
            v = self.values[(sec, key)]
            if isinstance(v, list):
                v = ",".join(repr(x) for x in v)
            prefix = f"{sec}." if sec else ""
            lines.append(f"{prefix}{key}={v!r}")
        return "\n".join(lines) + "\n"


def _suggest(section, key):
    pool = [k for (s, k) in SCHEMA if s == section]
    close = difflib.get_close_matches(key, pool, n=1)
    return f"; nearest valid key is {close[0]!r}" if close else ""


def parse_config(text: str) -> RunConfig:
    """Parse and fully resolve a config; raises ConfigError with line
    numbers for unknown keys, type mismatches and missing required keys."""
    seen = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not any(s == section for (s, _) in SCHEMA):
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {line!r}", lineno)
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if (section, key) not in SCHEMA:
            raise ConfigError(
                f"unknown key {key!r} in section [{section or 'top level'}]"
                + _suggest(section, key), lineno)
        if (section, key) in seen:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        conv, _default = SCHEMA[(section, key)]
        try:
            value = conv(val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", lineno) from None
        choices = _CHOICES.get((section, key))
        if choices and value not in choices:
            raise ConfigError(
                f"{key!r} must be one of {choices}, got {value!r}", lineno)
        seen[(section, key)] = value

    values = {}
    for (sec, key), (_conv, default) in SCHEMA.items():
        if (sec, key) in seen:
            values[(sec, key)] = seen[(sec, key)]
        elif default is _REQUIRED:
            raise ConfigError(f"missing required key {key!r}"
                              + (f" in section [{sec}]" if sec else ""))
        else:
            values[(sec, key)] = list(default) if isinstance(default, list) else default

    cfg = RunConfig(values[("", "kind")], values[("", "seed")],
                    values[("", "out")], values[("", "threads")], values)
    cfg.config_hash = hashlib.sha256(cfg.canonical_text().encode()).hexdigest()[:16]
    return cfg


def with_overrides(cfg: RunConfig, seed=None, out=None, threads=None) -> RunConfig:
    """New config with command-line overrides applied and the hash
    recomputed from the re-resolved values."""
    values = dict(cfg.values)
    if seed is not None:
        values[("", "seed")] = int(seed)
    if out is not None:
        values[("", "out")] = str(out)
    if threads is not None:
        values[("", "threads")] = int(threads)
    new = RunConfig(values[("", "kind")], values[("", "seed")],
                    values[("", "out")], values[("", "threads")], values)
    new.config_hash = hashlib.sha256(new.canonical_text().encode()).hexdigest()[:16]
    return new
