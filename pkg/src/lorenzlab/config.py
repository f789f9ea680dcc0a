"""Run configuration: defaults, TOML files, dotted overrides, seeding.

One structured file configures every subcommand.  Sections are tables
named after the subcommand (hyphens become underscores), plus three
shared tables: [run] for seed/output/jobs, [model] for the flow under
study and [integrator] for stepping parameters.  Every key a file or
override mentions must already exist in the defaults; anything unknown
is a hard error naming the offending key, so a typo cannot silently
fall back to a default.

All randomness descends from the single [run] seed through a
counter-based generator, split per job index, which is what makes two
runs with the same config byte-identical regardless of how work is
scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:                       # Python < 3.11
    import tomli as tomllib

from . import maps1d, models
from .errors import ConfigError

__all__ = ["DEFAULTS", "RunConfig", "load_config", "parse_override",
           "job_rng"]


DEFAULTS = {
    "run": {
        "seed": 0,
        "out": "runs",
        "jobs": 1,
    },
    "model": {
        "variant": "contracting",     # contracting | expanding | classical
        "lambda1": 1.0,
        "lambda2": -6.0,
        "lambda3": -2.0,
        "rho": 4.0,
        "c_offset": 0.1,
        "tau_out": 1.0,
        "sigma": 10.0,
        "rayleigh": 28.0,
        "beta": 8.0 / 3.0,
    },
    "integrator": {
        "method": "rk4_fixed",        # rk4_fixed | rk45_adaptive
        "h": 1e-3,
        "abs_tol": 1e-10,
        "rel_tol": 1e-10,
    },
    "simulate": {
        "T": 100.0,
        "sample_dt": 0.01,
        "x0": 1.0,                    # classical start
        "y0": 1.0,
        "z0": 20.0,
        "u0": 0.2345,                 # geometric start, on the section
        "v0": 0.05,
    },
    "poincare": {
        "n_returns": 2000,
        "u0": 0.2345,
        "v0": 0.05,
    },
    "mapcheck": {
        "horizon": 10000,
        "tol": 1e-9,
    },
    "orbit1d": {
        "x0": 0.1234567,
        "n_iter": 1_000_000,
        "bins": 512,
        "burn": 1000,
    },
    "ulam": {
        "bins": 1024,
        "samples_per_bin": 100,
        "mode": "stratified",
    },
    "measure": {
        "T": 2000.0,
        "sample_dt": 0.01,
        "n_seeds": 4,
        "tol": 0.02,
        "grid_n": 64,
    },
    "lyapunov": {
        "T": 5000.0,
        "renorm_dt": 0.5,
    },
    "entropy_check": {
        "bins": 1024,
        "T": 20000.0,
        "n_returns": 4000,
        "tol": 0.15,
    },
    "expansiveness_probe": {
        "n_pairs": 12,
        "delta": 0.03,
        "epsilon": 0.5,
        "horizon": 50.0,
        "tail_delta": 0.05,
        "tail_n": 20.0,
        "tail_delta_prime": 0.03,
        "tail_seeds": 4,
    },
    "stability_sweep": {
        "target": "quotient",         # quotient | contracting | classical
        "rho": 3.2,
        "bins": 1024,
        "samples_per_bin": 100,
        "orbit_iters": 200_000,
        "T": 20000.0,
        "sample_dt": 0.01,
        "n_seeds": 2,
        "n_returns": 2000,
        "renorm_dt": 0.5,
    },
}


def _check_value(section, key, value, default):
    """Type-check one assignment against its default."""
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} expects a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} expects an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} expects a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} expects a string, got {value!r}")
        return value
    raise ConfigError(f"{where} has an unsupported default type")


@dataclass
class RunConfig:
    """Fully resolved configuration for one CLI invocation."""

    data: dict = field(default_factory=dict)
    source: str = "<defaults>"

    def __getitem__(self, section):
        return self.data[section]

    @property
    def seed(self):
        return int(self.data["run"]["seed"])

    @property
    def out_dir(self):
        return self.data["run"]["out"]

    @property
    def jobs(self):
        return int(self.data["run"]["jobs"])

    def resolved(self):
        """Sorted (dotted key, value) pairs of the configuration, the
        exact content echoed into every output header.

        run.out and run.jobs are omitted: they say where results land
        and how work is scheduled, not what the experiment is, and
        identical experiments must produce identical headers wherever
        and however they ran.
        """
        out = []
        for section in sorted(self.data):
            for key in sorted(self.data[section]):
                if section == "run" and key in ("out", "jobs"):
                    continue
                out.append((f"{section}.{key}", self.data[section][key]))
        return out

    def flow_model(self):
        m = self.data["model"]
        variant = m["variant"]
        if variant == "classical":
            return models.classical_model(m["sigma"], m["rayleigh"],
                                          m["beta"])
        if variant == "contracting":
            return models.contracting_model(
                m["lambda1"], m["lambda2"], m["lambda3"],
                rho=m["rho"], c_offset=m["c_offset"], tau_out=m["tau_out"])
        if variant == "expanding":
            return models.expanding_model(
                m["lambda1"], m["lambda2"], m["lambda3"],
                rho=m["rho"], c_offset=m["c_offset"], tau_out=m["tau_out"])
        raise ConfigError(
            f"model.variant must be classical, contracting or expanding, "
            f"got {variant!r}")

    def quotient_map(self):
        model = self.flow_model()
        if model.variant != "geometric":
            raise ConfigError(
                "the configured model has no one-dimensional quotient; "
                "set model.variant to contracting or expanding")
        return maps1d.ContractingLorenzMap.from_flow(model.params)

    def step_config(self):
        from .integrate import StepConfig
        i = self.data["integrator"]
        return StepConfig(method=i["method"], h=i["h"],
                          abs_tol=i["abs_tol"], rel_tol=i["rel_tol"])


def _merge(base, incoming, origin):
    for section, table in incoming.items():
        if section not in base:
            raise ConfigError(
                f"unknown config section {section!r} in {origin}")
        if not isinstance(table, dict):
            raise ConfigError(
                f"top-level key {section!r} in {origin} must be a table")
        for key, value in table.items():
            if key not in base[section]:
                raise ConfigError(
                    f"unknown config key '{section}.{key}' in {origin}")
            base[section][key] = _check_value(section, key, value,
                                              DEFAULTS[section][key])


def parse_override(text):
    """Split one --set argument into (section, key, coerced value).

    The value is read as a TOML literal would be: integers, floats and
    booleans become themselves, everything else is a plain string
    (quotes optional).
    """
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    dotted, raw = text.split("=", 1)
    dotted = dotted.strip()
    if dotted.count(".") != 1:
        raise ConfigError(
            f"override key {dotted!r} must be dotted as section.key")
    section, key = dotted.split(".")
    raw = raw.strip()
    low = raw.lower()
    if low in ("true", "false"):
        return section, key, low == "true"
    try:
        return section, key, int(raw)
    except ValueError:
        pass
    try:
        return section, key, float(raw)
    except ValueError:
        pass
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "'\"":
        raw = raw[1:-1]
    return section, key, raw


def load_config(path=None, overrides=(), seed=None, out=None, jobs=None):
    """Resolve defaults, then the file, then --set pairs, then flags.

    path None runs on pure defaults.  A named file that cannot be read
    or parsed is a config error; so is any key the defaults do not
    know.  The seed/out/jobs flags win over everything since they are
    the most explicit statement of intent.
    """
    data = {s: dict(t) for s, t in DEFAULTS.items()}
    source = "<defaults>"
    if path is not None:
        try:
            with open(path, "rb") as fh:
                incoming = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}")
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid TOML: {exc}")
        _merge(data, incoming, origin=str(path))
        source = str(path)
    for text in overrides:
        section, key, value = parse_override(text)
        if section not in data or key not in data[section]:
            raise ConfigError(f"unknown config key '{section}.{key}' "
                              f"in override {text!r}")
        data[section][key] = _check_value(section, key, value,
                                          DEFAULTS[section][key])
    if seed is not None:
        data["run"]["seed"] = int(seed)
    if out is not None:
        data["run"]["out"] = str(out)
    if jobs is not None:
        if int(jobs) < 1:
            raise ConfigError(f"jobs must be >= 1, got {jobs}")
        data["run"]["jobs"] = int(jobs)
    return RunConfig(data, source)


def job_rng(seed, job_index):
    """Counter-based generator for one job of a run.

    Distinct job indices give statistically independent streams from
    the same recorded seed, and the mapping is pure arithmetic, so any
    scheduling of the jobs reproduces the same numbers.
    """
    key = np.random.SeedSequence(entropy=int(seed) & (2 ** 63 - 1),
                                 spawn_key=(int(job_index),))
    return np.random.Generator(np.random.Philox(key))
