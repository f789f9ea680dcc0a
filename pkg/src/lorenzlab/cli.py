"""Command-line entry point.

Every subcommand reads one resolved configuration (defaults, then the
TOML file, then --set overrides, then explicit flags), runs a single
experiment and writes its results into the output directory: delimited
data (CSV with '#'-prefixed provenance lines) or JSON, plus rendered
figures next to the data.  Headers record the tool version, the
subcommand, the seed and the full configuration, so any output file is
traceable to the run that produced it and any run is repeatable from
its own header.

Exit codes: 0 success, 1 a domain/computation error, 2 a configuration
error (bad file, unknown key, unusable model for the experiment).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, config, expansive, hybrid, integrate, lyapunov, \
    maps1d, measures, models, plots, section, sweeps, ulam
from .errors import ConfigError, ConvergenceError, LabError

__all__ = ["main"]


# ---------------------------------------------------------------------------
# output plumbing

def _header_lines(cfg, subcommand):
    lines = [
        f"# tool = lorenzlab {__version__}",
        f"# subcommand = {subcommand}",
        f"# seed = {cfg.seed}",
    ]
    for key, value in cfg.resolved():
        lines.append(f"# config.{key} = {value}")
    return lines


def _fmt_cell(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path, cfg, subcommand, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in _header_lines(cfg, subcommand):
            fh.write(line + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt_cell(c) for c in row])
    return str(path)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _write_json(path, cfg, subcommand, payload):
    doc = {
        "tool": "lorenzlab",
        "version": __version__,
        "subcommand": subcommand,
        "seed": cfg.seed,
        "config": {k: _jsonable(v) for k, v in cfg.resolved()},
        "result": _jsonable(payload),
    }
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return str(path)


def _start_state(cfg, model):
    """Canonical start state of a run: the [simulate] block's point,
    interpreted per variant (3-space point, or section coordinates)."""
    s = cfg["simulate"]
    if model.variant == "classical":
        return np.array([s["x0"], s["y0"], s["z0"]])
    return np.array([s["u0"], s["v0"], 1.0])


def _section_seeds(model, n, rng):
    """Settled section seed states for measure-style experiments."""
    out = []
    for p in section.sample_section_seeds(rng, n, u_floor=1e-3):
        us, vs, _ = hybrid.iterate_section_coords(model.params, p.u, p.v, 48)
        keep = np.flatnonzero(np.abs(us) >= 1e-3)
        k = int(keep[-1]) if keep.size else len(us) - 1
        out.append(np.array([us[k], vs[k], 1.0]))
    return out


# ---------------------------------------------------------------------------
# subcommand handlers; each returns a list of written paths

def _cmd_simulate(cfg, out):
    model = cfg.flow_model()
    s = cfg["simulate"]
    p0 = _start_state(cfg, model)
    n = int(math.floor(s["T"] / s["sample_dt"])) + 1
    pts = integrate.sample_flow_uniform(model, p0, 0.0, s["sample_dt"], n,
                                        cfg.step_config())
    rows = [(k * s["sample_dt"], *pts[k]) for k in range(n)]
    paths = [_write_csv(out / "simulate.csv", cfg, "simulate",
                        ["t", "x", "y", "z"], rows)]
    paths.append(plots.trajectory_figure(out / "simulate.png", pts,
                                         s["sample_dt"]))
    return paths


def _cmd_poincare(cfg, out):
    model = cfg.flow_model()
    p = cfg["poincare"]
    if model.variant == "geometric":
        start = section.SectionPoint(p["u0"], p["v0"])
        samples = section.iterate_returns(model.params, start,
                                          p["n_returns"])
        rows = [(k, s.start.u, s.start.v, s.tau)
                for k, s in enumerate(samples)]
        us = [s.start.u for s in samples] + [samples[-1].end.u]
        taus = [s.tau for s in samples]
        header = ["k", "u", "v", "tau"]
    else:
        scfg = cfg.step_config()
        state = np.asarray(_start_state(cfg, model))
        # settle onto the attractor before recording crossings
        hit = integrate.advance_to_section(model, state, scfg, t_max=100.0)
        rows, us, taus = [], [], []
        for k in range(p["n_returns"]):
            nxt = integrate.advance_to_section(model, hit.point, scfg,
                                               t_max=100.0)
            rows.append((k, hit.point[0], hit.point[1], nxt.time))
            us.append(hit.point[0])
            taus.append(nxt.time)
            hit = nxt
        us.append(hit.point[0])
        header = ["k", "x", "y", "tau"]
    paths = [_write_csv(out / "poincare.csv", cfg, "poincare", header, rows)]
    paths.append(plots.return_map_figure(out / "poincare.png",
                                         np.asarray(us), taus))
    return paths


def _cmd_mapcheck(cfg, out):
    m = cfg.quotient_map()
    mc = cfg["mapcheck"]
    report = maps1d.check_properties(m, horizon=mc["horizon"],
                                     tol=mc["tol"])
    payload = report.as_dict()
    payload["map"] = {"rho": m.rho, "s": m.s}
    paths = [_write_json(out / "mapcheck.json", cfg, "mapcheck", payload)]
    paths.append(plots.map_graph_figure(out / "mapcheck.png", m))
    return paths


def _cmd_orbit1d(cfg, out):
    m = cfg.quotient_map()
    o = cfg["orbit1d"]
    weights = maps1d.orbit_histogram(m, o["x0"], o["n_iter"], o["bins"],
                                     burn=o["burn"])
    mean_log_x = maps1d.orbit_mean_log_abs(m, o["x0"], o["n_iter"],
                                           burn=o["burn"])
    part = ulam.UlamPartition(o["bins"])
    density = weights / part.width
    rows = list(zip(part.centers, weights, density))
    paths = [_write_csv(out / "orbit1d.csv", cfg, "orbit1d",
                        ["center", "mass", "density"], rows)]
    summary = {
        "mean_log_abs_x": mean_log_x,
        "mean_log_derivative": math.log(m.rho * m.s)
        + (m.s - 1.0) * mean_log_x,
        "bins": o["bins"],
        "iterations": o["n_iter"],
    }
    paths.append(_write_json(out / "orbit1d.json", cfg, "orbit1d", summary))
    paths.append(plots.density_figure(out / "orbit1d.png", part.centers,
                                      density))
    return paths


def _cmd_ulam(cfg, out):
    m = cfg.quotient_map()
    u = cfg["ulam"]
    part = ulam.UlamPartition(u["bins"])
    um = ulam.build_ulam(m, part, samples_per_bin=u["samples_per_bin"],
                         mode=u["mode"], seed=cfg.seed)
    density = ulam.stationary_density(um)
    rows = list(zip(part.centers, density.weights, density.density()))
    paths = [_write_csv(out / "ulam.csv", cfg, "ulam",
                        ["center", "weight", "density"], rows)]
    summary = {
        "iterations": density.iterations,
        "residual": density.residual,
        "quotient_entropy": lyapunov.quotient_entropy(m, density),
    }
    paths.append(_write_json(out / "ulam.json", cfg, "ulam", summary))
    paths.append(plots.density_figure(out / "ulam.png", part.centers,
                                      density.density()))
    return paths


def _cmd_measure(cfg, out):
    model = cfg.flow_model()
    mc = cfg["measure"]
    rng = config.job_rng(cfg.seed, 0)
    if model.variant == "geometric":
        seeds = _section_seeds(model, mc["n_seeds"], rng)
    else:
        base = np.array([1.0, 1.0, 20.0])
        seeds = [base + rng.uniform(-0.5, 0.5, 3)
                 for _ in range(mc["n_seeds"])]
    box = measures.default_trapping_box(model)
    dictionary = measures.default_dictionary(box)
    scfg = cfg.step_config()
    report = measures.basin_agreement(model, seeds, dictionary, mc["T"],
                                      mc["tol"], sample_dt=mc["sample_dt"],
                                      cfg=scfg)
    grid = measures.GridSpec3(box, mc["grid_n"], mc["grid_n"], mc["grid_n"])
    mu = measures.empirical_measure(model, seeds[0], mc["T"],
                                    sample_dt=mc["sample_dt"], grid=grid,
                                    cfg=scfg)
    vec_rows = [(i, *np.round(report.distances[i], 12))
                for i in range(len(seeds))]
    paths = [_write_csv(out / "measure.csv", cfg, "measure",
                        ["seed"] + [f"dist_{j}" for j in range(len(seeds))],
                        vec_rows)]
    summary = {
        "clusters": report.clusters,
        "assignment": list(report.assignment),
        "unconverged": list(report.unconverged),
        "max_pairwise_distance": float(report.distances.max()),
        "tol": mc["tol"],
    }
    paths.append(_write_json(out / "measure.json", cfg, "measure", summary))
    paths.append(plots.occupancy_figure(out / "measure.png", mu))
    return paths


def _cmd_lyapunov(cfg, out):
    model = cfg.flow_model()
    ly = cfg["lyapunov"]
    p0 = _start_state(cfg, model)
    spec = lyapunov.lyapunov_spectrum(model, p0, ly["T"],
                                      renorm_dt=ly["renorm_dt"],
                                      cfg=cfg.step_config())
    summary = {
        "exponents": list(spec.exponents),
        "sum": float(sum(spec.exponents)),
        "total_time": spec.total_time,
    }
    try:
        summary["cu_volume_growth"] = lyapunov.cu_volume_growth(spec)
    except ConvergenceError as exc:
        summary["cu_volume_growth"] = None
        summary["cu_volume_growth_note"] = str(exc)
    rows = [(t, *spec.trace[k]) for k, t in enumerate(spec.trace_times)]
    paths = [_write_csv(out / "lyapunov.csv", cfg, "lyapunov",
                        ["t", "exp1", "exp2", "exp3"], rows)]
    paths.append(_write_json(out / "lyapunov.json", cfg, "lyapunov",
                             summary))
    paths.append(plots.trace_figure(out / "lyapunov.png", spec.trace_times,
                                    spec.trace, ["exp1", "exp2", "exp3"],
                                    "running exponent"))
    return paths


def _cmd_entropy_check(cfg, out):
    model = cfg.flow_model()
    m = cfg.quotient_map()
    ec = cfg["entropy_check"]
    part = ulam.UlamPartition(ec["bins"])
    um = ulam.build_ulam(m, part)
    density = ulam.stationary_density(um)
    p = cfg["poincare"]
    start = section.SectionPoint(p["u0"], p["v0"])
    samples = section.iterate_returns(model.params, start, ec["n_returns"])
    rstats = section.return_time_stats(samples)
    spec = lyapunov.lyapunov_spectrum(model, _start_state(cfg, model),
                                      ec["T"], cfg=cfg.step_config())
    est = lyapunov.entropy_formula_residual(model, m, density, rstats, spec)
    summary = {
        "h_quotient": est.h_quotient,
        "mean_return_time": est.mean_return_time,
        "h_flow": est.h_flow,
        "lambda_plus": est.lambda_plus,
        "residual": est.residual,
        "relative_residual": est.relative_residual(),
        "tol": ec["tol"],
        "accepted": bool(est.accepted(ec["tol"])),
        "exponents": list(spec.exponents),
    }
    paths = [_write_json(out / "entropy_check.json", cfg, "entropy-check",
                         summary)]
    paths.append(plots.density_figure(out / "entropy_check.png",
                                      part.centers, density.density()))
    return paths


def _cmd_expansiveness_probe(cfg, out):
    model = cfg.flow_model()
    ep = cfg["expansiveness_probe"]
    scfg = cfg.step_config()
    reports = expansive.expansiveness_scan(
        model, delta=ep["delta"], epsilon=ep["epsilon"],
        n_pairs=ep["n_pairs"], T_horizon=ep["horizon"], cfg=scfg,
        seed=cfg.seed)
    tail = expansive.tail_entropy_estimate(
        model, delta=ep["tail_delta"], n=ep["tail_n"],
        delta_prime=ep["tail_delta_prime"], n_seeds=ep["tail_seeds"],
        cfg=scfg, seed=cfg.seed)
    rows = [(r.pair_id, r.kind, r.verdict, r.max_distance,
             r.containment_shift, r.horizon) for r in reports]
    paths = [_write_csv(out / "expansiveness.csv", cfg,
                        "expansiveness-probe",
                        ["pair", "kind", "verdict", "max_distance",
                         "containment_shift", "horizon"], rows)]
    by_kind = {}
    for r in reports:
        by_kind.setdefault(r.kind, {}).setdefault(r.verdict, 0)
        by_kind[r.kind][r.verdict] += 1
    summary = {
        "pairs": len(reports),
        "violations": expansive.count_violations(reports),
        "verdicts_by_kind": by_kind,
        "tail_entropy": tail,
        "delta": ep["delta"],
        "epsilon": ep["epsilon"],
    }
    paths.append(_write_json(out / "expansiveness.json", cfg,
                             "expansiveness-probe", summary))
    paths.append(plots.pair_scan_figure(out / "expansiveness.png", reports,
                                        ep["delta"]))
    return paths


def _cmd_stability_sweep(cfg, out):
    sw = cfg["stability_sweep"]
    budget = sweeps.SweepBudget(
        bins=sw["bins"], samples_per_bin=sw["samples_per_bin"],
        orbit_iters=sw["orbit_iters"], T=sw["T"],
        sample_dt=sw["sample_dt"], n_seeds=sw["n_seeds"],
        n_returns=sw["n_returns"], renorm_dt=sw["renorm_dt"],
        seed=cfg.seed)
    target = sw["target"]
    if target == "quotient":
        family = sweeps.default_quotient_family(rho=sw["rho"], budget=budget)
        result = sweeps.quotient_stability_sweep(family, jobs=cfg.jobs)
    elif target == "contracting":
        family = sweeps.contracting_flow_family(rho=sw["rho"], budget=budget)
        result = sweeps.flow_stability_sweep(family, jobs=cfg.jobs)
    elif target == "classical":
        family = sweeps.classical_flow_family(budget=budget)
        result = sweeps.flow_stability_sweep(family, jobs=cfg.jobs)
    else:
        raise ConfigError(
            f"stability_sweep.target must be quotient, contracting or "
            f"classical, got {target!r}")
    header, rows = result.table()
    paths = [_write_csv(out / "sweep.csv", cfg, "stability-sweep", header,
                        rows)]
    summary = {
        "kind": result.kind,
        "parameter": result.parameter,
        "base_value": result.base_value,
        "trend": sweeps.sweep_trend(result),
        "failures": {repr(r.offset): r.error for r in result.rows
                     if r.error},
    }
    try:
        summary["modulus"] = sweeps.modulus_report(result)
    except LabError as exc:
        summary["modulus"] = None
        summary["modulus_note"] = str(exc)
    paths.append(_write_json(out / "sweep.json", cfg, "stability-sweep",
                             summary))
    paths.append(plots.sweep_figure(
        out / "sweep.png",
        [r.offset for r in result.rows],
        [r.distance if r.distance is not None else float("nan")
         for r in result.rows],
        summary["modulus"]))
    return paths


_HANDLERS = {
    "simulate": _cmd_simulate,
    "poincare": _cmd_poincare,
    "mapcheck": _cmd_mapcheck,
    "orbit1d": _cmd_orbit1d,
    "ulam": _cmd_ulam,
    "measure": _cmd_measure,
    "lyapunov": _cmd_lyapunov,
    "entropy-check": _cmd_entropy_check,
    "expansiveness-probe": _cmd_expansiveness_probe,
    "stability-sweep": _cmd_stability_sweep,
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="lorenzlab",
        description="numerical laboratory for Lorenz-like singular flows")
    parser.add_argument("--version", action="version",
                        version=f"lorenzlab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in _HANDLERS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None,
                       help="TOML configuration file")
        p.add_argument("--set", action="append", default=[],
                       metavar="KEY=VALUE", dest="overrides",
                       help="override one config key (repeatable)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=None)
    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on unknown subcommands/flags, 0 on --help;
        # surface that as a return code so callers never see the exit
        return int(exc.code or 0)
    try:
        cfg = config.load_config(args.config, args.overrides,
                                 seed=args.seed, out=args.out,
                                 jobs=args.jobs)
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = _HANDLERS[args.subcommand](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except LabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for p in paths:
        print(f"wrote {p}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
