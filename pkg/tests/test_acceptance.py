"""Acceptance gates for the whole laboratory.

One test per criterion, each printing a single summary line with the
measured quantities next to its threshold, so `pytest -v` reads as a
twelve-line scorecard.  Budgets stay inside the stated wall-clock
limits on an ordinary machine; the heavy gates (measure clustering,
expansiveness scan) dominate at roughly half a minute apiece.
"""

import math

import numpy as np
import pytest

from lorenzlab import (
    cli,
    config,
    expansive,
    hybrid,
    integrate,
    lyapunov,
    maps1d,
    measures,
    models,
    section,
    sweeps,
    ulam,
)
from lorenzlab.maps1d import ContractingLorenzMap
from lorenzlab.models import Box


def report(name, ok, detail):
    print(f"criterion {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


class TestCriterion01LinearRegionMap:
    def test_numeric_passage_matches_closed_form(self):
        # Batched fixed-step RK4 through the linear cube versus the
        # closed-form exit map, over 1000 random section entries.
        params = models.contracting_model().params
        lam = np.array([params.lambda1, params.lambda2, params.lambda3])
        rng = np.random.default_rng(2024)
        n = 1000
        u = rng.choice([-1.0, 1.0], n) * rng.uniform(1e-4, 0.5, n)
        v = rng.choice([-1.0, 1.0], n) * rng.uniform(1e-3, 0.5, n)
        h = 1e-3
        t_exit = -np.log(np.abs(u)) / params.lambda1

        def rk4_step(state, hs):
            k1 = lam * state
            k2 = lam * (state + 0.5 * hs * k1)
            k3 = lam * (state + 0.5 * hs * k2)
            k4 = lam * (state + hs * k3)
            return state + (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        state = np.column_stack([u, v, np.ones(n)])
        left = np.floor(t_exit / h).astype(int)
        remainder = t_exit - left * h
        while np.any(left > 0):
            active = (left > 0)[:, None]
            state = np.where(active, rk4_step(state, h), state)
            left -= left > 0
        state = rk4_step(state, remainder[:, None])

        worst = 0.0
        for i in range(n):
            exact, _ = models.linear_region_exit(
                params, section.SectionPoint(u[i], v[i]))
            worst = max(worst, np.max(np.abs(state[i] - exact)
                                      / np.abs(exact)))
        report("01 linear-region map", worst <= 1e-8,
               f"worst relative error {worst:.3e} <= 1e-8 over {n} entries")


class TestCriterion02IntegratorOrder:
    def test_error_ratio_under_step_halving(self):
        model = models.classical_model()
        p0 = np.array([1.0, 1.0, 20.0])
        ref = integrate.flow(model, p0, 1.0,
                             integrate.StepConfig(method="rk4_fixed",
                                                  h=1e-4))

        def err(h):
            sol = integrate.flow(model, p0, 1.0,
                                 integrate.StepConfig(method="rk4_fixed",
                                                      h=h))
            return float(np.linalg.norm(sol - ref))

        ratio = err(1 / 400) / err(1 / 800)
        lo, hi = 2 ** 3.5, 2 ** 4.5
        report("02 integrator order", lo <= ratio <= hi,
               f"halving ratio {ratio:.2f} in [{lo:.2f}, {hi:.2f}]")


class TestCriterion03LyapunovSumRule:
    def test_classical_spectrum_sum_and_middle_exponent(self):
        model = models.classical_model()
        spec = lyapunov.lyapunov_spectrum(model, np.array([1.0, 1.0, 20.0]),
                                          1e4)
        total = float(sum(spec.exponents))
        target = -41.0 / 3.0
        rel = abs(total - target) / abs(target)
        middle = spec.exponents[1]
        report("03 Lyapunov sum rule",
               rel <= 0.01 and abs(middle) <= 0.01,
               f"sum {total:.6f} vs {target:.6f} (rel {rel:.2e} <= 0.01), "
               f"middle {middle:+.5f} within +-0.01")


class TestCriterion04UlamOracle:
    def test_tent_map_density_is_uniform(self):
        part = ulam.UlamPartition(1024)
        um = ulam.build_ulam(maps1d.tent_map(), part)
        density = ulam.stationary_density(um)
        l1 = float(np.abs(density.weights - 1.0 / 1024).sum())
        report("04 Ulam oracle", l1 <= 0.02,
               f"tent-map L1 distance to uniform {l1:.2e} <= 0.02 "
               f"at 1024 bins")


class TestCriterion05SkewCommutation:
    def test_projection_commutes_with_the_return(self):
        model = models.contracting_model()
        quotient = ContractingLorenzMap.from_flow(model.params)
        rng = np.random.default_rng(5)
        worst = 0.0
        for _ in range(10_000):
            u = rng.choice([-1.0, 1.0]) * rng.uniform(1e-4, 0.5)
            v = rng.uniform(-0.5, 0.5)
            smp = section.analytic_return_contracting(
                model, section.SectionPoint(u, v))
            worst = max(worst, abs(quotient.value(u)
                                   - section.quotient_project(smp.end)))
        report("05 skew commutation", worst <= 1e-8,
               f"max projection defect {worst:.3e} <= 1e-8 over 10^4 "
               f"samples")


class TestCriterion06MapProperties:
    def test_structural_items_and_schwarzian(self):
        m = ContractingLorenzMap()
        props = maps1d.check_properties(m)
        needed = {1, 2, 3, 4, 6}
        statuses = {i: props.items[i][0] for i in needed}
        items_ok = all(st == "pass" for st in statuses.values())

        xs = np.linspace(0.05, 0.45, 100)
        e = 2e-3
        worst = 0.0
        for x in xs:
            f = m.value
            d1 = (f(x + e) - f(x - e)) / (2 * e)
            d2 = (f(x + e) - 2 * f(x) + f(x - e)) / e ** 2
            d3 = (f(x + 2 * e) - 2 * f(x + e) + 2 * f(x - e)
                  - f(x - 2 * e)) / (2 * e ** 3)
            s_fd = d3 / d1 - 1.5 * (d2 / d1) ** 2
            s_exact = m.schwarzian_value(x)
            worst = max(worst, abs(s_fd - s_exact) / abs(s_exact))
        report("06 map properties",
               items_ok and worst <= 1e-2,
               f"items {statuses} all pass; Schwarzian FD relative error "
               f"{worst:.2e} <= 1e-2 on 100 points")


class TestCriterion07LocallyEventuallyOnto:
    def test_small_intervals_cover_the_core(self):
        m = ContractingLorenzMap()
        rng = np.random.default_rng(77)
        worst_n = 0
        for _ in range(50):
            length = rng.uniform(1e-3, 0.05)
            lo = rng.uniform(0.001, 0.49 - length)
            if rng.uniform() < 0.5:
                iv = (-lo - length, -lo)
            else:
                iv = (lo, lo + length)
            res = maps1d.locally_eventually_onto(m, iv, n_max=500)
            assert res.success, f"interval {iv} failed: {res.message}"
            worst_n = max(worst_n, res.n)
        report("07 locally eventually onto", worst_n <= 500,
               f"50 intervals (length >= 1e-3) covered the core within "
               f"n <= {worst_n}")


class TestCriterion08EntropyFormula:
    def test_flow_entropy_matches_positive_exponent(self):
        model = models.contracting_model()
        m = ContractingLorenzMap.from_flow(model.params)
        density = ulam.stationary_density(
            ulam.build_ulam(m, ulam.UlamPartition(1024)))
        samples = section.iterate_returns(
            model.params, section.SectionPoint(0.2345, 0.05), 4000)
        rstats = section.return_time_stats(samples)
        spec = lyapunov.lyapunov_spectrum(
            model, np.array([0.2345, 0.05, 1.0]), 20_000.0)
        est = lyapunov.entropy_formula_residual(model, m, density, rstats,
                                                spec)
        rel = est.relative_residual()
        report("08 entropy formula", rel <= 0.15,
               f"|h_flow - lambda_plus| / lambda_plus = {rel:.4f} <= 0.15")


class _PitchforkField:
    """Two point sinks at (+-1, 0, 0): the negative control that must
    yield exactly two clusters."""

    box = Box((-2.0, 2.0), (-2.0, 2.0), (-2.0, 2.0))

    def field(self, p):
        return np.array([p[0] - p[0] ** 3, -p[1], -p[2]])


class TestCriterion09UniquePhysicalMeasure:
    def test_twenty_seeds_one_cluster_and_control_two(self):
        model = models.contracting_model()
        rng = config.job_rng(0, 0)
        seeds = []
        for p in section.sample_section_seeds(rng, 20, u_floor=1e-3):
            us, vs, _ = hybrid.iterate_section_coords(model.params, p.u,
                                                      p.v, 48)
            keep = np.flatnonzero(np.abs(us) >= 1e-3)
            k = int(keep[-1]) if keep.size else len(us) - 1
            seeds.append(np.array([us[k], vs[k], 1.0]))
        dic = measures.default_dictionary(
            measures.default_trapping_box(model))
        rep = measures.basin_agreement(model, seeds, dic, T=1e5, tol=0.02,
                                       sample_dt=0.1)
        off_diag = rep.distances[~np.eye(len(seeds), dtype=bool)]

        control = _PitchforkField()
        cdic = measures.default_dictionary(control.box)
        cseeds = [np.array([x, 0.5, -0.3])
                  for x in (0.2, 0.7, 1.5, -0.2, -0.9, -1.4)]
        crep = measures.basin_agreement(control, cseeds, cdic, T=40.0,
                                        tol=0.02, burn_in=20.0)
        report("09 unique physical measure",
               rep.clusters == 1 and not rep.unconverged
               and crep.clusters == 2,
               f"20 seeds -> {rep.clusters} cluster(s) at threshold 0.02 "
               f"(max pairwise {off_diag.max():.4f}, T=1e5); two-sink "
               f"control -> {crep.clusters} clusters")


class TestCriterion10StatisticalStability:
    def test_quotient_sweep_trend_and_modulus(self):
        result = sweeps.quotient_stability_sweep(
            sweeps.default_quotient_family())
        trend = sweeps.sweep_trend(result)
        fit = sweeps.modulus_report(result)
        report("10 statistical stability",
               trend["spearman"] >= 0.8 and fit["kappa"] > 0.0
               and fit["r2"] >= 0.7,
               f"Spearman {trend['spearman']:.3f} >= 0.8, "
               f"kappa {fit['kappa']:.3f} > 0, r2 {fit['r2']:.3f} >= 0.7")


class TestCriterion11Expansiveness:
    def test_hundred_pairs_no_violations(self):
        model = models.contracting_model()
        reports = expansive.expansiveness_scan(model, n_pairs=100, seed=0)
        violations = expansive.count_violations(reports)
        leaf = [r.verdict for r in reports if r.kind == "same_leaf"]
        opposite = [r.verdict for r in reports if r.kind == "opposite"]
        leaf_ok = leaf and all(v == "time-shift-contained" for v in leaf)
        opp_ok = opposite and all(v == "separated" for v in opposite)
        report("11 expansiveness", violations == 0 and leaf_ok and opp_ok,
               f"{len(reports)} pairs, {violations} violations; "
               f"{len(leaf)} same-leaf pairs contained, "
               f"{len(opposite)} opposite-side pairs separated")


class TestCriterion12Reproducibility:
    @pytest.mark.parametrize("argv", [
        ("ulam", "--set", "ulam.bins=128",
         "--set", "ulam.samples_per_bin=20"),
        ("simulate", "--set", "simulate.T=5.0"),
        ("stability-sweep", "--set", "stability_sweep.bins=128",
         "--set", "stability_sweep.samples_per_bin=20",
         "--set", "stability_sweep.orbit_iters=2000"),
    ], ids=["ulam", "simulate", "stability-sweep"])
    def test_identical_runs_are_byte_identical(self, argv, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert cli.main([*argv, "--seed", "7", "--out", str(a)]) == 0
        assert cli.main([*argv, "--seed", "7", "--out", str(b)]) == 0
        names = sorted(p.name for p in a.iterdir())
        assert names == sorted(p.name for p in b.iterdir())
        diffs = [n for n in names
                 if (a / n).read_bytes() != (b / n).read_bytes()]
        report(f"12 reproducibility [{argv[0]}]", not diffs,
               f"{len(names)} outputs byte-identical"
               + (f"; differing: {diffs}" if diffs else ""))
