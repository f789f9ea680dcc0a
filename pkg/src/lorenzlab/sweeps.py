"""Parameter sweeps probing how invariant statistics respond to
perturbation of the model family.

The experiment is always the same shape: fix a base system, move one
parameter through a grid of offsets around it, recompute the invariant
density (quotient sweeps) or the empirical measure (flow sweeps) at
every grid point with identical seeds and budgets, and tabulate the
distance back to the base row.  A family whose statistics vary
continuously should show distances that shrink with the offset; the
sweep reports the monotone trend (Spearman rank correlation between
|offset| and distance) and a fitted power-law modulus d ~ C*|a|^kappa.

Failures at individual grid points (escaped orbits, non-convergent
solvers, constraint violations discovered mid-compute) are recorded in
the row and the sweep carries on; the row keeps whatever fields were
computed before the failure.  Grid points are independent jobs run in
a deterministic order, so two sweeps with the same spec produce the
same table bit for bit.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats as scipy_stats

from . import hybrid, lyapunov, maps1d, measures, models, section, ulam
from .errors import DomainError, LabError

__all__ = [
    "SweepBudget",
    "FamilySpec",
    "SweepRow",
    "SweepResult",
    "quotient_stability_sweep",
    "flow_stability_sweep",
    "modulus_report",
    "sweep_trend",
    "default_quotient_family",
    "contracting_flow_family",
    "classical_flow_family",
]


@dataclass(frozen=True)
class SweepBudget:
    """Per-grid-point compute budget, identical across the grid.

    bins and samples_per_bin drive the Ulam solve; orbit_iters the
    long-orbit diagnostics; T, sample_dt and n_seeds the flow-side
    empirical measures; n_returns the return-time statistics feeding
    the entropy residual.  seed is the single source of randomness for
    the whole sweep (seed states, Monte Carlo fallbacks), recorded so
    a rerun reproduces the table exactly.
    """

    bins: int = 1024
    samples_per_bin: int = 100
    orbit_iters: int = 200_000
    T: float = 20_000.0
    sample_dt: float = 0.01
    n_seeds: int = 4
    n_returns: int = 2000
    renorm_dt: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.bins < 2 or self.samples_per_bin < 1:
            raise DomainError("degenerate Ulam budget")
        if self.T <= 0 or self.sample_dt <= 0 or self.n_seeds < 1:
            raise DomainError("degenerate flow budget")


def _offset_order(offsets):
    return tuple(sorted(offsets, key=lambda a: (abs(a), a)))


@dataclass(frozen=True)
class FamilySpec:
    """A one-parameter family: base system, varied parameter, offset grid.

    base is either a one-dimensional quotient map (ContractingLorenzMap)
    or a FlowModel; parameter names the field to perturb ("rho" or "s"
    on the map side, "lambda3", "rho" or "rayleigh" on the flow side).
    Offsets are absolute shifts added to the base value and must include
    0 so every sweep carries its own reference row.  Construction fails
    if any grid point violates the structural constraints, so a sweep
    never starts compute on an inadmissible system.
    """

    base: object
    parameter: str
    offsets: tuple
    budget: SweepBudget = field(default_factory=SweepBudget)

    def __post_init__(self):
        offs = _offset_order(float(a) for a in self.offsets)
        if not offs:
            raise DomainError("empty offset grid")
        if 0.0 not in offs:
            raise DomainError("offset grid must contain 0 (the base row)")
        object.__setattr__(self, "offsets", offs)
        for a in offs:
            self.point(a)   # raises on any inadmissible grid point

    @property
    def kind(self):
        return "flow" if isinstance(self.base, models.FlowModel) else "quotient"

    def base_value(self):
        if self.kind == "quotient":
            return float(getattr(self.base, self.parameter))
        if self.base.variant == "classical":
            return float(getattr(self.base.params, self.parameter))
        return float(getattr(self.base.params, self.parameter))

    def point(self, a):
        """The perturbed system at offset a (a=0 reproduces the base)."""
        a = float(a)
        if self.kind == "quotient":
            if self.parameter not in ("rho", "s"):
                raise DomainError(
                    f"quotient sweeps vary rho or s, not {self.parameter!r}")
            value = getattr(self.base, self.parameter) + a
            return replace(self.base, **{self.parameter: value})
        if self.base.variant == "classical":
            if self.parameter not in ("rayleigh", "sigma", "beta"):
                raise DomainError(
                    f"classical sweeps vary rayleigh/sigma/beta, "
                    f"not {self.parameter!r}")
            value = getattr(self.base.params, self.parameter) + a
            params = replace(self.base.params, **{self.parameter: value})
            model = models.FlowModel("classical", params)
        else:
            if self.parameter not in ("lambda1", "lambda2", "lambda3", "rho"):
                raise DomainError(
                    f"geometric sweeps vary an eigenvalue or rho, "
                    f"not {self.parameter!r}")
            lam = self.base.params
            value = getattr(lam, self.parameter) + a
            kw = dict(lambda1=lam.lambda1, lambda2=lam.lambda2,
                      lambda3=lam.lambda3, rho=lam.rho,
                      c_offset=lam.c_offset, tau_out=lam.tau_out)
            kw[self.parameter] = value
            if lam.mode == "contracting":
                model = models.contracting_model(**kw)
            else:
                model = models.expanding_model(**kw)
        report = models.validate_params(model)
        if not report.ok:
            raise DomainError(
                f"offset {a} gives an inadmissible system: "
                + "; ".join(report.failed()))
        return model


@dataclass
class SweepRow:
    """One grid point of a sweep.

    Fields that a failure (or the sweep kind) leaves uncomputed stay
    None; error carries the failure message, empty on success.  The
    diagnostics dict holds solver convergence data used to judge
    whether the distance in this row is resolved above its own noise.
    """

    offset: float
    value: float
    distance: float | None = None
    h_quotient: float | None = None
    h_flow: float | None = None
    lambda_plus: float | None = None
    entropy_residual: float | None = None
    seconds: float = 0.0
    error: str = ""
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SweepResult:
    kind: str
    parameter: str
    base_value: float
    budget: SweepBudget
    rows: tuple

    def row_at(self, offset):
        for r in self.rows:
            if r.offset == offset:
                return r
        raise DomainError(f"no row at offset {offset}")

    def table(self):
        """(header, rows-of-strings) for delimited output.

        Diagnostic keys are unioned over rows and emitted in sorted
        order so the column set is a function of the sweep alone.
        Wall-clock timings stay off the table: the CSV of a sweep is
        a pure function of its spec and must not change between
        reruns.
        """
        diag_keys = sorted({k for r in self.rows for k in r.diagnostics})
        header = ["offset", "value", "distance", "h_quotient", "h_flow",
                  "lambda_plus", "entropy_residual", "error"]
        header += [f"diag_{k}" for k in diag_keys]
        out = []
        for r in self.rows:
            cells = [r.offset, r.value, r.distance, r.h_quotient, r.h_flow,
                     r.lambda_plus, r.entropy_residual]
            line = [_fmt(c) for c in cells] + [r.error]
            line += [_fmt(r.diagnostics.get(k)) for k in diag_keys]
            out.append(line)
        return header, out


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _run_grid(offsets, run_one, jobs):
    """Execute one job per grid point, results in offset order.

    Jobs are independent, so a thread pool may overlap them; the rows
    come back in submission order either way, which keeps the output
    table identical for any jobs count.
    """
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run_one, offsets))
    return [run_one(a) for a in offsets]


def _quotient_diagnostics(m, density, budget):
    """Long-orbit cross-checks of one Ulam solve.

    orbit_mean_log_dT is the time average of log|T'| along a single
    long orbit (an independent estimate of the entropy integral) and
    ulam_orbit_l1 the L1 gap between the Ulam weights and the orbit
    histogram on the same partition.  A periodic window announces
    itself here: the orbit collapses onto a cycle, log|T'| goes
    negative, and the L1 gap jumps toward 2.
    """
    diag = {
        "ulam_iterations": float(density.iterations),
        "ulam_residual": float(density.residual),
    }
    try:
        x0 = 0.1234567
        mean_log_x = maps1d.orbit_mean_log_abs(m, x0, budget.orbit_iters)
        diag["orbit_mean_log_dT"] = (
            math.log(m.rho * m.s) + (m.s - 1.0) * mean_log_x)
        hist = maps1d.orbit_histogram(m, x0, budget.orbit_iters, budget.bins)
        diag["ulam_orbit_l1"] = float(np.abs(hist - density.weights).sum())
    except LabError as exc:
        diag["orbit_failure"] = str(exc)
    return diag


def quotient_stability_sweep(family, jobs=1):
    """Sweep a quotient-map parameter; distances are W1 between Ulam
    densities on a shared partition.

    Every row also records the quotient entropy (the log-derivative
    integral against its own density) so entropy continuity can be
    read off the same table.  Rows are ordered by |offset|.
    """
    if family.kind != "quotient":
        raise DomainError("quotient sweep needs a quotient-map family")
    b = family.budget
    part = ulam.UlamPartition(b.bins)

    def solve(m):
        um = ulam.build_ulam(m, part, samples_per_bin=b.samples_per_bin)
        return ulam.stationary_density(um)

    base_density = solve(family.point(0.0))

    def run_one(a):
        t0 = time.perf_counter()
        row = SweepRow(offset=a, value=family.base_value() + a)
        try:
            m_a = family.point(a)
            density = solve(m_a)
            row.distance = ulam.density_distance_w1(density, base_density)
        except LabError as exc:
            row.error = str(exc)
        else:
            # Secondary statistics must not void a computed distance:
            # the row stays, the failure lands in the diagnostics.
            try:
                row.h_quotient = lyapunov.quotient_entropy(m_a, density)
                row.diagnostics = _quotient_diagnostics(m_a, density, b)
            except LabError as exc:
                row.diagnostics["stats_failure"] = str(exc)
        row.seconds = time.perf_counter() - t0
        return row

    rows = _run_grid(family.offsets, run_one, jobs)
    return SweepResult("quotient", family.parameter, family.base_value(),
                       b, tuple(rows))


def _section_seed_states(model, n_seeds, seed):
    """Fixed seed states on the attractor of the base model.

    Random section points are settled by a few dozen exact returns so
    the empirical measures start on the attractor bands; the same raw
    states are reused at every grid point (the per-point burn-in
    absorbs the parameter shift).
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    pts = []
    for p in section.sample_section_seeds(rng, n_seeds, u_floor=1e-3):
        us, vs, _ = hybrid.iterate_section_coords(model.params, p.u, p.v, 48)
        keep = np.flatnonzero(np.abs(us) >= 1e-3)
        k = int(keep[-1]) if keep.size else len(us) - 1
        pts.append(np.array([us[k], vs[k], 1.0]))
    return pts


def _classical_seed_states(n_seeds, seed):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 11]))
    base = np.array([1.0, 1.0, 20.0])
    return [base + rng.uniform(-0.5, 0.5, 3) for _ in range(n_seeds)]


def _merged_measure(model, seeds, grid, T, sample_dt):
    """Equal-weight average of the seeds' occupation histograms."""
    acc = np.zeros(grid.nx * grid.ny * grid.nz)
    for p0 in seeds:
        m = measures.empirical_measure(model, p0, T, sample_dt=sample_dt,
                                       grid=grid)
        acc[m.cells] += m.weights
    cells = np.flatnonzero(acc)
    return measures.EmpiricalMeasure("histogram3d", T, 0.05 * T, grid=grid,
                                     cells=cells, weights=acc[cells])


def _geometric_row_stats(model, row, budget, p0):
    spectrum = lyapunov.lyapunov_spectrum(model, p0, budget.T,
                                          renorm_dt=budget.renorm_dt)
    row.diagnostics.update(
        lambda_1=spectrum.exponents[0],
        lambda_2=spectrum.exponents[1],
        lambda_3=spectrum.exponents[2],
    )
    row.lambda_plus = lyapunov.cu_volume_growth(spectrum)
    m = maps1d.ContractingLorenzMap.from_flow(model.params)
    um = ulam.build_ulam(m, ulam.UlamPartition(budget.bins),
                         samples_per_bin=budget.samples_per_bin)
    density = ulam.stationary_density(um)
    start = section.SectionPoint(p0[0], p0[1])
    samples = section.iterate_returns(model.params, start, budget.n_returns)
    rstats = section.return_time_stats(samples)
    est = lyapunov.entropy_formula_residual(model, m, density, rstats,
                                            spectrum)
    row.h_quotient = est.h_quotient
    row.h_flow = est.h_flow
    row.entropy_residual = est.relative_residual()
    row.diagnostics["mean_return_time"] = rstats.mean


def _classical_row_stats(model, row, budget, p0):
    spectrum = lyapunov.lyapunov_spectrum(model, p0, budget.T,
                                          renorm_dt=budget.renorm_dt)
    row.diagnostics.update(
        lambda_1=spectrum.exponents[0],
        lambda_2=spectrum.exponents[1],
        lambda_3=spectrum.exponents[2],
    )
    row.lambda_plus = lyapunov.cu_volume_growth(spectrum)


def flow_stability_sweep(family, dictionary=None, jobs=1):
    """Sweep a flow parameter; distances are dual-Lipschitz gaps
    between seed-averaged empirical measures over a fixed observable
    dictionary.

    Geometric rows additionally carry the Lyapunov spectrum, the
    entropy chain (quotient entropy over mean return time) and its
    residual against the volume growth rate; classical rows carry the
    spectrum only, since there is no quotient map to feed the chain.
    """
    if family.kind != "flow":
        raise DomainError("flow sweep needs a FlowModel family")
    b = family.budget
    base = family.point(0.0)
    box = measures.default_trapping_box(base)
    grid = measures.GridSpec3(box)
    if dictionary is None:
        dictionary = measures.default_dictionary(box)
    if base.variant == "geometric":
        seeds = _section_seed_states(base, b.n_seeds, b.seed)
    else:
        seeds = _classical_seed_states(b.n_seeds, b.seed)

    base_measure = _merged_measure(base, seeds, grid, b.T, b.sample_dt)

    def run_one(a):
        t0 = time.perf_counter()
        row = SweepRow(offset=a, value=family.base_value() + a)
        try:
            model_a = family.point(a)
            mu_a = _merged_measure(model_a, seeds, grid, b.T, b.sample_dt)
            row.distance = measures.dual_lipschitz_distance(
                mu_a, base_measure, dictionary)
        except LabError as exc:
            row.error = str(exc)
        else:
            try:
                if model_a.variant == "geometric":
                    _geometric_row_stats(model_a, row, b, seeds[0])
                else:
                    _classical_row_stats(model_a, row, b, seeds[0])
            except LabError as exc:
                row.diagnostics["stats_failure"] = str(exc)
        row.seconds = time.perf_counter() - t0
        return row

    rows = _run_grid(family.offsets, run_one, jobs)
    return SweepResult("flow", family.parameter, family.base_value(),
                       b, tuple(rows))


def sweep_trend(result):
    """Spearman rank correlation between |offset| and distance.

    Uses every row with a computed distance, the base row included
    (its distance is zero by construction, anchoring the rank order
    at the origin).  Rows that failed before producing a distance are
    skipped; a later stats failure does not disqualify a row.
    """
    pairs = [(abs(r.offset), r.distance) for r in result.rows
             if r.distance is not None]
    if len(pairs) < 3:
        raise DomainError(f"trend needs >= 3 usable rows, got {len(pairs)}")
    a, d = zip(*pairs)
    rho = scipy_stats.spearmanr(a, d).statistic
    return {"spearman": float(rho), "rows_used": len(pairs)}


def modulus_report(sweep):
    """Least-squares power-law fit d = C * |a|^kappa on the log-log plane.

    Only rows with strictly positive offset magnitude and distance can
    enter the fit; fewer than 4 such rows is an argument error.  kappa
    is the continuity modulus exponent: positive kappa with a decent
    r-squared is the quantitative reading of "distances shrink as the
    perturbation shrinks".
    """
    rows = [r for r in sweep.rows
            if not r.error and r.offset != 0.0
            and r.distance is not None and r.distance > 0.0]
    if len(rows) < 4:
        raise DomainError(
            f"modulus fit needs >= 4 rows with positive distances, "
            f"got {len(rows)}")
    x = np.log([abs(r.offset) for r in rows])
    y = np.log([r.distance for r in rows])
    fit = scipy_stats.linregress(x, y)
    return {
        "C": float(math.exp(fit.intercept)),
        "kappa": float(fit.slope),
        "r2": float(fit.rvalue ** 2),
        "rows_used": len(rows),
    }


def _relative_grid(base_value, rels):
    out = [0.0]
    for r in rels:
        out += [base_value * r, -base_value * r]
    return tuple(out)


def default_quotient_family(rho=3.2, s=2.0, budget=None):
    """The stock quotient sweep: vary rho around a base away from the
    onto endpoint, offsets at three relative decades.

    The base sits at 3.2 rather than the full-height 4.0 because the
    admissible window is (0, 4] at s = 2: positive offsets from 4.0
    would leave it.  The relative grid {1e-1, 1e-2, 1e-3} then spans
    [2.88, 3.52], all admissible.
    """
    if budget is None:
        budget = SweepBudget()
    base = maps1d.ContractingLorenzMap(rho=rho, s=s)
    return FamilySpec(base, "rho", _relative_grid(rho, (1e-1, 1e-2, 1e-3)),
                      budget)


def contracting_flow_family(rho=3.2, budget=None):
    """Vary lambda3 of the contracting flow at +/-1% and +/-0.1%.

    rho defaults to 3.2: the admissible ceiling (1/2)^(-s) moves with
    s = -lambda3/lambda1, and at lambda3 = -2.02 it drops to about
    3.93, so the usual 4.0 would fail validation on part of the grid.
    """
    if budget is None:
        budget = SweepBudget(n_seeds=2, T=20_000.0)
    base = models.contracting_model(rho=rho)
    offsets = tuple(-2.0 * d for d in (0.0, 1e-2, -1e-2, 1e-3, -1e-3))
    return FamilySpec(base, "lambda3", offsets, budget)


def classical_flow_family(rayleigh=28.0, budget=None):
    """Vary the classical rayleigh number by +/-0.1 and +/-0.01."""
    if budget is None:
        budget = SweepBudget(n_seeds=2, T=100_000.0, renorm_dt=0.5)
    base = models.classical_model(rayleigh=rayleigh)
    return FamilySpec(base, "rayleigh", (0.0, 0.1, -0.1, 0.01, -0.01),
                      budget)
