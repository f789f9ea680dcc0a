"""Expansiveness probes.

The question asked here: when two trajectories stay within delta of
each other for the whole observation window, even after an increasing
time change of one of them, is that only because they are genuinely
the same orbit up to a small time shift?  Orbit pairs are aligned by a
dynamic program over sampled polylines (the monotone-matching
relaxation of the search over increasing surjections), shadowed pairs
are then tested for time-shift containment, and a covering estimate of
tail entropy probes the same geometry at the scale below delta.

Everything is horizon-limited and sampled; verdicts are evidence, not
proofs, and the report records the knobs that produced them.  Backward
extension of geometric orbits reconstructs strongly contracted
coordinates and loses precision quickly, so scans default to forward
windows; callers opting into backward windows get a truncated window
when inversion fails rather than a crash.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from . import hybrid, models, section
from ._fast import alignment_minmax
from .errors import DomainError
from .integrate import StepConfig, field_functions, flow
from .integrate import _Stepper  # sequential nonuniform sampling

__all__ = [
    "Reparam",
    "SeparationReport",
    "aligned_distance",
    "optimize_reparam",
    "expansiveness_scan",
    "count_violations",
    "tail_entropy_estimate",
]


@dataclass(frozen=True)
class Reparam:
    """Piecewise-linear increasing time change, identity-sloped
    outside its knot range (so it is a surjection of the line)."""
    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if k.ndim != 1 or k.shape != v.shape or k.size < 2:
            raise DomainError("need matching knot/value arrays, length >= 2")
        if np.any(np.diff(k) <= 0) or np.any(np.diff(v) <= 0):
            raise DomainError("knots and values must increase strictly")
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "values", v)

    @classmethod
    def identity(cls, t0=0.0, t1=1.0):
        return cls(np.array([t0, t1]), np.array([t0, t1]))

    @classmethod
    def shift(cls, tau, t0=0.0, t1=1.0):
        return cls(np.array([t0, t1]), np.array([t0 + tau, t1 + tau]))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.interp(t, self.knots, self.values)
        lo, hi = self.knots[0], self.knots[-1]
        out = np.where(t < lo, self.values[0] + (t - lo), out)
        out = np.where(t > hi, self.values[-1] + (t - hi), out)
        return out if out.ndim else float(out)

    def inverse(self):
        return Reparam(self.values.copy(), self.knots.copy())


@dataclass
class SeparationReport:
    pair_id: int
    kind: str
    delta: float
    epsilon: float
    verdict: str                   # separated / time-shift-contained /
    max_distance: float            #   undetermined
    best_h: Reparam
    containment_shift: float | None = None
    horizon: float = 0.0


def _positions_at(model, p, times, cfg=None):
    """Trajectory positions at arbitrary (possibly negative) times."""
    times = np.asarray(times, dtype=float)
    if isinstance(model, models.FlowModel) and model.variant == "geometric":
        return hybrid.HybridPath(model.params, p).sample(times)
    cfg = cfg or StepConfig()
    f, _ = field_functions(model)
    order = np.argsort(times, kind="stable")
    ts = times[order]
    out = np.empty((times.size, 3))
    neg = ts < 0
    if np.any(neg):
        st = _Stepper(lambda q: -f(q), p, cfg)
        for i in np.flatnonzero(neg)[::-1]:
            st.run_to(-ts[i])
            out[order[i]] = st.p
    if np.any(~neg):
        st = _Stepper(f, p, cfg)
        for i in np.flatnonzero(~neg):
            st.run_to(ts[i])
            out[order[i]] = st.p
    return out


def aligned_distance(model, x, y, T_horizon, h, cfg=None, sample_dt=0.05,
                     backward_horizon=0.0):
    """Sup over the sampled window of d(x at t, y at h(t)).

    The window is [-backward_horizon, T_horizon]; the default probes
    forward only (see the module notes on backward conditioning).
    """
    if T_horizon <= 0:
        raise DomainError("T_horizon must be positive")
    grid = np.arange(-backward_horizon, T_horizon + 0.5 * sample_dt,
                     sample_dt)
    xs = _positions_at(model, np.asarray(x, float), grid, cfg)
    ys = _positions_at(model, np.asarray(y, float), h(grid), cfg)
    return float(np.max(np.linalg.norm(xs - ys, axis=1)))


def _backtrack(c, arg, j_end):
    n = c.shape[0]
    js = np.empty(n, dtype=np.int64)
    js[-1] = j_end
    for i in range(n - 1, 0, -1):
        js[i - 1] = arg[i, js[i]]
    return js


def _strictify(vals, eps):
    out = vals.copy()
    for k in range(1, out.size):
        if out[k] <= out[k - 1]:
            out[k] = out[k - 1] + eps
    return out


def _segment_distances(xs, ys):
    """Distance from each x-sample to each segment of the y-polyline,
    plus the fractional position of the nearest point per segment."""
    a = ys[:-1]
    ab = ys[1:] - a
    denom = np.einsum("mj,mj->m", ab, ab)
    denom[denom == 0.0] = 1.0
    n, m = xs.shape[0], a.shape[0]
    d = np.empty((n, m))
    frac = np.empty((n, m))
    chunk = max(1, int(4_000_000 // max(m, 1)))
    for lo in range(0, n, chunk):
        diff = xs[lo:lo + chunk, None, :] - a[None, :, :]
        t = np.clip(np.einsum("cmj,mj->cm", diff, ab) / denom, 0.0, 1.0)
        resid = diff - t[:, :, None] * ab[None, :, :]
        d[lo:lo + chunk] = np.sqrt(np.einsum("cmj,cmj->cm", resid, resid))
        frac[lo:lo + chunk] = t
    return d, frac


def optimize_reparam(model, x, y, T_horizon, delta=None, knot_budget=64,
                     cfg=None, sample_dt=0.025, back_slack=3.0,
                     forward_slack=12.0):
    """Best increasing time change aligning y's orbit to x's.

    Each x-sample is matched to a point on the y-orbit polyline, with
    match times nondecreasing along x (the polyline relaxation of inf
    over increasing surjections of the sup distance); matching against
    segments rather than raw samples keeps off-grid time shifts from
    inflating the result.  The y-orbit window is padded by back_slack
    before 0 and forward_slack past the horizon so genuine shifts in
    either direction are reachable; if backward sampling is infeasible
    the window shrinks rather than failing.  Returns (h, achieved sup
    distance).  delta is an optional early-accept hint and does not
    change the result.
    """
    if knot_budget < 2:
        raise DomainError("knot_budget must be at least 2")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    tx = np.arange(0.0, T_horizon + 0.5 * sample_dt, sample_dt)
    xs = _positions_at(model, x, tx, cfg)
    t_back = back_slack
    while True:
        ty = np.arange(-t_back, T_horizon + forward_slack + 0.5 * sample_dt,
                       sample_dt)
        try:
            ys = _positions_at(model, y, ty, cfg)
            break
        except DomainError:
            if t_back == 0.0:
                raise
            t_back = 0.0 if t_back <= 1.0 else t_back / 2.0
    d, frac = _segment_distances(xs, ys)
    c, arg = alignment_minmax(d)
    j_end = int(np.argmin(c[-1]))
    achieved = float(c[-1, j_end])
    js = _backtrack(c, arg, j_end)
    hv = ty[js] + frac[np.arange(js.size), js] * sample_dt
    pick = np.unique(np.linspace(0, tx.size - 1,
                                 min(knot_budget, tx.size), dtype=int))
    knots = tx[pick]
    vals = _strictify(hv[pick], 1e-9 * max(sample_dt, 1e-6))
    return Reparam(knots, vals), achieved


def _contained_shift(model, x_seed, xs, tx, y, h, epsilon, tol, cfg,
                     sample_dt):
    """First time shift t0 at which y(h(t0)) sits on the epsilon-segment
    of x's orbit around t0, within tol; None if no sampled t0 works.

    Candidates are tried in order of coarse distance, so an existing
    witness is usually found after refining one or two segments.
    """
    yh = _positions_at(model, y, h(tx), cfg)
    coarse = np.linalg.norm(xs - yh, axis=1)
    n_fine = max(65, int(math.ceil(32.0 * epsilon / sample_dt)) | 1)
    for i in np.argsort(coarse, kind="stable")[:200]:
        t0 = float(tx[i])
        seg_t = np.linspace(max(t0 - epsilon, 0.0), t0 + epsilon, n_fine)
        seg = _positions_at(model, x_seed, seg_t, cfg)
        if _point_to_polyline(yh[i], seg) <= tol:
            return t0
    return None


def _point_to_polyline(p, poly):
    a = poly[:-1]
    b = poly[1:]
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    denom[denom == 0.0] = 1.0
    t = np.clip(np.einsum("ij,ij->i", p[None, :] - a, ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return float(np.min(np.linalg.norm(proj - p[None, :], axis=1)))


def _burned_section_points(params, rng, n, n_burn=64):
    pts = []
    while len(pts) < n:
        u = rng.uniform(-0.5, 0.5)
        v = rng.uniform(-0.5, 0.5)
        if abs(u) < 1e-4:
            continue
        try:
            us, vs, _ = hybrid.iterate_section_coords(params, u, v, n_burn)
        except Exception:
            continue
        if abs(us[-1]) > 1e-4:
            pts.append((us[-1], vs[-1]))
    return pts


_PAIR_KINDS = ("same_orbit", "same_leaf", "generic", "opposite")


def _make_pair(model, kind, rng, delta):
    params = model.params
    base = _burned_section_points(params, rng, 2)
    (u1, v1), (u2, v2) = base
    x = np.array([u1, v1, 1.0])
    if kind == "same_orbit":
        # y is the earlier point, x the later one, so the aligning
        # shift is forward and stays inside the sampled y-window
        y = x
        x = hybrid.advance_to_section(params, y).point
    elif kind == "same_leaf":
        dv = rng.uniform(0.2, 0.8) * delta * \
            (1 if rng.uniform() < 0.5 else -1)
        v_new = min(0.5, max(-0.5, v1 + dv))
        y = np.array([u1, v_new, 1.0])
    elif kind == "opposite":
        u_small = rng.uniform(0.005, 0.1)
        v_off = rng.uniform(-0.05, 0.05)
        x = np.array([u_small, v1, 1.0])
        y = np.array([-u_small, min(0.5, max(-0.5, v1 + v_off)), 1.0])
    else:
        y = np.array([u2, v2, 1.0])
    return x, y


def expansiveness_scan(model, delta=0.03, epsilon=0.5, n_pairs=100,
                       T_horizon=50.0, cfg=None, seed=0, delta0=0.05,
                       containment_tol=0.01, sample_dt=0.025,
                       knot_budget=64, kinds=_PAIR_KINDS):
    """Sample orbit pairs and classify each against the shadowing
    dichotomy: pairs whose best alignment still exceeds delta are
    `separated`; delta-shadowed pairs that sit inside a small tube of
    the other orbit (up to a time shift) are `time-shift-contained`;
    shadowed pairs failing the containment test come back
    `undetermined`, the would-be counterexamples.
    """
    if not isinstance(model, models.FlowModel) or \
            model.variant != "geometric":
        raise DomainError("the scan samples section pairs of the "
                          "geometric models")
    if delta >= delta0:
        raise DomainError(f"delta = {delta} must stay below the section "
                          f"gap constant delta0 = {delta0}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    tx = np.arange(0.0, T_horizon + 0.5 * sample_dt, sample_dt)
    reports = []
    for pid in range(n_pairs):
        kind = kinds[pid % len(kinds)]
        x, y = _make_pair(model, kind, rng, delta)
        h, achieved = optimize_reparam(model, x, y, T_horizon, delta,
                                       knot_budget, cfg, sample_dt)
        if achieved > delta:
            reports.append(SeparationReport(
                pid, kind, delta, epsilon, "separated", achieved, h,
                horizon=T_horizon))
            continue
        xs = _positions_at(model, x, tx, cfg)
        t0 = _contained_shift(model, x, xs, tx, y, h, epsilon,
                              containment_tol, cfg, sample_dt)
        verdict = "time-shift-contained" if t0 is not None else \
            "undetermined"
        reports.append(SeparationReport(
            pid, kind, delta, epsilon, verdict, achieved, h,
            containment_shift=t0, horizon=T_horizon))
    return reports


def count_violations(reports):
    """Shadowed pairs with no containment witness."""
    return sum(1 for r in reports if r.verdict == "undetermined")


def tail_entropy_estimate(model, delta=0.05, n=20.0, delta_prime=0.03,
                          n_seeds=8, cfg=None, seed=0, sample_dt=0.25,
                          n_offsets=41, n_jitter=24):
    """Covering estimate of entropy remaining below resolution delta.

    For each seed x: collect candidate trajectories that stay within
    delta of x's in sup norm up to time n (candidates are small flow
    offsets of x and small section jitters), then greedily cover the
    survivors by dynamical delta_prime-balls and report
    log(cover size)/n.  The returned value is the max over seeds; near
    zero means no entropy hides below the observation scale.
    """
    if not delta_prime < delta:
        raise DomainError("delta_prime must be smaller than delta")
    if isinstance(model, models.FlowModel) and model.variant == "geometric":
        par = model.params
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        bases = _burned_section_points(par, rng, n_seeds)
        grid = np.arange(0.0, n + 0.5 * sample_dt, sample_dt)
        worst = 0.0
        for (u, v) in bases:
            x = np.array([u, v, 1.0])
            path = hybrid.HybridPath(par, x)
            xs = path.sample(grid)
            cands = []
            for c in np.linspace(-delta, delta, n_offsets):
                if c == 0.0:
                    continue
                # a flow offset is the same path shifted in time; never
                # re-seed from a sampled point, mid-transit positions
                # are not valid cube states
                cands.append(path.sample(grid + c))
            for _ in range(n_jitter):
                du = rng.uniform(-delta, delta)
                dv = rng.uniform(-delta, delta)
                uu = min(0.5, max(-0.5, u + du))
                vv = min(0.5, max(-0.5, v + dv))
                if uu == 0.0:
                    continue
                cands.append(hybrid.HybridPath(
                    par, np.array([uu, vv, 1.0])).sample(grid))
            survivors = [xs]
            for tr in cands:
                if np.max(np.linalg.norm(tr - xs, axis=1)) <= delta:
                    survivors.append(tr)
            worst = max(worst, _greedy_cover_rate(survivors, delta_prime,
                                                  n))
        return worst
    # generic fallback: offsets around one seed in a synthetic field
    f, _ = field_functions(model)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    grid = np.arange(0.0, n + 0.5 * sample_dt, sample_dt)
    worst = 0.0
    for _ in range(n_seeds):
        x = rng.uniform(-0.5, 0.5, size=3)
        xs = _positions_at(model, x, grid, cfg)
        survivors = [xs]
        for _ in range(n_offsets):
            y = x + rng.uniform(-delta, delta, size=3)
            tr = _positions_at(model, y, grid, cfg)
            if np.max(np.linalg.norm(tr - xs, axis=1)) <= delta:
                survivors.append(tr)
        worst = max(worst, _greedy_cover_rate(survivors, delta_prime, n))
    return worst


def _greedy_cover_rate(survivors, delta_prime, n):
    """log(cover count)/n for covering the surviving trajectories by
    dynamical balls of radius delta_prime centered at survivors.

    Covers of up to three balls are found exactly (tiny instances, so
    exhaustive search is cheap); larger ones fall back to the greedy
    maximum-coverage heuristic.  Centers are restricted to the sampled
    survivors, which can only overcount the true spanning number, so
    the estimate errs on the conservative side.
    """
    m = len(survivors)
    if m <= 1:
        return 0.0
    flat = np.array([tr.ravel() for tr in survivors])
    k = survivors[0].shape[0]
    sup = np.zeros((m, m))
    for a in range(m):
        diff = flat[None, a].reshape(1, k, 3) - flat.reshape(m, k, 3)
        sup[a] = np.max(np.linalg.norm(diff, axis=2), axis=1)
    covers = sup <= delta_prime
    masks = [int.from_bytes(np.packbits(row).tobytes(), "big")
             for row in covers]
    full = int.from_bytes(np.packbits(np.ones(m, dtype=bool)).tobytes(),
                          "big")
    for a in range(m):
        if masks[a] == full:
            return math.log(1) / float(n)
    for a in range(m):
        for b in range(a + 1, m):
            if masks[a] | masks[b] == full:
                return math.log(2) / float(n)
    for a in range(m):
        for b in range(a + 1, m):
            ab = masks[a] | masks[b]
            for c in range(b + 1, m):
                if ab | masks[c] == full:
                    return math.log(3) / float(n)
    uncovered = np.ones(m, dtype=bool)
    count = 0
    while uncovered.any():
        gains = (covers[:, uncovered]).sum(axis=1)
        center = int(np.argmax(gains))
        newly = covers[center] & uncovered
        if not newly.any():
            center = int(np.flatnonzero(uncovered)[0])
            newly = np.zeros(m, dtype=bool)
            newly[center] = True
        uncovered &= ~newly
        count += 1
    return math.log(count) / float(n)
