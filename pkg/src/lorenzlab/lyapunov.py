"""Lyapunov spectra and the entropy bookkeeping built on them.

Spectra come from the standard reorthonormalization recurrence: push an
orthonormal frame through the tangent flow, QR-factor every so often,
average the log diagonal.  Geometric models renormalize per section
return (their tangent cocycle is a product of closed-form multipliers
and saltation matrices), the classical field integrates the joint
state/frame system in compiled chunks, and any synthetic model with a
Jacobian falls back to the generic stepper.

The entropy side estimates the per-return entropy of the quotient map
from an invariant density, converts it to flow entropy by dividing by
the mean return time, and reports the mismatch against the volume
growth rate of the center-unstable plane.  For the flows studied here
those two numbers should agree; the residual is the headline statistic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import hybrid, models
from ._fast import classical_rk4, classical_rk4_tangent
from .errors import ConvergenceError, DomainError
from .integrate import StepConfig, field_functions, flow_with_tangent

__all__ = [
    "LyapunovSpectrum",
    "EntropyEstimate",
    "lyapunov_spectrum",
    "cu_volume_growth",
    "quotient_entropy",
    "entropy_formula_residual",
]


@dataclass(frozen=True)
class LyapunovSpectrum:
    exponents: tuple          # sorted descending
    total_time: float
    renorm_dt: float
    trace_times: np.ndarray   # checkpoint times (increasing)
    trace: np.ndarray         # (len(trace_times), 3) running estimates

    def top(self):
        return self.exponents[0]


@dataclass(frozen=True)
class EntropyEstimate:
    h_quotient: float
    mean_return_time: float
    h_flow: float
    lambda_plus: float
    residual: float

    def relative_residual(self):
        return self.residual / max(abs(self.lambda_plus), 1e-12)

    def accepted(self, tol=0.15):
        return self.relative_residual() <= tol


_N_CHECKPOINTS = 20


def _finish(sums, times, renorm_dt, total):
    order = np.argsort(sums[-1])[::-1]
    tr = np.array(sums)[:, order] / np.array(times)[:, None]
    return LyapunovSpectrum(
        exponents=tuple(tr[-1]),
        total_time=total,
        renorm_dt=renorm_dt,
        trace_times=np.array(times),
        trace=tr,
    )


def _qr_accumulate(m, q, acc):
    q_new, r = np.linalg.qr(m @ q)
    d = np.abs(np.diag(r))
    if not np.all(np.isfinite(d)) or np.any(d == 0.0):
        raise ConvergenceError("tangent frame degenerated during "
                               "renormalization")
    # keep the diagonal positive so the frame varies continuously
    signs = np.sign(np.diag(r))
    signs[signs == 0.0] = 1.0
    acc += np.log(d)
    return q_new * signs[None, :]


def _geometric_spectrum(params, p0, T, burn_in):
    u, v = float(p0[0]), float(p0[1])
    if abs(p0[2] - 1.0) > 1e-9:
        hit = hybrid.advance_to_section(params, np.asarray(p0, dtype=float))
        u, v = float(hit.point[0]), float(hit.point[1])
    t = 0.0
    while t < burn_in:
        u, v, tau = hybrid.iterate_section_coords(params, u, v, 1,
                                                  collect=False)
        t += tau
    q = np.eye(3)
    acc = np.zeros(3)
    t = 0.0
    sums, times = [], []
    next_check = T / _N_CHECKPOINTS
    while t < T:
        m = hybrid.return_multiplier(params, u, v)
        q = _qr_accumulate(m, q, acc)
        u, v, tau = hybrid.iterate_section_coords(params, u, v, 1,
                                                  collect=False)
        t += tau
        if t >= next_check:
            sums.append(acc.copy())
            times.append(t)
            next_check += T / _N_CHECKPOINTS
    if not sums or times[-1] < t:
        sums.append(acc.copy())
        times.append(t)
    return _finish(sums, times, renorm_dt=float("nan"), total=t)


def _classical_spectrum(model, p0, T, renorm_dt, burn_in, cfg):
    q = model.params
    h = cfg.h
    p = np.asarray(p0, dtype=float)
    if burn_in > 0:
        m0 = max(1, int(math.ceil(burn_in / h)))
        p = classical_rk4(p, burn_in / m0, m0, q.sigma, q.rayleigh,
                          q.beta, m0 + 1, np.empty((1, 3)))
    n_sub = max(1, int(round(renorm_dt / h)))
    h_eff = renorm_dt / n_sub
    n_renorms = int(math.ceil(T / renorm_dt))
    u = np.concatenate([p, np.eye(3).ravel()])
    frame = np.eye(3)
    acc = np.zeros(3)
    sums, times = [], []
    every = max(1, n_renorms // _N_CHECKPOINTS)
    for k in range(1, n_renorms + 1):
        u[3:] = frame.ravel()
        u = classical_rk4_tangent(u, h_eff, n_sub, q.sigma, q.rayleigh,
                                  q.beta)
        m = u[3:].reshape(3, 3)
        cond = np.linalg.cond(m)
        if not np.isfinite(cond) or cond > 1e12:
            raise ConvergenceError(
                f"tangent frame condition number {cond:.2e} exceeds 1e12; "
                "shrink renorm_dt")
        frame, r = np.linalg.qr(m)
        d = np.abs(np.diag(r))
        signs = np.sign(np.diag(r))
        signs[signs == 0.0] = 1.0
        frame = frame * signs[None, :]
        acc += np.log(d)
        if k % every == 0 or k == n_renorms:
            sums.append(acc.copy())
            times.append(k * renorm_dt)
    return _finish(sums, times, renorm_dt, n_renorms * renorm_dt)


def _generic_spectrum(model, p0, T, renorm_dt, burn_in, cfg):
    f, jac = field_functions(model)
    if jac is None:
        raise DomainError("lyapunov_spectrum needs a Jacobian-capable model")
    from .integrate import flow as _flow
    p = np.asarray(p0, dtype=float)
    if burn_in > 0:
        p = _flow(model, p, burn_in, cfg)
    frame = np.eye(3)
    acc = np.zeros(3)
    n_renorms = int(math.ceil(T / renorm_dt))
    sums, times = [], []
    every = max(1, n_renorms // _N_CHECKPOINTS)
    for k in range(1, n_renorms + 1):
        ts = flow_with_tangent(model, p, renorm_dt, cfg, frame=frame)
        p = ts.state
        m = ts.frame
        cond = np.linalg.cond(m)
        if not np.isfinite(cond) or cond > 1e12:
            raise ConvergenceError(
                f"tangent frame condition number {cond:.2e} exceeds 1e12; "
                "shrink renorm_dt")
        frame, r = np.linalg.qr(m)
        d = np.abs(np.diag(r))
        if np.any(d == 0.0):
            raise ConvergenceError("tangent frame degenerated")
        signs = np.sign(np.diag(r))
        signs[signs == 0.0] = 1.0
        frame = frame * signs[None, :]
        acc += np.log(d)
        if k % every == 0 or k == n_renorms:
            sums.append(acc.copy())
            times.append(k * renorm_dt)
    return _finish(sums, times, renorm_dt, n_renorms * renorm_dt)


def lyapunov_spectrum(model, p0, T, renorm_dt=0.5, cfg=None, burn_in=None):
    """Three Lyapunov exponents of the orbit of p0, sorted descending.

    T is total accumulation time after burn-in (default burn-in 5% of
    T).  Geometric models renormalize at every section return and
    ignore renorm_dt; the trace then records checkpoints in flow time.
    """
    if T <= 0:
        raise DomainError("T must be positive")
    cfg = cfg or StepConfig(method="rk4_fixed", h=1e-3)
    if burn_in is None:
        burn_in = 0.05 * T
    if isinstance(model, models.FlowModel) and model.variant == "geometric":
        return _geometric_spectrum(model.params, np.asarray(p0, float),
                                   T, burn_in)
    if T < 100 * renorm_dt:
        raise DomainError("T must cover at least 100 renormalizations")
    if isinstance(model, models.FlowModel) and model.variant == "classical":
        return _classical_spectrum(model, p0, T, renorm_dt, burn_in, cfg)
    return _generic_spectrum(model, p0, T, renorm_dt, burn_in, cfg)


def cu_volume_growth(spectrum, rel_tol=0.01):
    """Growth rate of two-dimensional volume in the plane of the two
    leading directions: the sum of the top two exponents.

    On the attractors studied here that plane carries the expanding
    and the flow direction, so the value doubles as the expansion-rate
    statistic the entropy check needs.  Requires a settled spectrum:
    the estimate over the last quarter of the trace must move by less
    than rel_tol relative to its magnitude.
    """
    tr = spectrum.trace
    if tr.shape[0] < 4:
        raise ConvergenceError("trace too short to judge convergence")
    top2 = tr[:, 0] + tr[:, 1]
    k = max(0, int(0.75 * (len(top2) - 1)))
    ref = max(abs(top2[-1]), 0.05)
    drift = abs(top2[-1] - top2[k])
    if drift > rel_tol * ref:
        raise ConvergenceError(
            f"volume-growth estimate still drifting: {drift:.3g} over the "
            f"last quarter against reference {ref:.3g}")
    return float(top2[-1])


def quotient_entropy(m, density):
    """Entropy of the quotient map under an invariant density: the
    integral of log|T'| cell by cell.

    Cells adjacent to the singular point use one-sided midpoints, and
    a cell straddling it splits into two half-cells, so the integrable
    log-singularity at 0 is never evaluated on the nose.
    """
    part = density.partition
    w = density.weights
    total = 0.0
    for k in range(part.n_bins):
        lo = part.edges[k]
        hi = part.edges[k + 1]
        if w[k] == 0.0:
            continue
        if lo < 0.0 < hi:
            xl = 0.5 * lo
            xr = 0.5 * hi
            share_l = -lo / (hi - lo)
            val = (share_l * math.log(abs(m.derivative(xl))) +
                   (1.0 - share_l) * math.log(abs(m.derivative(xr))))
        else:
            x = 0.5 * (lo + hi)
            if x == 0.0:
                x = 0.25 * (lo + hi + 2 * (hi if hi > 0 else lo))
            val = math.log(abs(m.derivative(x)))
        total += w[k] * val
    return float(total)


def entropy_formula_residual(model, m, density, return_stats, spectrum):
    """Cross-module consistency: flow entropy from the quotient side
    against volume growth from the tangent side.

    h_flow = h_quotient / mean return time, lambda_plus from the
    spectrum; the residual is their absolute difference.  All inputs
    must describe the same parameters, checked where visible.
    """
    if return_stats.mean <= 0.0:
        raise DomainError("mean return time must be positive")
    if isinstance(model, models.FlowModel) and model.variant == "geometric":
        g = model.params.gluing
        rho_map = getattr(m, "rho", None)
        if rho_map is not None and abs(rho_map - g.effective_rho) > 1e-12:
            raise DomainError(
                f"quotient map rho = {rho_map} does not match the model's "
                f"gluing strength {g.effective_rho}")
        s_map = getattr(m, "s", None)
        if s_map is not None and abs(s_map - model.params.s) > 1e-12:
            raise DomainError("quotient map exponent does not match the "
                              "model's contraction ratio")
    h_q = quotient_entropy(m, density)
    h_flow = h_q / return_stats.mean
    lam_plus = cu_volume_growth(spectrum)
    return EntropyEstimate(
        h_quotient=h_q,
        mean_return_time=return_stats.mean,
        h_flow=h_flow,
        lambda_plus=lam_plus,
        residual=abs(h_flow - lam_plus),
    )
