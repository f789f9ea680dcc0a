"""Time integration: fixed-step RK4, embedded RK45, tangent flows and
event location.

The classical field is integrated numerically; geometric models are
exact inside the cube and are delegated to the hybrid engine, so the
steppers here only ever see smooth fields.  Any object can be
integrated as long as eval_field works on it: a FlowModel, or a bare
callable p -> dp/dt (handy for synthetic test fields), or an object
with .field / .jacobian methods.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (BlowUpError, BudgetError, DomainError,
                     StableManifoldError)
from . import models as _models

__all__ = [
    "StepConfig",
    "TangentState",
    "SectionHit",
    "field_functions",
    "rk4_step",
    "flow",
    "flow_with_tangent",
    "advance_to_section",
    "integrate_to_event",
    "sample_flow_uniform",
]


@dataclass(frozen=True)
class StepConfig:
    method: str = "rk45_adaptive"
    h: float = 1e-3
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_steps: int = 10_000_000
    blowup_norm: float = 1e4

    def __post_init__(self):
        if self.method not in ("rk4_fixed", "rk45_adaptive"):
            raise DomainError(f"unknown method {self.method!r}")
        if self.h <= 0 or self.max_steps <= 0:
            raise DomainError("h and max_steps must be positive")


DEFAULT_STEP = StepConfig()


@dataclass
class TangentState:
    state: np.ndarray
    frame: np.ndarray  # 3x3, columns are transported tangent vectors


@dataclass
class SectionHit:
    point: np.ndarray
    time: float
    side: int
    crossing_speed: float = 0.0


def field_functions(model):
    """(field, jacobian) callables for whatever `model` is.

    jacobian may be None when the model cannot provide one (bare
    callables without an attached .jacobian).
    """
    if isinstance(model, _models.FlowModel):
        if model.variant == "geometric":
            raise DomainError(
                "geometric models are piecewise-exact; use the hybrid "
                "engine (lorenzlab.hybrid) rather than direct stepping")
        return (lambda p: _models.eval_field(model, p),
                lambda p: _models.eval_jacobian(model, p))
    if hasattr(model, "field"):
        jac = getattr(model, "jacobian", None)
        return model.field, jac
    if callable(model):
        return model, getattr(model, "jacobian", None)
    raise DomainError(f"cannot extract a field from {type(model).__name__}")


def rk4_step(f, p, h):
    k1 = f(p)
    k2 = f(p + 0.5 * h * k1)
    k3 = f(p + 0.5 * h * k2)
    k4 = f(p + h * k3)
    return p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# Dormand-Prince 5(4) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784,
                   11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])


def _dp45_step(f, p, h):
    """One embedded Dormand-Prince step: (5th-order result, error est)."""
    k = [f(p)]
    for i in range(1, 7):
        q = p.copy()
        for j, a in enumerate(_DP_A[i]):
            q = q + h * a * k[j]
        k.append(f(q))
    k = np.array(k)
    p5 = p + h * (_DP_B5 @ k)
    err = h * ((_DP_B5 - _DP_B4) @ k)
    return p5, err


def _err_norm(err, p_old, p_new, cfg):
    scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(p_old),
                                                   np.abs(p_new))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


class _Stepper:
    """Drives one trajectory forward, step by step, under a StepConfig.

    Exposes the last accepted step (t_prev, p_prev) so callers can
    bracket events and bisect by re-integration.
    """

    def __init__(self, f, p0, cfg):
        self.f = f
        self.cfg = cfg
        self.t = 0.0
        self.p = np.asarray(p0, dtype=float).copy()
        self.t_prev = 0.0
        self.p_prev = self.p.copy()
        self.h_next = cfg.h if cfg.method == "rk4_fixed" else min(cfg.h, 1e-2)
        self.n_steps = 0

    def _guard(self):
        if not np.all(np.isfinite(self.p)):
            raise BlowUpError(f"non-finite state at t = {self.t}")
        if np.linalg.norm(self.p) > self.cfg.blowup_norm:
            raise BlowUpError(
                f"|state| exceeded {self.cfg.blowup_norm} at t = {self.t}")

    def step(self, h_cap=np.inf):
        """Advance one accepted step of size at most h_cap."""
        cfg = self.cfg
        self.t_prev = self.t
        self.p_prev = self.p.copy()
        if self.n_steps >= cfg.max_steps:
            raise BudgetError(f"max_steps = {cfg.max_steps} exhausted "
                              f"at t = {self.t}")
        if cfg.method == "rk4_fixed":
            h = min(cfg.h, h_cap)
            self.p = rk4_step(self.f, self.p, h)
            self.t += h
            self.n_steps += 1
            self._guard()
            return h
        # adaptive
        h = min(self.h_next, h_cap)
        while True:
            if self.n_steps >= cfg.max_steps:
                raise BudgetError(f"max_steps = {cfg.max_steps} exhausted "
                                  f"at t = {self.t}")
            p_new, err = _dp45_step(self.f, self.p, h)
            self.n_steps += 1
            en = _err_norm(err, self.p, p_new, cfg)
            if en <= 1.0 or h <= 1e-14:
                self.p = p_new
                self.t += h
                fac = 5.0 if en == 0.0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
                self.h_next = min(h * fac, 1.0)
                self._guard()
                return h
            h *= max(0.2, 0.9 * en ** -0.2)

    def run_to(self, t_end):
        while self.t < t_end - 1e-15:
            self.step(h_cap=t_end - self.t)
        return self.p


def _integrate(f, p0, T, cfg):
    st = _Stepper(f, p0, cfg)
    return st.run_to(T)


def flow(model, p, T, cfg=None):
    """State of the flow at time T from p (exact for geometric models).

    Negative T integrates the reversed field; for geometric models the
    hybrid engine inverts the passage instead.
    """
    cfg = cfg or DEFAULT_STEP
    p = np.asarray(p, dtype=float)
    if isinstance(model, _models.FlowModel) and model.variant == "geometric":
        from . import hybrid
        return hybrid.flow(model.params, p, T)
    f, _ = field_functions(model)
    if T == 0.0:
        return p.copy()
    if T < 0.0:
        return _integrate(lambda q: -f(q), p, -T, cfg)
    return _integrate(f, p, T, cfg)


def _tangent_rhs(f, jac):
    def rhs(u):
        p = u[:3]
        m = u[3:].reshape(3, 3)
        return np.concatenate([f(p), (jac(p) @ m).ravel()])
    return rhs


def flow_with_tangent(model, p, T, cfg=None, frame=None):
    """Advance state and a 3x3 tangent frame to time T.

    The frame columns obey the variational equation M' = DG(x(t)) M.
    Geometric models use the exact per-segment multipliers (including
    the jump's saltation matrix) from the hybrid engine.
    """
    cfg = cfg or DEFAULT_STEP
    p = np.asarray(p, dtype=float)
    if frame is None:
        frame = np.eye(3)
    frame = np.asarray(frame, dtype=float)
    if isinstance(model, _models.FlowModel) and model.variant == "geometric":
        from . import hybrid
        state, m = hybrid.flow_with_tangent(model.params, p, T, frame)
        return TangentState(state, m)
    f, jac = field_functions(model)
    if jac is None:
        raise DomainError("tangent flow needs a Jacobian-capable model")
    if T < 0.0:
        g, gj = (lambda q: -f(q)), (lambda q: -jac(q))
        u = _integrate(_tangent_rhs(g, gj),
                       np.concatenate([p, frame.ravel()]), -T, cfg)
    else:
        u = _integrate(_tangent_rhs(f, jac),
                       np.concatenate([p, frame.ravel()]), T, cfg)
    return TangentState(u[:3], u[3:].reshape(3, 3))


def integrate_to_event(f, p0, event, cfg=None, t_max=1e4, direction=-1,
                       time_tol=1e-10):
    """First time the scalar event function crosses zero.

    direction -1 accepts only decreasing crossings (event going from
    positive to negative), +1 only increasing ones, 0 both.  The
    crossing is bracketed by one accepted step, then refined by
    bisection; each bisection probe re-integrates from the bracket's
    start state, so the located state inherits the stepper accuracy
    rather than an interpolation error.  Returns (t_hit, p_hit).
    """
    cfg = cfg or DEFAULT_STEP
    st = _Stepper(f, p0, cfg)
    g_prev = float(event(st.p))
    while st.t < t_max:
        st.step(h_cap=t_max - st.t)
        g = float(event(st.p))
        crossed = (g_prev > 0.0 >= g) if direction < 0 else (
            (g_prev < 0.0 <= g) if direction > 0 else
            (g_prev > 0.0 >= g) or (g_prev < 0.0 <= g))
        if crossed and g_prev != g:
            t_lo, t_hi = st.t_prev, st.t
            p_base = st.p_prev.copy()
            p_hi = st.p.copy()
            sub = replace(cfg, method="rk4_fixed",
                          h=max((t_hi - t_lo) / 64.0, 1e-14))
            while t_hi - t_lo > time_tol:
                t_mid = 0.5 * (t_lo + t_hi)
                p_mid = _integrate(f, p_base, t_mid - st.t_prev, sub)
                g_mid = float(event(p_mid))
                on_lo_side = (g_mid > 0.0) if g_prev > 0.0 else (g_mid < 0.0)
                if on_lo_side:
                    t_lo = t_mid
                else:
                    t_hi, p_hi = t_mid, p_mid
            return t_hi, p_hi
        g_prev = g
        if st.n_steps % 1024 == 0 and np.linalg.norm(f(st.p)) < 1e-10:
            raise StableManifoldError(
                f"trajectory stalled at an equilibrium near {st.p}")
    raise BudgetError(f"no event crossing within t_max = {t_max}")


def advance_to_section(model, p, cfg=None, section_z=None, direction=-1,
                       t_max=1e4, position_tol=1e-9):
    """Next crossing of the horizontal section.

    Classical models locate z = section_z (default rayleigh - 1, the
    plane of the nontrivial equilibria) by event bisection; geometric
    models land on z = 1 exactly at the end of the gluing transit.
    The hit time is located to 1e-10 and the returned point sits on
    the section to within position_tol.
    """
    cfg = cfg or DEFAULT_STEP
    p = np.asarray(p, dtype=float)
    if isinstance(model, _models.FlowModel) and model.variant == "geometric":
        from . import hybrid
        return hybrid.advance_to_section(model.params, p)
    if not isinstance(model, _models.FlowModel):
        raise DomainError("advance_to_section needs a FlowModel")
    if section_z is None:
        section_z = model.params.rayleigh - 1.0
    f, _ = field_functions(model)
    t_hit, p_hit = integrate_to_event(
        f, p, lambda q: q[2] - section_z, cfg, t_max, direction)
    if abs(p_hit[2] - section_z) > position_tol:
        # polish: one extra bisection round with a tighter clock
        t_hit, p_hit = integrate_to_event(
            f, p, lambda q: q[2] - section_z, cfg, t_max, direction,
            time_tol=1e-13)
    if abs(p_hit[2] - section_z) > position_tol:
        raise DomainError(
            f"event refinement left residual {abs(p_hit[2] - section_z):.2e} "
            f"> {position_tol}")
    side = 1 if p_hit[0] >= 0.0 else -1
    return SectionHit(p_hit, t_hit, side, crossing_speed=float(f(p_hit)[2]))


def sample_flow_uniform(model, p, t0, dt, n, cfg=None):
    """Positions at t0, t0+dt, ..., t0+(n-1)dt along one trajectory.

    The workhorse of Birkhoff averaging and empirical measures.  The
    classical field runs through the compiled fixed-step kernel with
    substeps no coarser than cfg.h; geometric models sample their
    exact piecewise representation.
    """
    cfg = cfg or DEFAULT_STEP
    p = np.asarray(p, dtype=float)
    if isinstance(model, _models.FlowModel) and model.variant == "geometric":
        from . import hybrid
        path = hybrid.HybridPath(model.params, p, t0 + (n - 1) * dt)
        return path.sample(t0 + dt * np.arange(n))
    if isinstance(model, _models.FlowModel) and model.variant == "classical":
        from ._fast import classical_rk4
        q = model.params
        if t0 > 0:
            m0 = max(1, int(math.ceil(t0 / cfg.h)))
            p = classical_rk4(p, t0 / m0, m0, q.sigma, q.rayleigh, q.beta,
                              m0 + 1, np.empty((1, 3)))
        m = max(1, int(math.ceil(dt / cfg.h)))
        out = np.empty((n, 3))
        classical_rk4(p, dt / m, (n - 1) * m, q.sigma, q.rayleigh, q.beta,
                      m, out)
        return out
    f, _ = field_functions(model)
    st = _Stepper(f, p, cfg)
    st.run_to(t0)
    out = np.empty((n, 3))
    out[0] = st.p
    for k in range(1, n):
        st.run_to(t0 + k * dt)
        out[k] = st.p
    return out
