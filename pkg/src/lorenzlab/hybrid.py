"""Exact piecewise engine for the geometric models.

A geometric trajectory alternates two phases: a passage through the
linear cube, solvable in closed form, and a gluing excursion that the
model compresses into an affine jump from an outflow face x = +/-1
back onto the top section z = 1, traversed as a straight segment of
fixed duration tau_out.  Everything downstream (section maps, measures,
tangent cocycles) is built from these two pieces, so this module keeps
them exact and loud about leaving their domain.

Tangent vectors ride along: diagonal multipliers inside the cube, a
saltation matrix at each face crossing.  The saltation correction is
what keeps the flow direction a neutral direction of the cocycle; a
bare jump derivative would not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (DomainError, GluingParameterError,
                     StableManifoldError)
from .integrate import SectionHit

__all__ = [
    "glue_jump",
    "glue_jump_matrix",
    "saltation_matrix",
    "cube_exit",
    "return_multiplier",
    "HybridPath",
    "flow",
    "flow_with_tangent",
    "advance_to_section",
    "iterate_section_coords",
]

_EDGE_SLACK = 1e-9


def _lams(params):
    return params.lambda1, params.lambda2, params.lambda3


def cube_exit(params, p):
    """Closed-form exit through a face x = +/-1 from an in-cube point.

    Returns (exit_state, t_exit).  Raises StableManifoldError when the
    point sits on the invariant plane x = 0 and never exits.
    """
    l1, l2, l3 = _lams(params)
    x, y, z = float(p[0]), float(p[1]), float(p[2])
    if abs(x) > 1.0 + _EDGE_SLACK:
        raise DomainError(f"point {p} is outside the cube")
    if x == 0.0:
        raise StableManifoldError(
            "orbit lies on the local stable manifold x = 0 and falls "
            "into the singularity instead of exiting")
    ax = min(abs(x), 1.0)
    t_exit = -math.log(ax) / l1
    sigma = 1.0 if x > 0.0 else -1.0
    e = np.array([sigma, y * ax ** (-l2 / l1), z * ax ** (-l3 / l1)])
    return e, t_exit


def glue_jump(params, exit_state):
    """Affine jump from an outflow face point back onto the section.

    (+1, y, z) -> (1/2 - rho z, y + c, 1);  the -1 face is the image
    of that rule under the central symmetry (x, y, z) -> (-x, -y, z).
    Raises GluingParameterError when the image misses the section
    square, which flags parameters (or seeds) outside the modeled
    regime rather than silently flowing on.
    """
    g = params.gluing
    x, y, z = float(exit_state[0]), float(exit_state[1]), float(exit_state[2])
    if abs(abs(x) - 1.0) > _EDGE_SLACK:
        raise DomainError(f"{exit_state} is not on an outflow face")
    if x > 0.0:
        u = 0.5 - g.effective_rho * z
        v = y + g.translation[1]
    else:
        u = g.effective_rho * z - 0.5
        v = -y - g.translation[1]
    if abs(u) > 0.5 + _EDGE_SLACK or abs(v) > 0.5 + _EDGE_SLACK:
        raise GluingParameterError(
            f"glued image ({u:.6g}, {v:.6g}) leaves the section square; "
            "the gluing parameters do not confine this orbit")
    u = min(0.5, max(-0.5, u))
    v = min(0.5, max(-0.5, v))
    return np.array([u, v, 1.0])


def glue_jump_matrix(params, side):
    """Derivative of the jump with respect to the face coordinates,
    written as a 3x3 acting on ambient vectors (the x-row and x-column
    vanish; the saltation matrix supplies the transverse part)."""
    rho = params.gluing.effective_rho
    if side > 0:
        return np.array([[0.0, 0.0, -rho],
                         [0.0, 1.0, 0.0],
                         [0.0, 0.0, 0.0]])
    return np.array([[0.0, 0.0, rho],
                     [0.0, -1.0, 0.0],
                     [0.0, 0.0, 0.0]])


def _field_at(params, p):
    l1, l2, l3 = _lams(params)
    return np.array([l1 * p[0], l2 * p[1], l3 * p[2]])


def saltation_matrix(params, exit_state):
    """Tangent-map correction for the instantaneous jump at a face.

    For a jump J applied when the orbit reaches the surface x = sigma,
    the transported tangent is  S = DJ + (G(J(e)) - DJ G(e)) n^T / (n.G(e)),
    with n the face normal and G the vector field.  S maps G(e) to
    G(J(e)) exactly, so the flow direction stays neutral through the
    composite cocycle.
    """
    e = np.asarray(exit_state, dtype=float)
    side = 1 if e[0] > 0.0 else -1
    a = glue_jump_matrix(params, side)
    q = glue_jump(params, e)
    ge = _field_at(params, e)
    gq = _field_at(params, q)
    n = np.array([float(side), 0.0, 0.0])
    denom = float(n @ ge)
    if abs(denom) < 1e-14:
        raise DomainError("field tangent to the outflow face; saltation "
                          "matrix undefined")
    return a + np.outer(gq - a @ ge, n) / denom


def return_multiplier(params, u, v):
    """Exact tangent map of one full section return at (u, v): the
    diagonal cube multipliers followed by the saltation matrix."""
    if u == 0.0:
        raise StableManifoldError("return undefined on the singular line")
    au = abs(u)
    e, _ = cube_exit(params, np.array([u, v, 1.0]))
    s_mat = saltation_matrix(params, e)
    diag = np.diag([1.0 / au, au ** params.r, au ** params.s])
    return s_mat @ diag


@dataclass
class _Segment:
    t0: float
    t1: float
    kind: str          # "cube" or "transit"
    a: np.ndarray      # cube: state at t0; transit: exit point
    b: np.ndarray | None = None   # transit: landing point


class HybridPath:
    """Lazily built piecewise trajectory through cube and transit
    segments, sampleable at arbitrary times.

    Seeds must lie in the closed cube (points on Sigma, z = 1, are the
    usual entry).  Negative times extend the path backward through the
    inverted passage; inversion fails loudly off the modeled attractor.
    """

    def __init__(self, params, p0, t_end=0.0):
        p0 = np.asarray(p0, dtype=float)
        if np.any(np.abs(p0) > 1.0 + _EDGE_SLACK):
            raise DomainError(f"seed {p0} is outside the unit cube")
        self.params = params
        self.segments = [self._cube_segment(0.0, np.clip(p0, -1.0, 1.0))]
        self._starts = None
        if t_end:
            self.build(t_end)

    def _cube_segment(self, t0, p):
        try:
            _, t_exit = cube_exit(self.params, p)
        except StableManifoldError:
            return _Segment(t0, math.inf, "cube", p)
        return _Segment(t0, t0 + t_exit, "cube", p)

    def _append_next(self):
        last = self.segments[-1]
        if last.t1 == math.inf:
            raise StableManifoldError(
                "path terminates on the stable manifold of the "
                "singularity; nothing to extend")
        if last.kind == "cube":
            e, _ = cube_exit(self.params, last.a)
            q = glue_jump(self.params, e)
            tau = self.params.tau_out
            if tau > 0.0:
                self.segments.append(
                    _Segment(last.t1, last.t1 + tau, "transit", e, q))
            else:
                self.segments.append(self._cube_segment(last.t1, q))
        else:
            self.segments.append(self._cube_segment(last.t1, last.b))
        self._starts = None

    def _prepend_previous(self):
        first = self.segments[0]
        if first.kind == "transit":
            # previous piece is the cube passage that produced the exit
            e = first.a
            zf = float(e[2])
            if not 0.0 < zf <= 1.0:
                raise DomainError(
                    f"cannot invert a passage with exit height {zf:.3g}")
            seg = self._pre_cube_segment(first.t0, e)
        elif abs(first.a[2] - 1.0) <= _EDGE_SLACK:
            seg = self._pre_transit_segment(first.t0, first.a)
        else:
            # a mid-cube seed: rewind its own passage to the section
            # entry, then keep extending from there
            x, y, z = first.a
            if not 0.0 < z < 1.0:
                raise DomainError(
                    f"no backward continuation from height z = {z:.4g}")
            t_r = math.log(1.0 / z) / (-self.params.lambda3)
            entry = np.array([x * z ** (1.0 / self.params.s),
                              y * z ** (-self.params.r / self.params.s),
                              1.0])
            if abs(entry[0]) > 0.5 + _EDGE_SLACK or \
                    abs(entry[1]) > 0.5 * (1.0 + 1e-6):
                raise DomainError(
                    "backward passage exits the section square; the seed "
                    "is not on the modeled attractor")
            entry[1] = max(-0.5, min(0.5, entry[1]))
            self.segments[0] = _Segment(first.t0 - t_r, first.t1, "cube",
                                        entry)
            self._starts = None
            return
        self.segments.insert(0, seg)
        self._starts = None

    def _pre_cube_segment(self, t_end, exit_state):
        """Cube passage ending at exit_state at time t_end."""
        p = self.params
        sigma = 1.0 if exit_state[0] > 0.0 else -1.0
        zf = float(exit_state[2])
        yf = float(exit_state[1])
        dur = math.log(1.0 / zf) / (-p.lambda3)
        u_prev = sigma * zf ** (1.0 / p.s)
        v_prev = yf / abs(u_prev) ** p.r if u_prev != 0.0 else math.inf
        if abs(v_prev) > 0.5 * (1.0 + 1e-6):
            raise DomainError(
                "backward passage reconstructs a section point with "
                f"|v| = {abs(v_prev):.4g} > 1/2; the orbit is not on "
                "the modeled attractor")
        start = np.array([u_prev, max(-0.5, min(0.5, v_prev)), 1.0])
        return _Segment(t_end - dur, t_end, "cube", start)

    def _pre_transit_segment(self, t_end, landing):
        """Transit ending at a section landing at time t_end; rebuilds
        the face point it came from by inverting the jump."""
        p = self.params
        g = p.gluing
        u, v = float(landing[0]), float(landing[1])
        if abs(landing[2] - 1.0) > _EDGE_SLACK:
            raise DomainError("backward extension must start from the "
                              "section z = 1")
        if v == 0.0:
            raise DomainError("landing with v = 0 cannot be attributed "
                              "to an outflow face")
        side = 1.0 if v > 0.0 else -1.0
        if side > 0:
            zf = (0.5 - u) / g.effective_rho
            yf = v - g.translation[1]
        else:
            zf = (u + 0.5) / g.effective_rho
            yf = -(v + g.translation[1])
        if not 0.0 < zf <= 1.0:
            raise DomainError(
                f"inverted jump gives exit height {zf:.4g} outside (0, 1]; "
                "no admissible backward continuation")
        e = np.array([side, yf, zf])
        tau = p.tau_out
        if tau <= 0.0:
            return self._pre_cube_segment(t_end, e)
        return _Segment(t_end - tau, t_end, "transit", e,
                        np.asarray(landing, dtype=float))

    def build(self, t_end):
        while self.segments[-1].t1 < t_end:
            self._append_next()
        while self.segments[0].t0 > min(t_end, 0.0):
            self._prepend_previous()
        return self

    @property
    def t_max(self):
        return self.segments[-1].t1

    def _segment_index(self, times):
        if self._starts is None:
            self._starts = np.array([s.t0 for s in self.segments])
        idx = np.searchsorted(self._starts, times, side="right") - 1
        return np.clip(idx, 0, len(self.segments) - 1)

    def sample(self, times):
        """Positions at the given times (array), building as needed.

        Cost is linear in the number of samples: samples are processed
        in sorted order as contiguous runs per segment.
        """
        times = np.atleast_1d(np.asarray(times, dtype=float))
        self.build(float(times.max()))
        if times.min() < self.segments[0].t0:
            self.build(float(times.min()))
        order = np.argsort(times, kind="stable")
        ts = times[order]
        idx = self._segment_index(ts)
        out = np.empty((times.size, 3))
        lam = np.array(_lams(self.params))
        cuts = np.flatnonzero(idx[1:] != idx[:-1]) + 1
        run_lo = np.concatenate(([0], cuts))
        run_hi = np.concatenate((cuts, [ts.size]))
        for lo, hi in zip(run_lo, run_hi):
            seg = self.segments[idx[lo]]
            dt = ts[lo:hi] - seg.t0
            if seg.kind == "cube":
                block = seg.a[None, :] * np.exp(np.outer(dt, lam))
            else:
                w = (dt / (seg.t1 - seg.t0))[:, None]
                block = (1.0 - w) * seg.a[None, :] + w * seg.b[None, :]
            out[order[lo:hi]] = block
        return out

    def section_landings(self):
        """(time, point) for every section landing built so far."""
        hits = []
        for seg in self.segments:
            if seg.kind == "transit":
                hits.append((seg.t1, seg.b))
        return hits


def flow(params, p, t):
    """Exact state at time t (either sign) from an in-cube seed."""
    path = HybridPath(params, p)
    return path.sample(np.array([float(t)]))[0]


def flow_with_tangent(params, p, t, frame=None):
    """State and accumulated tangent frame at time t >= 0.

    Cube pieces multiply by diag(exp(lambda_i dt)); each face crossing
    inserts its saltation matrix; transit segments carry the frame
    unchanged.  Returns (state, frame).
    """
    if t < 0.0:
        raise DomainError("tangent transport is implemented forward only")
    m = np.eye(3) if frame is None else np.asarray(frame, dtype=float).copy()
    path = HybridPath(params, p, t)
    l1, l2, l3 = _lams(params)
    lam = np.array([l1, l2, l3])
    for seg in path.segments:
        if seg.t0 >= t:
            break
        dt = min(seg.t1, t) - seg.t0
        if seg.kind == "cube":
            m = np.exp(lam * dt)[:, None] * m
            if seg.t1 <= t and math.isfinite(seg.t1):
                e, _ = cube_exit(params, seg.a)
                m = saltation_matrix(params, e) @ m
        # transit: frame frozen
    return path.sample(np.array([float(t)]))[0], m


def advance_to_section(params, p):
    """Next landing on the section z = 1 (the end of the next transit).

    The landing is reached exactly, so there is no residual to polish.
    crossing_speed reports the in-cube vertical velocity picked up at
    the landing point.
    """
    path = HybridPath(params, p)
    while True:
        last = path.segments[-1]
        if last.kind == "transit":
            t_hit, q = last.t1, last.b
            break
        path._append_next()
    side = 1 if q[0] > 0.0 else -1
    return SectionHit(q.copy(), t_hit, side,
                      crossing_speed=float(params.lambda3 * q[2]))


def iterate_section_coords(params, u0, v0, n, collect=True):
    """n successive section returns from (u0, v0), via closed forms.

    Returns (u, v, tau) arrays of length n when collect is true, else
    just the final triple.  Raises StableManifoldError if the orbit
    hits the singular line u = 0 on the nose.
    """
    g = params.gluing
    rho, c = g.effective_rho, g.translation[1]
    r, s, l1 = params.r, params.s, params.lambda1
    tau_out = params.tau_out
    u, v = float(u0), float(v0)
    if collect:
        us = np.empty(n)
        vs = np.empty(n)
        taus = np.empty(n)
    for k in range(n):
        if u == 0.0:
            raise StableManifoldError(
                f"orbit hit the singular line at return {k}")
        au = abs(u)
        t_cube = -math.log(au) / l1
        y_exit = v * au ** r
        z_exit = au ** s
        if u > 0.0:
            un = 0.5 - rho * z_exit
            vn = y_exit + c
        else:
            un = rho * z_exit - 0.5
            vn = -y_exit - c
        if abs(un) > 0.5 + _EDGE_SLACK or abs(vn) > 0.5 + _EDGE_SLACK:
            raise GluingParameterError(
                f"return {k} leaves the section square at "
                f"({un:.6g}, {vn:.6g})")
        u, v = un, vn
        if collect:
            us[k] = u
            vs[k] = v
            taus[k] = t_cube + tau_out
    if collect:
        return us, vs, taus
    return u, v, t_cube + tau_out
