"""Cross-section return maps for the geometric models.

The section is the square z = 1, |u|, |v| <= 1/2, split by the singular
line u = 0.  One return is: flow down through the cube, exit through a
face x = +/-1, glue back.  The return splits as a skew product: the u
coordinate moves by the one-dimensional quotient map alone, and v is
slaved to it, which is what quotient_project exposes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import hybrid, models
from .errors import DomainError, GluingParameterError, StableManifoldError
from .integrate import StepConfig, integrate_to_event

__all__ = [
    "SectionPoint",
    "ReturnSample",
    "ReturnTimeStats",
    "analytic_return_contracting",
    "numeric_return",
    "quotient_project",
    "iterate_returns",
    "return_time_stats",
    "sample_section_seeds",
]


@dataclass(frozen=True)
class SectionPoint:
    u: float
    v: float
    hit_time: float = 0.0

    def __post_init__(self):
        if abs(self.u) > 0.5 + 1e-12 or abs(self.v) > 0.5 + 1e-12:
            raise DomainError(
                f"({self.u}, {self.v}) lies outside the section square")

    @property
    def side(self):
        """+1 or -1 for the two halves; 0 on the singular line."""
        return 0 if self.u == 0.0 else (1 if self.u > 0.0 else -1)

    def state(self):
        return np.array([self.u, self.v, 1.0])


@dataclass(frozen=True)
class ReturnSample:
    start: SectionPoint
    end: SectionPoint
    tau: float


@dataclass(frozen=True)
class ReturnTimeStats:
    count: int
    mean: float
    std: float
    min: float
    max: float


def _power_params(model_or_params):
    if isinstance(model_or_params, models.FlowModel):
        if model_or_params.variant != "geometric":
            raise DomainError("section returns are defined for the "
                              "geometric models")
        return model_or_params.params
    return model_or_params


def analytic_return_contracting(params, point):
    """One exact section return: closed-form passage plus affine jump.

    The same formulas cover both geometric regimes since the passage
    only uses the exponent ratios.  Points on the singular line have
    no return (StableManifoldError); parameters that throw the image
    off the section raise GluingParameterError.
    """
    params = _power_params(params)
    (exit_state, t_cube) = models.linear_region_exit(params, point)
    landing = hybrid.glue_jump(params, exit_state)
    tau = t_cube + params.tau_out
    end = SectionPoint(float(landing[0]), float(landing[1]),
                       hit_time=point.hit_time + tau)
    return ReturnSample(point, end, tau)


def numeric_return(model, point, cfg=None, t_max=1e3):
    """Section return with the cube passage done by numerical
    integration instead of the closed form; the jump itself stays
    exact.  Exists to cross-check the analytic path and to exercise
    the event machinery on a case with a known answer.
    """
    params = _power_params(model)
    cfg = cfg or StepConfig(abs_tol=1e-13, rel_tol=1e-13)
    if point.u == 0.0:
        raise StableManifoldError("no return from the singular line")
    lam = np.array([params.lambda1, params.lambda2, params.lambda3])

    def f(p):
        return lam * p

    t_cube, p_exit = integrate_to_event(
        f, point.state(), lambda p: abs(p[0]) - 1.0, cfg,
        t_max=t_max, direction=1, time_tol=1e-12)
    # land the x coordinate exactly on the face before gluing
    p_exit = p_exit.copy()
    p_exit[0] = 1.0 if p_exit[0] > 0.0 else -1.0
    landing = hybrid.glue_jump(params, p_exit)
    tau = t_cube + params.tau_out
    end = SectionPoint(float(landing[0]), float(landing[1]),
                       hit_time=point.hit_time + tau)
    return ReturnSample(point, end, tau)


def quotient_project(point):
    """Collapse the stable direction: a section point descends to its
    u coordinate, on which the return acts as the one-dimensional map."""
    return float(point.u)


def iterate_returns(params, point, n):
    """n successive analytic returns; list of ReturnSample."""
    params = _power_params(params)
    out = []
    cur = point
    for _ in range(n):
        smp = analytic_return_contracting(params, cur)
        out.append(smp)
        cur = smp.end
    return out


def return_time_stats(samples):
    if not samples:
        raise DomainError("no return samples")
    taus = np.array([s.tau for s in samples])
    return ReturnTimeStats(len(samples), float(taus.mean()),
                           float(taus.std()), float(taus.min()),
                           float(taus.max()))


def sample_section_seeds(rng, n, u_floor=1e-6):
    """n random section points, keeping clear of the singular line."""
    pts = []
    while len(pts) < n:
        u = rng.uniform(-0.5, 0.5)
        if abs(u) < u_floor:
            continue
        pts.append(SectionPoint(u, rng.uniform(-0.5, 0.5)))
    return pts
