"""Vector fields and closed-form pieces of the three flow families.

Three variants live here:

* classical Lorenz: the usual quadratic field (sigma, rayleigh, beta),
* geometric Lorenz, expanding mode: linear field inside the cube
  [-1,1]^3 with -l2 > l1 > -l3 > 0 (so l1 + l3 > 0),
* geometric Lorenz, contracting mode: linear field with
  -l2 > -l3 > l1 > 0 and r > s + 3, where r = -l2/l1, s = -l3/l1.

For the geometric variants the passage outside the cube is not
integrated: it is modeled as an affine jump from the exit faces
x = +-1 back onto the cross-section z = 1, taking a fixed transit
time tau_out.  The jump composed with the in-cube linear passage
reproduces the one-dimensional quotient map and its fiber map
exactly, which is what makes the skew-product cross-checks in the
test suite meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, StableManifoldError

__all__ = [
    "Box",
    "ClassicalLorenzParams",
    "RotationExpansionSpec",
    "GeomLorenzParams",
    "FlowModel",
    "DiagnosticsReport",
    "classical_model",
    "contracting_model",
    "expanding_model",
    "state3",
    "eval_field",
    "eval_jacobian",
    "divergence",
    "linear_region_exit",
    "validate_params",
]


def state3(x, y, z):
    """Build a finite 3-state as a float ndarray, validating the entries."""
    p = np.array([x, y, z], dtype=float)
    if not np.all(np.isfinite(p)):
        raise DomainError(f"non-finite state {p}")
    return p


def _require_state(p):
    p = np.asarray(p, dtype=float)
    if p.shape != (3,):
        raise DomainError(f"expected a 3-state, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise DomainError(f"non-finite state {p}")
    return p


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, used for the linear cube and trapping regions."""

    xlim: tuple[float, float] = (-1.0, 1.0)
    ylim: tuple[float, float] = (-1.0, 1.0)
    zlim: tuple[float, float] = (-1.0, 1.0)

    def contains(self, p, tol=1e-12):
        x, y, z = p
        return (
            self.xlim[0] - tol <= x <= self.xlim[1] + tol
            and self.ylim[0] - tol <= y <= self.ylim[1] + tol
            and self.zlim[0] - tol <= z <= self.zlim[1] + tol
        )

    @property
    def bounds(self):
        return np.array([self.xlim, self.ylim, self.zlim], dtype=float)


@dataclass(frozen=True)
class ClassicalLorenzParams:
    sigma: float = 10.0
    rayleigh: float = 28.0
    beta: float = 8.0 / 3.0


@dataclass(frozen=True)
class RotationExpansionSpec:
    """Parameters of the affine jump standing in for the outside passage.

    The jump from the exit face x = +1 to the section z = 1 is

        (1, y, z)  |->  (tx - expansion*sin(angle)*z,  y + ty,  1),

    with the x = -1 face handled by the sign symmetry
    (x, y, z) -> (-x, -y, z).  angle = pi/2 rotates the face normal
    into the downward section normal; expansion stretches the
    z-coordinate of the exit point into the new quotient coordinate;
    translation = (tx, ty) recenters onto the section.  The numbers
    here are model choices, not consequences of the eigenvalues: only
    the products below are constrained so that the induced return map
    is the quotient/fiber pair (see GeomLorenzParams).
    """

    angle: float = math.pi / 2.0
    expansion: float = 4.0
    translation: tuple[float, float] = (0.5, 0.1)

    @property
    def effective_rho(self):
        return self.expansion * math.sin(self.angle)


@dataclass(frozen=True)
class GeomLorenzParams:
    """Eigenvalues and gluing data of a geometric Lorenz model.

    r = -lambda2/lambda1 and s = -lambda3/lambda1 are the saturated
    exponents of the in-cube passage; rho scales the one-dimensional
    quotient map T(u) = sgn(u) * (-rho*|u|^s + 1/2) and c_offset is
    the fiber offset of H(u, v) = sgn(u) * (v*|u|^r + c).  rho must
    stay in (0, (1/2)^(-s)] for T to map [-1/2, 1/2] into itself;
    at the upper endpoint each branch is onto.
    """

    lambda1: float = 1.0
    lambda2: float = -6.0
    lambda3: float = -2.0
    mode: str = "contracting"
    rho: float = 4.0
    c_offset: float = 0.1
    tau_out: float = 1.0
    gluing: RotationExpansionSpec | None = None

    def __post_init__(self):
        if self.gluing is None:
            spec = RotationExpansionSpec(
                angle=math.pi / 2.0,
                expansion=self.rho,
                translation=(0.5, self.c_offset),
            )
            object.__setattr__(self, "gluing", spec)

    @property
    def r(self):
        return -self.lambda2 / self.lambda1

    @property
    def s(self):
        return -self.lambda3 / self.lambda1

    @property
    def rho_max(self):
        return 0.5 ** (-self.s)


@dataclass(frozen=True)
class FlowModel:
    variant: str
    params: ClassicalLorenzParams | GeomLorenzParams
    linear_cube: Box | None = None

    def __post_init__(self):
        if self.variant not in ("classical", "geometric"):
            raise DomainError(f"unknown model variant {self.variant!r}")
        if self.variant == "geometric" and self.linear_cube is None:
            object.__setattr__(self, "linear_cube", Box())


def classical_model(sigma=10.0, rayleigh=28.0, beta=8.0 / 3.0):
    return FlowModel("classical", ClassicalLorenzParams(sigma, rayleigh, beta))


def contracting_model(lambda1=1.0, lambda2=-6.0, lambda3=-2.0, rho=4.0,
                      c_offset=0.1, tau_out=1.0, gluing=None):
    params = GeomLorenzParams(lambda1, lambda2, lambda3, "contracting",
                              rho, c_offset, tau_out, gluing)
    return FlowModel("geometric", params, Box())


def expanding_model(lambda1=1.0, lambda2=-2.0, lambda3=-0.75, rho=None,
                    c_offset=0.1, tau_out=1.0, gluing=None):
    s = -lambda3 / lambda1
    if rho is None:
        rho = 0.5 ** (-s)
    params = GeomLorenzParams(lambda1, lambda2, lambda3, "expanding",
                              rho, c_offset, tau_out, gluing)
    return FlowModel("geometric", params, Box())


def eval_field(model, p):
    """Right-hand side G(p) of the flow.

    For geometric variants the field is only defined inside the linear
    cube; the outside passage is a discrete jump, so asking for the
    field there is a domain error rather than a silent extrapolation.
    """
    p = _require_state(p)
    if model.variant == "classical":
        s, r, b = model.params.sigma, model.params.rayleigh, model.params.beta
        x, y, z = p
        return np.array([s * (y - x), x * (r - z) - y, x * y - b * z])
    if not model.linear_cube.contains(p, tol=1e-9):
        raise DomainError(
            f"point {p} lies outside the linear cube; the outside passage "
            "is modeled as a discrete jump and has no pointwise field")
    lam = model.params
    return np.array([lam.lambda1 * p[0], lam.lambda2 * p[1], lam.lambda3 * p[2]])


def eval_jacobian(model, p):
    """Jacobian DG(p) of the field."""
    p = _require_state(p)
    if model.variant == "classical":
        s, r, b = model.params.sigma, model.params.rayleigh, model.params.beta
        x, y, z = p
        return np.array([
            [-s, s, 0.0],
            [r - z, -1.0, -x],
            [y, x, -b],
        ])
    if not model.linear_cube.contains(p, tol=1e-9):
        raise DomainError(
            f"point {p} lies outside the linear cube; no Jacobian there")
    lam = model.params
    return np.diag([lam.lambda1, lam.lambda2, lam.lambda3])


def divergence(model, p):
    """div G(p); constant for the classical field and inside the cube."""
    if model.variant == "classical":
        q = model.params
        return -(q.sigma + 1.0 + q.beta)
    lam = model.params
    return lam.lambda1 + lam.lambda2 + lam.lambda3


def linear_region_exit(params, entry):
    """Closed-form passage through the linear cube.

    From an entry (u, v) on the section z = 1 with u != 0 the linear
    flow exits the cube at x = sgn(u) after time t = -ln|u|/lambda1,
    at the point

        (sgn(u), v*|u|^r, |u|^s),

    since exp(lambda2*t) = |u|^r and exp(lambda3*t) = |u|^s.

    Returns (exit_state, elapsed).  u = 0 is the stable manifold of
    the singularity and never exits.
    """
    u = float(entry.u)
    v = float(entry.v)
    if not (math.isfinite(u) and math.isfinite(v)):
        raise DomainError(f"non-finite section point ({u}, {v})")
    if abs(u) > 0.5 + 1e-12 or abs(v) > 0.5 + 1e-12:
        raise DomainError(f"section point ({u}, {v}) outside [-1/2, 1/2]^2")
    if u == 0.0:
        raise StableManifoldError(
            "entry with u = 0 lies on the stable manifold of the origin")
    au = abs(u)
    elapsed = -math.log(au) / params.lambda1
    exit_state = np.array([math.copysign(1.0, u), v * au ** params.r,
                           au ** params.s])
    return exit_state, elapsed


@dataclass
class DiagnosticsReport:
    """Outcome of validate_params: one (name, ok, detail) row per check."""

    entries: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def add(self, name, ok, detail=""):
        self.entries.append((name, bool(ok), detail))

    @property
    def ok(self):
        return all(ok for _, ok, _ in self.entries)

    def failed(self):
        return [name for name, ok, _ in self.entries if not ok]

    def as_dict(self):
        return {
            "ok": self.ok,
            "checks": [
                {"name": n, "ok": o, "detail": d} for n, o, d in self.entries
            ],
            "notes": list(self.notes),
        }


def validate_params(model):
    """Check every structural constraint of the model's mode.

    Returns a DiagnosticsReport; nothing is raised, so callers can
    surface the exact violated constraint.  The cube-boundary field
    continuity of a smooth outside passage is recorded as a note, not
    a check: the discrete gluing model bypasses the outside field
    entirely.
    """
    rep = DiagnosticsReport()
    if model.variant == "classical":
        q = model.params
        rep.add("sigma_positive", q.sigma > 0, f"sigma = {q.sigma}")
        rep.add("rayleigh_positive", q.rayleigh > 0, f"rayleigh = {q.rayleigh}")
        rep.add("beta_positive", q.beta > 0, f"beta = {q.beta}")
        return rep

    lam = model.params
    l1, l2, l3 = lam.lambda1, lam.lambda2, lam.lambda3
    rep.add("lambda1_positive", l1 > 0, f"lambda1 = {l1}")
    rep.add("lambda2_negative", l2 < 0, f"lambda2 = {l2}")
    rep.add("lambda3_negative", l3 < 0, f"lambda3 = {l3}")
    if lam.mode == "contracting":
        rep.add("ordering", -l2 > -l3 > l1 > 0,
                f"need -lambda2 > -lambda3 > lambda1 > 0, got {(-l2, -l3, l1)}")
        rep.add("r_gt_s_plus_3", lam.r > lam.s + 3.0,
                f"r = {lam.r}, s + 3 = {lam.s + 3.0} (strict inequality)")
        rep.add("contracting_sum", l1 + l3 < 0, f"lambda1 + lambda3 = {l1 + l3}")
    elif lam.mode == "expanding":
        rep.add("ordering", -l2 > l1 > -l3 > 0,
                f"need -lambda2 > lambda1 > -lambda3 > 0, got {(-l2, l1, -l3)}")
        rep.add("expanding_sum", l1 + l3 > 0, f"lambda1 + lambda3 = {l1 + l3}")
        rep.add("s_in_half_one", 0.5 < lam.s < 1.0, f"s = {lam.s}")
    else:
        rep.add("mode", False, f"unknown mode {lam.mode!r}")
        return rep

    rep.add("rho_range", 0.0 < lam.rho <= lam.rho_max + 1e-12,
            f"rho = {lam.rho}, admissible (0, {lam.rho_max}]")
    fiber_reach = 0.5 * 0.5 ** lam.r + abs(lam.c_offset)
    rep.add("c_offset_keeps_section", fiber_reach <= 0.5,
            f"sup |H| = {fiber_reach} must be <= 1/2")
    rep.add("tau_out_positive", lam.tau_out > 0, f"tau_out = {lam.tau_out}")

    glue = lam.gluing
    rep.add("gluing_rho_consistent",
            abs(glue.effective_rho - lam.rho) <= 1e-9,
            f"expansion*sin(angle) = {glue.effective_rho}, rho = {lam.rho}")
    rep.add("gluing_translation_consistent",
            abs(glue.translation[0] - 0.5) <= 1e-9
            and abs(glue.translation[1] - lam.c_offset) <= 1e-9,
            f"translation = {glue.translation}, expected (0.5, {lam.c_offset})")
    rep.notes.append(
        "cube-boundary field continuity is not enforced: the outside "
        "passage is a discrete affine jump, checked only through the "
        "gluing consistency entries above")
    return rep
