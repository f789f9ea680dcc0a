"""One-dimensional quotient maps on [-1/2, 1/2] and their diagnostics.

The closed-form family is

    T(x) = sgn(x) * (-rho*|x|^s + 1/2),        0 < rho <= (1/2)^(-s),

which is the quotient of the geometric models along the stable
foliation: s > 1 gives the contracting family (derivative vanishing
at the discontinuity), s in (1/2, 1) the expanding one.  PiecewiseMap
is a generic container for other piecewise-monotone interval maps
(tent map oracles, perturbed families).

check_properties collects numeric evidence for the six structural
properties of the contracting family:

  1. two piecewise-C3 branches, each onto, with T'(x) = O(x^(s-1))
     at 0 and s - 1 > 0;
  2. one-sided limits T(0+) = 1/2 and T(0-) = -1/2;
  3. T' < 0 away from 0;
  4. the derivative magnitude on each branch is largest at the outer
     endpoints +-1/2;
  5. +-1/2 are preperiodic for T with a repelling (pre)periodic cycle;
  6. negative Schwarzian derivative on both branches.

Each item gets pass/fail/undetermined plus the evidence, never a bare
boolean: item 5 in particular may legitimately be undetermined when
the orbit of +-1/2 does not revisit itself within the horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, DomainError
from ._fast import power_orbit_histogram, power_orbit_meanlog

__all__ = [
    "DOMAIN",
    "ContractingLorenzMap",
    "Branch",
    "PiecewiseMap",
    "MapDiagnostics",
    "OrbitResult",
    "LeoResult",
    "tent_map",
    "expanding_default_map",
    "eval_T",
    "derivatives",
    "schwarzian",
    "limits_at_zero",
    "check_properties",
    "locally_eventually_onto",
    "orbit",
    "orbit_histogram",
    "orbit_mean_log_abs",
]

DOMAIN = (-0.5, 0.5)


def _check_in_domain(x):
    if not math.isfinite(x):
        raise DomainError(f"non-finite map argument {x}")
    if x < DOMAIN[0] - 1e-12 or x > DOMAIN[1] + 1e-12:
        raise DomainError(f"argument {x} outside [-1/2, 1/2]")


@dataclass(frozen=True)
class ContractingLorenzMap:
    """T(x) = sgn(x) * (-rho*|x|^s + 1/2) with closed-form derivatives."""

    rho: float = 4.0
    s: float = 2.0

    def __post_init__(self):
        if not (self.rho > 0.0):
            raise DomainError(f"rho must be positive, got {self.rho}")
        if self.rho > self.rho_max * (1.0 + 1e-12):
            raise DomainError(
                f"rho = {self.rho} exceeds (1/2)^(-s) = {self.rho_max}; "
                "the map would leave [-1/2, 1/2]")
        if self.s <= 0.0:
            raise DomainError(f"s must be positive, got {self.s}")

    @property
    def rho_max(self):
        return 0.5 ** (-self.s)

    @classmethod
    def from_flow(cls, params):
        """Quotient map of a geometric model's return dynamics."""
        return cls(rho=params.rho, s=params.s)

    @property
    def breakpoints(self):
        return (DOMAIN[0], 0.0, DOMAIN[1])

    def value(self, x):
        _check_in_domain(x)
        if x == 0.0:
            raise DomainError("T is undefined at the discontinuity x = 0")
        t = 0.5 - self.rho * abs(x) ** self.s
        return t if x > 0.0 else -t

    def value_array(self, xs):
        xs = np.asarray(xs, dtype=float)
        t = 0.5 - self.rho * np.abs(xs) ** self.s
        return np.where(xs > 0.0, t, -t)

    def derivative(self, x, order=1):
        _check_in_domain(x)
        if x == 0.0:
            raise DomainError("derivatives are undefined at x = 0")
        ax, s, rho = abs(x), self.s, self.rho
        if order == 1:
            return -rho * s * ax ** (s - 1.0)
        if order == 2:
            return -math.copysign(1.0, x) * rho * s * (s - 1.0) * ax ** (s - 2.0)
        if order == 3:
            return -rho * s * (s - 1.0) * (s - 2.0) * ax ** (s - 3.0)
        raise DomainError(f"derivative order must be 1, 2 or 3, got {order}")

    def schwarzian_value(self, x):
        """S(x) = -(s^2 - 1) / (2 x^2), independent of rho."""
        _check_in_domain(x)
        if x == 0.0:
            raise DomainError("Schwarzian undefined at x = 0")
        return -(self.s ** 2 - 1.0) / (2.0 * x * x)

    def limits_at_zero(self):
        return (-0.5, 0.5)

    def limit_value(self, x0, side):
        """One-sided limit of T at x0; side is +1 (from above) or -1."""
        if x0 == 0.0:
            return 0.5 if side > 0 else -0.5
        return self.value(x0)

    def branch_image(self, sign):
        """Closed image of the branch on side sign, limit at 0 included."""
        edge = self.value(math.copysign(0.5, sign))
        lim = 0.5 if sign > 0 else -0.5
        return (min(edge, lim), max(edge, lim))


@dataclass(frozen=True)
class Branch:
    lo: float
    hi: float
    fn: object
    derivs: tuple = ()


@dataclass(frozen=True)
class PiecewiseMap:
    """Generic piecewise-monotone interval map given by branch callables.

    Derivatives fall back to central differences when a branch carries
    no closed-form derivative; one-sided limits are plain evaluations
    a small step inside the branch, which is adequate for the
    polynomial branches used in the tests.
    """

    branches: tuple

    @property
    def breakpoints(self):
        pts = [self.branches[0].lo]
        for b in self.branches:
            pts.append(b.hi)
        return tuple(pts)

    def _branch_for(self, x):
        for i, b in enumerate(self.branches):
            last = i == len(self.branches) - 1
            if b.lo < x < b.hi or (x == b.hi and last):
                return b
            if x == b.lo and i == 0:
                return b
        raise DomainError(f"argument {x} is a branch boundary or outside "
                          f"{self.breakpoints}")

    def value(self, x):
        _check_in_domain(x)
        return float(self._branch_for(x).fn(x))

    def value_array(self, xs):
        return np.array([self.value(float(x)) for x in np.asarray(xs)])

    def derivative(self, x, order=1):
        _check_in_domain(x)
        b = self._branch_for(x)
        if len(b.derivs) >= order:
            return float(b.derivs[order - 1](x))
        h = max(1e-5, 1e-5 * abs(x))
        h = min(h, 0.25 * (b.hi - b.lo))
        f = b.fn
        if order == 1:
            return (f(x + h) - f(x - h)) / (2.0 * h)
        if order == 2:
            return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
        if order == 3:
            return (f(x + 2 * h) - 2 * f(x + h) + 2 * f(x - h)
                    - f(x - 2 * h)) / (2.0 * h ** 3)
        raise DomainError(f"derivative order must be 1, 2 or 3, got {order}")

    def limit_value(self, x0, side):
        eps = 1e-9
        return self.value(x0 + side * eps)

    def limits_at_zero(self):
        return (self.limit_value(0.0, -1), self.limit_value(0.0, +1))

    def branch_image(self, sign):
        for b in self.branches:
            if (sign > 0 and b.lo == 0.0) or (sign < 0 and b.hi == 0.0):
                v0 = self.limit_value(b.lo, +1) if b.lo == 0.0 else b.fn(b.lo)
                v1 = self.limit_value(b.hi, -1) if b.hi == 0.0 else b.fn(b.hi)
                return (min(v0, v1), max(v0, v1))
        raise DomainError("no branch bordering 0 on that side")


def tent_map():
    """T(x) = 1/2 - 2|x| on [-1/2, 1/2]; preserves Lebesgue measure."""
    return PiecewiseMap(branches=(
        Branch(-0.5, 0.0, lambda x: 0.5 + 2.0 * x,
               (lambda x: 2.0, lambda x: 0.0, lambda x: 0.0)),
        Branch(0.0, 0.5, lambda x: 0.5 - 2.0 * x,
               (lambda x: -2.0, lambda x: 0.0, lambda x: 0.0)),
    ))


def expanding_default_map(s=0.75, rho=None):
    """Expanding-quotient model map: same power form with s in (1/2, 1).

    At full rho = (1/2)^(-s) the branch derivative magnitude is at
    least 2*s > sqrt(2) everywhere, the usual expansion floor for
    these maps; the exponent is a model choice, not a derived
    quantity.  Returned as a PiecewiseMap with exact derivatives.
    """
    if not (0.5 < s < 1.0):
        raise DomainError(f"expanding exponent must lie in (1/2, 1), got {s}")
    if rho is None:
        rho = 0.5 ** (-s)
    if not (0.0 < rho <= 0.5 ** (-s) * (1 + 1e-12)):
        raise DomainError(f"rho = {rho} outside (0, {0.5 ** (-s)}]")

    def _derivs(sign):
        return (
            lambda x: -rho * s * abs(x) ** (s - 1.0),
            lambda x: -sign * rho * s * (s - 1.0) * abs(x) ** (s - 2.0),
            lambda x: -rho * s * (s - 1.0) * (s - 2.0) * abs(x) ** (s - 3.0),
        )

    return PiecewiseMap(branches=(
        Branch(-0.5, 0.0, lambda x: -(0.5 - rho * abs(x) ** s), _derivs(-1.0)),
        Branch(0.0, 0.5, lambda x: 0.5 - rho * x ** s, _derivs(+1.0)),
    ))


# ---------------------------------------------------------------------------
# module-level operations (thin wrappers so call sites read uniformly)

def eval_T(m, x):
    return m.value(x)


def derivatives(m, x, order=1):
    return m.derivative(x, order)


def schwarzian(m, x):
    """T'''/T' - (3/2)(T''/T')^2 from whatever derivatives m provides."""
    if hasattr(m, "schwarzian_value"):
        return m.schwarzian_value(x)
    d1 = m.derivative(x, 1)
    d2 = m.derivative(x, 2)
    d3 = m.derivative(x, 3)
    if d1 == 0.0:
        raise DomainError(f"Schwarzian undefined where T'({x}) = 0")
    return d3 / d1 - 1.5 * (d2 / d1) ** 2


def limits_at_zero(m):
    return m.limits_at_zero()


@dataclass
class OrbitResult:
    points: np.ndarray
    near_zero: list
    terminated_at: int | None = None

    def __len__(self):
        return len(self.points)


def orbit(m, x0, n, lower_bound=0.0):
    """n iterates of m from x0, recording close approaches to 0.

    Iterates with |x| below lower_bound are recorded in near_zero but
    iteration continues from the exact value; only an exact hit of 0
    terminates the orbit (terminated_at is then the hitting index).
    """
    _check_in_domain(x0)
    pts = np.empty(n + 1)
    pts[0] = x0
    near = []
    x = x0
    for k in range(1, n + 1):
        if x == 0.0:
            return OrbitResult(pts[:k], near, terminated_at=k - 1)
        x = m.value(x)
        pts[k] = x
        if abs(x) < lower_bound:
            near.append((k, x))
    return OrbitResult(pts, near, terminated_at=None)


def orbit_histogram(m, x0, n_iter, n_bins, burn=1000):
    """Normalized occupation histogram of a long orbit (compiled loop).

    Only available for the closed-form power family; the generic
    PiecewiseMap would need its own kernel.
    """
    if not isinstance(m, ContractingLorenzMap):
        raise DomainError("orbit_histogram needs the closed-form family")
    counts, k_crit = power_orbit_histogram(float(x0), int(n_iter), int(burn),
                                           m.rho, m.s, int(n_bins))
    if k_crit >= 0:
        raise DomainError(
            f"orbit hit the discontinuity exactly at step {k_crit}")
    w = counts.astype(float)
    return w / w.sum()


def orbit_mean_log_abs(m, x0, n_iter, burn=1000):
    """Birkhoff mean of log|x_k| (compiled); basis for entropy and
    return-time averages of the power family."""
    if not isinstance(m, ContractingLorenzMap):
        raise DomainError("orbit_mean_log_abs needs the closed-form family")
    mean, n_eff = power_orbit_meanlog(float(x0), int(n_iter), int(burn),
                                      m.rho, m.s)
    if n_eff == 0:
        raise DomainError("orbit terminated before any sample was taken")
    return float(mean)


# ---------------------------------------------------------------------------
# structural diagnostics

@dataclass
class MapDiagnostics:
    items: dict = field(default_factory=dict)
    c_minus: float = float("nan")
    c_plus: float = float("nan")
    onto: bool = False

    def status(self, i):
        return self.items[i][0]

    def evidence(self, i):
        return self.items[i][1]

    def as_dict(self):
        return {
            "c_minus": self.c_minus,
            "c_plus": self.c_plus,
            "onto": self.onto,
            "items": {
                str(i): {"status": st, "evidence": ev}
                for i, (st, ev) in sorted(self.items.items())
            },
        }


def _branch_samples(n=400):
    """Sampling grid on (0, 1/2]: geometric near 0 plus uniform bulk."""
    geo = np.geomspace(1e-8, 0.5, n // 2)
    uni = np.linspace(1e-3, 0.5, n // 2)
    xs = np.unique(np.concatenate([geo, uni]))
    return xs


def _find_revisit(m, x0, horizon, tol):
    """Iterate x0 looking for a revisit of an earlier iterate within tol.

    Quantized-bucket search, O(horizon).  Returns (preperiod, period,
    log_multiplier) or None; raises nothing on a critical hit, just
    returns None (undetermined).
    """
    buckets = {}
    pts = []
    x = x0
    for k in range(horizon):
        q = int(math.floor(x / tol))
        for qq in (q - 1, q, q + 1):
            if qq in buckets:
                for j in buckets[qq]:
                    if abs(pts[j] - x) <= tol:
                        period = k - j
                        log_mult = 0.0
                        for i in range(j, k):
                            log_mult += math.log(abs(m.derivative(pts[i], 1)))
                        return j, period, log_mult
        buckets.setdefault(q, []).append(k)
        pts.append(x)
        if x == 0.0:
            return None
        try:
            x = m.value(x)
        except DomainError:
            return None
    return None


def check_properties(m, horizon=10000, tol=1e-9):
    """Numeric evidence for the six structural properties (see module
    docstring).  Items are scored pass/fail/undetermined; item 5 stays
    undetermined when the orbit of +-1/2 never revisits itself within
    the horizon."""
    diag = MapDiagnostics()
    c_minus, c_plus = m.limits_at_zero()
    diag.c_minus, diag.c_plus = float(c_minus), float(c_plus)
    xs = _branch_samples()

    # item 1: two onto branches, derivative order s - 1 > 0 at 0
    bps = m.breakpoints
    two_branches = len(bps) == 3 and abs(bps[1]) < 1e-15
    img_p = m.branch_image(+1)
    img_n = m.branch_image(-1)
    onto_p = img_p[0] <= DOMAIN[0] + 1e-9 and img_p[1] >= DOMAIN[1] - 1e-9
    onto_n = img_n[0] <= DOMAIN[0] + 1e-9 and img_n[1] >= DOMAIN[1] - 1e-9
    diag.onto = bool(onto_p and onto_n)
    small = xs[(xs >= 1e-7) & (xs <= 1e-2)]
    dmag = np.array([abs(m.derivative(float(x), 1)) for x in small])
    if np.any(dmag <= 0.0):
        slope = float("nan")
    else:
        slope = float(np.polyfit(np.log(small), np.log(dmag), 1)[0])
    order_ok = math.isfinite(slope) and slope > 0.05
    st1 = "pass" if (two_branches and diag.onto and order_ok) else "fail"
    diag.items[1] = (st1, (
        f"branches = {len(bps) - 1}, image(+) = {img_p}, image(-) = {img_n}, "
        f"onto = {diag.onto}, d log|T'|/d log x = {slope:.4f} near 0"))

    # item 2: one-sided limits +-1/2
    lim_ok = abs(c_plus - 0.5) <= tol and abs(c_minus + 0.5) <= tol
    diag.items[2] = ("pass" if lim_ok else "fail",
                     f"T(0+) = {c_plus}, T(0-) = {c_minus}")

    # item 3: negative derivative away from 0
    d_all = np.array([m.derivative(float(x), 1) for x in xs]
                     + [m.derivative(float(-x), 1) for x in xs])
    neg = bool(np.all(d_all < 0.0))
    diag.items[3] = ("pass" if neg else "fail",
                     f"max T' over {2 * len(xs)} samples = {d_all.max():.6g}")

    # item 4: derivative magnitude largest at the outer endpoints
    d_end = abs(m.derivative(0.5, 1))
    d_max = float(np.max(np.abs(d_all)))
    at_end = d_end >= d_max * (1.0 - 1e-9)
    diag.items[4] = ("pass" if at_end else "fail",
                     f"|T'(1/2)| = {d_end:.6g}, max sampled |T'| = {d_max:.6g}")

    # item 5: +-1/2 preperiodic repelling
    st5, ev5 = "undetermined", []
    found_all = True
    repelling_all = True
    for x0 in (0.5, -0.5):
        hit = _find_revisit(m, x0, horizon, tol)
        if hit is None:
            found_all = False
            ev5.append(f"orbit of {x0}: no revisit within {horizon} steps")
        else:
            pre, per, logmult = hit
            repelling_all &= logmult > 1e-12
            ev5.append(f"orbit of {x0}: preperiod {pre}, period {per}, "
                       f"log|multiplier| = {logmult:.6g}")
    if found_all:
        st5 = "pass" if repelling_all else "fail"
    diag.items[5] = (st5, "; ".join(ev5))

    # item 6: negative Schwarzian
    try:
        s_vals = np.array([schwarzian(m, float(x)) for x in xs]
                          + [schwarzian(m, float(-x)) for x in xs])
        s_neg = bool(np.all(s_vals < 0.0))
        diag.items[6] = ("pass" if s_neg else "fail",
                         f"max Schwarzian over samples = {s_vals.max():.6g}")
    except DomainError as e:
        diag.items[6] = ("undetermined", f"Schwarzian not evaluable: {e}")
    return diag


# ---------------------------------------------------------------------------
# locally-eventually-onto iteration

@dataclass
class LeoResult:
    success: bool
    n: int | None
    target: tuple
    final_intervals: list
    lengths: list
    message: str = ""


def _image_of_piece(m, lo, hi):
    """Image of a one-branch interval, one-sided limits at a 0 endpoint."""
    vlo = m.limit_value(lo, +1) if lo == 0.0 else m.value(lo)
    vhi = m.limit_value(hi, -1) if hi == 0.0 else m.value(hi)
    return (min(vlo, vhi), max(vlo, vhi))


def _covers(pieces, target, tol=1e-12):
    """Do the closed intervals in `pieces` cover [target0, target1]?"""
    lo, hi = target
    ivs = sorted(pieces)
    reach = lo
    for a, b in ivs:
        if a > reach + tol:
            break
        reach = max(reach, b)
    return reach >= hi - tol


def locally_eventually_onto(m, interval, n_max=500):
    """Iterate an interval until its image covers [c-, c+].

    The interval is split at the discontinuity whenever it straddles 0
    (both half-images participate in the covering check for that step);
    iteration then continues with the larger half.  Monotone branches
    are assumed, so images are computed from endpoint values with
    one-sided limits at 0.  Returns a LeoResult either way; exhausting
    n_max is a negative result, not an exception.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
        raise DomainError(f"degenerate interval {interval}")
    if lo < DOMAIN[0] - 1e-12 or hi > DOMAIN[1] + 1e-12:
        raise DomainError(f"interval {interval} outside the domain")
    if lo < 0.0 < hi:
        raise DomainError("seed interval must avoid the discontinuity 0")
    c_minus, c_plus = m.limits_at_zero()
    target = (min(c_minus, c_plus), max(c_minus, c_plus))

    cur = (lo, hi)
    lengths = [hi - lo]
    for n in range(1, n_max + 1):
        a, b = cur
        if a < 0.0 < b:
            img_lo = _image_of_piece(m, a, 0.0)
            img_hi = _image_of_piece(m, 0.0, b)
            if _covers([img_lo, img_hi], target):
                return LeoResult(True, n, target, [img_lo, img_hi],
                                 lengths, f"covered at step {n} from a "
                                 "straddling interval")
            if -a >= b:
                cur = img_lo
            else:
                cur = img_hi
        else:
            img = _image_of_piece(m, a, b)
            if _covers([img], target):
                return LeoResult(True, n, target, [img], lengths,
                                 f"covered at step {n}")
            cur = img
        lengths.append(cur[1] - cur[0])
        if lengths[-1] < 1e-14:
            return LeoResult(False, None, target, [cur], lengths,
                             f"interval collapsed numerically at step {n}")
    return LeoResult(False, None, target, [cur], lengths,
                     f"no cover within n_max = {n_max}")
