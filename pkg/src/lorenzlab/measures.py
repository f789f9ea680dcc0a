"""Time averages and empirical physical measures for the 3D flows.

Weak* closeness is operationalized by a fixed dictionary of bounded
Lipschitz observables: three centered coordinates, six quadratic
monomials, and a lattice of Gaussian bumps, each normalized so that
both its sup and its Lipschitz constant are at most one.  The max
dictionary discrepancy between two measures is the distance used
everywhere downstream (sweeps, basin clustering), which keeps every
reported number reproducible from the dictionary definition alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import models
from .errors import DomainError, EscapeError
from .integrate import StepConfig, sample_flow_uniform

__all__ = [
    "GridSpec3",
    "EmpiricalMeasure",
    "ObservableDictionary",
    "BirkhoffResult",
    "BasinReport",
    "default_trapping_box",
    "default_dictionary",
    "birkhoff_average",
    "empirical_measure",
    "dual_lipschitz_distance",
    "basin_agreement",
]

CLASSICAL_BOX = models.Box((-30.0, 30.0), (-35.0, 35.0), (-5.0, 60.0))


def default_trapping_box(model):
    if isinstance(model, models.FlowModel):
        if model.variant == "geometric":
            return model.linear_cube
        return CLASSICAL_BOX
    box = getattr(model, "box", None)
    if box is None:
        raise DomainError("no trapping box known for this model; pass "
                          "grid explicitly")
    return box


@dataclass(frozen=True)
class GridSpec3:
    box: models.Box
    nx: int = 64
    ny: int = 64
    nz: int = 64

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 1:
            raise DomainError("grid needs at least one cell per axis")

    @property
    def n_cells(self):
        return self.nx * self.ny * self.nz

    def cell_of(self, pts):
        """Flat cell indices for an (n, 3) array; -1 marks escapes."""
        pts = np.atleast_2d(pts)
        lims = np.array([self.box.xlim, self.box.ylim, self.box.zlim])
        sizes = np.array([self.nx, self.ny, self.nz])
        rel = (pts - lims[:, 0]) / (lims[:, 1] - lims[:, 0])
        ijk = np.floor(rel * sizes).astype(np.int64)
        inside = np.all((rel >= 0.0) & (rel <= 1.0), axis=1)
        ijk = np.clip(ijk, 0, sizes - 1)
        flat = (ijk[:, 0] * self.ny + ijk[:, 1]) * self.nz + ijk[:, 2]
        flat[~inside] = -1
        return flat

    def centers_of(self, flat):
        """Cell-center coordinates for flat indices (n,) -> (n, 3)."""
        flat = np.asarray(flat)
        k = flat % self.nz
        j = (flat // self.nz) % self.ny
        i = flat // (self.nz * self.ny)
        lims = np.array([self.box.xlim, self.box.ylim, self.box.zlim])
        sizes = np.array([self.nx, self.ny, self.nz], dtype=float)
        steps = (lims[:, 1] - lims[:, 0]) / sizes
        out = np.empty((flat.size, 3))
        out[:, 0] = lims[0, 0] + (i + 0.5) * steps[0]
        out[:, 1] = lims[1, 0] + (j + 0.5) * steps[1]
        out[:, 2] = lims[2, 0] + (k + 0.5) * steps[2]
        return out


@dataclass
class EmpiricalMeasure:
    """Occupation statistics of one trajectory.

    Either a sparse 3D histogram (cells + weights) or a raw sample
    cloud with uniform weights; both integrate any vectorized
    observable.
    """
    kind: str                      # "histogram3d" or "sample_cloud"
    total_time: float
    burn_in: float
    grid: GridSpec3 | None = None
    cells: np.ndarray | None = None      # occupied flat cell indices
    weights: np.ndarray | None = None    # aligned with cells
    points: np.ndarray | None = None     # sample_cloud only

    def __post_init__(self):
        if self.kind not in ("histogram3d", "sample_cloud"):
            raise DomainError(f"unknown representation {self.kind!r}")
        if self.kind == "histogram3d":
            if self.grid is None or self.cells is None:
                raise DomainError("histogram measure needs grid and cells")
            w = np.asarray(self.weights, dtype=float)
            if np.any(w < 0):
                raise DomainError("negative histogram weight")
            s = w.sum()
            if not math.isfinite(s) or s <= 0:
                raise DomainError("histogram weights must have positive "
                                  "finite mass")
            self.weights = w / s

    def mass(self):
        if self.kind == "histogram3d":
            return float(self.weights.sum())
        return 1.0

    def integrate(self, fn):
        if self.kind == "histogram3d":
            vals = fn(self.grid.centers_of(self.cells))
            return float(np.dot(self.weights, vals))
        return float(np.mean(fn(self.points)))


@dataclass(frozen=True)
class ObservableDictionary:
    names: tuple
    functions: tuple       # callables on (n, 3) arrays
    lipschitz: tuple       # post-normalization Lipschitz bounds

    def __len__(self):
        return len(self.functions)

    def evaluate(self, pts):
        """(n_funcs,) means over a point set, or stacked values."""
        return np.array([f(pts) for f in self.functions])


def _bump(center, width):
    c = np.asarray(center)

    def f(p, c=c, w=width):
        d2 = np.sum((np.atleast_2d(p) - c) ** 2, axis=1)
        return np.exp(-d2 / (2.0 * w * w))

    return f


def default_dictionary(box):
    """The standard 32-function dictionary on a trapping box: centered
    coordinates, quadratic monomials, and 23 Gaussian bumps on a 3x3x3
    interior lattice (first 23 in lexicographic center order)."""
    lims = np.array([box.xlim, box.ylim, box.zlim])
    mid = lims.mean(axis=1)
    half = 0.5 * (lims[:, 1] - lims[:, 0])
    names, funcs, lips = [], [], []

    def centered(i):
        def f(p, i=i):
            return (np.atleast_2d(p)[:, i] - mid[i]) / half[i]
        return f

    for i, nm in enumerate("xyz"):
        names.append(nm)
        funcs.append(centered(i))
        lips.append(min(1.0, 1.0 / half[i]))
    for i, j in [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]:
        lip = math.sqrt((1.0 / half[i]) ** 2 + (1.0 / half[j]) ** 2)
        if i == j:
            lip = 2.0 / half[i]
        norm = max(1.0, lip)

        def f(p, i=i, j=j, norm=norm):
            q = np.atleast_2d(p)
            return (((q[:, i] - mid[i]) / half[i]) *
                    ((q[:, j] - mid[j]) / half[j])) / norm
        names.append("xyz"[i] + "xyz"[j])
        funcs.append(f)
        lips.append(min(1.0, lip / norm))
    fracs = (0.25, 0.5, 0.75)
    width = 0.25 * float(np.min(lims[:, 1] - lims[:, 0]))
    lat = [tuple(lims[a, 0] + fr[a] * (lims[a, 1] - lims[a, 0])
                 for a in range(3))
           for fr in product(fracs, fracs, fracs)]
    lip_b = math.exp(-0.5) / width
    norm_b = max(1.0, lip_b)
    for k, c in enumerate(lat[:23]):
        names.append(f"bump{k:02d}")
        g = _bump(c, width)
        if norm_b > 1.0:
            funcs.append(lambda p, g=g: g(p) / norm_b)
        else:
            funcs.append(g)
        lips.append(min(1.0, lip_b / norm_b))
    return ObservableDictionary(tuple(names), tuple(funcs), tuple(lips))


@dataclass(frozen=True)
class BirkhoffResult:
    observable_id: str
    value: float
    total_time: float
    trace_times: np.ndarray
    trace: np.ndarray


def birkhoff_average(model, p0, observable, T, burn_in=None, cfg=None,
                     sample_dt=0.01, observable_id="observable"):
    """Trapezoidal time average of an observable along one trajectory.

    Runs on [burn_in, T] (default burn-in 5% of T) and records the
    running average at ten horizon checkpoints for convergence
    inspection.
    """
    if burn_in is None:
        burn_in = 0.05 * T
    if not T > burn_in >= 0:
        raise DomainError("need T > burn_in >= 0")
    n = int(math.floor((T - burn_in) / sample_dt)) + 1
    pts = sample_flow_uniform(model, p0, burn_in, sample_dt, n, cfg)
    vals = np.asarray(observable(pts), dtype=float)
    # cumulative trapezoid, then running means at checkpoints
    mids = 0.5 * (vals[1:] + vals[:-1])
    cum = np.concatenate(([0.0], np.cumsum(mids * sample_dt)))
    spans = np.arange(n) * sample_dt
    ks = np.unique(np.linspace(max(1, (n - 1) // 10), n - 1, 10,
                               dtype=int))
    trace = cum[ks] / spans[ks]
    value = float(cum[-1] / spans[-1])
    return BirkhoffResult(observable_id, value, T,
                          trace_times=burn_in + spans[ks],
                          trace=trace)


def empirical_measure(model, p0, T, sample_dt=0.01, burn_in=None,
                      grid=None, cfg=None, kind="histogram3d"):
    """Occupation measure of the trajectory of p0 after burn-in.

    A sample falling outside the grid's box raises EscapeError: the
    box is supposed to be trapping, and a violation is worth a loud
    stop rather than a silent clip.
    """
    if burn_in is None:
        burn_in = 0.05 * T
    if not T > burn_in >= 0:
        raise DomainError("need T > burn_in >= 0")
    if sample_dt <= 0:
        raise DomainError("sample_dt must be positive")
    if grid is None:
        grid = GridSpec3(default_trapping_box(model))
    n = int(math.floor((T - burn_in) / sample_dt)) + 1
    pts = sample_flow_uniform(model, p0, burn_in, sample_dt, n, cfg)
    if kind == "sample_cloud":
        if not grid.box.contains(pts).all():
            bad = int(np.flatnonzero(~grid.box.contains(pts))[0])
            raise EscapeError(
                f"sample {bad} at t = {burn_in + bad * sample_dt:.4g} "
                f"left the trapping box: {pts[bad]}")
        return EmpiricalMeasure(kind, T, burn_in, points=pts)
    flat = grid.cell_of(pts)
    if np.any(flat < 0):
        bad = int(np.flatnonzero(flat < 0)[0])
        raise EscapeError(
            f"sample {bad} at t = {burn_in + bad * sample_dt:.4g} left "
            f"the trapping box: {pts[bad]}")
    counts = np.bincount(flat, minlength=0)
    cells = np.flatnonzero(counts)
    return EmpiricalMeasure(kind, T, burn_in, grid=grid, cells=cells,
                            weights=counts[cells].astype(float))


def dual_lipschitz_distance(m1, m2, dictionary):
    """Max over the dictionary of the integral discrepancy."""
    best = 0.0
    for f in dictionary.functions:
        best = max(best, abs(m1.integrate(f) - m2.integrate(f)))
    return best


@dataclass(frozen=True)
class BasinReport:
    clusters: int
    assignment: tuple      # cluster index per seed
    unconverged: tuple     # seed indices whose trace still moves
    distances: np.ndarray  # pairwise dictionary distances


def basin_agreement(model, seeds, dictionary, T, tol, sample_dt=0.01,
                    burn_in=None, cfg=None):
    """Cluster seeds by the dictionary distance of their empirical
    measures: seeds within tol of each other (single linkage) share a
    cluster.  The cluster count estimates how many distinct physical
    measures the sampled basin sees.

    A seed whose dictionary vector still moved more than tol/2 between
    the last two horizon checkpoints is flagged unconverged (and still
    clustered, so the flag is advisory).
    """
    seeds = [np.asarray(s, dtype=float) for s in seeds]
    if len(seeds) < 2:
        raise DomainError("basin agreement needs at least two seeds")
    if burn_in is None:
        burn_in = 0.05 * T
    n = int(math.floor((T - burn_in) / sample_dt)) + 1
    vecs = np.empty((len(seeds), len(dictionary)))
    unconv = []
    for si, s in enumerate(seeds):
        pts = sample_flow_uniform(model, s, burn_in, sample_dt, n, cfg)
        vals = dictionary.evaluate(pts)          # (n_funcs, n)
        prefix = vals[:, : max(1, int(0.9 * n))].mean(axis=1)
        full = vals.mean(axis=1)
        vecs[si] = full
        if np.max(np.abs(full - prefix)) > 0.5 * tol:
            unconv.append(si)
    d = np.max(np.abs(vecs[:, None, :] - vecs[None, :, :]), axis=2)
    # single-linkage components under threshold tol
    assignment = [-1] * len(seeds)
    cluster = 0
    for i in range(len(seeds)):
        if assignment[i] >= 0:
            continue
        stack = [i]
        assignment[i] = cluster
        while stack:
            a = stack.pop()
            for b in range(len(seeds)):
                if assignment[b] < 0 and d[a, b] <= tol:
                    assignment[b] = cluster
                    stack.append(b)
        cluster += 1
    return BasinReport(cluster, tuple(assignment), tuple(unconv), d)
