"""Figure rendering for the CLI report paths.

Everything is drawn through the Agg backend into PNG files that sit
next to the delimited output they illustrate.  The files are meant to
be reproducible: fixed figure geometry, fixed dpi, and no software or
timestamp metadata, so rerunning a command overwrites each figure with
identical bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np               # noqa: E402

__all__ = [
    "save",
    "trajectory_figure",
    "return_map_figure",
    "map_graph_figure",
    "density_figure",
    "occupancy_figure",
    "trace_figure",
    "pair_scan_figure",
    "sweep_figure",
]

_DPI = 110


def save(fig, path):
    """Write one figure deterministically and release it."""
    fig.savefig(path, dpi=_DPI, metadata={"Software": None})
    plt.close(fig)
    return str(path)


def trajectory_figure(path, pts, dt):
    """Two projections of a sampled trajectory, colored by time."""
    pts = np.asarray(pts)
    t = np.arange(len(pts)) * dt
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 4.0))
    for ax, (i, j, lx, ly) in zip(axes, [(0, 2, "x", "z"), (0, 1, "x", "y")]):
        ax.scatter(pts[:, i], pts[:, j], c=t, s=0.3, cmap="viridis",
                   rasterized=True)
        ax.set_xlabel(lx)
        ax.set_ylabel(ly)
    fig.tight_layout()
    return save(fig, path)


def return_map_figure(path, us, taus=None):
    """Successive-return scatter u_k -> u_{k+1}, plus return times."""
    us = np.asarray(us)
    n_panels = 2 if taus is not None else 1
    fig, axes = plt.subplots(1, n_panels, figsize=(4.5 * n_panels, 4.0),
                             squeeze=False)
    ax = axes[0][0]
    ax.plot(us[:-1], us[1:], ".", ms=1.5)
    ax.set_xlabel("u (k)")
    ax.set_ylabel("u (k+1)")
    ax.set_xlim(-0.55, 0.55)
    ax.set_ylim(-0.55, 0.55)
    if taus is not None:
        ax2 = axes[0][1]
        ax2.hist(np.asarray(taus), bins=60, color="tab:gray")
        ax2.set_xlabel("return time")
        ax2.set_ylabel("count")
    fig.tight_layout()
    return save(fig, path)


def map_graph_figure(path, m, n=600):
    """Graph of the one-dimensional map, one branch per side."""
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    for lo, hi in ((-0.5, 0.0), (0.0, 0.5)):
        xs = np.linspace(lo, hi, n)[1:-1]
        ax.plot(xs, m.value_array(xs), color="tab:blue", lw=1.2)
    ax.plot([-0.5, 0.5], [-0.5, 0.5], color="tab:gray", lw=0.6)
    ax.set_xlabel("x")
    ax.set_ylabel("T(x)")
    ax.set_aspect("equal")
    fig.tight_layout()
    return save(fig, path)


def density_figure(path, centers, density, reference=None):
    """Invariant density over the interval, optional second curve."""
    fig, ax = plt.subplots(figsize=(6.0, 3.5))
    ax.plot(centers, density, lw=0.9, label="stationary")
    if reference is not None:
        ax.plot(centers, reference, lw=0.9, ls="--", label="orbit")
        ax.legend(frameon=False)
    ax.set_xlabel("x")
    ax.set_ylabel("density")
    fig.tight_layout()
    return save(fig, path)


def occupancy_figure(path, measure):
    """Occupation histogram projected onto the x-z plane."""
    grid = measure.grid
    img = np.zeros((grid.nx, grid.nz))
    ix, iy, iz = np.unravel_index(measure.cells,
                                  (grid.nx, grid.ny, grid.nz))
    np.add.at(img, (ix, iz), measure.weights)
    (x0, x1), _, (z0, z1) = grid.box.bounds
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    with np.errstate(divide="ignore"):
        shown = np.where(img > 0, np.log10(img), np.nan)
    pm = ax.imshow(shown.T, origin="lower", extent=(x0, x1, z0, z1),
                   aspect="auto", cmap="magma")
    fig.colorbar(pm, ax=ax, label="log10 mass")
    ax.set_xlabel("x")
    ax.set_ylabel("z")
    fig.tight_layout()
    return save(fig, path)


def trace_figure(path, times, trace, labels, ylabel):
    """Convergence traces against time, one line per column."""
    times = np.asarray(times)
    trace = np.atleast_2d(np.asarray(trace))
    if trace.shape[0] != len(times):
        trace = trace.T
    fig, ax = plt.subplots(figsize=(6.0, 3.5))
    for k, lab in enumerate(labels):
        ax.plot(times, trace[:, k], lw=1.0, label=lab)
    ax.set_xlabel("time")
    ax.set_ylabel(ylabel)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    return save(fig, path)


def pair_scan_figure(path, reports, delta):
    """Achieved aligned distance per probe pair, grouped by pair kind."""
    kinds = sorted({r.kind for r in reports})
    fig, ax = plt.subplots(figsize=(6.5, 3.8))
    for k, kind in enumerate(kinds):
        ds = [r.max_distance for r in reports if r.kind == kind]
        xs = np.full(len(ds), k) + np.linspace(-0.18, 0.18, max(len(ds), 2))[:len(ds)]
        ax.plot(xs, ds, "o", ms=4, label=kind)
    ax.axhline(delta, color="tab:red", lw=0.8, ls="--")
    ax.set_xticks(range(len(kinds)))
    ax.set_xticklabels(kinds, fontsize=8)
    ax.set_ylabel("best aligned distance")
    ax.set_yscale("log")
    fig.tight_layout()
    return save(fig, path)


def sweep_figure(path, offsets, distances, fit=None):
    """Distance against |offset| on the log-log plane with the
    fitted modulus line, the quantitative stability picture."""
    a = np.abs(np.asarray(offsets, dtype=float))
    d = np.asarray(distances, dtype=float)
    keep = (a > 0) & (d > 0)
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ax.loglog(a[keep], d[keep], "o", ms=5)
    if fit is not None and np.any(keep):
        xs = np.linspace(np.log(a[keep].min()), np.log(a[keep].max()), 50)
        ax.loglog(np.exp(xs), fit["C"] * np.exp(fit["kappa"] * xs),
                  color="tab:red", lw=1.0,
                  label=f"kappa = {fit['kappa']:.3f}, r2 = {fit['r2']:.3f}")
        ax.legend(frameon=False, fontsize=8)
    ax.set_xlabel("|offset|")
    ax.set_ylabel("distance to base")
    fig.tight_layout()
    return save(fig, path)
