"""Numba kernels for the hot loops.

Everything here is a plain function of scalars and arrays so the
compiled signatures stay simple.  The pure-python callers own all
validation; kernels assume clean input.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def power_map_step(x, rho, s):
    """One application of T(x) = sgn(x) * (1/2 - rho*|x|**s)."""
    ax = -x if x < 0.0 else x
    t = 0.5 - rho * ax ** s
    return t if x > 0.0 else -t


@njit(cache=True)
def power_orbit_histogram(x0, n_iter, n_burn, rho, s, n_bins):
    """Occupation counts of an orbit on n_bins uniform cells of [-1/2, 1/2].

    Returns (counts, k_critical); k_critical is -1 unless the orbit hit
    the discontinuity exactly, in which case iteration stopped there.
    """
    counts = np.zeros(n_bins, dtype=np.int64)
    x = x0
    total = n_iter + n_burn
    for k in range(total):
        if x == 0.0:
            return counts, k
        x = power_map_step(x, rho, s)
        if k >= n_burn:
            i = int((x + 0.5) * n_bins)
            if i < 0:
                i = 0
            elif i >= n_bins:
                i = n_bins - 1
            counts[i] += 1
    return counts, -1


@njit(cache=True)
def power_orbit_meanlog(x0, n_iter, n_burn, rho, s):
    """Birkhoff mean of log|x_k| along the orbit, after n_burn steps.

    From this single number the kernel callers recover both the mean
    log-derivative log(rho*s) + (s-1)*E[log|x|] and the mean passage
    time -E[log|x|]/lambda1.  Returns (mean, n_effective).
    """
    x = x0
    acc = 0.0
    m = 0
    total = n_iter + n_burn
    for k in range(total):
        if x == 0.0:
            break
        if k >= n_burn:
            acc += np.log(np.abs(x))
            m += 1
        x = power_map_step(x, rho, s)
    if m == 0:
        return np.nan, 0
    return acc / m, m


@njit(cache=True)
def power_orbit_array(x0, n, rho, s, out):
    """Fill out[0..n] with the orbit x0, T(x0), ...; returns index of an
    exact critical hit or -1."""
    x = x0
    out[0] = x
    for k in range(n):
        if x == 0.0:
            return k
        x = power_map_step(x, rho, s)
        out[k + 1] = x
    return -1


@njit(cache=True)
def alignment_minmax(d):
    """Min over nondecreasing assignments of the max pointwise distance.

    Row i of d holds distances from the i-th sample of the reference
    orbit to every sample of the companion orbit.  An assignment picks
    one column per row, nondecreasing down the rows (a discretized
    increasing time change); both endpoints are free.  The recursion is
    C[i, j] = max(d[i, j], min_{j' <= j} C[i-1, j']), computed with a
    running prefix minimum.

    Returns (C, arg) where arg[i, j] is the prefix-argmin of row i-1
    up to column j, so a witness assignment can be walked backward.
    """
    n, m = d.shape
    c = np.empty((n, m))
    arg = np.zeros((n, m), dtype=np.int32)
    for j in range(m):
        c[0, j] = d[0, j]
    for i in range(1, n):
        best = c[i - 1, 0]
        bj = 0
        for j in range(m):
            if c[i - 1, j] < best:
                best = c[i - 1, j]
                bj = j
            arg[i, j] = bj
            c[i, j] = d[i, j] if d[i, j] > best else best
    return c, arg


@njit(cache=True)
def classical_rk4(p, h, n_steps, sigma, rayleigh, beta, stride, out):
    """Fixed-step RK4 on the classical Lorenz field.

    Writes the state every `stride` steps into out (shape (k, 3)) and
    returns the final state.  out[0] is p itself.
    """
    x, y, z = p[0], p[1], p[2]
    out[0, 0] = x
    out[0, 1] = y
    out[0, 2] = z
    w = 1
    for k in range(1, n_steps + 1):
        k1x = sigma * (y - x)
        k1y = x * (rayleigh - z) - y
        k1z = x * y - beta * z
        x2 = x + 0.5 * h * k1x
        y2 = y + 0.5 * h * k1y
        z2 = z + 0.5 * h * k1z
        k2x = sigma * (y2 - x2)
        k2y = x2 * (rayleigh - z2) - y2
        k2z = x2 * y2 - beta * z2
        x3 = x + 0.5 * h * k2x
        y3 = y + 0.5 * h * k2y
        z3 = z + 0.5 * h * k2z
        k3x = sigma * (y3 - x3)
        k3y = x3 * (rayleigh - z3) - y3
        k3z = x3 * y3 - beta * z3
        x4 = x + h * k3x
        y4 = y + h * k3y
        z4 = z + h * k3z
        k4x = sigma * (y4 - x4)
        k4y = x4 * (rayleigh - z4) - y4
        k4z = x4 * y4 - beta * z4
        x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        z += h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
        if k % stride == 0 and w < out.shape[0]:
            out[w, 0] = x
            out[w, 1] = y
            out[w, 2] = z
            w += 1
    return np.array([x, y, z])


@njit(cache=True)
def _classical_rhs12(u, sigma, rayleigh, beta):
    """RHS of state + 3x3 tangent frame packed as a 12-vector."""
    du = np.empty(12)
    x, y, z = u[0], u[1], u[2]
    du[0] = sigma * (y - x)
    du[1] = x * (rayleigh - z) - y
    du[2] = x * y - beta * z
    # variational part: columns of the frame times DG
    for c in range(3):
        mx = u[3 + c]
        my = u[6 + c]
        mz = u[9 + c]
        du[3 + c] = sigma * (my - mx)
        du[6 + c] = (rayleigh - z) * mx - my - x * mz
        du[9 + c] = y * mx + x * my - beta * mz
    return du


@njit(cache=True)
def classical_rk4_tangent(u, h, n_steps, sigma, rayleigh, beta):
    """Fixed-step RK4 on the joint state/frame system (12 variables)."""
    for _ in range(n_steps):
        k1 = _classical_rhs12(u, sigma, rayleigh, beta)
        k2 = _classical_rhs12(u + 0.5 * h * k1, sigma, rayleigh, beta)
        k3 = _classical_rhs12(u + 0.5 * h * k2, sigma, rayleigh, beta)
        k4 = _classical_rhs12(u + h * k3, sigma, rayleigh, beta)
        u = u + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return u
