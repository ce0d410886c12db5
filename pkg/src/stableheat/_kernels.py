"""Hot numeric kernels: Chambers-Mallows-Stuck transforms, Euler stepping
and heavy-tail kernel density evaluation.

Each kernel has a numba-compiled path and a pure-numpy fallback. Selection:
numba is used when importable unless the environment variable
``STABLEHEAT_NUMBA`` is set to 0/false/no. Each path is deterministic
(fixed reduction order for a fixed path selection); the two paths agree to
floating-point round-off but not necessarily bit-for-bit.
"""

import math
import os

import numpy as np


def _numba_enabled():
    flag = os.environ.get("STABLEHEAT_NUMBA", "1").strip().lower()
    if flag in ("0", "false", "no", "off"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USE_NUMBA = _numba_enabled()

if USE_NUMBA:
    from numba import njit, prange
else:  # no-op decorators so the same source defines the fallback path
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap

    prange = range


# ---------------------------------------------------------------------------
# Chambers-Mallows-Stuck transform (symmetric case)
# ---------------------------------------------------------------------------

def cms_symmetric_np(u, w, alpha):
    """Map U ~ Unif(-pi/2, pi/2), W ~ Exp(1) to S(alpha) with cf exp(-|l|^a)."""
    su = np.sin(alpha * u)
    cu = np.cos(u)
    ratio = np.cos((1.0 - alpha) * u) / w
    return su / cu ** (1.0 / alpha) * ratio ** ((1.0 - alpha) / alpha)


@njit(cache=True)
def _cms_symmetric_nb(u, w, alpha, out):
    inv_a = 1.0 / alpha
    expo = (1.0 - alpha) / alpha
    for i in range(u.shape[0]):
        su = math.sin(alpha * u[i])
        cu = math.cos(u[i])
        ratio = math.cos((1.0 - alpha) * u[i]) / w[i]
        out[i] = su / cu ** inv_a * ratio ** expo
    return out


def cms_symmetric(u, w, alpha):
    if USE_NUMBA:
        out = np.empty_like(u)
        return _cms_symmetric_nb(u, w, alpha, out)
    return cms_symmetric_np(u, w, alpha)


def kanter_positive_np(theta, w, alpha):
    """Map theta ~ Unif(0, pi), W ~ Exp(1) to the one-sided stable law with
    Laplace transform exp(-u^alpha), 0 < alpha < 1 (Kanter's formula)."""
    a = alpha
    num = np.sin(a * theta) ** (a / (1.0 - a)) * np.sin((1.0 - a) * theta)
    den = np.sin(theta) ** (1.0 / (1.0 - a))
    return (num / den / w) ** ((1.0 - a) / a)


# ---------------------------------------------------------------------------
# Euler scheme with gridded drift
# ---------------------------------------------------------------------------

def _drift_lookup_np(x, vals, extent):
    """Periodic linear interpolation of one drift time slice on [-L/2, L/2)."""
    n = vals.shape[0]
    dx = extent / n
    pos = (x + 0.5 * extent) / dx
    i0 = np.floor(pos).astype(np.int64)
    frac = pos - i0
    i0 = np.mod(i0, n)
    i1 = np.mod(i0 + 1, n)
    return vals[i0] * (1.0 - frac) + vals[i1] * frac


def euler_paths_np(x0, dz, drift_vals, extent, t0, dt, drift_t0, drift_dt):
    """Explicit Euler over all paths at once (numpy path).

    dz: (steps, n_paths) noise increments. drift_vals: (k_time, n_grid) slices,
    piecewise constant in time with node spacing drift_dt starting at drift_t0.
    Returns (terminal, n_aborted); non-finite paths are frozen and counted.
    """
    steps, n_paths = dz.shape
    k_time = drift_vals.shape[0]
    x = np.full(n_paths, float(x0))
    alive = np.ones(n_paths, dtype=bool)
    for k in range(steps):
        t = t0 + k * dt
        idx = min(max(int(np.floor((t - drift_t0) / drift_dt + 0.5)), 0), k_time - 1)
        b = _drift_lookup_np(x[alive], drift_vals[idx], extent)
        x[alive] = x[alive] + b * dt + dz[k][alive]
        alive &= np.isfinite(x)
    return x, int(n_paths - alive.sum())


@njit(cache=True, parallel=True)
def _euler_paths_nb(x0, dz, drift_vals, extent, t0, dt, drift_t0, drift_dt):
    steps, n_paths = dz.shape
    k_time, n_grid = drift_vals.shape
    ddx = extent / n_grid
    term = np.empty(n_paths)
    aborted = np.zeros(n_paths, dtype=np.int64)
    for j in prange(n_paths):
        x = x0
        ok = True
        for k in range(steps):
            t = t0 + k * dt
            idx = int(math.floor((t - drift_t0) / drift_dt + 0.5))
            if idx < 0:
                idx = 0
            if idx >= k_time:
                idx = k_time - 1
            pos = (x + 0.5 * extent) / ddx
            i0 = int(math.floor(pos))
            frac = pos - i0
            i0 = i0 % n_grid
            if i0 < 0:
                i0 += n_grid
            i1 = i0 + 1
            if i1 == n_grid:
                i1 = 0
            b = drift_vals[idx, i0] * (1.0 - frac) + drift_vals[idx, i1] * frac
            x = x + b * dt + dz[k, j]
            if not math.isfinite(x):
                ok = False
                break
        if ok:
            term[j] = x
        else:
            term[j] = np.nan
            aborted[j] = 1
    return term, aborted


def euler_paths_gridded(x0, dz, drift_vals, extent, t0, dt, drift_t0, drift_dt):
    if USE_NUMBA:
        term, aborted = _euler_paths_nb(
            float(x0), dz, drift_vals, float(extent), float(t0), float(dt),
            float(drift_t0), float(drift_dt),
        )
        return term, int(aborted.sum())
    return euler_paths_np(x0, dz, drift_vals, extent, t0, dt, drift_t0, drift_dt)


# ---------------------------------------------------------------------------
# Kernel density estimation with the comparator kernel
# ---------------------------------------------------------------------------

def kde_pbar_np(samples, grid, v, alpha, c_alpha, chunk=200_000):
    """KDE with the heavy-tailed comparator kernel at smoothing time v (d=1)."""
    scale = v ** (-1.0 / alpha)
    out = np.zeros(grid.shape[0])
    for lo in range(0, samples.shape[0], chunk):
        blk = samples[lo:lo + chunk]
        z = np.abs(grid[:, None] - blk[None, :]) * scale
        out += (c_alpha * scale) * ((1.0 + z) ** (-(1.0 + alpha))).sum(axis=1)
    return out / samples.shape[0]


@njit(cache=True, parallel=True)
def _kde_pbar_nb(samples, grid, v, alpha, c_alpha):
    scale = v ** (-1.0 / alpha)
    n = samples.shape[0]
    out = np.empty(grid.shape[0])
    for j in prange(grid.shape[0]):
        acc = 0.0
        g = grid[j]
        for i in range(n):
            z = abs(g - samples[i]) * scale
            acc += (1.0 + z) ** (-(1.0 + alpha))
        out[j] = acc * c_alpha * scale / n
    return out


def kde_pbar(samples, grid, v, alpha, c_alpha):
    if USE_NUMBA:
        return _kde_pbar_nb(samples, grid, float(v), float(alpha), float(c_alpha))
    return kde_pbar_np(samples, grid, v, alpha, c_alpha)
