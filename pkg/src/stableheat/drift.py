"""Synthetic rough drifts with prescribed regularity, their mollified
approximations, and the kernel-smoothed drift functional.

A drift is a collection of time-node fields, each built from random-sign
spectral shells: shell j occupies frequencies [2^j, 2^{j+1}) and carries
coefficients of constant modulus ~ 2^{-j(beta + d/2 - d/p)}, rescaled so
the shell L^2 norm is exactly 2^{-j(beta - d/p)} (removing the random
square-root fluctuation in the shell mass). The regularity is verified
a posteriori with the heat-semigroup slope detector of the besov module.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from ._rng import substream
from .besov import SampledField, estimate_regularity
from .params import BesovIndices, ParameterError, _frac, check_gr, StableParams

INF = math.inf

DEFAULT_EXTENT = 16.0 * np.pi
DEFAULT_N = 8192
DEFAULT_TIME_NODES = 8

#: Width of the level-m mollifier is MOLLIFIER_WIDTH * 2^{-m}.
MOLLIFIER_WIDTH = 0.15


class DriftConstructionError(RuntimeError):
    pass


def _shell_mask(omega, j):
    return (omega >= 2.0 ** j) & (omega < 2.0 ** (j + 1))


@dataclass(frozen=True)
class DriftField:
    """Rough drift on [0, T]: one spectral slice per time node.

    coeffs has shape (n_time, n//2+1); values are recovered by inverse FFT.
    The drift is piecewise constant in time between nodes.
    """

    bi: BesovIndices
    T: float
    seed: int
    J: int
    coeffs: np.ndarray
    extent: float = DEFAULT_EXTENT
    n: int = DEFAULT_N
    scale: float = 1.0

    @property
    def n_time(self):
        return self.coeffs.shape[0]

    @property
    def time_nodes(self):
        return np.linspace(0.0, self.T, self.n_time)

    @property
    def dt_node(self):
        if self.n_time == 1:
            return self.T if self.T > 0 else 1.0
        return self.T / (self.n_time - 1)

    def node_field(self, i):
        vals = np.fft.irfft(self.coeffs[i], n=self.n) * self.scale
        return SampledField(vals, self.extent)

    def node_index(self, t):
        i = int(np.floor(t / self.dt_node + 0.5))
        return min(max(i, 0), self.n_time - 1)

    def values(self, t):
        """Grid values of b(t, .) (nearest time node)."""
        return self.node_field(self.node_index(t)).values

    def __call__(self, t, x):
        """Pointwise evaluation, periodic linear interpolation in space."""
        f = self.node_field(self.node_index(t))
        pos = (np.asarray(x, float) + 0.5 * self.extent) / f.dx
        i0 = np.floor(pos).astype(np.int64)
        frac = pos - i0
        i0 = np.mod(i0, self.n)
        i1 = np.mod(i0 + 1, self.n)
        return f.values[i0] * (1.0 - frac) + f.values[i1] * frac

    def regularity_window(self, alpha):
        """The v-range over which the field's shells populate the thermic
        profile; used by the slope detector."""
        return (2.0 ** (-alpha * max(self.J - 1, 1)), 2.0 ** (-alpha))

    def time_norm(self, node_norms):
        """L^r-in-time aggregate of per-node norms."""
        r = self.bi.r
        vals = np.asarray(node_norms, float)
        if r == INF:
            return float(vals.max())
        return float((np.mean(vals ** r) * self.T) ** (1.0 / r))


def make_drift(bi, T, seed, J, sp=None, extent=DEFAULT_EXTENT, n=DEFAULT_N,
               n_time=DEFAULT_TIME_NODES, scale=1.0, check_bracket=True,
               require_gr=True):
    """Construct a synthetic drift of target regularity bi.beta.

    Raises DriftConstructionError when the measured regularity of any time
    node fails the bracket (beta - 0.05, beta + 0.05). J=0 yields a single
    smooth low-frequency mode and the bracket test is skipped.
    require_gr=False permits non-admissible indices (negative controls).
    """
    sp = sp or StableParams(1.5)
    if require_gr and not check_gr(sp, bi).gr:
        raise ParameterError("drift indices must satisfy the admissibility relation")
    rng = substream(seed, "drift")
    beta = bi.beta
    dp = _frac(sp.dim, bi.p)
    omega = 2.0 * np.pi * np.fft.rfftfreq(n, d=extent / n)
    dx = extent / n
    coeffs = np.zeros((n_time, n // 2 + 1), complex)
    for i in range(n_time):
        for j in range(J + 1):
            mask = _shell_mask(omega, j)
            k = int(mask.sum())
            if k == 0:
                continue
            c = rng.choice([-1.0, 1.0], k) + 1j * rng.choice([-1.0, 1.0], k)
            shell = np.zeros_like(coeffs[i])
            shell[mask] = c
            vals = np.fft.irfft(shell, n=n)
            l2 = math.sqrt(float(np.sum(vals ** 2)) * dx)
            coeffs[i, mask] = c * (2.0 ** (-j * (beta - dp)) / l2)
    drift = DriftField(bi=bi, T=T, seed=int(seed), J=J, coeffs=coeffs,
                       extent=extent, n=n, scale=scale)
    if check_bracket and J >= 2:
        win = drift.regularity_window(sp.alpha)
        for i in range(n_time):
            bhat = estimate_regularity(drift.node_field(i), sp.alpha, win, ell=2)
            if not (beta - 0.05 < bhat < beta + 0.05):
                raise DriftConstructionError(
                    f"node {i}: measured regularity {bhat:.4f} outside "
                    f"({beta - 0.05:.4f}, {beta + 0.05:.4f})"
                )
    return drift


# ---------------------------------------------------------------------------
# Mollification
# ---------------------------------------------------------------------------

def _bump_transform(s):
    """Fourier transform (normalized to 1 at 0) of the standard compactly
    supported bump exp(-1/(1-(2x)^2)) on [-1/2, 1/2], by quadrature."""
    x = np.linspace(-0.5, 0.5, 2001)[1:-1]
    psi = np.exp(-1.0 / (1.0 - (2.0 * x) ** 2))
    psi /= np.trapezoid(psi, x)
    s = np.atleast_1d(np.asarray(s, float))
    out = np.trapezoid(psi[None, :] * np.cos(s[:, None] * x[None, :]), x, axis=1)
    return out


@dataclass(frozen=True)
class MollifiedDrift:
    """Level-m smoothing of a DriftField by a compactly supported bump.

    The mollifier is the self-convolution of a bump of width
    MOLLIFIER_WIDTH * 2^{-m}; its transform is the squared bump transform,
    so every spectral mode is damped by a factor in [0, 1].
    """

    base: DriftField
    m: int
    coeffs: np.ndarray

    @property
    def delta(self):
        return MOLLIFIER_WIDTH * 2.0 ** (-self.m)

    @property
    def extent(self):
        return self.base.extent

    @property
    def n(self):
        return self.base.n

    @property
    def T(self):
        return self.base.T

    @property
    def n_time(self):
        return self.coeffs.shape[0]

    def node_field(self, i):
        vals = np.fft.irfft(self.coeffs[i], n=self.n) * self.base.scale
        return SampledField(vals, self.extent)

    def values(self, t):
        return self.node_field(self.base.node_index(t)).values

    def __call__(self, t, x):
        f = self.node_field(self.base.node_index(t))
        pos = (np.asarray(x, float) + 0.5 * self.extent) / f.dx
        i0 = np.floor(pos).astype(np.int64)
        frac = pos - i0
        i0 = np.mod(i0, self.n)
        i1 = np.mod(i0 + 1, self.n)
        return f.values[i0] * (1.0 - frac) + f.values[i1] * frac

    def sup_norm(self):
        return float(max(np.max(np.abs(self.node_field(i).values))
                         for i in range(self.n_time)))

    def lipschitz_bound(self):
        """Max absolute finite-difference slope over nodes (smoothness check)."""
        worst = 0.0
        for i in range(self.n_time):
            f = self.node_field(i)
            worst = max(worst, float(np.max(np.abs(np.gradient(f.values, f.dx)))))
        return worst


def mollify(b, m):
    """Smooth b at level m (width MOLLIFIER_WIDTH * 2^-m, space only)."""
    if m < 0:
        raise ParameterError("mollification level must be >= 0")
    omega = 2.0 * np.pi * np.fft.rfftfreq(b.n, d=b.extent / b.n)
    damp = _bump_transform(omega * (MOLLIFIER_WIDTH * 2.0 ** (-m))) ** 2
    return MollifiedDrift(base=b, m=m, coeffs=b.coeffs * damp[None, :])


# ---------------------------------------------------------------------------
# Kernel-smoothed drift functional
# ---------------------------------------------------------------------------

def eval_B(v, x, h, b, sp, kernel=None, nt=32, half_width=60.0):
    """The weak-dynamics functional

        B(v, x, h) = int_0^h int p_alpha(h-r, x-y) b(v+r, y) dy dr.

    b may be a DriftField/MollifiedDrift (spectral evaluation on its
    periodic grid) or a plain callable b(t, y) (direct quadrature on a
    window of half width half_width * h^{1/alpha} centred at x, which is
    symmetric so odd integrands cancel exactly).
    """
    if h <= 0:
        raise ParameterError("horizon h must be positive")
    r_nodes = np.linspace(0.0, h, nt)
    alpha = sp.alpha
    if hasattr(b, "coeffs"):
        omega = 2.0 * np.pi * np.fft.rfftfreq(b.n, d=b.extent / b.n)
        xs = np.atleast_1d(np.asarray(x, float))
        vals = np.empty((nt, xs.shape[0]))
        for i, r in enumerate(r_nodes):
            idx = b.base.node_index(v + r) if hasattr(b, "base") else b.node_index(v + r)
            c = b.coeffs[idx] * np.exp(-(h - r) * np.abs(omega) ** alpha)
            scale = b.base.scale if hasattr(b, "base") else b.scale
            grid_vals = np.fft.irfft(c, n=b.n) * scale
            f = SampledField(grid_vals, b.extent)
            pos = (xs + 0.5 * b.extent) / f.dx
            i0 = np.floor(pos).astype(np.int64)
            frac = pos - i0
            i0 = np.mod(i0, b.n)
            i1 = np.mod(i0 + 1, b.n)
            vals[i] = f.values[i0] * (1.0 - frac) + f.values[i1] * frac
        out = np.trapezoid(vals, r_nodes, axis=0)
        return out if np.ndim(x) else float(out[0])

    from .density import ExactKernel

    kernel = kernel or ExactKernel(sp)
    R = half_width * h ** (1.0 / alpha)
    y = np.linspace(x - R, x + R, 4097)
    vals = np.empty(nt)
    for i, r in enumerate(r_nodes):
        tau = h - r
        if tau <= 0:
            vals[i] = float(b(v + r, x))
            continue
        p = kernel(tau, x - y)
        vals[i] = float(np.trapezoid(p * b(v + r, y), y))
    return float(np.trapezoid(vals, r_nodes))


# ---------------------------------------------------------------------------
# Serialization (bit-exact round trip: floats via repr/float pairs)
# ---------------------------------------------------------------------------

def save_drift(b, path):
    doc = {
        "format": "stableheat-drift-1",
        "beta": b.bi.beta,
        "p": "inf" if b.bi.p == INF else b.bi.p,
        "q": "inf" if b.bi.q == INF else b.bi.q,
        "r": "inf" if b.bi.r == INF else b.bi.r,
        "T": b.T,
        "seed": b.seed,
        "J": b.J,
        "extent": b.extent,
        "n": b.n,
        "scale": b.scale,
        "coeffs": [
            [[float(c.real), float(c.imag)] for c in row] for row in b.coeffs
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_drift(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "stableheat-drift-1":
        raise ParameterError(f"unrecognized drift file format in {path}")

    def idx(v):
        return INF if v == "inf" else float(v)

    bi = BesovIndices(beta=doc["beta"], p=idx(doc["p"]), q=idx(doc["q"]),
                      r=idx(doc["r"]))
    coeffs = np.array(
        [[complex(re, im) for re, im in row] for row in doc["coeffs"]]
    )
    return DriftField(bi=bi, T=doc["T"], seed=doc["seed"], J=doc["J"],
                      coeffs=coeffs, extent=doc["extent"], n=doc["n"],
                      scale=doc["scale"])
