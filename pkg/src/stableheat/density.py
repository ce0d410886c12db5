"""Stable transition densities: the closed-form comparator kernel, the exact
kernel by Fourier inversion, their derivatives, and the numerical validators
for the moment / convolution / Taylor-type bounds they satisfy.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import j0, j1

from .params import DomainError, StableParams


class QuadratureError(RuntimeError):
    pass


class DivergenceError(ValueError):
    pass


def sphere_area(d):
    return 2.0 * np.pi ** (d / 2.0) / gamma_fn(d / 2.0)


def c_alpha(sp):
    """Normalization constant of the comparator kernel.

    Closed form: 1 / (|S^{d-1}| B(d, alpha)) since
    int (1+|x|)^{-(d+alpha)} dx = |S^{d-1}| int r^{d-1} (1+r)^{-(d+alpha)} dr.
    """
    a, d = sp.alpha, sp.dim
    beta_val = gamma_fn(d) * gamma_fn(a) / gamma_fn(d + a)
    if d == 1:
        total = 2.0 * beta_val  # |S^0| = 2
    else:
        total = sphere_area(d) * beta_val
    return 1.0 / total


@dataclass(frozen=True)
class ComparatorKernel:
    """The closed-form two-sided comparator C_a v^{-d/a} (1+|z| v^{-1/a})^{-(d+a)}."""

    params: StableParams
    c_alpha: float = None

    def __post_init__(self):
        if self.c_alpha is None:
            object.__setattr__(self, "c_alpha", c_alpha(self.params))

    def __call__(self, v, z):
        if not v > 0:
            raise DomainError(f"time must be positive, got {v}")
        a, d = self.params.alpha, self.params.dim
        z = np.asarray(z, float)
        rad = np.abs(z) if d == 1 else np.linalg.norm(z, axis=-1)
        return self.c_alpha * v ** (-d / a) * (1.0 + rad * v ** (-1.0 / a)) ** (-(d + a))

    def grad(self, v, z):
        """Spatial gradient (scalar for d=1, vector along last axis otherwise)."""
        if not v > 0:
            raise DomainError(f"time must be positive, got {v}")
        a, d = self.params.alpha, self.params.dim
        z = np.asarray(z, float)
        rad = np.abs(z) if d == 1 else np.linalg.norm(z, axis=-1)
        pref = (
            -self.c_alpha
            * (d + a)
            * v ** (-(d + 1.0) / a)
            * (1.0 + rad * v ** (-1.0 / a)) ** (-(d + a + 1))
        )
        with np.errstate(invalid="ignore", divide="ignore"):
            direction = np.where(rad > 0, z / np.where(rad > 0, rad, 1.0), 0.0)
        return pref * direction

    def normalized_moment(self, zeta, t=1.0, r_max=None, n=200_001):
        """t^{-zeta/a} int pbar(t,y)|y|^zeta dy, by radial quadrature.

        Closed form (used as the test oracle): |S^{d-1}| C_a B(d+zeta, a-zeta)
        for d >= 2, and 2 C_a B(1+zeta, a-zeta) for d = 1.
        """
        a, d = self.params.alpha, self.params.dim
        if not (0 < zeta):
            raise DomainError(f"zeta must be positive, got {zeta}")
        if zeta >= a:
            raise DivergenceError(
                f"moment of order {zeta} diverges for alpha = {a} (needs zeta < alpha)"
            )
        if r_max is None:
            r_max = 10.0 ** (6.0 / (a - zeta)) if a - zeta < 1 else 1e6
            r_max = min(max(r_max, 1e4), 1e9)
        # substitute r = e^u - 1 to handle the long power tail
        u = np.linspace(0.0, np.log1p(r_max), n)
        r = np.expm1(u)
        surf = 2.0 if d == 1 else sphere_area(d)
        integ = r ** (d - 1 + zeta) * (1.0 + r) ** (-(d + a)) * (r + 1.0)
        val = np.trapezoid(integ, u)
        # analytic tail beyond r_max: integrand ~ r^{zeta - alpha - 1}
        val += r_max ** (zeta - a) / (a - zeta)
        return float(surf * self.c_alpha * val)


def _mu_grid(v, alpha, tol, n):
    """Frequency grid in the substituted variable lambda = mu^4.

    The substitution makes exp(-v lambda^alpha) smooth at lambda = 0, so the
    trapezoid rule converges at high order despite the fractional power.
    """
    lam_max = (math.log(1.0 / tol) / v) ** (1.0 / alpha)
    mu = np.linspace(0.0, lam_max ** 0.25, n)
    return mu, mu ** 4, lam_max


@dataclass(frozen=True)
class InversionConfig:
    tail_tol: float = 1e-12  # exp(-v lam_max^alpha) at the frequency cutoff
    pts_per_radian: float = 8.0  # resolution of cos(lam x) at the largest |x|
    n_min: int = 4096
    n_max: int = 400_000
    diag_cut: float = 40.0  # switch to the power tail beyond |z| v^{-1/a} > cut


@dataclass(frozen=True)
class ExactKernel:
    """The exact stable density by inverse Fourier transform.

    Isotropic only: the characteristic function is exp(-v |lam|^alpha); for
    d=1 a cosine transform, for d=2 a radial Hankel transform. Beyond the
    self-similar radius ``diag_cut`` the kernel is continued by the
    off-diagonal power asymptotic v/|z|^{d+alpha} matched at the boundary.
    """

    params: StableParams
    config: InversionConfig = field(default_factory=InversionConfig)

    def __post_init__(self):
        if not self.params.isotropic:
            raise NotImplementedError(
                "exact kernel evaluation requires an isotropic spectral density"
            )
        if self.params.dim > 2:
            raise NotImplementedError("exact kernel implemented for d <= 2")

    def _n_freq(self, v, rad_max):
        cfg = self.config
        lam_max = (math.log(1.0 / cfg.tail_tol) / v) ** (1.0 / self.params.alpha)
        n = int(max(cfg.n_min, cfg.pts_per_radian * lam_max * max(rad_max, 1.0)))
        if n > cfg.n_max:
            raise QuadratureError(
                f"frequency grid of {n} points exceeds cap {cfg.n_max}; "
                "reduce the evaluation window or raise n_max"
            )
        return n

    def _radial(self, v, rad, deriv=False):
        """Density (or radial derivative) at radii ``rad``, direct quadrature."""
        a, d = self.params.alpha, self.params.dim
        cfg = self.config
        cut = cfg.diag_cut * v ** (1.0 / a)
        rad = np.asarray(rad, float)
        out = np.empty(rad.shape)
        inner = rad <= cut
        n = self._n_freq(v, min(float(rad.max(initial=0.0)), cut))
        mu, lam, _ = _mu_grid(v, a, cfg.tail_tol, n)
        w = 4.0 * mu ** 3 * np.exp(-v * lam ** a)
        ri = rad[inner]
        if d == 1:
            if deriv:
                vals = -np.trapezoid(
                    w * lam * np.sin(lam * ri[:, None]), mu, axis=1
                ) / np.pi
            else:
                vals = np.trapezoid(w * np.cos(lam * ri[:, None]), mu, axis=1) / np.pi
        else:
            if deriv:
                vals = -np.trapezoid(
                    w * lam ** 2 * j1(lam * ri[:, None]), mu, axis=1
                ) / (2.0 * np.pi)
            else:
                vals = np.trapezoid(
                    w * lam * j0(lam * ri[:, None]), mu, axis=1
                ) / (2.0 * np.pi)
        out[inner] = vals
        if (~inner).any():
            # power-law continuation matched at the boundary radius
            edge = np.array([cut])
            if deriv:
                p_edge = self._radial(v, edge, deriv=True)[0]
                out[~inner] = p_edge * (rad[~inner] / cut) ** (-(d + a + 1))
            else:
                p_edge = self._radial(v, edge)[0]
                out[~inner] = p_edge * (rad[~inner] / cut) ** (-(d + a))
        return out

    def __call__(self, v, z):
        if not v > 0:
            raise DomainError(f"time must be positive, got {v}")
        z = np.asarray(z, float)
        rad = np.abs(z) if self.params.dim == 1 else np.linalg.norm(z, axis=-1)
        scalar = rad.ndim == 0
        vals = self._radial(v, np.atleast_1d(rad))
        vals = np.maximum(vals, 0.0)  # floor quadrature ringing
        return float(vals[0]) if scalar else vals.reshape(rad.shape)

    def grad(self, v, z):
        if not v > 0:
            raise DomainError(f"time must be positive, got {v}")
        z = np.asarray(z, float)
        d = self.params.dim
        rad = np.abs(z) if d == 1 else np.linalg.norm(z, axis=-1)
        scalar = rad.ndim == 0
        dr = self._radial(v, np.atleast_1d(rad).ravel(), deriv=True)
        dr = dr.reshape(np.atleast_1d(rad).shape)
        if d == 1:
            out = dr * np.sign(z)
        else:
            with np.errstate(invalid="ignore"):
                direction = np.where(
                    rad[..., None] > 0, z / np.where(rad[..., None] > 0, rad[..., None], 1.0), 0.0
                )
            out = dr[..., None] * direction
        return float(out) if scalar else out

    def mass(self, v, rad_grid=None):
        """int p(v, .) over R^d: grid quadrature plus the analytic power tail."""
        a, d = self.params.alpha, self.params.dim
        cut = self.config.diag_cut * v ** (1.0 / a)
        if rad_grid is None:
            rad_grid = np.linspace(0.0, cut, 4001)
        vals = self._radial(v, rad_grid)
        if d == 1:
            inner = 2.0 * np.trapezoid(vals, rad_grid)
            edge = vals[-1]
            tail = 2.0 * edge * cut / (d + a - 1.0)
        else:
            inner = 2.0 * np.pi * np.trapezoid(vals * rad_grid, rad_grid)
            edge = vals[-1]
            tail = 2.0 * np.pi * edge * cut ** 2 / (d + a - 2.0)
        return inner + tail


class KernelTable:
    """Fast evaluator for the d=1 isotropic kernel and its derivative.

    Tabulates p(1, r) and p'(1, r) once on a dense radial grid and uses the
    self-similarity p(v, z) = v^{-1/a} p(1, z v^{-1/a}) for every other time,
    with the power-law continuation beyond the tabulated radius. Linear
    interpolation on the dense grid is accurate to ~1e-8, far below the
    inversion's own tolerance.
    """

    def __init__(self, sp, r_max=None, n=40_001, kernel=None):
        if sp.dim != 1:
            raise NotImplementedError("kernel table implemented for d = 1")
        self.params = sp
        kernel = kernel or ExactKernel(sp)
        if r_max is None:
            r_max = kernel.config.diag_cut
        self.r_max = float(r_max)
        self.r = np.linspace(0.0, self.r_max, n)
        self.dr = self.r[1] - self.r[0]
        self.p = np.concatenate(
            [kernel._radial(1.0, blk) for blk in np.array_split(self.r, 40)]
        )
        self.dp = np.concatenate(
            [kernel._radial(1.0, blk, deriv=True)
             for blk in np.array_split(self.r, 40)]
        )
        self.p_edge = float(self.p[-1])
        self.dp_edge = float(self.dp[-1])
        # cumulative mass table for in-window mass queries
        self.cum = np.concatenate(
            [[0.0], np.cumsum((self.p[1:] + self.p[:-1]) / 2.0 * self.dr)]
        )
        self.alpha = sp.alpha

    def _lookup(self, table, edge, rad, tail_expo):
        rad = np.abs(np.asarray(rad, float))
        pos = np.clip(rad / self.dr, 0.0, len(self.r) - 1.001)
        i0 = pos.astype(np.int64)
        frac = pos - i0
        vals = table[i0] * (1.0 - frac) + table[i0 + 1] * frac
        out_mask = rad > self.r_max
        if out_mask.any():
            vals = np.where(out_mask, edge * (np.maximum(rad, self.r_max)
                                              / self.r_max) ** tail_expo, vals)
        return vals

    def __call__(self, v, z):
        if not v > 0:
            raise DomainError(f"time must be positive, got {v}")
        a = self.alpha
        s = v ** (-1.0 / a)
        return s * self._lookup(self.p, self.p_edge, np.asarray(z, float) * s,
                                -(1.0 + a))

    def grad(self, v, z):
        if not v > 0:
            raise DomainError(f"time must be positive, got {v}")
        a = self.alpha
        s = v ** (-1.0 / a)
        z = np.asarray(z, float)
        vals = s ** 2 * self._lookup(self.dp, self.dp_edge, z * s, -(2.0 + a))
        return vals * np.sign(z)

    def mass_within(self, v, half_width):
        """int_{|z| <= half_width} p(v, z) dz via the cumulative table."""
        a = self.alpha
        r = abs(half_width) * v ** (-1.0 / a)
        if r >= self.r_max:
            # table mass plus the power tail up to r
            tail = self.p_edge * self.r_max / a * (
                1.0 - (r / self.r_max) ** (-a))
            return 2.0 * (self.cum[-1] + tail)
        pos = r / self.dr
        i0 = int(pos)
        frac = pos - i0
        return 2.0 * float(self.cum[i0] * (1.0 - frac) + self.cum[i0 + 1] * frac)


_TABLE_CACHE = {}


def kernel_table(sp):
    """Shared per-(alpha, dim) kernel table (the build is expensive)."""
    key = (sp.alpha, sp.dim)
    if key not in _TABLE_CACHE:
        _TABLE_CACHE[key] = KernelTable(sp)
    return _TABLE_CACHE[key]


def validate_spatial_moments(sp, zeta, t_grid=(0.01, 0.1, 1.0, 10.0)):
    """sup over the time grid of t^{-zeta/a} int pbar(t,y)|y|^zeta dy."""
    pbar = ComparatorKernel(sp)
    vals = [pbar.normalized_moment(zeta, t) for t in t_grid]
    return max(vals)


def validate_convolution_lemma(sp, ell, s, u, t, x, y, z_half_width=None, n=16001):
    """|| pbar(t-u, . - y) pbar(u-s, x - .) ||_{l'} over the r.h.s. bound.

    d = 1 only. l' is the conjugate of ``ell``; ell = 1 gives the sup of the
    product, l' = 1 the plain convolution bound.
    """
    if sp.dim != 1:
        raise NotImplementedError("convolution validator implemented for d = 1")
    if not (s < u < t):
        raise DomainError("need s < u < t")
    pbar = ComparatorKernel(sp)
    a, d = sp.alpha, 1
    if z_half_width is None:
        z_half_width = 20.0 * max(
            (t - s) ** (1 / a), abs(x), abs(y), 1.0
        )
    zg = np.linspace(-z_half_width, z_half_width, n)
    prod = pbar(t - u, zg - y) * pbar(u - s, x - zg)
    if ell == 1:
        lhs = prod.max()  # l' = inf
    else:
        lp = ell / (ell - 1.0) if ell != math.inf else 1.0
        lhs = np.trapezoid(prod ** lp, zg) ** (1.0 / lp)
    dal = d / (a * ell) if ell != math.inf else 0.0
    rhs = ((t - u) ** (-dal) + (u - s) ** (-dal)) * pbar(t - s, x - y)
    return float(lhs / rhs)


def validate_taylor_laplace(sp, t, x, w, z, ell, zeta, kernel=None, use_comparator=False):
    """|D^l p(t,x-w) - D^l p(t,x-z)| t^{(l+zeta)/a} / (|z-w|^zeta pbar(t,x-w)).

    Requires the diagonal regime |w - z| <= t^{1/a}. Returns 0 when w == z.
    """
    a = sp.alpha
    w_arr, z_arr = np.asarray(w, float), np.asarray(z, float)
    sep = np.linalg.norm(np.atleast_1d(w_arr - z_arr))
    if sep > t ** (1.0 / a):
        raise DomainError(
            f"|w-z| = {sep:.4g} outside the diagonal regime t^(1/a) = {t ** (1/a):.4g}"
        )
    if sep == 0.0:
        return 0.0
    if ell not in (0, 1):
        raise DomainError("ell must be 0 or 1")
    if not (0 < zeta <= 1):
        raise DomainError("zeta must lie in (0, 1]")
    if use_comparator:
        ker = ComparatorKernel(sp)
        f = ker if ell == 0 else ker.grad
    else:
        ker = kernel if kernel is not None else ExactKernel(sp)
        f = ker if ell == 0 else ker.grad
    diff = np.linalg.norm(np.atleast_1d(f(t, x - w_arr) - f(t, x - z_arr)))
    pbar = ComparatorKernel(sp)
    return float(diff * t ** ((ell + zeta) / a) / (sep ** zeta * pbar(t, x - w_arr)))


def comparability_constant(sp, t=1.0, x_max=50.0, n=2001):
    """Measured C with p_exact/p_bar in [1/C, C] on |x| <= x_max (d = 1)."""
    if sp.dim != 1:
        raise NotImplementedError("comparability scan implemented for d = 1")
    ker, pbar = ExactKernel(sp), ComparatorKernel(sp)
    x = np.linspace(-x_max, x_max, n)
    ratio = ker(t, x) / pbar(t, x)
    return float(max(ratio.max(), 1.0 / ratio.min()))


def gradient_bound_constant(sp, t=1.0, x_max=20.0, n=2001):
    """sup over the grid of t^{1/a} |grad p(t,x)| / pbar(t,x) (d = 1)."""
    if sp.dim != 1:
        raise NotImplementedError("gradient scan implemented for d = 1")
    ker, pbar = ExactKernel(sp), ComparatorKernel(sp)
    x = np.linspace(-x_max, x_max, n)
    return float(
        np.max(t ** (1.0 / sp.alpha) * np.abs(ker.grad(t, x)) / pbar(t, x))
    )


def export_grid_csv(path, t_vals, x_vals, values):
    """CSV export of a (t, x) grid of kernel values (columns t, x, value)."""
    with open(path, "w") as fh:
        fh.write("t,x,value\n")
        for i, t in enumerate(t_vals):
            for j, x in enumerate(x_vals):
                fh.write(f"{t!r},{x!r},{values[i][j]!r}\n")
