"""Scalar parameter arithmetic: admissibility, parabolic gain, gap to
singularity, and the singular time-weight L(u,s,t,zeta) with its
integrability detector.

Infinite integrability indices are represented by ``math.inf``; divisions
like d/p or alpha/r evaluate to 0 there.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

INF = math.inf


class ParameterError(ValueError):
    pass


class DomainError(ValueError):
    pass


def _frac(num, den):
    """num/den with the convention num/inf = 0."""
    if den == INF:
        return 0.0
    return num / den


def _conjugate(p):
    if p == INF:
        return 1.0
    if p == 1:
        return INF
    return p / (p - 1.0)


def _check_index(name, value):
    if not (value >= 1):
        raise ParameterError(f"{name} must be >= 1 (or inf), got {value!r}")


@dataclass(frozen=True)
class StableParams:
    """Stability index, dimension and spectral density of the driving noise.

    ``spectral_density`` is a function on the unit sphere (a callable of the
    angle for d=2, of +-1 for d=1); None means isotropic (constant 1). It
    must be even and bounded away from 0 and infinity.
    """

    alpha: float
    dim: int = 1
    spectral_density: object = None

    def __post_init__(self):
        if not (1.0 < self.alpha < 2.0):
            raise ParameterError(f"alpha must lie in (1,2), got {self.alpha}")
        if self.dim < 1:
            raise ParameterError(f"dim must be >= 1, got {self.dim}")
        if self.spectral_density is not None:
            lo, hi = self.spectral_bounds()
            if not (lo > 0 and np.isfinite(hi)):
                raise ParameterError(
                    "spectral density must be bounded between positive constants"
                )
            for xi in self._sphere_probe():
                a, b = self.spectral_density(xi), self.spectral_density(-xi)
                if abs(a - b) > 1e-12 * max(1.0, abs(a)):
                    raise ParameterError("spectral density must be even on the sphere")

    def _sphere_probe(self):
        if self.dim == 1:
            return np.array([1.0])
        if self.dim == 2:
            th = np.linspace(0.0, np.pi, 181)
            return np.stack([np.cos(th), np.sin(th)], axis=-1)
        raise NotImplementedError("spectral densities only supported for d <= 2")

    def spectral_bounds(self):
        if self.spectral_density is None:
            return 1.0, 1.0
        vals = np.array([float(self.spectral_density(xi)) for xi in self._sphere_probe()])
        return float(vals.min()), float(vals.max())

    @property
    def isotropic(self):
        return self.spectral_density is None


@dataclass(frozen=True)
class BesovIndices:
    """Regularity/integrability indices (beta, p, q, r) of the drift space."""

    beta: float
    p: float = INF
    q: float = INF
    r: float = INF

    def __post_init__(self):
        _check_index("p", self.p)
        _check_index("q", self.q)
        _check_index("r", self.r)
        if not (self.beta <= 0):
            raise ParameterError(f"beta must be <= 0, got {self.beta}")

    def theta(self, sp):
        """Parabolic bootstrap beta + alpha - d/p - alpha/r."""
        return self.beta + sp.alpha - _frac(sp.dim, self.p) - _frac(sp.alpha, self.r)

    def gamma(self, sp):
        """Gap to singularity beta - (1 - alpha + alpha/r + d/p)/2."""
        return self.beta - (
            1.0 - sp.alpha + _frac(sp.alpha, self.r) + _frac(sp.dim, self.p)
        ) / 2.0

    @property
    def r_conj(self):
        return _conjugate(self.r)


@dataclass(frozen=True)
class Admissibility:
    gr: bool
    grd: bool
    theta: float
    gamma: float
    alpha_lower: float
    beta_lower_gr: float
    beta_lower_grd: float


def check_gr(sp, bi):
    """Evaluate the (GR) and (GRD) admissibility conditions.

    (GR):  alpha in ((1+[d/p])/(1-[1/r]), 2) and
           beta in ((1 - alpha + [d/p] + [alpha/r])/2, 0).
    (GRD) replaces [d/p], [alpha/r] by their doubles in the beta interval.
    """
    d_over_p = _frac(sp.dim, bi.p)
    one_over_r = _frac(1.0, bi.r)
    a_over_r = _frac(sp.alpha, bi.r)

    if one_over_r >= 1.0:
        alpha_lower = INF
    else:
        alpha_lower = (1.0 + d_over_p) / (1.0 - one_over_r)
    alpha_ok = alpha_lower < sp.alpha < 2.0

    beta_lower_gr = (1.0 - sp.alpha + d_over_p + a_over_r) / 2.0
    beta_lower_grd = (1.0 - sp.alpha + 2.0 * d_over_p + 2.0 * a_over_r) / 2.0

    gr = alpha_ok and beta_lower_gr < bi.beta < 0.0
    grd = alpha_ok and beta_lower_grd < bi.beta < 0.0
    return Admissibility(
        gr=gr,
        grd=grd,
        theta=bi.theta(sp),
        gamma=bi.gamma(sp),
        alpha_lower=alpha_lower,
        beta_lower_gr=beta_lower_gr,
        beta_lower_grd=beta_lower_grd,
    )


def rho_range(bi, sp):
    """Open interval (-beta, gamma - beta) of valid Hoelder exponents."""
    adm = check_gr(sp, bi)
    if bi.beta == 0.0:
        raise ParameterError("beta must be strictly negative under (GR)")
    if not adm.gr:
        raise ParameterError(
            f"(GR) fails: gamma = {adm.gamma:.6g} <= 0 or alpha outside "
            f"({adm.alpha_lower:.6g}, 2)"
        )
    lo, hi = -bi.beta, adm.gamma - bi.beta
    if hi <= lo:
        raise ParameterError(f"empty rho interval ({lo}, {hi})")
    return lo, hi


def eval_L(u, s, t, zeta, sp, bi):
    """The singularity weight

        L(u,s,t,zeta) = (t-s)^{beta/a} (t-u)^{-1/a}
                        * [ (t-u)^{-d/(a p)} + (u-s)^{-d/(a p)} ]
                        * [ (t-s)^{z/a} ((t-u)^{-z/a} + (u-s)^{-z/a}) + 1 ]

    with a = alpha, z = zeta and the bracket convention d/p = 0 for p = inf.
    """
    if not (s < u < t):
        raise DomainError(f"need s < u < t, got s={s}, u={u}, t={t}")
    if not (-bi.beta < zeta <= 1.0):
        raise DomainError(f"zeta must lie in (-beta, 1], got {zeta}")
    a = sp.alpha
    dp = _frac(sp.dim, bi.p)
    ts, tu, us = t - s, t - u, u - s
    val = (
        ts ** (bi.beta / a)
        * tu ** (-1.0 / a)
        * (tu ** (-dp / a) + us ** (-dp / a))
        * (ts ** (zeta / a) * (tu ** (-zeta / a) + us ** (-zeta / a)) + 1.0)
    )
    if not np.isfinite(val):
        raise DomainError("non-finite singularity weight")
    return val


def _log_serrin_integrand(lus, ltu, lts, rho, sp, bi):
    """log of L(u,s,t,rho)^{r'} (u-s)^{-rho r'/a} [(t-s)^{rho/a}(t-u)^{-rho/a}+1]^{r'},

    written in terms of the log distances lus = log(u-s), ltu = log(t-u),
    lts = log(t-s) so that endpoint neighborhoods far below float underflow
    remain representable.
    """
    a = sp.alpha
    rp = bi.r_conj
    dp = _frac(sp.dim, bi.p)
    zero = np.zeros_like(lus)
    logL = (
        bi.beta / a * lts
        - ltu / a
        + np.logaddexp(-dp / a * ltu, -dp / a * lus)
        + np.logaddexp(
            rho / a * lts + np.logaddexp(-rho / a * ltu, -rho / a * lus), zero
        )
    )
    log_extra = np.logaddexp(rho / a * (lts - ltu), zero)
    return rp * (logL + log_extra) - rho * rp / a * lus


def serrin_exponent(rho, sp, bi):
    """r'(1 + d/p + 2 rho)/alpha; the time integral converges iff this < 1."""
    return bi.r_conj * (1.0 + _frac(sp.dim, bi.p) + 2.0 * rho) / sp.alpha


def l_integral_diverges(sp, bi, rho, s=0.0, t=1.0, depth=2000.0, n_per_unit=8):
    """Quadrature-based divergence detector for the Gronwall time integral.

    Integrates L(u,s,t,rho)^{r'} (u-s)^{-rho r'/a} [...]^{r'} du over (s,t)
    in logarithmic endpoint coordinates u = s + (t-s) e^{-w} (and the mirror
    image at t), then doubles the depth w_max. The integral is declared
    divergent when the value changes by more than 10%.

    All accumulation is done in log space to survive strongly divergent
    integrands.
    """
    if rho <= 0:
        raise DomainError("rho must be positive")

    lts = math.log(t - s)

    def log_integral(w_max):
        w = np.linspace(np.log(2.0), w_max, int(n_per_unit * w_max))
        dw = w[1] - w[0]
        # distance to the active endpoint: (t-s) e^{-w}; distance to the
        # other endpoint: (t-s)(1 - e^{-w})
        lnear = lts - w
        lfar = lts + np.log1p(-np.exp(-w))
        parts = []
        for lus, ltu in ((lnear, lfar), (lfar, lnear)):
            logf = _log_serrin_integrand(lus, ltu, lts, rho, sp, bi)
            # du = (t-s) e^{-w} dw, trapezoid weights
            logw = lnear + np.log(dw)
            logw = logw.copy()
            logw[0] -= np.log(2.0)
            logw[-1] -= np.log(2.0)
            parts.append(logsumexp(logf + logw))
        return logsumexp(parts)

    v1 = log_integral(depth)
    v2 = log_integral(2.0 * depth)
    return (v2 - v1) > np.log(1.10)
