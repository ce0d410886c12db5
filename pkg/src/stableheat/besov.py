"""Besov norms through the heat-semigroup (thermic) characterization, the
duality and product-rule validators, and a regularity estimator for sampled
fields.

Fields live on uniform periodic grids; spatial convolution with the stable
heat kernel and its v-derivative is exact in the discrete Fourier basis
(multipliers exp(-v|w|^a) and -|w|^a exp(-v|w|^a)).
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .params import DomainError, ParameterError

INF = math.inf


@dataclass
class SampledField:
    """Real field sampled on a uniform grid over [-extent/2, extent/2)."""

    values: np.ndarray
    extent: float

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        if self.values.ndim != 1:
            raise ParameterError("SampledField holds one-dimensional grids")
        if not self.extent > 0:
            raise ParameterError("extent must be positive")

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def dx(self):
        return self.extent / self.n

    @property
    def x(self):
        return (np.arange(self.n) - self.n // 2) * self.dx

    @property
    def omega(self):
        return 2.0 * np.pi * np.fft.rfftfreq(self.n, d=self.dx)

    def spectrum(self):
        return np.fft.rfft(self.values)

    @classmethod
    def from_spectrum(cls, coeffs, extent, n):
        return cls(np.fft.irfft(coeffs, n=n), extent)

    @classmethod
    def from_function(cls, fn, extent, n):
        x = (np.arange(n) - n // 2) * (extent / n)
        return cls(np.asarray(fn(x), float), extent)

    def boundary_mass_fraction(self, edge=0.05):
        """|f| mass in the outer ``edge`` fraction of the box, over total."""
        k = max(1, int(edge * self.n))
        a = np.abs(self.values)
        tot = a.sum()
        if tot == 0:
            return 0.0
        return float((a[:k].sum() + a[-k:].sum()) / tot)


def _lp_norm(values, dx, ell):
    if ell == INF:
        return float(np.max(np.abs(values)))
    return float((np.sum(np.abs(values) ** ell) * dx) ** (1.0 / ell))


@dataclass(frozen=True)
class ThermicConfig:
    """Configuration of the thermic Besov norm.

    theta: regularity; ell, m: integrability/summability (inf allowed);
    n: order of the v-derivative (1 matches the cancellation argument);
    alpha: stability index of the heat kernel; phi_scale: width of the
    Gaussian low-frequency window (phi(0) = 1); v_grid: logarithmic grid
    on (0, 1].
    """

    theta: float
    ell: float = INF
    m: float = INF
    n: int = 1
    alpha: float = 1.5
    phi_scale: float = 1.0
    v_grid: tuple = tuple(np.geomspace(1e-6, 1.0, 64))

    def __post_init__(self):
        if not (self.n - self.theta / self.alpha > 0):
            raise ParameterError(
                f"need n - theta/alpha > 0, got n={self.n}, theta={self.theta}"
            )
        if self.ell < 1 or self.m < 1:
            raise ParameterError("ell and m must be >= 1 (or inf)")

    def conjugate(self):
        def conj(p):
            if p == INF:
                return 1.0
            if p == 1.0:
                return INF
            return p / (p - 1.0)

        return replace(self, theta=-self.theta, ell=conj(self.ell), m=conj(self.m))


def heat_derivative_slices(f, cfg, v_grid=None):
    """||d_v^n p_a(v,.) * f||_{L^ell} on the v grid (spectral evaluation)."""
    if v_grid is None:
        v_grid = np.asarray(cfg.v_grid)
    spec = f.spectrum()
    wa = np.abs(f.omega) ** cfg.alpha
    out = np.empty(len(v_grid))
    for i, v in enumerate(v_grid):
        mult = (-wa) ** cfg.n * np.exp(-v * wa)
        g = np.fft.irfft(mult * spec, n=f.n)
        out[i] = _lp_norm(g, f.dx, cfg.ell)
    return np.asarray(v_grid), out


def thermic_profile(f, cfg, v_grid=None):
    """v^(n - theta/alpha) ||d_v^n p_a(v,.) * f||_ell on the v grid."""
    v, slices = heat_derivative_slices(f, cfg, v_grid)
    return v, v ** (cfg.n - cfg.theta / cfg.alpha) * slices


def _aggregate(v, prof, m):
    if m == INF:
        return float(prof.max())
    # int (prof^m) dv/v = int prof^m d(log v), log-trapezoid
    return float(np.trapezoid(prof ** m, np.log(v)) ** (1.0 / m))


def thermic_norm(f, cfg, richardson_tol=0.01):
    """Thermic Besov norm split into non-thermic and thermic parts.

    Returns a dict with keys nonthermic, thermic, total and a
    ``refinement_flag`` set when doubling the v grid moves the thermic part
    by more than ``richardson_tol``.
    """
    spec = f.spectrum()
    phi = np.exp(-0.5 * (f.omega * cfg.phi_scale) ** 2)
    low = np.fft.irfft(phi * spec, n=f.n)
    nonthermic = _lp_norm(low, f.dx, cfg.ell)

    v = np.asarray(cfg.v_grid)
    _, prof = thermic_profile(f, cfg, v)
    thermic = _aggregate(v, prof, cfg.m)

    v_fine = np.geomspace(v[0], v[-1], 2 * len(v))
    _, prof_fine = thermic_profile(f, cfg, v_fine)
    thermic_fine = _aggregate(v_fine, prof_fine, cfg.m)
    denom = max(abs(thermic_fine), 1e-300)
    flag = abs(thermic_fine - thermic) / denom > richardson_tol

    return {
        "nonthermic": nonthermic,
        "thermic": thermic_fine,
        "total": nonthermic + thermic_fine,
        "refinement_flag": bool(flag),
    }


def validate_duality(f, g, cfg, cfg_conj, atol=1e-300):
    """|int f g| / (||f||_cfg ||g||_cfg') for conjugate configurations."""
    want = cfg.conjugate()
    if not (
        math.isclose(want.theta, cfg_conj.theta)
        and (want.ell == cfg_conj.ell or math.isclose(want.ell, cfg_conj.ell))
        and (want.m == cfg_conj.m or math.isclose(want.m, cfg_conj.m))
    ):
        raise ParameterError(
            "configurations are not conjugate (need 1/l+1/l'=1, 1/m+1/m'=1, "
            "opposite theta)"
        )
    if f.n != g.n or f.extent != g.extent:
        raise ParameterError("fields must share a grid")
    pairing = abs(float(np.sum(f.values * g.values) * f.dx))
    nf = thermic_norm(f, cfg)["total"]
    ng = thermic_norm(g, cfg_conj)["total"]
    if pairing <= atol:
        return 0.0
    return pairing / (nf * ng)


def validate_product_rule(f, g, rho, cfg_target):
    """||f g||_B / (||f||_{B^rho_{inf,inf}} ||g||_B) with B the target space.

    Requires rho > -beta, beta = cfg_target.theta < 0.
    """
    beta = cfg_target.theta
    if not rho > -beta:
        raise ParameterError(f"need rho > {-beta}, got {rho}")
    if f.n != g.n or f.extent != g.extent:
        raise ParameterError("fields must share a grid")
    cfg_rho = replace(cfg_target, theta=rho, ell=INF, m=INF)
    prod = SampledField(f.values * g.values, f.extent)
    num = thermic_norm(prod, cfg_target)["total"]
    nf = thermic_norm(f, cfg_rho)["total"]
    ng = thermic_norm(g, cfg_target)["total"]
    if num == 0.0:
        return 0.0
    return num / (nf * ng)


def estimate_regularity(f, alpha, v_window, ell=INF):
    """Least-squares regularity estimate from the thermic profile slope.

    For a field of regularity beta, ||d_v p * f||_ell ~ v^{beta/alpha - 1},
    so v * ||d_v p * f|| ~ v^{beta/alpha}; the fitted log-log slope times
    alpha estimates beta. ``v_window`` restricts the fit to the scales the
    field actually populates.
    """
    v_lo, v_hi = v_window
    v = np.geomspace(v_lo, v_hi, 48)
    cfg = ThermicConfig(theta=0.0, ell=ell, alpha=alpha)
    _, prof = thermic_profile(f, cfg, v)
    good = prof > 0
    if good.sum() < 8:
        raise DomainError("thermic profile vanishes on the fit window")
    slope = np.polyfit(np.log(v[good]), np.log(prof[good]), 1)[0]
    return float(alpha * slope)


def diverges_at(f, theta, alpha, v_window, margin=0.0, ell=INF):
    """True when the thermic norm at regularity ``theta`` diverges under
    refinement, i.e. when theta exceeds the measured regularity."""
    return theta > estimate_regularity(f, alpha, v_window, ell=ell) + margin


def taper(values, frac=0.1):
    """Cosine taper of the outer ``frac`` of a slice (periodization guard)."""
    n = len(values)
    k = max(2, int(frac * n))
    win = np.ones(n)
    ramp = 0.5 * (1.0 - np.cos(np.pi * np.arange(k) / k))
    win[:k] = ramp
    win[-k:] = ramp[::-1]
    return values * win
