"""Measured-constant reports: extremal ratios of the solved density against
the comparator bounds, mollification-level stabilization, and empirical
validation of the Besov estimate for comparator/kernel products.

Constants are grid maxima over a declared compact window (the window is
part of the report); stabilization between the last two mollification
levels uses a fixed 10% rule. Both conventions are reporting choices,
stated in every artifact.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .besov import SampledField, ThermicConfig, thermic_norm
from .density import ComparatorKernel, kernel_table
from .drift import mollify
from .params import DomainError, ParameterError, eval_L
from .parametrix import SolverConfig, duhamel_solve

INF = math.inf
SCHEMA_VERSION = "stableheat-report-1"
STABILIZATION_TOL = 0.10
CONSTANT_KEYS = ("C1_lower", "C1_upper", "C2", "C3", "C4")


class ConfigMismatchError(ValueError):
    pass


@dataclass
class BoundReport:
    """Per-level measured constants with a stabilization verdict.

    rows[i] holds the constants measured at levels[i]; a failed solve is
    recorded as {"error": message} and makes the verdict inconclusive.
    distances[i] is the sup distance between the density grids at
    levels[i] and levels[i+1] on the compact window.
    """

    experiment: str
    params: dict
    window: float
    levels: list
    rows: list
    distances: list = field(default_factory=list)
    verdict: str = "inconclusive"
    notes: list = field(default_factory=list)

    def __post_init__(self):
        for row in self.rows:
            if "error" in row:
                continue
            if not (0 < row["C1_lower"]
                    and 1.0 / row["C1_lower"] <= row["C1_upper"]):
                raise ParameterError("two-sided constants must bracket the "
                                     "ratio: need 1/C_lower <= C_upper > 0")

    def to_json(self, path=None):
        doc = {
            "schema": SCHEMA_VERSION,
            "experiment": self.experiment,
            "params": self.params,
            "window": self.window,
            "stabilization_rule": ("relative change of each constant between "
                                   "the last two levels < 10%"),
            "window_rule": "constants are grid maxima over |y-x| <= window",
            "levels": list(self.levels),
            "rows": self.rows,
            "distances": [float(d) for d in self.distances],
            "verdict": self.verdict,
            "notes": list(self.notes),
        }
        text = json.dumps(doc, indent=1, sort_keys=True, default=float)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def to_csv(self, path):
        cols = ["level"] + list(CONSTANT_KEYS) + ["distance_to_next"]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for i, (lv, row) in enumerate(zip(self.levels, self.rows)):
                if "error" in row:
                    vals = ["nan"] * len(CONSTANT_KEYS)
                else:
                    vals = [repr(float(row[k])) for k in CONSTANT_KEYS]
                d = (repr(float(self.distances[i]))
                     if i < len(self.distances) else "")
                fh.write(",".join([str(lv)] + vals + [d]) + "\n")


def _stabilization_verdict(rows):
    """Fixed rule: every constant moves < 10% between the last two levels."""
    if any("error" in r for r in rows) or len(rows) < 2:
        return "inconclusive"
    a, b = rows[-2], rows[-1]
    for k in CONSTANT_KEYS:
        va, vb = a.get(k), b.get(k)
        if va is None or vb is None:
            continue
        if not (np.isfinite(va) and np.isfinite(vb)):
            return "unstable"
        if abs(vb - va) > STABILIZATION_TOL * max(abs(va), 1e-300):
            return "unstable"
    return "stable"


# ---------------------------------------------------------------------------
# Heat-kernel bound constants
# ---------------------------------------------------------------------------

def check_heat_kernel_bounds(dg, rho, window=None):
    """Extremal ratios of a converged density grid against the comparator.

    Measures, over the window |y-x| <= window and all time slices:
      C1_lower/C1_upper  two-sided bounds of p / pbar,
      C2                 sup of (t-s)^{1/a} |grad_x p| / pbar,
      C3                 Holder-in-y constant of p at scale (t-s)^{1/a},
      C4                 the same for the gradient (extra (t-s)^{1/a}).
    Gradient constants are None when the grid carries no gradient. Returns
    a report row (plain dict).
    """
    alpha = dg.meta.get("alpha", 1.5)
    T = float(dg.t_nodes[-1] - dg.s)
    if window is None:
        window = 10.0 * T ** (1.0 / alpha)
    # the window shrinks self-similarly with the slice time, so every slice
    # is measured at the same diagonal scale (its far tail is below the
    # grid's resolving power at short times)
    off = np.abs(dg.y - dg.x)
    wins = [off <= window * ((t - dg.s) / T) ** (1.0 / alpha)
            for t in dg.t_nodes]
    if not np.any(wins[-1]):
        raise ParameterError("window contains no grid points")

    h_lo, h_hi, g_hi = np.inf, 0.0, 0.0
    gh = dg.grad_h
    for i, w in enumerate(wins):
        if not np.any(w):
            continue
        hw = dg.h[i][w]
        hw = hw[hw > 0]  # floored far-tail zeros carry no information
        if hw.size:
            h_lo = min(h_lo, float(hw.min()))
            h_hi = max(h_hi, float(hw.max()))
        if gh is not None:
            g_hi = max(g_hi, float(np.max(np.abs(gh[i][w]))))
    row = {
        "C1_lower": float(1.0 / h_lo),
        "C1_upper": float(h_hi),
        "C2": None, "C3": None, "C4": None,
        "window": float(window),
        "holder_skipped": False,
        "rho": float(rho),
    }
    if gh is not None:
        row["C2"] = g_hi

    if dg.y.size < 2:
        row["holder_skipped"] = True
        return row
    dy = dg.y[1] - dg.y[0]

    c3, c4 = 0.0, 0.0
    any_pair = False
    for i, t in enumerate(dg.t_nodes):
        ts = float(t - dg.s)
        kmax = int(ts ** (1.0 / alpha) / dy)
        if kmax < 1:
            continue
        any_pair = True
        p = dg.values[i]
        pb = dg.pbar[i]
        g = dg.grad_values[i] if dg.grad_values is not None else None
        for k in range(1, kmax + 1):
            sep = k * dy
            ok = wins[i][:-k] & wins[i][k:]
            if not np.any(ok):
                continue
            denom = (sep ** rho) * (pb[:-k] + pb[k:])[ok]
            dp = np.abs(p[k:] - p[:-k])[ok]
            c3 = max(c3, float(np.max(dp * ts ** (rho / alpha) / denom)))
            if g is not None:
                dgk = np.abs(g[k:] - g[:-k])[ok]
                c4 = max(c4, float(np.max(
                    dgk * ts ** ((1.0 + rho) / alpha) / denom)))
    if not any_pair:
        row["holder_skipped"] = True
        return row
    row["C3"] = c3
    if dg.grad_values is not None:
        row["C4"] = c4
    return row


def m_stabilization(base_drift, levels, sp, bi, rho, s=0.0, x=0.0, T=0.5,
                    config=None, with_grad=True, window=None,
                    experiment="m-stabilization"):
    """Solve the smoothed equation across mollification levels and report
    whether the measured constants stabilize.

    Requires at least three increasing levels. A solver failure at any
    level is recorded in its row and the verdict becomes inconclusive.
    """
    levels = list(levels)
    if len(levels) < 3:
        raise ParameterError("need at least three mollification levels")
    if any(nxt <= prev for prev, nxt in zip(levels[:-1], levels[1:])):
        raise ParameterError("levels must be strictly increasing")
    cfg = config or SolverConfig()
    alpha = sp.alpha
    if window is None:
        window = 10.0 * T ** (1.0 / alpha)

    rows, grids = [], []
    for m in levels:
        bm = mollify(base_drift, m)
        try:
            dg = duhamel_solve(sp, bm, s, x, T, config=cfg,
                               with_grad=with_grad)
            rows.append(check_heat_kernel_bounds(dg, rho, window=window))
            grids.append(dg)
        except Exception as exc:  # recorded, not raised: verdict handles it
            rows.append({"error": f"{type(exc).__name__}: {exc}"})
            grids.append(None)

    distances = []
    for a, b in zip(grids[:-1], grids[1:]):
        if a is None or b is None:
            distances.append(float("nan"))
            continue
        in_win = np.abs(a.y - a.x) <= window
        distances.append(float(np.max(np.abs(a.values - b.values)[:, in_win])))

    report = BoundReport(
        experiment=experiment,
        params={"alpha": sp.alpha, "dim": sp.dim, "beta": bi.beta,
                "p": bi.p, "q": bi.q, "r": bi.r, "rho": float(rho),
                "T": float(T), "s": float(s), "x": float(x)},
        window=float(window),
        levels=levels,
        rows=rows,
        distances=distances,
        verdict=_stabilization_verdict(rows),
    )
    if any("error" in r for r in rows):
        report.notes.append("solver failure at one or more levels")
    return report


# ---------------------------------------------------------------------------
# Besov estimate for comparator/kernel products
# ---------------------------------------------------------------------------

def _product_field(sp, us, tu, x, y, j, k, extent, n):
    """D^j pbar(u-s, x-.) * D^k p_a(t-u, y-.) sampled on a centered grid."""
    pb = ComparatorKernel(sp)
    tab = kernel_table(sp)
    z = (np.arange(n) - n // 2) * (extent / n)
    left = pb.grad(us, x - z) if j == 1 else pb(us, x - z)
    right = tab.grad(tu, y - z) if k == 1 else tab(tu, y - z)
    return SampledField(left * right, extent)


def _norm_config(sp, bi):
    """Thermic norm of index -beta with conjugate integrabilities."""
    conj = ThermicConfig(theta=bi.beta, ell=bi.p, m=bi.q,
                         alpha=sp.alpha).conjugate()
    return conj


def validate_besov_kernel_lemma(sp, bi, s, u, t, x, y, zeta, j=0, k=1,
                                extent=64.0, n=4096):
    """Ratio of the measured Besov norm of the kernel product to the
    closed-form singular bound.

    Left side: ||D^j pbar(u-s, x-.) D^k p_a(t-u, y-.)|| in the dual Besov
    space of the drift. Right side: pbar(t-s, x-y) times the singularity
    weight with the extra (u-s)^{-j/a} (t-u)^{-k/a} kernel factors.
    """
    if not (s < u < t):
        raise DomainError(f"need s < u < t, got {s}, {u}, {t}")
    if j not in (0, 1) or k not in (0, 1):
        raise ParameterError("j and k must be 0 or 1")
    a = sp.alpha
    us, tu, ts = u - s, t - u, t - s
    f = _product_field(sp, us, tu, x, y, j, k, extent, n)
    res = thermic_norm(f, _norm_config(sp, bi))
    lhs = res["total"]
    if not np.isfinite(lhs):
        raise ArithmeticError("thermic norm did not converge")
    pb = ComparatorKernel(sp)
    rhs = (float(pb(ts, x - y)) * eval_L(u, s, t, zeta, sp, bi)
           * tu ** (1.0 / a) * us ** (-j / a) * tu ** (-k / a))
    return lhs / rhs


def validate_besov_kernel_lemma_difference(sp, bi, s, u, t, x, y, w, zeta,
                                           extent=64.0, n=4096):
    """Difference variant: the normalized kernel-gradient increment between
    base points w and y, measured in the dual Besov norm, against
    |w-y|^zeta (t-u)^{-zeta/a} times the singularity weight.
    """
    if not (s < u < t):
        raise DomainError(f"need s < u < t, got {s}, {u}, {t}")
    if w == y:
        return 0.0
    a = sp.alpha
    us, tu, ts = u - s, t - u, t - s
    pb = ComparatorKernel(sp)
    tab = kernel_table(sp)
    z = (np.arange(n) - n // 2) * (extent / n)
    vals = pb(us, x - z) * (tab.grad(tu, w - z) / float(pb(ts, w - x))
                            - tab.grad(tu, y - z) / float(pb(ts, y - x)))
    f = SampledField(vals, extent)
    lhs = thermic_norm(f, _norm_config(sp, bi))["total"]
    if not np.isfinite(lhs):
        raise ArithmeticError("thermic norm did not converge")
    rhs = abs(w - y) ** zeta * tu ** (-zeta / a) \
        * eval_L(u, s, t, zeta, sp, bi)
    return lhs / rhs


# ---------------------------------------------------------------------------
# Cross-validation against Monte Carlo
# ---------------------------------------------------------------------------

def cross_validate(dg, me):
    """L1-on-grid and sup-on-diagonal-window distances between a solved
    density grid and a Monte Carlo marginal, with rough kernel-estimate
    error bars.
    """
    if abs(me.t - float(dg.t_nodes[-1])) > 1e-12:
        raise ConfigMismatchError(
            f"marginal at t={me.t}, grid ends at t={float(dg.t_nodes[-1])}")
    g = me.grid
    if g[0] < dg.y[0] - 1e-12 or g[-1] > dg.y[-1] + 1e-12:
        raise ConfigMismatchError("marginal grid exceeds the density grid")
    dxs = np.diff(g)
    if not np.allclose(dxs, dxs[0]):
        raise ConfigMismatchError("marginal grid must be uniform")
    dy = dg.y[1] - dg.y[0]
    off = (g[0] - dg.y[0]) / dy
    if abs(off - round(off)) > 1e-8 or abs(dxs[0] - dy) > 1e-12:
        raise ConfigMismatchError("marginal grid is shifted against the "
                                  "density grid")
    i0 = int(round(off))
    sol = dg.values[-1][i0:i0 + g.size]

    dx = float(dxs[0])
    alpha = dg.meta.get("alpha", 1.5)
    T = float(dg.t_nodes[-1] - dg.s)
    diff = np.abs(me.density - sol)
    diag = np.abs(g - dg.x) <= T ** (1.0 / alpha)

    # kernel-estimate standard error: sqrt(p R(K) / (N h)) pointwise, with
    # R(K) the squared-kernel mass of the comparator at unit bandwidth
    r_k = 2.0 / (2.0 * alpha + 1.0)
    ca = dg.meta.get("c_alpha", 0.75)
    se = np.sqrt(np.maximum(me.density, 0.0) * ca ** 2 * r_k
                 / (me.n_samples * me.bandwidth))
    out = {
        "l1": float(np.sum(diff) * dx),
        "l1_error_bar": float(np.sum(se) * dx),
        "sup_diagonal": float(np.max(diff[diag])) if np.any(diag)
        else float("nan"),
        "sup_diagonal_error_bar": float(np.max(se[diag])) if np.any(diag)
        else float("nan"),
        "n_samples": int(me.n_samples),
        "bandwidth": float(me.bandwidth),
    }
    return out
