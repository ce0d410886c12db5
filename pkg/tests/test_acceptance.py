"""Acceptance suite: one test per shipped claim, run with pytest -v so the
per-test PASS/FAIL line is the per-criterion verdict.

Each test pins the tolerance stated in the repository contract and prints
the measured numbers for the record.
"""

import hashlib
import json
import math
import os

import numpy as np
import pytest

from stableheat.besov import (SampledField, ThermicConfig,
                              estimate_regularity, thermic_norm,
                              validate_duality, validate_product_rule)
from stableheat.density import (ComparatorKernel, ExactKernel, c_alpha,
                                comparability_constant, kernel_table)
from stableheat.drift import make_drift, mollify
from stableheat.params import (BesovIndices, StableParams,
                               l_integral_diverges, rho_range)
from stableheat.parametrix import SolverConfig, duhamel_solve
from stableheat.sim import StableSampler, estimate_marginal, euler_paths
from stableheat.verify import m_stabilization
from stableheat._rng import substream

INF = math.inf
SP = StableParams(1.5)


def test_criterion_01_stable_kernel_sanity():
    # mass within 1e-4, self-similarity within 1e-6 relative on |x| <= 20,
    # Chapman-Kolmogorov residual < 1e-3, for alpha in {1.2, 1.5, 1.8}
    for alpha in (1.2, 1.5, 1.8):
        sp = StableParams(alpha)
        kern = ExactKernel(sp)
        mass_err = abs(kern.mass(1.0) - 1.0)
        assert mass_err < 1e-4, f"alpha={alpha}: mass error {mass_err:.2e}"

        x = np.linspace(-20, 20, 161)
        t = 0.45
        direct = kern(t, x)
        scaled = t ** (-1 / alpha) * kern(1.0, x * t ** (-1 / alpha))
        ss = np.max(np.abs(direct - scaled) / scaled)
        assert ss < 1e-6, f"alpha={alpha}: self-similarity {ss:.2e}"

        y = np.arange(512) * 0.125 - 32.0
        p1 = kern(0.4, y)
        probe = y[::16]
        comp = np.array([np.sum(p1 * kern(0.6, z - y)) * 0.125
                         for z in probe])
        ck = np.max(np.abs(comp - kern(1.0, probe)))
        assert ck < 1e-3, f"alpha={alpha}: Chapman-Kolmogorov {ck:.2e}"
        print(f"alpha={alpha}: mass {mass_err:.1e} selfsim {ss:.1e} "
              f"CK {ck:.1e}")


def test_criterion_02_comparator_constants():
    # closed forms: c_alpha = alpha/2 = 0.75; unit moment = 2 C B(2, 1/2) = 2
    ca = c_alpha(SP)
    assert abs(ca - 0.75) < 1e-10, f"c_alpha = {ca!r}"
    mom = ComparatorKernel(SP).normalized_moment(1.0)
    assert abs(mom - 2.0) < 1e-6, f"moment = {mom!r}"
    print(f"c_alpha {ca!r} moment {mom!r}")


def test_criterion_03_two_sided_comparability():
    cs = {t: comparability_constant(SP, t=t, x_max=50.0) for t in (0.1, 1.0)}
    for t, c in cs.items():
        assert np.isfinite(c) and c > 1, f"t={t}: C={c}"
    drift_rel = abs(cs[0.1] - cs[1.0]) / cs[1.0]
    assert drift_rel < 0.05, f"t-instability {drift_rel:.3f}"
    print(f"C(0.1)={cs[0.1]:.4f} C(1)={cs[1.0]:.4f} drift {drift_rel:.2%}")


def test_criterion_04_sampler_fidelity():
    n = 1_000_000
    z = StableSampler(SP, seed=20240901).sample_increment(1.0, n)
    # exact CDF from the tabulated density plus analytic power tails
    tab = kernel_table(SP)
    xg = np.linspace(-400.0, 400.0, 400_001)
    pdf = tab(1.0, xg)
    cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) / 2)]) \
        * (xg[1] - xg[0])
    tail = 1.0 - cdf[-1]
    cdf = cdf + tail / 2  # split the residual mass symmetrically
    zs = np.sort(np.clip(z, xg[0], xg[-1]))
    fe = np.arange(1, n + 1) / n
    fx = np.interp(zs, xg, cdf)
    ks = max(np.max(np.abs(fe - fx)), np.max(np.abs(fe - 1.0 / n - fx)))
    assert ks < 5e-3, f"KS distance {ks:.2e}"
    cf_errs = [abs(float(np.mean(np.cos(lam * z))) - np.exp(-lam ** 1.5))
               for lam in (0.5, 1.0, 2.0)]
    assert max(cf_errs) < 3e-3, f"CF errors {cf_errs}"
    print(f"KS {ks:.2e} CF errors {[f'{e:.1e}' for e in cf_errs]}")


def test_criterion_05_duhamel_exactness():
    tab = kernel_table(SP)
    cfg = SolverConfig()  # default resolution

    free = duhamel_solve(SP, None, 0.0, 0.0, 0.5, config=cfg)
    worst = 0.0
    for i, t in enumerate(free.t_nodes):
        ref = tab(t, free.y)
        ok = ref > 1e-12
        worst = max(worst, float(np.max(np.abs(
            free.values[i][ok] / ref[ok] - 1.0))))
    assert worst < 1e-3, f"zero-drift sup-ratio {worst:.2e}"

    dg = duhamel_solve(SP, 1.0, 0.0, 0.0, 0.5, config=cfg)
    t = float(dg.t_nodes[-1])
    win = np.abs(dg.y - t) <= t ** (1 / 1.5)
    ref = tab(t, dg.y - t)
    rel = float(np.max(np.abs(dg.values[-1][win] - ref[win]) / ref[win]))
    assert rel < 1e-3, f"translated-kernel error {rel:.2e}"
    print(f"zero-drift {worst:.1e} constant-drift {rel:.1e}")


def test_criterion_06_parametrix_vs_monte_carlo():
    b = lambda t, x: 0.5 * np.cos(np.asarray(x))
    dg = duhamel_solve(SP, b, 0.0, 0.0, 0.5, config=SolverConfig())
    term, aborted = euler_paths(0.0, b, 0.5, 256, 1_000_000, SP, seed=42)
    assert aborted == 0
    grid = dg.y[np.abs(dg.y) <= 16.0]
    me = estimate_marginal(term, grid, 0.5, SP)
    i0 = int(np.searchsorted(dg.y, grid[0]))
    sol = dg.values[-1][i0:i0 + grid.size]
    dx = grid[1] - grid[0]
    l1 = float(np.sum(np.abs(me.density - sol)) * dx)
    assert l1 < 0.02, f"L1 distance {l1:.4f}"
    print(f"L1 {l1:.4f} (N=1e6, T=0.5)")


def test_criterion_07_mollification_contract():
    base = make_drift(BesovIndices(-0.1), 0.5, seed=11, J=8, sp=SP)
    meas = ThermicConfig(theta=-0.15, alpha=1.5)
    errs, sups = [], []
    for m in range(1, 9):
        bm = mollify(base, m)
        err = 0.0
        for i in range(base.n_time):
            diff = base.node_field(i).values - bm.node_field(i).values
            err = max(err, thermic_norm(
                SampledField(diff, base.extent), meas)["total"])
        errs.append(err)
        sups.append(bm.sup_norm())
    for a, b in zip(errs[:-1], errs[1:]):
        assert b <= 1.02 * a, f"errors not non-increasing: {errs}"
    ratio = errs[-1] / errs[0]
    assert ratio < 0.1, f"m=8 error still {ratio:.2%} of m=1"
    kappa = max(sups) / base.node_field(0).values.__abs__().max()
    assert np.isfinite(kappa)
    print(f"error ratio m8/m1 {ratio:.4f}; sup-norm inflation {kappa:.3f}")


def test_criterion_08_constants_stabilize():
    bi = BesovIndices(-0.1)
    base = make_drift(bi, 0.5, seed=11, J=8, sp=SP)
    rep = m_stabilization(base, [2, 4, 6, 8], SP, bi, 0.15, T=0.5,
                          config=SolverConfig(ny=1024, n_quad=12))
    for lv, row in zip(rep.levels, rep.rows):
        assert "error" not in row, f"level {lv}: {row.get('error')}"
        for key in ("C1_lower", "C1_upper", "C2", "C3", "C4"):
            assert np.isfinite(row[key]), f"level {lv}: {key} not finite"
    a, b = rep.rows[-2], rep.rows[-1]
    for key in ("C1_lower", "C1_upper", "C2", "C3", "C4"):
        change = abs(b[key] - a[key]) / abs(a[key])
        assert change < 0.10, f"{key} moved {change:.1%} between m=6 and m=8"
    assert rep.verdict == "stable"
    print("last level:", {k: round(rep.rows[-1][k], 4)
                          for k in ("C1_lower", "C1_upper", "C2", "C3",
                                    "C4")})


def test_criterion_09_integrability_threshold():
    bi = BesovIndices(-0.1)
    lo, hi = rho_range(bi, SP)
    threshold = hi  # gamma - beta
    rhos = np.linspace(threshold - 0.05, threshold + 0.05, 21)
    rhos = rhos[np.abs(rhos - threshold) > 1e-9][:20]
    for rho in rhos:
        diverges = l_integral_diverges(SP, bi, float(rho))
        assert diverges == (rho > threshold), \
            f"rho={rho:.4f}: diverges={diverges}"
    print(f"20 classifications correct around rho = {threshold}")


def test_criterion_10_besov_machinery():
    rng = substream(77, "acceptance-besov")
    n, extent = 1024, 16.0

    def rand_field():
        spec = rng.normal(size=n // 2 + 1) + 1j * rng.normal(size=n // 2 + 1)
        spec *= np.exp(-0.1 * np.arange(n // 2 + 1))
        return SampledField.from_spectrum(spec, extent, n)

    for _ in range(100):
        f = rand_field()
        lo = thermic_norm(f, ThermicConfig(theta=0.1, alpha=1.5))
        hi = thermic_norm(f, ThermicConfig(theta=0.4, alpha=1.5))
        assert hi["thermic"] >= lo["thermic"]

    cfg = ThermicConfig(theta=0.2, alpha=1.5)
    dual_max, prod_max = 0.0, 0.0
    for _ in range(100):
        f, g = rand_field(), rand_field()
        dual_max = max(dual_max,
                       validate_duality(f, g, cfg, cfg.conjugate()))
        prod_max = max(prod_max, validate_product_rule(f, g, 0.3, cfg))
    assert np.isfinite(dual_max) and np.isfinite(prod_max)

    for beta in (-0.05, -0.1, -0.2):
        b = make_drift(BesovIndices(beta), 1.0, seed=5, J=8, sp=SP,
                       check_bracket=False)
        est = estimate_regularity(b.node_field(0), 1.5,
                                  b.regularity_window(1.5), ell=2)
        assert beta - 0.05 < est < beta + 0.05, \
            f"beta={beta}: detector {est:.4f}"
    print(f"duality max {dual_max:.3f} product max {prod_max:.3f}")


def test_criterion_11_determinism(tmp_path):
    from stableheat.cli import main

    cfg = {"solver": {"ny": 256, "n_quad": 8, "T": 0.125, "n_slices": 8},
           "simulation": {"n_paths": 2000, "steps": 8},
           "besov": {"n_fields": 3},
           "drift": {"builtin": "zero"}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))

    def run(out):
        for cmd in ("check-params", "density", "besov", "simulate",
                    "solve"):
            rc = main([cmd, "--config", str(path), "--out", str(out)])
            assert rc == 0
        h = hashlib.sha256()
        for name in sorted(os.listdir(out)):
            h.update(name.encode())
            h.update(open(os.path.join(out, name), "rb").read())
        return h.hexdigest()

    d1 = run(tmp_path / "run1")
    d2 = run(tmp_path / "run2")
    assert d1 == d2, "pipeline artifacts differ between identical reruns"
    print(f"pipeline digest {d1[:16]} reproduced")
