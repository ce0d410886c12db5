import numpy as np
import pytest

from stableheat.density import kernel_table
from stableheat.params import BesovIndices, ParameterError, StableParams
from stableheat.parametrix import (NonContractionError, SolverConfig,
                                   chain_solve, diagnostics, duhamel_solve,
                                   duhamel_solve_grad)

ALPHA = 1.5
LIGHT = SolverConfig(ny=512, n_quad=12, n_slices=16)


@pytest.fixture(scope="module")
def sp():
    return StableParams(ALPHA)


@pytest.fixture(scope="module")
def tab(sp):
    return kernel_table(sp)


@pytest.fixture(scope="module")
def free(sp):
    return duhamel_solve(sp, None, 0.0, 0.0, 0.5, config=LIGHT,
                         with_grad=True)


def test_zero_drift_reproduces_kernel(free, tab):
    for i, t in enumerate(free.t_nodes):
        ref = tab(t, free.y)
        assert np.max(np.abs(free.values[i] - ref) / ref.max()) < 1e-12


def test_zero_drift_gradient(free, tab):
    g = -tab.grad(0.5, free.y)
    assert np.max(np.abs(free.grad_values[-1] - g)) < 1e-12


def test_mass_deficit_matches_tail(free, tab):
    # only slices whose self-similar width the grid resolves carry a
    # meaningful Riemann mass
    half = free.y[-1] - free.x
    dy = free.y[1] - free.y[0]
    checked = 0
    for i, t in enumerate(free.t_nodes):
        if t ** (1 / ALPHA) < 4 * dy:
            continue
        expect = tab.mass_within(t, half)
        assert free.mass[i] == pytest.approx(expect, abs=1e-3)
        checked += 1
    assert checked > 0


def test_constant_drift_translates(sp, tab):
    cfg = SolverConfig(ny=1024, n_quad=12)
    dg = duhamel_solve(sp, 1.0, 0.0, 0.0, 0.5, config=cfg)
    t = dg.t_nodes[-1]
    win = np.abs(dg.y - t) <= t ** (1 / ALPHA)
    ref = tab(t, dg.y - t)
    err = np.max(np.abs(dg.values[-1][win] - ref[win]) / ref[win])
    assert err < 5e-3  # light grid; the default config reaches < 1e-3


def test_residuals_decrease_and_converge(sp):
    dg = duhamel_solve(sp, 0.5, 0.0, 0.0, 0.25, config=LIGHT)
    assert dg.residuals[-1] < 5 * LIGHT.tol
    assert dg.iterations == len(dg.residuals)


def test_non_contraction_detected(sp):
    with pytest.raises(NonContractionError) as info:
        duhamel_solve(sp, 80.0, 0.0, 0.0, 0.5, config=LIGHT)
    assert info.value.ratio > 1


def test_gradient_finite_differences(sp):
    from scipy.interpolate import CubicSpline
    b = lambda t, x: 0.4 * np.sin(np.asarray(x))
    cfg = SolverConfig(ny=512, n_quad=12, n_slices=16)
    dx = 0.02
    up = duhamel_solve(sp, b, 0.0, dx, 0.25, config=cfg)
    dn = duhamel_solve(sp, b, 0.0, -dx, 0.25, config=cfg)
    gr = duhamel_solve_grad(sp, b, 0.0, 0.0, 0.25, config=cfg)
    y = np.linspace(-2, 2, 101)
    fd = (CubicSpline(up.y, up.values[-1])(y)
          - CubicSpline(dn.y, dn.values[-1])(y)) / (2 * dx)
    gg = CubicSpline(gr.y, gr.grad_values[-1])(y)
    assert np.max(np.abs(fd - gg)) / np.max(np.abs(gg)) < 1e-2


def test_chain_solve_extends_horizon(sp, tab):
    dg = chain_solve(sp, None, 0.0, 0.0, 2.0, config=LIGHT)
    ref = tab(2.0, dg.y)
    win = np.abs(dg.y) <= 2.0 ** (1 / ALPHA)
    assert np.max(np.abs(dg.values[-1][win] - ref[win]) / ref[win]) < 0.05
    assert dg.meta["chained_from"] == (0.0, 0.0)


def test_diagnostics_ratios(sp, free):
    bi = BesovIndices(-0.1)
    diag = diagnostics(free, 0.15, sp, bi)
    assert np.all(np.isfinite(diag.g)) and np.all(diag.g > 0)
    assert np.all(np.isfinite(diag.G))
    with pytest.raises(ParameterError):
        diagnostics(free, 0.5, sp, bi)  # outside the valid exponent range


def test_two_sided_ratio_window(free):
    h = free.h
    win = np.abs(free.y) <= 5.0
    assert h[:, win].min() > 0.2 and h[:, win].max() < 5.0


def test_csv_and_sidecar_export(tmp_path, free):
    free.to_csv(str(tmp_path / "grid.csv"))
    free.sidecar(str(tmp_path / "grid.json"))
    header = open(tmp_path / "grid.csv").readline().strip()
    assert header == "s,t,x,y,p,grad_p"
    import json
    doc = json.load(open(tmp_path / "grid.json"))
    assert doc["iterations"] == free.iterations
