import math

import numpy as np
import pytest

from stableheat.params import (BesovIndices, DomainError, ParameterError,
                               StableParams, check_gr, eval_L,
                               l_integral_diverges, rho_range,
                               serrin_exponent)

INF = math.inf


def test_reference_configuration_indices():
    sp = StableParams(1.5)
    bi = BesovIndices(-0.1)
    adm = check_gr(sp, bi)
    assert adm.gr
    assert adm.theta == pytest.approx(1.4)
    assert adm.gamma == pytest.approx(0.15)


def test_rho_range_reference():
    lo, hi = rho_range(BesovIndices(-0.1), StableParams(1.5))
    assert lo == pytest.approx(0.1)
    assert hi == pytest.approx(0.25)


def test_alpha_must_exceed_one():
    with pytest.raises(ParameterError):
        StableParams(0.9)
    with pytest.raises(ParameterError):
        StableParams(2.0)


def test_beta_positive_rejected():
    with pytest.raises(ParameterError):
        BesovIndices(0.1)


def test_gr_fails_for_rough_beta():
    # beta = -0.4 at alpha = 1.5, p = r = inf: gamma = -0.15 < 0
    adm = check_gr(StableParams(1.5), BesovIndices(-0.4))
    assert not adm.gr
    assert adm.gamma == pytest.approx(-0.15)


def test_singularity_weight_hand_value():
    # (t-s)^{beta/a} (t-u)^{-1/a} * 2 * ((t-s)^{z/a}((t-u)^{-z/a}+(u-s)^{-z/a})+1)
    # at s=0, u=0.5, t=1, zeta=0.2, alpha=1.5, beta=-0.1, p=inf
    val = eval_L(0.5, 0.0, 1.0, 0.2, StableParams(1.5), BesovIndices(-0.1))
    assert val == pytest.approx(10.139206610305392, rel=1e-12)


def test_singularity_weight_domain_checks():
    sp, bi = StableParams(1.5), BesovIndices(-0.1)
    with pytest.raises(DomainError):
        eval_L(1.5, 0.0, 1.0, 0.2, sp, bi)
    with pytest.raises(DomainError):
        eval_L(0.5, 0.0, 1.0, 0.05, sp, bi)  # zeta below -beta


def test_serrin_exponent_threshold():
    sp, bi = StableParams(1.5), BesovIndices(-0.1)
    # r'(1 + d/p + 2 rho)/alpha < 1 iff the integral converges; r = inf
    # gives r' = 1 and the flip sits at rho = gamma - beta = 0.25
    assert serrin_exponent(0.2, sp, bi) < 1
    assert serrin_exponent(0.3, sp, bi) > 1


def test_divergence_detector_matches_exponent():
    sp, bi = StableParams(1.5), BesovIndices(-0.1)
    assert not l_integral_diverges(sp, bi, 0.2)
    assert l_integral_diverges(sp, bi, 0.3)
