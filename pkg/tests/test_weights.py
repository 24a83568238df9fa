import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fockhankel.weights import (EXP, GAUSSIAN, POWER2, InadmissibleWeightError, class_s_diagnostic,
                                growth_estimates, make_weight)

WEIGHTS = [GAUSSIAN, POWER2, make_weight("power", {"s": 3}), EXP]
X = np.geomspace(1e-2, 20.0, 40)


@pytest.mark.parametrize("w", WEIGHTS, ids=lambda w: w.name)
def test_derivatives_match_finite_differences(w):
    h = 1e-5 * X
    fd1 = (w.psi(X + h) - w.psi(X - h)) / (2 * h)
    fd2 = (w.dpsi(X + h) - w.dpsi(X - h)) / (2 * h)
    fd3 = (w.d2psi(X + h) - w.d2psi(X - h)) / (2 * h)
    np.testing.assert_allclose(w.dpsi(X), fd1, rtol=1e-7)
    np.testing.assert_allclose(w.d2psi(X), fd2, rtol=1e-7, atol=1e-12)
    np.testing.assert_allclose(w.d3psi(X), fd3, rtol=1e-6, atol=1e-10)


@pytest.mark.parametrize("w", WEIGHTS, ids=lambda w: w.name)
def test_phi_and_log_forms(w):
    np.testing.assert_allclose(w.phi(X), X * w.dpsi(X), rtol=1e-14)
    np.testing.assert_allclose(w.dphi(X), w.dpsi(X) + X * w.d2psi(X), rtol=1e-14)
    np.testing.assert_allclose(np.exp(w.log_dphi(X)), w.dphi(X), rtol=1e-12)
    np.testing.assert_allclose(np.exp(w.log_dpsi(X)), w.dpsi(X), rtol=1e-12)


@pytest.mark.parametrize("w", WEIGHTS, ids=lambda w: w.name)
@settings(max_examples=40, deadline=None)
@given(a=st.floats(1e-3, 1e4))
def test_phi_inverse_round_trip(w, a):
    x = float(w.phi_inverse(np.array(a)))
    assert math.isclose(float(w.phi(np.array(x))), a, rel_tol=1e-10)


def test_psi_offset_avoids_cancellation():
    c = np.array([50.0])
    t = np.array([1e-9])
    np.testing.assert_allclose(EXP.psi_offset(c, t), math.exp(50.0) * math.expm1(1e-9), rtol=1e-12)
    np.testing.assert_allclose(POWER2.psi_offset(c, t), 2 * 50 * 1e-9 + 1e-18, rtol=1e-12)


@pytest.mark.parametrize("family,params", [("power", {"s": 1.5}), ("power", {"s": 0.5}),
                                           ("cosh", None), ("gaussian", {"eta": 0.6})])
def test_inadmissible_weights_rejected(family, params):
    with pytest.raises(InadmissibleWeightError):
        make_weight(family, params)


def test_inline_power_name():
    assert make_weight("power-2") == POWER2
    assert make_weight("power-3").s == 3.0


def test_class_s_reported():
    rep = class_s_diagnostic(POWER2, "phi")
    assert rep.passed and 0 < rep.max_ratio < rep.ceiling
    # the gaussian has Phi'' = 0, so the ratio vanishes
    assert class_s_diagnostic(GAUSSIAN, "phi").max_ratio == 0.0
    est = growth_estimates(EXP)
    assert set(est) == {"A", "B"} and all(math.isfinite(v) for v in est.values())
