import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import gammaln

from fockhankel import _accel
from fockhankel.moments import compute_moments, panel_sums
from fockhankel.weights import EXP, GAUSSIAN, POWER2, make_weight


@pytest.mark.parametrize("d", [1, 2, 3])
def test_gaussian_moments_are_factorials(d):
    mt = compute_moments(GAUSSIAN, d, 150)
    k = np.arange(151)
    np.testing.assert_allclose(mt.log_m, gammaln(k + d), rtol=1e-12, atol=1e-12)
    assert mt.rel_err.max() <= 1e-10


@pytest.mark.parametrize("s", [2.0, 3.0])
def test_power_moments_closed_form(s):
    # int_0^inf x^a e^{-x^s} dx = Gamma((a+1)/s) / s
    w = make_weight("power", {"s": s})
    mt = compute_moments(w, 2, 300)
    a = np.arange(301) + 1.0
    np.testing.assert_allclose(mt.log_m, gammaln((a + 1) / s) - math.log(s), rtol=1e-12)


def test_exp_moments_against_adaptive_quadrature():
    mt = compute_moments(EXP, 1, 40)
    for k in (0, 1, 5, 17, 40):
        val, _ = integrate.quad(lambda s: s**k * math.exp(-math.exp(s)), 0, 60, limit=400,
                                epsabs=0, epsrel=1e-13)
        assert math.isclose(mt.log_m[k], math.log(val), rel_tol=1e-11, abs_tol=1e-12)


def test_growing_the_table_keeps_entries():
    small = compute_moments(POWER2, 1, 20).log_m.copy()
    big = compute_moments(POWER2, 1, 400).log_m
    np.testing.assert_array_equal(big[:21], small)


def test_log_convex_in_k():
    for w in (GAUSSIAN, POWER2, EXP):
        lm = compute_moments(w, 1, 200).log_m
        assert np.all(lm[2:] - 2 * lm[1:-1] + lm[:-2] > 0)


@pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not importable")
def test_numba_and_numpy_panel_sums_agree(monkeypatch):
    a = np.arange(1.0, 400.0)
    for w in (GAUSSIAN, POWER2, EXP):
        c = w.phi_inverse(a)
        lo, hi = np.maximum(c - 5 * np.sqrt(a + 1), 0), c + 5 * np.sqrt(a + 1) + 5
        monkeypatch.setattr(_accel, "USE_NUMBA", True)
        x = panel_sums(w.code, w.s, a, c, lo, hi, 16)
        monkeypatch.setattr(_accel, "USE_NUMBA", False)
        y = panel_sums(w.code, w.s, a, c, lo, hi, 16)
        np.testing.assert_allclose(x, y, rtol=1e-13)


def test_env_flag_selects_numpy_path():
    import subprocess
    import sys

    code = "from fockhankel import _accel; print(_accel.USE_NUMBA)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env={"FOCKHANKEL_NUMBA": "0", "PATH": ""}, check=True).stdout.strip()
    assert out == "False"
