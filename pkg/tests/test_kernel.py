import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fockhankel._continuum import continuum_profile
from fockhankel.kernel import (KernelRangeError, _direct_profile, admissible_radius, bergman_data,
                               bergman_distance, eval_F, eval_kernel, eval_log_F, kernel_diag_check,
                               kernel_near_constancy, make_kernel, polyball_contains,
                               polyball_unitary_check, radial_profile, sample_polyball, unitary_to)
from fockhankel.hankel import random_unitaries
from fockhankel.weights import EXP, GAUSSIAN, POWER2


@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("t", [0.3, 2.0 + 1.0j, -4.0 + 0.5j, 25.0])
def test_gaussian_kernel_closed_form(d, t):
    c = make_kernel(GAUSSIAN, d)
    assert abs(eval_F(c, t) / (np.exp(t) / math.pi**d) - 1) < 1e-12


def test_norms_against_direct_quadrature_d1(p2_1):
    for n in (0, 3, 9):
        val, _ = integrate.quad(lambda rho: 2 * math.pi * rho ** (2 * n + 1) * math.exp(-rho**4),
                                0, 10, epsabs=0, epsrel=1e-12, limit=200)
        assert math.isclose(float(p2_1.log_w(np.array([n]))), math.log(val), rel_tol=1e-11)


def test_norms_against_direct_quadrature_d2():
    c = make_kernel(POWER2, 2)
    for nu in [(1, 2), (0, 3), (2, 2)]:
        val, _ = integrate.dblquad(lambda s2, s1: s1 ** nu[0] * s2 ** nu[1] * math.exp(-(s1 + s2) ** 2),
                                   0, 12, 0, 12, epsabs=0, epsrel=1e-11)
        assert math.isclose(float(c.log_w(np.array(nu))), math.log(math.pi**2 * val), rel_tol=1e-9)


@pytest.mark.parametrize("w", [POWER2, EXP], ids=lambda w: w.name)
def test_kernel_equals_monomial_expansion_d2(w):
    c = make_kernel(w, 2)
    z = np.array([0.4 + 0.3j, -0.2 + 0.5j])
    v = np.array([0.1 - 0.6j, 0.35 + 0.2j])
    total = 0.0
    for nu in product(range(60), repeat=2):
        if sum(nu) >= 60:
            continue
        total += np.prod(z ** np.array(nu)) * np.prod(np.conj(v) ** np.array(nu)) * math.exp(
            -float(c.log_w(np.array(nu))))
    assert abs(eval_kernel(c, z, v) - total) < 1e-12 * abs(total)


def test_hermitian_symmetry(exp1):
    z, v = np.array([1.1 + 0.2j]), np.array([-0.3 + 0.9j])
    assert abs(eval_kernel(exp1, z, v) - np.conj(eval_kernel(exp1, v, z))) < 1e-12 * abs(eval_kernel(exp1, z, v))


@pytest.mark.parametrize("w", [GAUSSIAN, POWER2, EXP], ids=lambda w: w.name)
@pytest.mark.parametrize("r", [0.3, 0.999, 1.001, 4.0, 9.0])
def test_log_derivatives_by_finite_differences(w, r):
    c = make_kernel(w, 2)
    h = 1e-4 * r
    lf = lambda x: float(radial_profile(c, np.array([x])).log_F[0])
    p = radial_profile(c, np.array([r]))
    G_fd = (lf(r + h) - lf(r - h)) / (2 * h)
    dG_fd = (lf(r + h) - 2 * lf(r) + lf(r - h)) / h**2
    assert math.isclose(p.G[0], G_fd, rel_tol=1e-6)
    assert math.isclose(p.dG[0], dG_fd, rel_tol=1e-4, abs_tol=1e-6 * abs(p.G[0]))


def test_bergman_matrix_is_complex_hessian():
    c = make_kernel(POWER2, 2)
    z = np.array([0.8 + 0.3j, -0.4 + 0.6j])

    def f(x):
        zz = x[:2] + 1j * x[2:]
        return float(radial_profile(c, np.array([np.vdot(zz, zz).real])).log_F[0])

    x0 = np.concatenate([z.real, z.imag])
    h = 1e-4
    H = np.zeros((4, 4))
    for a in range(4):
        for b in range(4):
            ea, eb = np.eye(4)[a] * h, np.eye(4)[b] * h
            H[a, b] = (f(x0 + ea + eb) - f(x0 + ea - eb) - f(x0 - ea + eb) + f(x0 - ea - eb)) / (4 * h * h)
    B = np.zeros((2, 2), dtype=complex)
    for i in range(2):
        for j in range(2):
            B[i, j] = 0.25 * ((H[i, j] + H[2 + i, 2 + j]) + 1j * (H[i, 2 + j] - H[2 + i, j]))
    bd = bergman_data(c, z)
    # B acts as xi^H B xi, the transpose of d_i dbar_j log K
    np.testing.assert_allclose(bd.B, B.T, atol=1e-6)
    np.testing.assert_allclose(bd.B @ bd.B_inv, np.eye(2), atol=1e-13)
    np.testing.assert_allclose(bd.B_inv_sqrt @ bd.B_inv_sqrt, bd.B_inv, atol=1e-13)


def test_continuum_matches_direct_sum_at_overlap():
    r = 200.0   # about 8e4 terms: both regimes are available
    c = make_kernel(POWER2, 1).covering(r)
    lF, G, dG = _direct_profile(c, np.array([r]))
    p = continuum_profile(POWER2, 1, r)
    assert math.isclose(p.log_F, lF[0], rel_tol=1e-12)
    assert math.isclose(p.G, G[0], rel_tol=1e-10)
    assert math.isclose(p.dG, dG[0], rel_tol=1e-6)


def test_continuum_gaussian_far_out():
    p = continuum_profile(GAUSSIAN, 1, 1e6)
    assert abs(p.log_F - 1e6 + math.log(math.pi)) < 1e-8
    assert math.isclose(p.G, 1.0, rel_tol=1e-12)


def test_radial_profile_switches_to_continuum(exp1):
    p = radial_profile(exp1, np.array([1.0, 36.0]))
    assert list(p.continuum) == [False, True]
    # K(z,z) e^{-Psi} ~ Phi'/pi; the ratio is O(1)
    assert abs(p.log_F_minus_psi[1] - (36.0 + math.log(37.0) - math.log(math.pi))) < 0.1


def test_no_silent_truncation(p2_1):
    with pytest.raises(KernelRangeError):
        eval_log_F(p2_1, 400.0, widen=False)
    assert math.isfinite(eval_log_F(p2_1, 400.0)[0])


@pytest.mark.parametrize("w,d,want", [(GAUSSIAN, 1, 1 / math.pi), (GAUSSIAN, 2, 1 / math.pi**2)])
def test_diagonal_closed_form(w, d, want):
    c = make_kernel(w, d)
    for x in (0.5, 2.0, 6.0):
        z = np.zeros(d, dtype=complex)
        z[0] = x
        assert math.isclose(kernel_diag_check(c, w, z), want, rel_tol=1e-10)


def test_gaussian_distance_is_euclidean(fock2):
    z, w = np.array([0.3 + 0.1j, -0.5j]), np.array([1.2, 0.4 + 0.4j])
    res = bergman_distance(fock2, z, w)
    assert math.isclose(res.value, np.linalg.norm(z - w), rel_tol=1e-10)


def test_distance_upper_bound_and_symmetry(p2_1):
    z, w = np.array([0.5 + 0.2j]), np.array([1.5 - 0.7j])
    a = bergman_distance(p2_1, z, w)
    b = bergman_distance(p2_1, w, z)
    assert a.value <= a.straight
    assert math.isclose(a.value, b.value, rel_tol=1e-3)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), a=st.sampled_from([0.1, 0.25, 0.5]))
def test_polyball_unitary_invariance(seed, a):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    U = random_unitaries(rng, 1, 2)[0]
    assert polyball_unitary_check(U, z, a, POWER2, 200, rng)


def test_unitary_to_maps_e1():
    z = np.array([0.3 - 1j, 2.0, 0.5j])
    U = unitary_to(z)
    np.testing.assert_allclose(U.conj().T @ U, np.eye(3), atol=1e-14)
    np.testing.assert_allclose(U[:, 0], z / np.linalg.norm(z), atol=1e-14)


def test_samples_lie_in_polyball(rng):
    z = np.array([1.0 + 1.0j, 0.5])
    pts = sample_polyball(z, POWER2, 0.25, 300, rng)
    assert polyball_contains(z, POWER2, 0.25, pts).all()


def test_near_constancy_and_admissible_radius(p2_1, rng):
    w = np.array([1.3 + 0.4j])
    assert kernel_near_constancy(p2_1, w, 0.1, 100, rng) > 0.9
    res = admissible_radius(p2_1, [w, np.array([2.5])], 100, rng)
    assert res.a in res.tried and res.tried[res.a] >= 0.5
