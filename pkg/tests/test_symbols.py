import math
import pickle

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fockhankel.hankel import random_unitaries
from fockhankel.kernel import bergman_data, make_kernel
from fockhankel.symbols import (OperatorSymbol, SymbolError, bloch_seminorm, e_norm_ratio,
                                fejer_approx, fejer_by_convolution, lipschitz_check,
                                little_bloch_tail, parse_polynomial, q_matrix, q_norms,
                                random_symbol, symbol_from_literal, symbol_to_literal)
from fockhankel.weights import POWER2


def test_parse_polynomial_terms():
    T = parse_polynomial("z1 + 0.5*z1^3 - 2*z1*z2 + 1e-3", 2, 1)
    want = {(1, 0): 1.0, (3, 0): 0.5, (1, 1): -2.0, (0, 0): 1e-3}
    assert set(T.coeffs) == set(want)
    for k, v in want.items():
        assert T.coeffs[k][0, 0] == v
    assert set(parse_polynomial("z - z", 1, 1).coeffs) == set()


@pytest.mark.parametrize("text", ["z3", "z1**", "w", "", "z1+sin"])
def test_parse_polynomial_rejects(text):
    with pytest.raises(SymbolError):
        parse_polynomial(text, 2, 1)


def test_matrix_literals_round_trip():
    lit = [{"index": [1], "matrix": [[1, [0, 1]], [0, 2]]}, {"index": [0], "matrix": 3}]
    T = symbol_from_literal(lit, 1, 2)
    np.testing.assert_array_equal(T.coeffs[(1,)], [[1, 1j], [0, 2]])
    np.testing.assert_array_equal(T.coeffs[(0,)], 3 * np.eye(2))
    back = symbol_from_literal(symbol_to_literal(T), 1, 2)
    for k in T.coeffs:
        np.testing.assert_array_equal(back.coeffs[k], T.coeffs[k])


@pytest.mark.parametrize("lit", [[{"index": [1, 0], "matrix": 1}], [{"index": [1]}],
                                 [{"index": [1], "matrix": [[1, 2, 3]]}], 7])
def test_literal_errors(lit):
    with pytest.raises(SymbolError):
        symbol_from_literal(lit, 1, 2)


def test_immutable_and_picklable(rng):
    T = random_symbol(rng, 2, 2, 3)
    with pytest.raises(AttributeError):
        T.d = 3
    with pytest.raises(TypeError):
        T.coeffs[(9, 9)] = 1
    U = pickle.loads(pickle.dumps(T))
    z = np.array([0.3 + 0.2j, -1.0])
    np.testing.assert_allclose(U(z), T(z), atol=0)


def test_evaluation_derivative_composition(rng):
    T = random_symbol(rng, 2, 2, 3)
    z = np.array([0.7 - 0.1j, 0.2 + 0.4j])
    h = 1e-6
    for k in range(2):
        e = np.eye(2)[k] * h
        fd = (T(z + e) - T(z - e)) / (2 * h)
        np.testing.assert_allclose(T.derivative(k)(z), fd, atol=1e-8)
    U = random_unitaries(rng, 1, 2)[0]
    np.testing.assert_allclose(T.compose_unitary(U)(z), T(U @ z), atol=1e-12)


def test_gaussian_q_closed_forms(fock1, fock2):
    z = np.array([1.3 - 0.4j])
    T = parse_polynomial("z^2", 1, 1)
    assert math.isclose(q_matrix(T, bergman_data(fock1, z)).sqrt_norm, 2 * abs(z[0]), rel_tol=1e-12)
    T2 = parse_polynomial("z1 + 2*z2", 2, 1)
    # B = I so Q = |grad T|^2
    for w in [np.array([0.2, 1.0j]), np.array([3.0, -2.0 + 1j])]:
        assert math.isclose(q_matrix(T2, bergman_data(fock2, w)).norm, 5.0, rel_tol=1e-12)


def test_power2_linear_symbol_decays(p2_1):
    # Psi = r^2 gives B ~ 4|z|^2, so Q^{1/2} ~ 1/(2|z|)
    T = parse_polynomial("z", 1, 1)
    for x in (4.0, 8.0):
        q = q_norms(T, p2_1, [[x]])[0]
        assert abs(q * 2 * x - 1) < 0.05
    assert little_bloch_tail(T, p2_1, 5.0) == pytest.approx(0.1, rel=0.05)


@pytest.mark.parametrize("d", [1, 2])
def test_three_routes_agree(rng, d):
    c = make_kernel(POWER2, d)
    T = random_symbol(rng, d, 2, 3)
    for _ in range(4):
        z = rng.standard_normal(d) + 1j * rng.standard_normal(d)
        bd = bergman_data(c, z)
        Qs = [q_matrix(T, bd, r).Q for r in ("qt", "b2", "cj")]
        for Q in Qs[1:]:
            assert np.abs(Q - Qs[0]).max() <= 1e-9 * max(1.0, np.abs(Qs[0]).max())


def test_unknown_route(fock1):
    with pytest.raises(SymbolError):
        q_matrix(parse_polynomial("z", 1, 1), bergman_data(fock1, [1.0]), "nope")


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_q_unitary_covariance(seed):
    rng = np.random.default_rng(seed)
    c = make_kernel(POWER2, 2)
    T = random_symbol(rng, 2, 2, 2)
    U = random_unitaries(rng, 1, 2)[0]
    z = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    a = q_matrix(T.compose_unitary(U), bergman_data(c, z)).Q
    b = q_matrix(T, bergman_data(c, U @ z)).Q
    assert np.abs(a - b).max() <= 1e-9 * max(1.0, np.abs(b).max())


def test_constant_symbol_has_zero_seminorm(fock1):
    T = OperatorSymbol(1, 2, {(0,): np.eye(2)})
    assert bloch_seminorm(T, fock1) == 0.0


def test_scalar_e_ratio_is_one(p2_1, rng):
    T = parse_polynomial("z + 0.3*z^3", 1, 1)
    assert e_norm_ratio(T, p2_1, [1.2 + 0.5j], rng=rng) == pytest.approx(1.0, rel=1e-12)


def test_lipschitz_gaussian_linear(fock1):
    T = parse_polynomial("z", 1, 1)
    assert lipschitz_check(T, fock1, [0.2], [1.0 + 2.0j]) == pytest.approx(1.0, rel=1e-9)


def test_fejer_multiplier_matches_convolution(rng):
    T = random_symbol(rng, 1, 2, 6, density=1.0)
    z = np.array([0.8 + 0.6j])
    for N in (0, 1, 3, 8):
        np.testing.assert_allclose(fejer_approx(T, N)(z), fejer_by_convolution(T, N, z), atol=1e-12)
    assert fejer_approx(T, 0).is_constant()
