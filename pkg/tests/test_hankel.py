import math
import warnings
from math import comb

import numpy as np
import pytest

from fockhankel.hankel import (ConsistencyError, MixedPoly, SchattenRegimeWarning, assemble_hankel,
                               besov_integral, classify_growth, gram_consistency_check,
                               hankel_apply_basis, hankel_kernel_gram, hs_growth,
                               hs_multiplier_identity_check, hs_sum, kernel_degree, m4_bound_ratio,
                               mo_schatten_integral, multi_indices, operator_norm, random_polynomial,
                               schatten_norm, singular_values, trace_identity_check)
from fockhankel.kernel import make_kernel
from fockhankel.symbols import OperatorSymbol, bloch_seminorm, parse_polynomial, random_symbol
from fockhankel.weights import EXP, POWER2


@pytest.mark.parametrize("d,N", [(1, 7), (2, 5), (3, 4)])
def test_multi_index_count_and_order(d, N):
    idx = multi_indices(d, N)
    assert len(idx) == comb(N + d, d) == len(set(idx))
    degs = [sum(i) for i in idx]
    assert degs == sorted(degs)


def test_fock_linear_symbol_has_unit_singular_values(fock1):
    # ||H e_n||^2 = (n + 1) - n = 1 on the Fock space
    s = singular_values(assemble_hankel(parse_polynomial("z", 1, 1), fock1, 12))
    np.testing.assert_allclose(s, 1.0, atol=1e-12)


def test_gram_entries_match_expansions(rng):
    c = make_kernel(POWER2, 2)
    T = random_symbol(rng, 2, 2, 2)
    th = assemble_hankel(T, c, 4)
    m = T.m
    pick = [0, 3, 7, 11]
    for a in pick:
        for b in pick:
            na, nb = th.basis[a], th.basis[b]
            for i in range(m):
                for j in range(m):
                    ha = hankel_apply_basis(T, c, na, i)
                    hb = hankel_apply_basis(T, c, nb, j)
                    val = ha.inner(hb) / math.exp(0.5 * float(c.log_w(na) + c.log_w(nb)))
                    assert abs(th.M[a * m + i, b * m + j] - val) < 1e-10 * max(1.0, abs(val))


@pytest.mark.parametrize("weight", [POWER2, EXP], ids=lambda w: w.name)
def test_gram_psd_and_consistency(rng, weight):
    c = make_kernel(weight, 2)
    T = random_symbol(rng, 2, 2, 3)
    th = assemble_hankel(T, c, 6)
    assert th.eigenvalues().min() >= 0
    np.testing.assert_allclose(th.M, th.M.conj().T, atol=0)
    chk = gram_consistency_check(th, random_polynomial(rng, 2, 2, 6))
    assert chk.rel_err < 1e-10


def test_constant_symbol_is_zero_operator(p2_1):
    T = OperatorSymbol(1, 2, {(0,): [[1, 2], [3, 4]]})
    th = assemble_hankel(T, p2_1, 8)
    assert operator_norm(th) == 0.0 and hs_sum(th) == 0.0


def test_truncation_monotone(rng, p2_1):
    T = random_symbol(rng, 1, 2, 2)
    norms = [operator_norm(assemble_hankel(T, p2_1, N)) for N in (4, 8, 12, 16)]
    assert all(b >= a - 1e-12 for a, b in zip(norms, norms[1:]))


def test_upper_bound_power2_linear(p2_1):
    T = parse_polynomial("z", 1, 1)
    ratio = m4_bound_ratio(assemble_hankel(T, p2_1, 20), bloch_seminorm(T, p2_1))
    assert ratio <= 1.1


def test_schatten_norms(rng, p2_1):
    th = assemble_hankel(random_symbol(rng, 1, 2, 2), p2_1, 10)
    s = singular_values(th)
    assert math.isclose(schatten_norm(th, 2), math.sqrt(hs_sum(th)), rel_tol=1e-10)
    assert math.isclose(schatten_norm(th, 4), float(np.sum(s**4) ** 0.25), rel_tol=1e-12)
    with pytest.warns(SchattenRegimeWarning):
        schatten_norm(th, 1.5)
    with pytest.raises(ValueError):
        schatten_norm(th, 0.5)


def test_negative_gram_eigenvalue_raises(fock1):
    th = assemble_hankel(parse_polynomial("z", 1, 1), fock1, 3)
    th.M = -np.eye(th.dim)
    with pytest.raises(ConsistencyError):
        th.eigenvalues()


def test_classify_growth():
    assert classify_growth([1, 2, 4, 8])[1] == "divergent"
    assert classify_growth([1, 1.5, 1.51, 1.511])[1] == "convergent"
    assert classify_growth([1, 1.01, 1.02, 1.5])[1] == "undecided"
    assert classify_growth([0, 0, 0])[1] == "convergent"


def test_hs_growth_fock_linear_diverges(fock1):
    # sum s_n^2 = number of basis elements
    g = hs_growth(parse_polynomial("z", 1, 1), fock1)
    np.testing.assert_allclose(g["hs_sum"], [7, 11, 15, 19], rtol=1e-12)
    assert g["divergent"]


@pytest.mark.parametrize("p", [3.0, 6.0])
def test_fock_linear_integrals_closed_form(fock1, p):
    # Q = MO^2 = 1 and K(z,z) e^{-|z|^2} = 1/pi: the partial integral is R^2
    T = parse_polynomial("z", 1, 1)
    cut = (1.0, 2.0, 3.0)
    for res in (besov_integral(T, fock1, p, cutoffs=cut), mo_schatten_integral(T, fock1, p, cutoffs=cut)):
        np.testing.assert_allclose(res.values, np.square(cut), rtol=1e-8)
        assert res.verdict == "divergent"


def test_besov_p_verdicts_power2(p2_1):
    # Q^{1/2} ~ 1/(2|z|): integrand ~ rho^{3-p}
    T = parse_polynomial("z", 1, 1)
    cut = (2.0, 4.0, 8.0, 16.0)
    assert besov_integral(T, p2_1, 6.0, cutoffs=cut).verdict == "convergent"
    assert besov_integral(T, p2_1, 3.0, cutoffs=cut).verdict == "divergent"


def test_kernel_degree_tail(p2_1):
    r = 9.0
    n = kernel_degree(p2_1, r)
    c = p2_1.covering(r)
    lt = c.log_terms(r)
    p = np.exp(lt - np.logaddexp.reduce(lt))
    assert p[n + 1:].sum() < 1e-16 and p[n:].sum() >= 1e-16


def test_kernel_gram_fock_linear(fock2):
    T = parse_polynomial("z1", 2, 1)
    for z in ([0.0, 0.0], [1.5, -0.5j], [4.0, 3.0]):
        assert abs(hankel_kernel_gram(T, fock2, np.array(z, dtype=complex))[0, 0] - 1) < 1e-10


def test_trace_identity(rng, p2_1):
    D, m = 6, 2
    X = rng.standard_normal((D * m, D * m)) + 1j * rng.standard_normal((D * m, D * m))
    chk = trace_identity_check(X @ X.conj().T, p2_1, 5, m, rng)
    assert chk.rel_err < 1e-8


def test_hs_multiplier_identity(rng):
    c = make_kernel(POWER2, 1)
    R = MixedPoly.product(*(2 * [random_symbol(rng, 1, 2, 2)]))
    chk = hs_multiplier_identity_check(R, c, 8)
    assert chk.rel_err < 1e-8
    assert 0 < chk.extra["boundary_bias"] < 1


def test_truncation_below_degree_warns(fock1):
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        assemble_hankel(parse_polynomial("z^3", 1, 1), fock1, 2)
    assert any("below symbol degree" in str(x.message) for x in w)


def test_fock2_first_coordinate_norm_one(fock2):
    th = assemble_hankel(parse_polynomial("z1", 2, 1), fock2, 6)
    assert abs(operator_norm(th) - 1) < 1e-8


def test_trace_identity_on_identity(fock1):
    chk = trace_identity_check(np.eye(5), fock1, 4, 1)
    assert abs(chk.lhs - 5) < 1e-12 and abs(chk.rhs - 5) < 1e-4


def test_hs_multiplier_identity_counts_basis(p2_1):
    m, N = 2, 6
    chk = hs_multiplier_identity_check(MixedPoly(1, m, {((0,), (0,)): np.eye(m)}), p2_1, N)
    assert chk.lhs == pytest.approx((N + 1) * m, rel=1e-12)
    assert chk.rel_err < 1e-4
