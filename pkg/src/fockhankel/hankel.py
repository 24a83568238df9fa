"""Big Hankel operator H_{T*} f = (I - P)(T* f) on a degree-truncated domain.

All inner products are exact in moment algebra.  For mixed monomials

    <wbar^g w^n, wbar^g' w^n'> = [n + g' = n' + g] w_{n+g'},
    P(wbar^g w^n)             = [n >= g] (w_n / w_{n-g}) w^{n-g},

so the Gram matrix of H_{T*} over the orthonormal basis e_{n,j} =
w^n f_j / sqrt(w_n) is assembled entry by entry from log w.  Its
eigenvalues are the squared singular values of the compression.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Mapping

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp

from . import _accel
from ._accel import njit
from .kernel import KernelCoeffs, KernelRangeError, radial_profile, unitary_to
from .kernel import bergman_data
from .symbols import OperatorSymbol, q_matrix, unit_directions

DEFAULT_N = {1: 14, 2: 8, 3: 6}
NEG_EIG_RTOL = 1e-9
KZ_TAIL = 1e-8
DIVERGENCE_GROWTH = 0.05

Index = tuple[int, ...]


class ConsistencyError(RuntimeError):
    """Two computations that must agree did not."""


class SchattenRegimeWarning(UserWarning):
    pass


def multi_indices(d: int, N: int) -> list[Index]:
    """All multi-indices of total degree <= N, graded then lexicographic."""
    out = [idx for idx in product(range(N + 1), repeat=d) if sum(idx) <= N]
    out.sort(key=lambda t: (sum(t), tuple(-x for x in t)))
    return out


# ---------------------------------------------------------------------------
# mixed polynomials and expansions


class MixedPoly:
    """g(w) = sum G_ab w^a wbar^b with m x m matrix coefficients."""

    def __init__(self, d: int, m: int, terms: Mapping[tuple[Index, Index], ArrayLike]):
        self.d, self.m = d, m
        self.terms: dict[tuple[Index, Index], NDArray] = {}
        for (a, b), G in terms.items():
            G = np.asarray(G, dtype=complex)
            if G.ndim == 0:
                G = G * np.eye(m)
            key = (tuple(a), tuple(b))
            self.terms[key] = self.terms.get(key, 0) + G

    def __call__(self, w: ArrayLike) -> NDArray:
        w = np.asarray(w, dtype=complex).ravel()
        out = np.zeros((self.m, self.m), dtype=complex)
        for (a, b), G in self.terms.items():
            out += np.prod(w ** np.array(a)) * np.prod(np.conj(w) ** np.array(b)) * G
        return out

    def evaluate_many(self, w: NDArray) -> NDArray:
        """Values at points w of shape (P, d); returns (P, m, m)."""
        out = np.zeros((w.shape[0], self.m, self.m), dtype=complex)
        for (a, b), G in self.terms.items():
            mono = np.prod(w ** np.array(a), axis=1) * np.prod(np.conj(w) ** np.array(b), axis=1)
            out += mono[:, None, None] * G
        return out

    @property
    def degree(self) -> int:
        return max((sum(a) + sum(b) for a, b in self.terms), default=0)

    @classmethod
    def product(cls, T: OperatorSymbol, S: OperatorSymbol) -> "MixedPoly":
        """The function w -> T(w) S(w)^*."""
        terms = {}
        for g, A in T.coeffs.items():
            for h, B in S.coeffs.items():
                terms[(g, h)] = terms.get((g, h), 0) + A @ B.conj().T
        return cls(T.d, T.m, terms)

    @classmethod
    def from_symbol(cls, T: OperatorSymbol, conjugate: bool = False) -> "MixedPoly":
        """T itself, or T^*(w) = sum A_g^* wbar^g when ``conjugate``."""
        zero = (0,) * T.d
        if conjugate:
            return cls(T.d, T.m, {(zero, g): A.conj().T for g, A in T.coeffs.items()})
        return cls(T.d, T.m, {(g, zero): A for g, A in T.coeffs.items()})


@dataclass
class MixedExpansion:
    """sum c_{g,n} wbar^g w^n with m-vector coefficients (an element of L^2_phi(C^m))."""

    coeffs: KernelCoeffs
    m: int
    terms: dict = field(default_factory=dict)   # (g, n) -> m-vector

    def add(self, g: Index, n: Index, vec: ArrayLike) -> None:
        key = (tuple(g), tuple(n))
        self.terms[key] = self.terms.get(key, 0) + np.asarray(vec, dtype=complex)

    def __add__(self, other: "MixedExpansion") -> "MixedExpansion":
        out = MixedExpansion(self.coeffs, self.m, dict(self.terms))
        for (g, n), v in other.terms.items():
            out.add(g, n, v)
        return out

    def scaled(self, c: complex) -> "MixedExpansion":
        return MixedExpansion(self.coeffs, self.m, {k: c * v for k, v in self.terms.items()})

    def inner(self, other: "MixedExpansion") -> complex:
        """<self, other>, linear in self."""
        total = 0j
        for (g, n), v in self.terms.items():
            for (g2, n2), v2 in other.terms.items():
                if tuple(np.add(n, g2)) != tuple(np.add(n2, g)):
                    continue
                lw = float(self.coeffs.log_w(np.add(n, g2)))
                total += math.exp(lw) * complex(np.vdot(v2, v))
        return total

    def norm(self) -> float:
        return math.sqrt(max(self.inner(self).real, 0.0))


def _proj_log_ratio(coeffs: KernelCoeffs, n: Index, g: Index) -> float:
    return float(coeffs.log_w(n) - coeffs.log_w(np.subtract(n, g)))


def apply_symbol_adjoint(T: OperatorSymbol, coeffs: KernelCoeffs,
                         f: Mapping[Index, ArrayLike]) -> MixedExpansion:
    """T^* f for a holomorphic polynomial f = sum_n f_n w^n (f_n in C^m)."""
    out = MixedExpansion(coeffs, T.m)
    for n, vec in f.items():
        for g, A in T.coeffs.items():
            out.add(g, n, A.conj().T @ np.asarray(vec, dtype=complex))
    return out


def project(expn: MixedExpansion) -> MixedExpansion:
    """P applied to a mixed expansion (result holomorphic: all g = 0)."""
    d = expn.coeffs.d
    zero = (0,) * d
    out = MixedExpansion(expn.coeffs, expn.m)
    for (g, n), v in expn.terms.items():
        if all(a >= b for a, b in zip(n, g)):
            ratio = math.exp(_proj_log_ratio(expn.coeffs, n, g)) if any(g) else 1.0
            out.add(zero, tuple(np.subtract(n, g)), ratio * v)
    return out


def hankel_apply(T: OperatorSymbol, coeffs: KernelCoeffs, f: Mapping[Index, ArrayLike]) -> MixedExpansion:
    """H_{T*} f = T^* f - P(T^* f) as a mixed expansion."""
    tf = apply_symbol_adjoint(T, coeffs, f)
    return tf + project(tf).scaled(-1.0)


def hankel_apply_basis(T: OperatorSymbol, coeffs: KernelCoeffs, nu: Index, j: int) -> MixedExpansion:
    """H_{T*}(w^nu f_j) (unnormalised monomial)."""
    e = np.zeros(T.m, dtype=complex)
    e[j] = 1.0
    return hankel_apply(T, coeffs, {tuple(nu): e})


# ---------------------------------------------------------------------------
# Gram assembly


@njit
def _accumulate_numba(M, ia, ib, c, X, m):
    for t in range(ia.shape[0]):
        a0 = ia[t] * m
        b0 = ib[t] * m
        ct = c[t]
        for i in range(m):
            for j in range(m):
                M[a0 + i, b0 + j] += ct * X[i, j]


def _accumulate_numpy(M, ia, ib, c, X, m):
    D = M.shape[0] // m
    M4 = M.reshape(D, m, D, m)
    M4[ia, :, ib, :] += c[:, None, None] * X[None, :, :]


def accumulate_blocks(M, ia, ib, c, X, m):
    """M[(ia, i), (ib, j)] += c * X[i, j]; pairs (ia, ib) must be distinct."""
    if _accel.USE_NUMBA:
        _accumulate_numba(M, ia, ib, c, X, m)
    else:
        _accumulate_numpy(M, ia, ib, c, X, m)


def _pair_coefficients(coeffs: KernelCoeffs, nu_a: NDArray, g: NDArray, gp: NDArray,
                       lw_a: NDArray, lw_b: NDArray) -> NDArray:
    """c = w_{nu_a+g'} / sqrt(w_a w_b) - [nu_a >= g] sqrt(w_a w_b) / w_{nu_a-g}."""
    half = 0.5 * (lw_a + lw_b)
    c = np.exp(coeffs.log_w(nu_a + gp) - half)
    low = nu_a - g
    ok = np.all(low >= 0, axis=1)
    if ok.any():
        c[ok] -= np.exp(half[ok] - coeffs.log_w(low[ok]))
    return c


@dataclass
class TruncatedHankel:
    symbol: OperatorSymbol
    coeffs: KernelCoeffs
    N: int
    basis: list
    M: NDArray = field(repr=False)
    _eig: NDArray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.M.shape[0]

    def eigenvalues(self) -> NDArray:
        if self._eig is None:
            try:
                ev = np.linalg.eigvalsh(self.M)
            except np.linalg.LinAlgError as exc:  # pragma: no cover
                raise ConsistencyError(f"eigen-solver failed: {exc}") from exc
            scale = max(float(np.abs(ev).max()), 1e-300) if ev.size else 1.0
            if ev.size and ev[0] < -NEG_EIG_RTOL * scale:
                raise ConsistencyError(
                    f"Gram matrix has eigenvalue {ev[0]:.3e} below -{NEG_EIG_RTOL:g} ||M||")
            self._eig = np.clip(ev, 0.0, None)[::-1]
        return self._eig


def assemble_hankel(T: OperatorSymbol, coeffs: KernelCoeffs, N: int | None = None) -> TruncatedHankel:
    """Gram matrix M[(a,i),(b,j)] = <H e_{a,i}, H e_{b,j}> over |nu| <= N."""
    d = T.d
    if d != coeffs.d:
        raise ValueError("symbol and kernel dimensions differ")
    N = DEFAULT_N.get(d, 6) if N is None else int(N)
    if N < 0:
        raise ValueError("N must be >= 0")
    if N < T.degree:
        warnings.warn(f"truncation N={N} below symbol degree {T.degree}", stacklevel=2)
    basis = multi_indices(d, N)
    return TruncatedHankel(T, coeffs, N, basis, _gram(T, coeffs, basis))


def _gram(T: OperatorSymbol, coeffs: KernelCoeffs, basis: list) -> NDArray:
    d, m = T.d, T.m
    D = len(basis)
    nu = np.array(basis, dtype=np.int64).reshape(D, d)
    top = int(nu.sum(axis=1).max()) + T.degree + 1 if D else 1
    radix = top + 1
    lookup = np.full(radix**d, -1, dtype=np.int64)
    keys = (nu * radix ** np.arange(d)).sum(axis=1)
    lookup[keys] = np.arange(D)
    lw = coeffs.log_w(nu)
    M = np.zeros((D * m, D * m), dtype=complex)
    terms = [(np.array(g), A) for g, A in T.coeffs.items() if any(g)]
    for g, A in terms:
        for gp, B in terms:
            nb = nu - g + gp
            valid = np.all(nb >= 0, axis=1) & (nb.sum(axis=1) <= top - T.degree - 1)
            if not valid.any():
                continue
            kb = (nb[valid] * radix ** np.arange(d)).sum(axis=1)
            ib = lookup[kb]
            ia = np.flatnonzero(valid)
            keep = ib >= 0
            ia, ib = ia[keep], ib[keep]
            if ia.size == 0:
                continue
            c = _pair_coefficients(coeffs, nu[ia], g, gp, lw[ia], lw[ib])
            X = np.ascontiguousarray((B @ A.conj().T).T)
            accumulate_blocks(M, ia.astype(np.int64), ib.astype(np.int64), c, X, m)
    return 0.5 * (M + M.conj().T)


def singular_values(th: TruncatedHankel) -> NDArray:
    """Singular values of the truncated operator, nonincreasing."""
    return np.sqrt(th.eigenvalues())


def operator_norm(th: TruncatedHankel) -> float:
    s = singular_values(th)
    return float(s[0]) if s.size else 0.0


def schatten_norm(th: TruncatedHankel, p: float) -> float:
    if p < 1:
        raise ValueError("Schatten norms need p >= 1")
    if p < 2:
        warnings.warn(f"p={p} is below 2; no equivalence is asserted there", SchattenRegimeWarning,
                      stacklevel=2)
    s = singular_values(th)
    if not s.size or s[0] == 0:
        return 0.0
    return float(s[0] * np.sum((s / s[0]) ** p) ** (1.0 / p))


def hs_sum(th: TruncatedHankel) -> float:
    """sum s_n^2 = trace of the Gram matrix."""
    return float(np.trace(th.M).real)


# ---------------------------------------------------------------------------
# normalised reproducing kernels


def kernel_degree(coeffs: KernelCoeffs, r: float, tail: float = KZ_TAIL) -> int:
    """Smallest n with || k_z - (degree <= n part) || below ``tail`` (r = |z|^2)."""
    if r == 0.0:
        return 0
    c = coeffs.covering(r)
    lt = c.log_terms(r)
    p = np.exp(lt - logsumexp(lt))
    rest = np.cumsum(p[::-1])[::-1]     # rest[n] = mass of degrees >= n
    above = np.flatnonzero(rest < tail**2)
    if above.size == 0:
        raise KernelRangeError(f"k_z tail above {tail:g} at |z|^2={r:.4g}")
    return max(int(above[0]) - 1, 0)


def _rotated(T: OperatorSymbol, z: NDArray) -> tuple[OperatorSymbol, float]:
    U = unitary_to(z)
    return T.compose_unitary(U), float(np.linalg.norm(z))


def hankel_kernel_gram(T: OperatorSymbol, coeffs: KernelCoeffs, z: ArrayLike) -> NDArray:
    """[<H_{T*}(k_z f_j), H_{T*}(k_z f_i)>]_{ij}, the Hankel route to MO^2.

    After a unitary change of variables z = x e_1, k_z only involves the
    monomials w_1^n, so the double sum is banded in n and runs to whatever
    degree makes the tail of k_z negligible.
    """
    z = np.asarray(z, dtype=complex).ravel()
    S, x = _rotated(T, z)
    d, m = S.d, S.m
    r = x * x
    n_top = kernel_degree(coeffs, r) + 2 * S.degree + 2
    n = np.arange(n_top + 1)
    lwn = coeffs.log_w_total(n)
    logK = float(radial_profile(coeffs, np.array([r])).log_F[0])
    logx = math.log(x) if x > 0 else -math.inf
    out = np.zeros((m, m), dtype=complex)
    terms = [(np.array(g), A) for g, A in S.coeffs.items() if any(g)]
    for g, A in terms:
        for gp, B in terms:
            if tuple(g[1:]) != tuple(gp[1:]):
                continue
            shift = int(gp[0] - g[0])
            na = n[(n + shift >= 0) & (n + shift <= n_top)]
            nb = na + shift
            expo = (na + nb).astype(float)
            with np.errstate(invalid="ignore"):
                lphi = np.where(expo > 0, expo * logx, 0.0) if x > 0 else np.where(expo == 0, 0.0, -np.inf)
            lphi = lphi - logK
            nu_a = np.zeros((na.size, d), dtype=np.int64)
            nu_a[:, 0] = na
            s1 = logsumexp(lphi + coeffs.log_w(nu_a + gp) - lwn[na] - lwn[nb])
            low = na - g[0]
            ok = (low >= 0) & (not np.any(g[1:]))
            s2 = -math.inf
            if ok.any():
                nu_low = nu_a[ok] - g
                s2 = logsumexp(lphi[ok] - coeffs.log_w(nu_low))
            val = math.exp(s1) - (math.exp(s2) if s2 > -math.inf else 0.0)
            out += val * (B @ A.conj().T)
    return 0.5 * (out + out.conj().T)


def hankel_on_kernel(T: OperatorSymbol, coeffs: KernelCoeffs, z: ArrayLike, e: ArrayLike) -> float:
    """|| H_{T*}(k_z e) || for a unit vector e."""
    e = np.asarray(e, dtype=complex).ravel()
    if abs(np.linalg.norm(e) - 1.0) > 1e-10:
        raise ValueError("e must be a unit vector")
    G = hankel_kernel_gram(T, coeffs, z)
    return math.sqrt(max(float(np.vdot(e, G @ e).real), 0.0))


# ---------------------------------------------------------------------------
# radial integrals with cutoffs


_GL16_X, _GL16_W = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class PartialIntegrals:
    cutoffs: NDArray
    values: NDArray
    growth: NDArray          # values[j] / values[j-1] - 1
    verdict: str             # "convergent" | "divergent" | "undecided"
    outside_regime: bool = False


def classify_growth(values: ArrayLike, threshold: float = DIVERGENCE_GROWTH) -> tuple[NDArray, str]:
    """Divergent iff every step grows by more than ``threshold``; convergent iff the last step does not."""
    v = np.asarray(values, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        growth = np.where(v[:-1] > 0, v[1:] / v[:-1] - 1.0, np.where(v[1:] > 0, np.inf, 0.0))
    if np.all(growth > threshold):
        return growth, "divergent"
    if growth[-1] <= threshold:
        return growth, "convergent"
    return growth, "undecided"


def sphere_area(d: int) -> float:
    """|S^{2d-1}| = 2 pi^d / (d-1)!."""
    return 2.0 * math.pi**d / math.factorial(d - 1)


def radial_partials(fn: Callable[[NDArray], NDArray], coeffs: KernelCoeffs,
                    cutoffs: ArrayLike = (2.0, 4.0, 8.0, 16.0), directions: int = 16,
                    panels: int = 4, seed: int = 0) -> NDArray:
    """Partial integrals of fn(z) dlambda(z) = fn(z) K(z,z) e^{-Psi} dm over |z| <= cutoff.

    ``fn`` maps points (P, d) to values (P,).  The sphere average uses
    equispaced angles in d = 1 and Sobol directions otherwise.
    """
    d = coeffs.d
    cutoffs = np.asarray(cutoffs, dtype=float)
    if d == 1:
        dirs = np.exp(2j * math.pi * np.arange(directions) / directions)[:, None]
    else:
        dirs = unit_directions(d, directions, seed)
    edges = np.concatenate([[0.0], cutoffs])
    out = []
    acc = 0.0
    area = sphere_area(d)
    for lo, hi in zip(edges[:-1], edges[1:]):
        pe = np.linspace(lo, hi, panels + 1)
        half = 0.5 * (pe[1] - pe[0])
        rho = (pe[:-1, None] + half * (_GL16_X[None, :] + 1.0)).ravel()
        wts = np.tile(_GL16_W * half, panels)
        lk = radial_profile(coeffs, rho**2).log_F_minus_psi
        vals = np.array([np.mean(fn(x * dirs)) for x in rho])
        acc += float(np.sum(wts * area * rho ** (2 * d - 1) * np.exp(lk) * vals))
        out.append(acc)
    return np.array(out)


def _trace_power(Q: NDArray, p: float) -> float:
    ev = np.clip(np.linalg.eigvalsh(Q), 0.0, None)
    return float(np.sum(ev ** (p / 2.0)))


def besov_integral(T: OperatorSymbol, coeffs: KernelCoeffs, p: float, *,
                   cutoffs: ArrayLike = (2.0, 4.0, 8.0, 16.0), directions: int = 16,
                   seed: int = 0) -> PartialIntegrals:
    """Partial integrals of ||Q_T(z)^{1/2}||_{S^p}^p dlambda(z)."""
    def fn(pts):
        return np.array([_trace_power(q_matrix(T, bergman_data(coeffs, z)).Q, p) for z in pts])

    return _partials(T, coeffs, fn, p, cutoffs, directions, seed)


def mo_schatten_integral(T: OperatorSymbol, coeffs: KernelCoeffs, p: float, *,
                         cutoffs: ArrayLike = (2.0, 4.0, 8.0, 16.0), directions: int = 16,
                         seed: int = 0) -> PartialIntegrals:
    """Partial integrals of ||MO^2 T*(z)^{1/2}||_{S^p}^p dlambda(z)."""
    from .berezin import mo_squared

    def fn(pts):
        return np.array([_trace_power(mo_squared(T, coeffs, z).matrix, p) for z in pts])

    return _partials(T, coeffs, fn, p, cutoffs, directions, seed)


def _partials(T, coeffs, fn, p, cutoffs, directions, seed) -> PartialIntegrals:
    outside = p < 2
    if outside:
        warnings.warn(f"p={p} is below 2; computed but outside the characterised range",
                      SchattenRegimeWarning, stacklevel=3)
    cutoffs = np.asarray(cutoffs, dtype=float)
    if T.is_constant():
        vals = np.zeros(len(cutoffs))
    else:
        vals = radial_partials(fn, coeffs, cutoffs, directions, seed=seed)
    growth, verdict = classify_growth(vals)
    return PartialIntegrals(cutoffs, vals, growth, verdict, outside)


# ---------------------------------------------------------------------------
# trace and Hilbert-Schmidt identities


def _s_window(coeffs: KernelCoeffs, top: int) -> float:
    """s beyond which s^(top+d) e^{-Psi(s)} is below e^-80 of its maximum."""
    w = coeffs.weight
    a = top + coeffs.d
    peak = max(float(w.phi_inverse(np.array(float(a)))), 1e-12)
    h = lambda s: a * math.log(s) - float(w.psi(np.array(s)))
    target = h(peak) - 80.0
    hi = 2.0 * peak + 1.0
    while h(hi) > target:
        hi *= 2.0
    return hi


def _radial_nodes(coeffs: KernelCoeffs, top: int, panels: int, order: int):
    smax = _s_window(coeffs, top)
    x, wq = np.polynomial.legendre.leggauss(order)
    pe = np.linspace(0.0, smax, panels + 1)
    half = 0.5 * (pe[1] - pe[0])
    s = (pe[:-1, None] + half * (x[None, :] + 1.0)).ravel()
    return s, np.tile(wq * half, panels)


def quadrature_points(coeffs: KernelCoeffs, top: int, angles: int, panels: int | None = None,
                      order: int | None = None) -> tuple[NDArray, NDArray]:
    """Points z in C^d and weights for integrals against dmu = e^{-Psi(|z|^2)} dm.

    Each coordinate is written z_i = sqrt(s_i) e^{i theta_i} (dm = 2^-d ds dtheta);
    s_i uses composite Gauss-Legendre panels, theta_i the trapezoid rule.
    Exact up to rounding for polynomial integrands of degree <= ``top`` per
    coordinate when ``angles`` > 2 * top.
    """
    d = coeffs.d
    panels = (10 if d == 1 else 6) if panels is None else panels
    order = (20 if d == 1 else 12) if order is None else order
    s, ws = _radial_nodes(coeffs, top, panels, order)
    th = 2 * math.pi * np.arange(angles) / angles
    wt = np.full(angles, 2 * math.pi / angles)
    grids_s = np.meshgrid(*([s] * d), indexing="ij")
    grids_ws = np.meshgrid(*([ws] * d), indexing="ij")
    S = np.stack([g.ravel() for g in grids_s], axis=1)
    WS = np.prod(np.stack([g.ravel() for g in grids_ws], axis=1), axis=1)
    WS = WS * np.exp(-coeffs.weight.psi(S.sum(axis=1))) / 2**d
    grids_t = np.meshgrid(*([th] * d), indexing="ij")
    TH = np.stack([g.ravel() for g in grids_t], axis=1)
    WT = wt[0] ** d
    z = (np.sqrt(S)[:, None, :] * np.exp(1j * TH)[None, :, :]).reshape(-1, d)
    w = (WS[:, None] * WT * np.ones(TH.shape[0])[None, :]).ravel()
    return z, w


def _basis_values(coeffs: KernelCoeffs, basis: list, z: NDArray) -> NDArray:
    """conj(z^nu) / sqrt(w_nu), shape (P, D)."""
    nu = np.array(basis).reshape(len(basis), coeffs.d)
    lw = coeffs.log_w(nu)
    mono = np.prod(z[:, None, :] ** nu[None, :, :], axis=2)
    return np.conj(mono) * np.exp(-0.5 * lw)[None, :]


@dataclass(frozen=True)
class IdentityCheck:
    lhs: float
    rhs: float
    rel_err: float
    extra: dict = field(default_factory=dict)


def _rel(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale


def random_unitaries(rng: np.random.Generator, count: int, m: int) -> NDArray:
    g = rng.standard_normal((count, m, m)) + 1j * rng.standard_normal((count, m, m))
    q, r = np.linalg.qr(g)
    ph = np.diagonal(r, axis1=1, axis2=2)
    return q * (ph / np.abs(ph))[:, None, :]


def trace_identity_check(S: ArrayLike, coeffs: KernelCoeffs, N: int, m: int,
                         rng: np.random.Generator | None = None, chunk: int = 20_000) -> IdentityCheck:
    """tr S versus  int sum_k <S K_z e_k(z), K_z e_k(z)> dmu(z).

    S acts on the span of e_{nu,j} with |nu| <= N.  The frame e_k(z) is a
    fresh random unitary at every quadrature point.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    S = np.asarray(S, dtype=complex)
    basis = multi_indices(coeffs.d, N)
    D = len(basis)
    if S.shape != (D * m, D * m):
        raise ValueError(f"S must be {D * m} x {D * m} for N={N}, m={m}")
    ev = np.linalg.eigvalsh(0.5 * (S + S.conj().T))
    if ev.size and ev[0] < -NEG_EIG_RTOL * max(1.0, float(np.abs(ev).max())):
        raise ValueError("S is not positive semidefinite")
    lhs = float(np.trace(S).real)
    z, w = quadrature_points(coeffs, N, angles=2 * N + 2)
    S4 = S.reshape(D, m, D, m)
    rhs = 0.0
    for start in range(0, z.shape[0], chunk):
        zs, ws = z[start:start + chunk], w[start:start + chunk]
        V = _basis_values(coeffs, basis, zs)                         # (P, D)
        X = np.einsum("pa,akbl,pb->pkl", V.conj(), S4, V)            # K_z frame-free
        U = random_unitaries(rng, zs.shape[0], m)
        vals = np.einsum("pqk,pql,plk->p", U.conj(), X, U).real      # sum_k <S K_z u_k, K_z u_k>
        rhs += float(np.dot(ws, vals))
    return IdentityCheck(lhs, rhs, _rel(lhs, rhs))


def hs_multiplier_identity_check(R: MixedPoly, coeffs: KernelCoeffs, N: int,
                                 chunk: int = 20_000) -> IdentityCheck:
    """sum over the degree-N orthonormal basis of ||R e_{nu,k}||^2 (moment algebra)
    versus int ||R(z)||_{S^2}^2 K_N(z,z) dmu(z) (quadrature, matched truncation).

    ``extra["boundary_bias"]`` is the share of the direct sum carried by the
    top-degree shell |nu| = N.
    """
    m = R.m
    basis = multi_indices(coeffs.d, N)
    per_nu = []
    for nu in basis:
        tot = 0.0
        for k in range(m):
            ex = MixedExpansion(coeffs, m)
            for (a, b), G in R.terms.items():
                ex.add(b, tuple(np.add(nu, a)), G[:, k])
            tot += ex.inner(ex).real
        per_nu.append(tot / math.exp(float(coeffs.log_w(nu))))
    per_nu = np.array(per_nu)
    direct = float(per_nu.sum())
    top_shell = float(per_nu[[sum(nu) == N for nu in basis]].sum())
    deg = R.degree
    z, w = quadrature_points(coeffs, N + deg, angles=2 * (N + deg) + 2)
    integral = 0.0
    for start in range(0, z.shape[0], chunk):
        zs, ws = z[start:start + chunk], w[start:start + chunk]
        V = _basis_values(coeffs, basis, zs)
        KN = np.sum(np.abs(V) ** 2, axis=1)
        Rv = R.evaluate_many(zs)
        integral += float(np.dot(ws, np.sum(np.abs(Rv) ** 2, axis=(1, 2)) * KN))
    bias = top_shell / direct if direct else 0.0
    return IdentityCheck(direct, integral, _rel(direct, integral), {"boundary_bias": bias})


# ---------------------------------------------------------------------------
# consistency checks


def random_polynomial(rng: np.random.Generator, d: int, m: int, N: int) -> dict:
    return {nu: rng.standard_normal(m) + 1j * rng.standard_normal(m) for nu in multi_indices(d, N)}


def gram_consistency_check(th: TruncatedHankel, f: Mapping[Index, ArrayLike]) -> IdentityCheck:
    """||H f||^2 from the Gram matrix versus ||T* f||^2 - ||P T* f||^2."""
    coeffs, m = th.coeffs, th.symbol.m
    pos = {nu: i for i, nu in enumerate(th.basis)}
    x = np.zeros(th.dim, dtype=complex)
    for nu, vec in f.items():
        x[pos[tuple(nu)] * m:(pos[tuple(nu)] + 1) * m] = np.asarray(vec) * math.exp(
            0.5 * float(coeffs.log_w(nu)))
    gram_side = float(np.vdot(x, th.M.T @ x).real)
    tf = apply_symbol_adjoint(th.symbol, coeffs, f)
    pyth = tf.inner(tf).real - project(tf).inner(project(tf)).real
    return IdentityCheck(gram_side, pyth, abs(gram_side - pyth) / max(1.0, abs(pyth)))


def hankel_norm_sq(th: TruncatedHankel, f: Mapping[Index, ArrayLike]) -> tuple[float, float]:
    """(||H f||^2, ||f||^2) for a polynomial f in the truncated domain."""
    coeffs, m = th.coeffs, th.symbol.m
    pos = {nu: i for i, nu in enumerate(th.basis)}
    x = np.zeros(th.dim, dtype=complex)
    for nu, vec in f.items():
        x[pos[tuple(nu)] * m:(pos[tuple(nu)] + 1) * m] = np.asarray(vec) * math.exp(
            0.5 * float(coeffs.log_w(nu)))
    return float(np.vdot(x, th.M.T @ x).real), float(np.vdot(x, x).real)


def m4_bound_ratio(th: TruncatedHankel, bloch_seminorm: float) -> float:
    """||H|| / (sqrt(d) sup ||Q_T||^{1/2}); the upper bound says this is <= 1 (+ slack)."""
    if bloch_seminorm == 0:
        return 0.0 if operator_norm(th) == 0 else math.inf
    return operator_norm(th) / (math.sqrt(th.symbol.d) * bloch_seminorm)


def hs_growth(T: OperatorSymbol, coeffs: KernelCoeffs, Ns=(6, 10, 14, 18)) -> dict:
    """sum s_n^2 along increasing truncations and the relative step increases."""
    sums = np.array([hs_sum(assemble_hankel(T, coeffs, N)) for N in Ns])
    with np.errstate(divide="ignore", invalid="ignore"):
        steps = np.where(sums[:-1] > 0, sums[1:] / sums[:-1] - 1.0, 0.0)
    return {"N": list(Ns), "hs_sum": sums.tolist(), "increase": steps.tolist(),
            "divergent": bool(np.all(steps > DIVERGENCE_GROWTH))}
