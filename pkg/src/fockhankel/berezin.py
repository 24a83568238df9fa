"""Berezin transform, mean oscillation MO^2 T*(z) and the BMO norm.

The Berezin transform of a mixed polynomial g(w) = sum G_ab w^a wbar^b is

    g~(z) = sum_ab G_ab sum_n zbar^n z^(n+a-b) w_{n+a} / (w_n w_{n+a-b}) / K(z,z).

After rotating z onto x e_1 only n = (n_1, 0, ..., 0) contributes and the
sum is one-dimensional; it runs to the degree where the kernel tail is
negligible, so |z| is not limited by any fixed truncation.

MO^2 T*(z) = (T T*)~(z) - T(z) T(z)* is computed this way ("series") and,
independently, as the Gram matrix of H_{T*}(k_z f_j) ("hankel").
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp

from .hankel import ConsistencyError, MixedPoly, hankel_kernel_gram, kernel_degree
from .kernel import (KernelCoeffs, bergman_data, radial_profile, sample_polyball, unitary_to)
from .symbols import OperatorSymbol, default_grid, q_matrix, tail_radii

MO_RTOL = 1e-6
MO_ROUTES = ("series", "hankel")


_weight_cache: dict = {}


def _log_berezin_weights(coeffs: KernelCoeffs, x: float, a: tuple, b: tuple) -> float:
    """log of sum_n x^(2n+a1-b1) w_{(n,0)+a} / (w_{(n,0)} w_{(n+a1-b1,0)}) / K(x e_1, x e_1)

    for multi-indices a, b with equal tails (so that the sum is one-dimensional).
    Depends on z only through x = |z|, hence cached.
    """
    key = (coeffs.weight, coeffs.d, x, a, b)
    hit = _weight_cache.get(key)
    if hit is not None:
        return hit
    d = coeffs.d
    r = x * x
    n_top = kernel_degree(coeffs, r, tail=1e-9) + sum(a) + sum(b) + 2
    logK = float(radial_profile(coeffs, np.array([r])).log_F[0])
    shift = int(a[0] - b[0])
    n = np.arange(max(0, -shift), n_top + 1)
    expo = 2 * n + shift
    if x > 0:
        lx = expo * math.log(x)
    else:
        lx = np.where(expo == 0, 0.0, -np.inf)
    nu = np.zeros((n.size, d), dtype=np.int64)
    nu[:, 0] = n
    terms = (lx + coeffs.log_w(nu + np.array(a)) - coeffs.log_w_total(n)
             - coeffs.log_w_total(n + shift) - logK)
    val = float(logsumexp(terms))
    if len(_weight_cache) > 200_000:
        _weight_cache.clear()
    _weight_cache[key] = val
    return val


def berezin_transform(g: MixedPoly, coeffs: KernelCoeffs, z: ArrayLike) -> NDArray:
    """g~(z) as an m x m matrix (rotated one-dimensional sums)."""
    z = np.asarray(z, dtype=complex).ravel()
    U = unitary_to(z)
    x = float(np.linalg.norm(z))
    gr = rotate_mixed(g, U)
    out = np.zeros((g.m, g.m), dtype=complex)
    for (a, b), G in gr.terms.items():
        if a[1:] != b[1:]:
            continue
        out += math.exp(_log_berezin_weights(coeffs, x, tuple(a), tuple(b))) * G
    return out


def berezin_transform_direct(g: MixedPoly, coeffs: KernelCoeffs, z: ArrayLike, n_top: int) -> NDArray:
    """Unrotated multi-index sum over |n| <= n_top (oracle for small cases)."""
    z = np.asarray(z, dtype=complex).ravel()
    d = coeffs.d
    r = float(np.vdot(z, z).real)
    logK = float(radial_profile(coeffs, np.array([r])).log_F[0])
    out = np.zeros((g.m, g.m), dtype=complex)
    for n in product(range(n_top + 1), repeat=d):
        if sum(n) > n_top:
            continue
        n_arr = np.array(n)
        for (a, b), G in g.terms.items():
            mu = n_arr + np.array(a) - np.array(b)
            if np.any(mu < 0):
                continue
            lw = float(coeffs.log_w(n_arr + np.array(a)) - coeffs.log_w(n_arr) - coeffs.log_w(mu))
            val = np.prod(np.conj(z) ** n_arr) * np.prod(z ** mu) * math.exp(lw - logK)
            out += val * G
    return out


def rotate_mixed(g: MixedPoly, U: NDArray) -> MixedPoly:
    """The mixed polynomial w -> g(U w)."""
    d = g.d
    U = np.asarray(U, dtype=complex)

    def power(row_coeffs, e, conj):
        poly = {((0,) * d): 1.0 + 0j}
        lin = {tuple(int(j == q) for j in range(d)): (np.conj(c) if conj else c)
               for q, c in enumerate(row_coeffs)}
        for _ in range(e):
            new = {}
            for k1, v1 in poly.items():
                for k2, v2 in lin.items():
                    k = tuple(i + j for i, j in zip(k1, k2))
                    new[k] = new.get(k, 0) + v1 * v2
            poly = new
        return poly

    def expand(idx, conj):
        poly = {((0,) * d): 1.0 + 0j}
        for i, e in enumerate(idx):
            if e == 0:
                continue
            p = power(U[i], e, conj)
            new = {}
            for k1, v1 in poly.items():
                for k2, v2 in p.items():
                    k = tuple(a + b for a, b in zip(k1, k2))
                    new[k] = new.get(k, 0) + v1 * v2
            poly = new
        return poly

    terms: dict = {}
    for (a, b), G in g.terms.items():
        pa, pb = expand(a, False), expand(b, True)
        for ka, va in pa.items():
            for kb, vb in pb.items():
                c = va * vb
                if c != 0:
                    terms[(ka, kb)] = terms.get((ka, kb), 0) + c * G
    return MixedPoly(d, g.m, terms)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MOResult:
    z: NDArray
    matrix: NDArray
    route: str
    error_estimate: float = 0.0
    other: NDArray | None = field(default=None, repr=False)

    @property
    def norm(self) -> float:
        return float(max(np.linalg.eigvalsh(self.matrix)[-1], 0.0))


def _mo_series(T: OperatorSymbol, coeffs: KernelCoeffs, z: NDArray) -> NDArray:
    U = unitary_to(z)
    S = T.compose_unitary(U)
    x = float(np.linalg.norm(z))
    out = np.zeros((T.m, T.m), dtype=complex)
    for g, A in S.coeffs.items():
        for h, B in S.coeffs.items():
            if g[1:] != h[1:]:
                continue
            out += math.exp(_log_berezin_weights(coeffs, x, g, h)) * (A @ B.conj().T)
    Tz = T(z)
    out = out - Tz @ Tz.conj().T
    return 0.5 * (out + out.conj().T)


def mo_squared(T: OperatorSymbol, coeffs: KernelCoeffs, z: ArrayLike, route: str = "series",
               check: bool = False, rtol: float = MO_RTOL) -> MOResult:
    """MO^2 T*(z) by the series or the hankel route.

    With ``check=True`` both routes are computed and a ConsistencyError is
    raised when they differ by more than rtol * max(1, ||MO^2||).
    """
    if route not in MO_ROUTES:
        raise ValueError(f"unknown route {route!r}; expected one of {MO_ROUTES}")
    z = np.asarray(z, dtype=complex).ravel()
    if T.is_constant():
        return MOResult(z, np.zeros((T.m, T.m), dtype=complex), route)
    main = _mo_series(T, coeffs, z) if route == "series" else hankel_kernel_gram(T, coeffs, z)
    if not check:
        return MOResult(z, main, route)
    other = hankel_kernel_gram(T, coeffs, z) if route == "series" else _mo_series(T, coeffs, z)
    diff = float(np.abs(main - other).max())
    scale = max(1.0, float(np.abs(main).max()))
    if diff > rtol * scale:
        raise ConsistencyError(
            f"MO^2 routes disagree at z={np.round(z, 4)}: {diff:.3e} > {rtol:g} * {scale:.3g}")
    return MOResult(z, main, route, diff, other)


def mo_norms(T: OperatorSymbol, coeffs: KernelCoeffs, points: ArrayLike) -> NDArray:
    pts = np.atleast_2d(np.asarray(points, dtype=complex))
    return np.array([mo_squared(T, coeffs, z).norm for z in pts])


def bmo_norm(T: OperatorSymbol, coeffs: KernelCoeffs, grid: ArrayLike | None = None) -> float:
    """||T(0)|| + sup over the grid of ||MO^2 T*(z)||^{1/2}."""
    grid = default_grid(T.d) if grid is None else grid
    base = float(np.linalg.norm(T.constant_term(), 2))
    if T.is_constant():
        return base
    return base + math.sqrt(float(mo_norms(T, coeffs, grid).max()))


def bmo_decay(T: OperatorSymbol, coeffs: KernelCoeffs, R: float, *, directions: int = 32,
              seed: int = 0) -> float:
    """max over |z| in {R, 1.25R, ..., 1.25^7 R} of ||MO^2 T*(z)||."""
    if T.is_constant():
        return 0.0
    return float(mo_norms(T, coeffs, default_grid(T.d, tail_radii(R), directions, seed)).max())


# ---------------------------------------------------------------------------
# comparison constants


def bloch_bmo_ratio(T: OperatorSymbol, coeffs: KernelCoeffs, z: ArrayLike) -> float:
    """||Q_T(z)||^{1/2} / ||MO^2 T*(z)||^{1/2}."""
    q = q_matrix(T, bergman_data(coeffs, z)).sqrt_norm
    mo = math.sqrt(mo_squared(T, coeffs, z).norm)
    if mo == 0.0:
        return 0.0 if q == 0.0 else math.inf
    return q / mo


def kern_ev_constant(T: OperatorSymbol, coeffs: KernelCoeffs, z: ArrayLike) -> float:
    """Smallest C with ||Q_T(z)^{1/2} e|| <= C ||H_{T*}(k_z e)|| for all e.

    sqrt of the largest generalized eigenvalue of (Q_T(z), MO^2 T*(z)).
    """
    from scipy.linalg import eigh

    Q = q_matrix(T, bergman_data(coeffs, z)).Q
    MO = hankel_kernel_gram(T, coeffs, z)
    scale = max(float(np.abs(MO).max()), 1e-300)
    ev = eigh(Q, MO + 1e-14 * scale * np.eye(T.m), eigvals_only=True)
    return math.sqrt(max(float(ev[-1]), 0.0))


@dataclass(frozen=True)
class AveragedCheck:
    w: NDArray
    a: float
    ratio: float          # sup_e  avg ||(T(z)-T(w))^* e||^2 / ||H_{T*}(k_w e)||^2
    samples: int


def averaged_oscillation_check(T: OperatorSymbol, coeffs: KernelCoeffs, w: ArrayLike, a: float,
                               samples: int = 500, rng: np.random.Generator | None = None) -> AveragedCheck:
    """Monte-Carlo polyball average of ||(T(z)* - T(w)*) e||^2 against ||H_{T*}(k_w e)||^2."""
    from scipy.linalg import eigh

    rng = np.random.default_rng(0) if rng is None else rng
    w = np.asarray(w, dtype=complex).ravel()
    pts = sample_polyball(w, coeffs.weight, a, samples, rng)
    Tw = T(w)
    avg = np.zeros((T.m, T.m), dtype=complex)
    for z in pts:
        D = T(z) - Tw
        avg += D @ D.conj().T
    avg /= samples
    MO = hankel_kernel_gram(T, coeffs, w)
    scale = max(float(np.abs(MO).max()), 1e-300)
    ev = eigh(0.5 * (avg + avg.conj().T), MO + 1e-14 * scale * np.eye(T.m), eigvals_only=True)
    return AveragedCheck(w, a, float(max(ev[-1], 0.0)), samples)
