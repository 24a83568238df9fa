"""Polynomial operator symbols T(z) = sum_g A_g z^g with m x m matrix coefficients.

Derivatives, the Bloch matrix Q_T(z) (three independent formulas), Bloch /
little-Bloch / Berg norms and the Fejer approximants.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from itertools import product
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .kernel import BergmanData, KernelCoeffs, bergman_data, bergman_distance

MAX_DEGREE = 8
ROUTES = ("qt", "b2", "cj")
NEG_EIG_CLIP = 1e-10

Index = tuple[int, ...]


class SymbolError(ValueError):
    pass


class OperatorSymbol:
    """Immutable polynomial symbol on C^d with values in m x m matrices."""

    __slots__ = ("d", "m", "_coeffs")

    def __init__(self, d: int, m: int, coeffs: Mapping[Iterable[int], ArrayLike], *,
                 max_degree: int = MAX_DEGREE):
        if d < 1 or m < 1:
            raise SymbolError("need d >= 1 and m >= 1")
        out: dict[Index, NDArray] = {}
        for idx, a in coeffs.items():
            idx = tuple(int(i) for i in idx)
            if len(idx) != d or min(idx) < 0:
                raise SymbolError(f"bad multi-index {idx} for d={d}")
            a = np.array(a, dtype=complex)
            if a.ndim == 0:
                a = a * np.eye(m, dtype=complex)
            if a.shape != (m, m):
                raise SymbolError(f"coefficient of {idx} has shape {a.shape}, expected ({m}, {m})")
            if idx in out:
                a = a + out[idx]
            a.setflags(write=False)
            out[idx] = a
        out = {k: v for k, v in out.items() if np.any(v != 0)}
        deg = max((sum(k) for k in out), default=0)
        if deg > max_degree:
            raise SymbolError(f"degree {deg} exceeds the configured maximum {max_degree}")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "_coeffs", MappingProxyType(dict(sorted(out.items()))))

    def __setattr__(self, *_):
        raise AttributeError("OperatorSymbol is immutable")

    def __reduce__(self):
        return (_rebuild_symbol, (self.d, self.m, dict(self._coeffs)))

    def __repr__(self):
        terms = ", ".join(str(k) for k in self._coeffs)
        return f"OperatorSymbol(d={self.d}, m={self.m}, terms=[{terms}])"

    @property
    def coeffs(self) -> Mapping[Index, NDArray]:
        return self._coeffs

    @property
    def degree(self) -> int:
        return max((sum(k) for k in self._coeffs), default=0)

    def is_constant(self) -> bool:
        return all(sum(k) == 0 for k in self._coeffs)

    def constant_term(self) -> NDArray:
        return np.array(self._coeffs.get((0,) * self.d, np.zeros((self.m, self.m))), dtype=complex)

    # -- arithmetic ---------------------------------------------------------
    def _check(self, other: "OperatorSymbol"):
        if (self.d, self.m) != (other.d, other.m):
            raise SymbolError("symbols live on different (d, m)")

    def __add__(self, other: "OperatorSymbol") -> "OperatorSymbol":
        self._check(other)
        out = {k: np.array(v) for k, v in self._coeffs.items()}
        for k, v in other._coeffs.items():
            out[k] = out.get(k, 0) + v
        return OperatorSymbol(self.d, self.m, out, max_degree=10**6)

    def __neg__(self) -> "OperatorSymbol":
        return self.scale(-1.0)

    def __sub__(self, other: "OperatorSymbol") -> "OperatorSymbol":
        return self + (-other)

    def scale(self, c: complex) -> "OperatorSymbol":
        return OperatorSymbol(self.d, self.m, {k: c * v for k, v in self._coeffs.items()},
                              max_degree=10**6)

    def map_coeffs(self, fn) -> "OperatorSymbol":
        """New symbol with coefficients fn(index, A)."""
        return OperatorSymbol(self.d, self.m, {k: fn(k, v) for k, v in self._coeffs.items()},
                              max_degree=10**6)

    # -- evaluation -----------------------------------------------------------
    def _monomials(self, z: NDArray, idx: Iterable[Index]) -> NDArray:
        return np.array([np.prod(z ** np.array(k)) for k in idx], dtype=complex)

    def __call__(self, z: ArrayLike) -> NDArray:
        z = _point(z, self.d)
        if not self._coeffs:
            return np.zeros((self.m, self.m), dtype=complex)
        keys = list(self._coeffs)
        mon = self._monomials(z, keys)
        return np.einsum("g,gij->ij", mon, np.stack([self._coeffs[k] for k in keys]))

    def derivative(self, k: int) -> "OperatorSymbol":
        """The symbol D_k T = dT/dz_k."""
        out = {}
        for idx, a in self._coeffs.items():
            if idx[k] > 0:
                new = list(idx)
                new[k] -= 1
                out[tuple(new)] = idx[k] * a
        return OperatorSymbol(self.d, self.m, out, max_degree=10**6)

    def compose_unitary(self, U: ArrayLike) -> "OperatorSymbol":
        """The symbol z -> T(U z)."""
        U = np.asarray(U, dtype=complex)
        d = self.d
        out: dict[Index, NDArray] = {}
        for idx, a in self._coeffs.items():
            poly = {(0,) * d: 1.0 + 0j}
            for i, e in enumerate(idx):
                row = {tuple(int(j == q) for j in range(d)): U[i, q] for q in range(d)}
                for _ in range(e):
                    poly = _poly_mul(poly, row)
            for mono, c in poly.items():
                if c != 0:
                    out[mono] = out.get(mono, 0) + c * a
        return OperatorSymbol(d, self.m, out, max_degree=10**6)

    def fejer(self, N: int) -> "OperatorSymbol":
        return fejer_approx(self, N)

    # -- constructors ---------------------------------------------------------
    @classmethod
    def monomial(cls, index: Iterable[int], A: ArrayLike, m: int | None = None) -> "OperatorSymbol":
        index = tuple(index)
        A = np.asarray(A, dtype=complex)
        m = A.shape[0] if A.ndim == 2 else (m or 1)
        return cls(len(index), m, {index: A})

    @classmethod
    def zero(cls, d: int, m: int) -> "OperatorSymbol":
        return cls(d, m, {})


def _rebuild_symbol(d: int, m: int, coeffs: dict) -> OperatorSymbol:
    return OperatorSymbol(d, m, coeffs, max_degree=max((sum(k) for k in coeffs), default=0))


def _poly_mul(p: dict, q: dict) -> dict:
    out: dict = {}
    for a, x in p.items():
        for b, y in q.items():
            k = tuple(i + j for i, j in zip(a, b))
            out[k] = out.get(k, 0) + x * y
    return out


def _point(z: ArrayLike, d: int) -> NDArray:
    z = np.asarray(z, dtype=complex).ravel()
    if z.size != d:
        raise SymbolError(f"point has {z.size} coordinates, symbol has d={d}")
    return z


# ---------------------------------------------------------------------------
# literals


def _complex(x) -> complex:
    if isinstance(x, (list, tuple)):
        if len(x) != 2:
            raise SymbolError(f"complex literal must be [re, im], got {x!r}")
        return complex(float(x[0]), float(x[1]))
    if isinstance(x, (int, float)):
        return complex(x)
    raise SymbolError(f"not a number: {x!r}")


def parse_matrix(obj, m: int) -> NDArray:
    """Matrix literal: nested rows of numbers or [re, im] pairs, or a scalar (times I)."""
    if isinstance(obj, (int, float)) or (isinstance(obj, (list, tuple)) and len(obj) == 2
                                          and all(isinstance(v, (int, float)) for v in obj) and m != 2):
        return _complex(obj) * np.eye(m, dtype=complex)
    rows = [[_complex(v) for v in row] for row in obj]
    a = np.array(rows, dtype=complex)
    if a.shape != (m, m):
        raise SymbolError(f"matrix literal has shape {a.shape}, expected ({m}, {m})")
    return a


_FACTOR = re.compile(r"^z(?P<i>\d*)(\^(?P<e>\d+))?$")


def parse_polynomial(text: str, d: int, m: int) -> OperatorSymbol:
    """Scalar polynomial shorthand such as ``"z1 + 0.5*z1^3 - 2*z1*z2"`` times I_m.

    In d = 1 the bare variable ``z`` means z1.
    """
    src = text.replace(" ", "")
    if not src:
        raise SymbolError("empty polynomial")
    pieces = re.findall(r"[+-]?[^+-]+", src.replace("e-", "e_").replace("e+", "e~"))
    coeffs: dict[Index, complex] = {}
    for piece in pieces:
        piece = piece.replace("e_", "e-").replace("e~", "e+")
        sign = -1.0 if piece.startswith("-") else 1.0
        piece = piece.lstrip("+-")
        factors = piece.split("*")
        if not piece or "" in factors:
            raise SymbolError(f"malformed term {piece!r} in {text!r}")
        c = sign
        idx = [0] * d
        for f in factors:
            try:
                c *= float(f)
                continue
            except ValueError:
                pass
            mo = _FACTOR.match(f)
            if not mo:
                raise SymbolError(f"cannot parse factor {f!r} in {text!r}")
            i = int(mo.group("i") or 1) - 1
            if not 0 <= i < d:
                raise SymbolError(f"variable z{i + 1} out of range for d={d}")
            idx[i] += int(mo.group("e") or 1)
        coeffs[tuple(idx)] = coeffs.get(tuple(idx), 0) + c
    return OperatorSymbol(d, m, {k: v * np.eye(m) for k, v in coeffs.items()})


def symbol_from_literal(obj, d: int, m: int) -> OperatorSymbol:
    """Symbol from a config literal.

    Accepted forms: a polynomial string (see ``parse_polynomial``) or a list
    of terms ``{"index": [..], "matrix": ...}``.
    """
    if isinstance(obj, str):
        return parse_polynomial(obj, d, m)
    if not isinstance(obj, list):
        raise SymbolError("symbol literal must be a string or a list of terms")
    coeffs: dict[Index, NDArray] = {}
    for n, term in enumerate(obj):
        if not isinstance(term, dict) or "index" not in term or "matrix" not in term:
            raise SymbolError(f"term {n}: expected object with 'index' and 'matrix'")
        idx = tuple(int(i) for i in term["index"])
        if len(idx) != d:
            raise SymbolError(f"term {n}: index {idx} has length != d={d}")
        coeffs[idx] = coeffs.get(idx, 0) + parse_matrix(term["matrix"], m)
    return OperatorSymbol(d, m, coeffs)


def symbol_to_literal(T: OperatorSymbol) -> list:
    return [{"index": list(k), "matrix": [[[v.real, v.imag] for v in row] for row in a]}
            for k, a in T.coeffs.items()]


def random_symbol(rng: np.random.Generator, d: int, m: int, degree: int, *,
                  density: float = 0.6, scale: float = 1.0) -> OperatorSymbol:
    """Random symbol with complex gaussian coefficients on a random subset of
    multi-indices of total degree 1..degree, plus a constant term."""
    coeffs: dict[Index, NDArray] = {}
    for idx in product(range(degree + 1), repeat=d):
        if sum(idx) > degree:
            continue
        if sum(idx) > 0 and rng.random() > density:
            continue
        a = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
        coeffs[idx] = scale * a / math.sqrt(2 * m)
    if all(sum(k) == 0 for k in coeffs):
        idx = tuple([degree] + [0] * (d - 1))
        coeffs[idx] = scale * (rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))) / math.sqrt(2 * m)
    return OperatorSymbol(d, m, coeffs)


# ---------------------------------------------------------------------------
# derivatives and Q_T


@dataclass(frozen=True)
class SymbolDerivatives:
    z: NDArray
    T: NDArray            # T(z)
    D: NDArray            # (d, m, m): D_k T(z)
    RT: NDArray           # sum_k z_k D_k T(z)
    Tij: dict             # (i, j) -> conj(z_i) D_j T - conj(z_j) D_i T, i < j


def symbol_derivatives(T: OperatorSymbol, z: ArrayLike) -> SymbolDerivatives:
    z = _point(z, T.d)
    D = np.stack([T.derivative(k)(z) for k in range(T.d)])
    RT = np.einsum("k,kij->ij", z, D)
    Tij = {(i, j): np.conj(z[i]) * D[j] - np.conj(z[j]) * D[i]
           for i in range(T.d) for j in range(i + 1, T.d)}
    return SymbolDerivatives(z, T(z), D, RT, Tij)


@dataclass(frozen=True)
class QMatrix:
    z: NDArray
    Q: NDArray
    route: str

    @property
    def norm(self) -> float:
        """Spectral norm of Q_T(z)."""
        ev = np.linalg.eigvalsh(self.Q)
        if ev[0] < -NEG_EIG_CLIP * max(1.0, abs(ev[-1])):
            raise SymbolError(f"Q_T(z) has a negative eigenvalue {ev[0]:.3e}")
        return float(max(ev[-1], 0.0))

    @property
    def sqrt_norm(self) -> float:
        return math.sqrt(self.norm)


def _dagger(a: NDArray) -> NDArray:
    return np.swapaxes(a.conj(), -1, -2)


def q_matrix(T: OperatorSymbol, bd: BergmanData, route: str = "qt",
             derivs: SymbolDerivatives | None = None) -> QMatrix:
    """Q_T(z) = sum_ij conj(B^{-1})_ij D_j T (D_i T)^*, by one of three routes."""
    if route not in ROUTES:
        raise SymbolError(f"unknown route {route!r}; expected one of {ROUTES}")
    sd = symbol_derivatives(T, bd.z) if derivs is None else derivs
    D = sd.D
    if route == "qt":
        Binv = bd.B_inv
        Q = np.einsum("ij,jab,icb->ac", Binv.conj(), D, D.conj())
    elif route == "b2":
        r = bd.r
        if r == 0:
            raise SymbolError("route b2 needs z != 0; use route 'qt' at the origin")
        Q = sd.RT @ _dagger(sd.RT) / (bd.lam * r)
        for t in sd.Tij.values():
            Q = Q + t @ _dagger(t) / (bd.mu * r)
    else:
        c = bd.B_inv_sqrt
        C = np.einsum("kj,kab->jab", c, D)
        Q = np.einsum("jab,jcb->ac", C, C.conj())
    Q = 0.5 * (Q + _dagger(Q))
    return QMatrix(bd.z, Q, route)


# ---------------------------------------------------------------------------
# grids and norms


def default_grid(d: int, radii: ArrayLike | None = None, directions: int = 32,
                 seed: int = 0) -> NDArray:
    """Points r * u for log-spaced radii and quasi-random unit directions u.

    d = 1 uses golden-ratio angles; d >= 2 maps a scrambled Sobol sequence
    through the normal quantile function onto the sphere.
    """
    radii = np.geomspace(0.1, 8.0, 24) if radii is None else np.asarray(radii, dtype=float)
    dirs = unit_directions(d, directions, seed)
    return (radii[:, None, None] * dirs[None, :, :]).reshape(-1, d)


def unit_directions(d: int, n: int, seed: int = 0) -> NDArray:
    if d == 1:
        golden = (math.sqrt(5.0) - 1.0) / 2.0
        return np.exp(2j * math.pi * ((np.arange(n) * golden) % 1.0))[:, None]
    from scipy.stats import norm, qmc

    u = qmc.Sobol(2 * d, scramble=True, seed=seed).random(n)
    g = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    v = g[:, :d] + 1j * g[:, d:]
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def q_norms(T: OperatorSymbol, coeffs: KernelCoeffs, points: ArrayLike, route: str = "qt") -> NDArray:
    """||Q_T(z)||^{1/2} at every point."""
    pts = np.atleast_2d(np.asarray(points, dtype=complex))
    return np.array([q_matrix(T, bergman_data(coeffs, z), route).sqrt_norm for z in pts])


def bloch_seminorm(T: OperatorSymbol, coeffs: KernelCoeffs, grid: ArrayLike | None = None) -> float:
    grid = default_grid(T.d) if grid is None else grid
    if T.is_constant():
        return 0.0
    return float(q_norms(T, coeffs, grid).max())


def bloch_norm(T: OperatorSymbol, coeffs: KernelCoeffs, grid: ArrayLike | None = None) -> float:
    """||T(0)|| + sup over the grid of ||Q_T(z)||^{1/2}."""
    return float(np.linalg.norm(T.constant_term(), 2)) + bloch_seminorm(T, coeffs, grid)


def e_norm_ratio(T: OperatorSymbol, coeffs: KernelCoeffs, z: ArrayLike, *,
                 samples: int = 200, rng: np.random.Generator | None = None) -> float:
    """E(z) / ||Q_T(z)||^{1/2} with E(z) = sup_xi ||sum_k xi_k D_k T(z)|| / beta(z, xi).

    The sup runs over ``samples`` random unit directions plus the canonical
    ones.  Returns nan when both quantities vanish.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    bd = bergman_data(coeffs, z)
    sd = symbol_derivatives(T, bd.z)
    d = T.d
    xi = rng.standard_normal((samples, d)) + 1j * rng.standard_normal((samples, d))
    xi = np.vstack([xi / np.linalg.norm(xi, axis=1, keepdims=True), np.eye(d)])
    num = np.linalg.norm(np.einsum("nk,kab->nab", xi, sd.D), ord=2, axis=(1, 2))
    beta = np.sqrt(np.einsum("ni,ij,nj->n", xi.conj(), bd.B, xi).real)
    E = float(np.max(num / beta))
    q = q_matrix(T, bd, "qt", sd).sqrt_norm
    if q == 0.0:
        return math.nan if E == 0.0 else math.inf
    return E / q


def tail_radii(R: float, steps: int = 8, factor: float = 1.25) -> NDArray:
    return R * factor ** np.arange(steps)


def little_bloch_tail(T: OperatorSymbol, coeffs: KernelCoeffs, R: float, *,
                      directions: int = 32, seed: int = 0) -> float:
    """max over |z| in {R, 1.25R, ..., 1.25^7 R} of ||Q_T(z)||^{1/2}."""
    if R <= 0:
        raise ValueError("R must be > 0")
    if T.is_constant():
        return 0.0
    return float(q_norms(T, coeffs, default_grid(T.d, tail_radii(R), directions, seed)).max())


def fejer_multipliers(index: Index, N: int) -> float:
    return float(np.prod([max(0.0, 1.0 - g / (N + 1.0)) for g in index]))


def fejer_approx(T: OperatorSymbol, N: int) -> OperatorSymbol:
    """Fejer mean T_N: coefficients A_g times prod_j max(0, 1 - g_j / (N + 1))."""
    if N < 0:
        raise ValueError("N must be >= 0")
    return T.map_coeffs(lambda k, a: fejer_multipliers(k, N) * a)


def fejer_by_convolution(T: OperatorSymbol, N: int, z: ArrayLike, nodes: int = 256) -> NDArray:
    """T_N(z) in d = 1 by trapezoidal convolution of theta -> T(e^{i theta} z)
    with the Fejer kernel; an independent check of the multiplier formula."""
    if T.d != 1:
        raise SymbolError("convolution check implemented for d = 1")
    z = _point(z, 1)
    th = 2 * math.pi * np.arange(nodes) / nodes
    k = np.arange(-N, N + 1)
    fk = 1.0 - np.abs(k) / (N + 1.0)
    kern = np.real(np.exp(1j * np.outer(th, k)) @ fk)
    vals = np.stack([T(np.exp(-1j * t) * z) for t in th])
    return np.einsum("t,tab->ab", kern, vals) / nodes


def berg_norm(T: OperatorSymbol, coeffs: KernelCoeffs, pairs: Iterable) -> float:
    """||T(0)|| + max over pairs of ||T(z) - T(w)|| / d(z, w).

    d is an upper bound on the Bergman distance, so the quotient is a lower
    bound for the true supremum over the sampled pairs.
    """
    best = 0.0
    for z, w in pairs:
        dist = bergman_distance(coeffs, z, w).value
        if dist == 0:
            raise SymbolError("berg_norm needs z != w")
        best = max(best, float(np.linalg.norm(T(z) - T(w), 2)) / dist)
    return float(np.linalg.norm(T.constant_term(), 2)) + best


def lipschitz_check(T: OperatorSymbol, coeffs: KernelCoeffs, z: ArrayLike, w: ArrayLike,
                    seminorm: float | None = None) -> float:
    """||T(z) - T(w)|| / (Bloch seminorm * d(z, w)); expected <= sqrt(d)."""
    z = _point(z, T.d)
    w = _point(w, T.d)
    if np.allclose(z, w, rtol=0, atol=0):
        raise SymbolError("lipschitz_check needs z != w")
    diff = float(np.linalg.norm(T(z) - T(w), 2))
    if diff == 0.0:
        return 0.0
    seminorm = bloch_seminorm(T, coeffs) if seminorm is None else seminorm
    return diff / (seminorm * bergman_distance(coeffs, z, w).value)
