"""Reproducing kernel K(z, w) = F(<z, w>), Bergman matrix and polyball geometry.

With moments M_k of the radial weight,

    f_k = (d-1+k)! / (pi^d k! M_k),      w_nu = pi^d nu! M_|nu| / (d-1+|nu|)!,

where w_nu = ||z^nu||^2 are the monomial norms.  Everything is carried in
log space: ``log_f`` and ``log_w``.

Radial quantities at r = |z|^2 (log F, G = F'/F and G') are needed far
beyond what a fixed truncation can reach, so ``radial_profile`` picks the
truncation from the location of the dominant terms of f_k r^k and hands
over to the continuous-index evaluation in ``_continuum`` once that index
exceeds ``KMAX_DIRECT``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import gammaln, logsumexp

from ._continuum import continuum_log_F_complex, continuum_profile
from .moments import MomentTable, compute_moments
from .weights import WeightModel

KMAX_DIRECT = 200_000
DEFAULT_KMAX = {1: 120, 2: 60, 3: 60}
TAIL_RTOL = 1e-12
LOG_PI = math.log(math.pi)


class KernelRangeError(ValueError):
    """The kernel series truncation does not cover the requested argument."""


# ---------------------------------------------------------------------------
# coefficients


@dataclass(frozen=True)
class KernelCoeffs:
    moments: MomentTable
    log_f: NDArray = field(repr=False)

    @property
    def weight(self) -> WeightModel:
        return self.moments.weight

    @property
    def d(self) -> int:
        return self.moments.d

    @property
    def kmax(self) -> int:
        return self.moments.kmax

    @property
    def f(self) -> NDArray:
        with np.errstate(under="ignore"):
            return np.exp(self.log_f)

    def log_m(self, n: ArrayLike) -> NDArray:
        """log M_n for arbitrary n >= 0 (extends the moment table on demand)."""
        n = np.asarray(n, dtype=int)
        top = int(n.max()) if n.size else 0
        table = self.moments if top <= self.kmax else compute_moments(self.weight, self.d, top)
        return table.log_m[n]

    def log_w(self, nu: ArrayLike) -> NDArray:
        """log w_nu for multi-indices ``nu`` of shape (..., d)."""
        nu = np.asarray(nu, dtype=int)
        if nu.shape[-1] != self.d:
            raise ValueError(f"multi-index length {nu.shape[-1]} != d={self.d}")
        tot = nu.sum(axis=-1)
        return (self.d * LOG_PI + gammaln(nu + 1.0).sum(axis=-1) + self.log_m(tot)
                - gammaln(self.d + tot))

    def log_w_total(self, n: ArrayLike) -> NDArray:
        """log w of the monomial z_1^n (equivalently any nu with nu = (n, 0, ..., 0))."""
        n = np.asarray(n, dtype=int)
        return self.d * LOG_PI + gammaln(n + 1.0) + self.log_m(n) - gammaln(self.d + n)

    def log_terms(self, r: float) -> NDArray:
        if r <= 0:
            out = np.full(self.kmax + 1, -np.inf)
            out[0] = self.log_f[0]
            return out
        return self.log_f + np.arange(self.kmax + 1) * math.log(r)

    def tail_estimate(self, rho: float) -> float:
        """Relative size of the omitted tail of sum_k f_k rho^k.

        The terms are log-concave in k, so once the ratio of consecutive
        terms q drops below 1 the tail is bounded by last * q / (1 - q).
        """
        if rho <= 0:
            return 0.0
        lt = self.log_terms(rho)
        q = math.exp(lt[-1] - lt[-2])
        if q >= 1.0:
            return math.inf
        return math.exp(lt[-1] - logsumexp(lt)) * q / (1.0 - q)

    def widened(self, kmax: int) -> "KernelCoeffs":
        if kmax <= self.kmax:
            return self
        return kernel_coeffs(compute_moments(self.weight, self.d, kmax))

    def needed_kmax(self, rho: float) -> int:
        """Estimated truncation for a relative tail far below ``TAIL_RTOL``."""
        if rho <= 0:
            return 1
        w = self.weight
        peak = float(w.phi(np.array(rho)))
        spread = math.sqrt(rho * float(w.dphi(np.array(rho)))) if math.isfinite(peak) else math.inf
        return int(min(peak + 12.0 * spread + 50.0, 1e300))

    def covering(self, rho: float, rtol: float = TAIL_RTOL) -> "KernelCoeffs":
        """Coefficients whose truncation covers |t| = rho, widened if necessary.

        Raises KernelRangeError beyond ``KMAX_DIRECT`` terms.
        """
        need = self.needed_kmax(rho)
        if need > KMAX_DIRECT:
            raise KernelRangeError(
                f"|t|={rho:.6g} needs about {need:.3g} kernel terms (> {KMAX_DIRECT})")
        c = self.widened(need) if need > self.kmax else self
        while c.tail_estimate(rho) > rtol:
            if c.kmax >= KMAX_DIRECT:
                raise KernelRangeError(f"kernel tail above {rtol:g} at |t|={rho:.6g}")
            c = c.widened(min(2 * c.kmax, KMAX_DIRECT))
        return c


def kernel_coeffs(moments: MomentTable) -> KernelCoeffs:
    k = np.arange(moments.kmax + 1)
    d = moments.d
    log_f = gammaln(d + k) - gammaln(k + 1.0) - d * LOG_PI - moments.log_m
    return KernelCoeffs(moments, log_f)


@lru_cache(maxsize=64)
def make_kernel(weight: WeightModel, d: int, kmax: int | None = None) -> KernelCoeffs:
    """Kernel coefficients with the default truncation for ``d``."""
    if kmax is None:
        kmax = DEFAULT_KMAX.get(d, 60)
    return kernel_coeffs(compute_moments(weight, d, kmax))


# ---------------------------------------------------------------------------
# evaluation of F


def eval_log_F(coeffs: KernelCoeffs, t: complex, *, widen: bool = True,
               rtol: float = TAIL_RTOL) -> tuple[float, float]:
    """(log|F(t)|, arg F(t)).

    With ``widen=False`` a tail above ``rtol`` raises KernelRangeError instead
    of extending the truncation.
    """
    t = complex(t)
    rho = abs(t)
    if rho == 0.0:
        return float(coeffs.log_f[0]), 0.0
    if widen:
        try:
            c = coeffs.covering(rho, rtol)
        except KernelRangeError:
            if coeffs.needed_kmax(rho) > KMAX_DIRECT:
                return continuum_log_F_complex(coeffs.weight, coeffs.d, t)
            raise
    else:
        c = coeffs
        tail = c.tail_estimate(rho)
        if tail > rtol:
            raise KernelRangeError(
                f"kernel tail {tail:.2e} above {rtol:g} at |t|={rho:.4g}; use a larger kmax")
    lt = c.log_terms(rho)
    m = lt.max()
    k = np.arange(c.kmax + 1)
    theta = math.atan2(t.imag, t.real)
    amp = np.exp(lt - m)
    s = np.sum(amp * np.exp(1j * k * theta))
    if abs(s) < 1e-8 * amp.sum():
        raise KernelRangeError(f"cancellation in F(t) at t={t:.4g}")
    return m + math.log(abs(s)), math.atan2(s.imag, s.real)


def eval_F(coeffs: KernelCoeffs, t: complex, **kw) -> complex:
    """F(t) = sum_k f_k t^k."""
    lg, ph = eval_log_F(coeffs, t, **kw)
    return complex(math.exp(lg) * math.cos(ph), math.exp(lg) * math.sin(ph))


def eval_kernel(coeffs: KernelCoeffs, z: ArrayLike, w: ArrayLike, **kw) -> complex:
    """K(z, w) = F(<z, w>) with <z, w> = sum z_i conj(w_i)."""
    z = np.asarray(z, dtype=complex).ravel()
    w = np.asarray(w, dtype=complex).ravel()
    return eval_F(coeffs, complex(np.vdot(w, z)), **kw)


def log_abs_kernel(coeffs: KernelCoeffs, z: ArrayLike, w: ArrayLike, **kw) -> float:
    z = np.asarray(z, dtype=complex).ravel()
    w = np.asarray(w, dtype=complex).ravel()
    return eval_log_F(coeffs, complex(np.vdot(w, z)), **kw)[0]


# ---------------------------------------------------------------------------
# radial profile: log F, F'/F, (F'/F)' at r = |z|^2


@dataclass(frozen=True)
class RadialProfile:
    r: NDArray
    log_F: NDArray
    log_F_minus_psi: NDArray   # log K(z,z) - Psi(|z|^2), finite far out
    G: NDArray                 # F'/F
    dG: NDArray                # (F'/F)'
    continuum: NDArray         # bool mask: evaluated in the continuous-index regime


def _direct_profile(c: KernelCoeffs, r: NDArray) -> tuple[NDArray, NDArray, NDArray]:
    """Vectorised log F, G, G' from the truncated series (all r covered by c)."""
    k = np.arange(c.kmax + 1, dtype=float)
    lF = np.empty(r.shape)
    G = np.empty(r.shape)
    dG = np.empty(r.shape)
    small = r < 1.0
    if small.any():
        rs = r[small]
        f = c.f
        kk = k[: min(c.kmax + 1, 400)]   # r < 1: terms die off well before 400
        ff = f[: kk.size]
        pw = rs[:, None] ** kk[None, :]
        F = pw @ ff
        F1 = pw[:, :-1] @ (kk[1:] * ff[1:])
        F2 = pw[:, :-2] @ (kk[2:] * (kk[2:] - 1) * ff[2:])
        lF[small] = np.log(F)
        G[small] = F1 / F
        dG[small] = F2 / F - (F1 / F) ** 2
    big = np.flatnonzero(~small)
    big = big[np.argsort(r[big])]
    # the terms concentrate in k within a few sqrt(r Phi'(r)) of Phi(r)
    w = c.weight
    centre = w.phi(r[big])
    spread = np.sqrt(r[big] * w.dphi(r[big]))
    lo = np.clip(np.floor(centre - 16.0 * spread - 50.0), 0, c.kmax).astype(int)
    hi = np.clip(np.ceil(centre + 16.0 * spread + 50.0), 0, c.kmax).astype(int)
    start = 0
    while start < big.size:
        stop = start + 1
        while (stop < big.size
               and (hi[stop] - lo[start] + 1) * (stop - start + 1) <= 4_000_000):
            stop += 1
        a, b = lo[start], hi[start:stop].max()
        idx = big[start:stop]
        rb = r[idx]
        ks = k[a:b + 1]
        lt = c.log_f[None, a:b + 1] + ks[None, :] * np.log(rb)[:, None]
        top = lt.max(axis=1)
        p = np.exp(lt - top[:, None])
        tot = p.sum(axis=1)
        p /= tot[:, None]
        k0 = ks[np.argmax(lt, axis=1)][:, None]   # shift to the mode to avoid cancellation
        dk = ks[None, :] - k0
        m1 = np.einsum("nk,nk->n", p, dk)
        var = np.einsum("nk,nk->n", p, dk * dk) - m1 * m1
        ek = k0[:, 0] + m1
        lF[idx] = top + np.log(tot)
        G[idx] = ek / rb
        dG[idx] = (var - ek) / rb**2
        start = stop
    return lF, G, dG


@lru_cache(maxsize=4096)
def _profile_point(weight: WeightModel, d: int, r: float) -> tuple[float, float, float, float, bool]:
    p = radial_profile(make_kernel(weight, d), np.array([r]))
    return float(p.log_F[0]), float(p.log_F_minus_psi[0]), float(p.G[0]), float(p.dG[0]), bool(p.continuum[0])


def radial_profile(coeffs: KernelCoeffs, r: ArrayLike) -> RadialProfile:
    """log F(r), F'/F and (F'/F)' at the points r = |z|^2 (array input)."""
    r_in = np.asarray(r, dtype=float)
    r = np.atleast_1d(r_in).ravel()
    if np.any(r < 0):
        raise ValueError("r = |z|^2 must be >= 0")
    weight, d = coeffs.weight, coeffs.d
    need = np.array([coeffs.needed_kmax(x) for x in r]) if r.size < 64 else _needed_vec(coeffs, r)
    cont = need > KMAX_DIRECT
    lF = np.empty(r.shape)
    G = np.empty(r.shape)
    dG = np.empty(r.shape)
    lFp = np.empty(r.shape)
    if (~cont).any():
        rd = r[~cont]
        c = coeffs.covering(float(rd.max()))
        a, b, e = _direct_profile(c, rd)
        lF[~cont], G[~cont], dG[~cont] = a, b, e
        lFp[~cont] = a - weight.psi(rd)
    for i in np.flatnonzero(cont):
        p = continuum_profile(weight, d, float(r[i]))
        lF[i], lFp[i], G[i], dG[i] = p.log_F, p.log_F_minus_psi, p.G, p.dG
    shape = np.atleast_1d(r_in).shape
    return RadialProfile(r.reshape(shape), lF.reshape(shape), lFp.reshape(shape),
                         G.reshape(shape), dG.reshape(shape), cont.reshape(shape))


def _needed_vec(coeffs: KernelCoeffs, r: NDArray) -> NDArray:
    w = coeffs.weight
    with np.errstate(over="ignore", invalid="ignore"):
        peak = w.phi(r)
        spread = np.sqrt(r * w.dphi(r))
        need = np.where(r > 0, peak + 12.0 * spread + 50.0, 1.0)
    return np.where(np.isfinite(need), need, np.inf)


def eval_logF_derivatives(coeffs: KernelCoeffs, r: float) -> tuple[float, float]:
    """(F'/F)(r) and (F'/F)'(r)."""
    p = _profile_point(coeffs.weight, coeffs.d, float(r))
    return p[2], p[3]


def log_kernel_diag(coeffs: KernelCoeffs, z: ArrayLike) -> float:
    """log K(z, z) - Psi(|z|^2)."""
    r = float(np.sum(np.abs(np.asarray(z, dtype=complex)) ** 2))
    return _profile_point(coeffs.weight, coeffs.d, r)[1]


# ---------------------------------------------------------------------------
# Bergman matrix


class BergmanError(ValueError):
    pass


@dataclass(frozen=True)
class BergmanData:
    z: NDArray
    lam: float
    mu: float
    P: NDArray
    B: NDArray
    B_inv: NDArray
    B_inv_sqrt: NDArray

    @property
    def r(self) -> float:
        return float(np.vdot(self.z, self.z).real)


def bergman_data(coeffs: KernelCoeffs, z: ArrayLike) -> BergmanData:
    """B(z) = lam P_z + mu (I - P_z) with P_z = z z^H / |z|^2 (P_0 := 0)."""
    z = np.asarray(z, dtype=complex).ravel()
    if z.size != coeffs.d:
        raise ValueError(f"point has {z.size} coordinates, kernel has d={coeffs.d}")
    r = float(np.vdot(z, z).real)
    G, dG = eval_logF_derivatives(coeffs, r)
    mu = G
    lam = G + r * dG
    if not (lam > 0 and mu > 0):
        raise BergmanError(f"non-positive Bergman eigenvalue at |z|^2={r:.4g}: lam={lam}, mu={mu}")
    d = z.size
    eye = np.eye(d, dtype=complex)
    P = np.outer(z, z.conj()) / r if r > 0 else np.zeros((d, d), dtype=complex)
    Q = eye - P
    return BergmanData(z, lam, mu, P,
                       lam * P + mu * Q,
                       P / lam + Q / mu,
                       P / math.sqrt(lam) + Q / math.sqrt(mu))


def bergman_metric(bd: BergmanData, xi: ArrayLike) -> float:
    """beta(z, xi) = sqrt(<B(z) xi, xi>)."""
    xi = np.asarray(xi, dtype=complex).ravel()
    return math.sqrt(max(float(np.vdot(xi, bd.B @ xi).real), 0.0))


_GL64_X, _GL64_W = np.polynomial.legendre.leggauss(64)


def _path_length(coeffs: KernelCoeffs, pts: NDArray) -> float:
    a, b = pts[:-1], pts[1:]
    dx = b - a                                              # (L, d)
    t = 0.5 * (_GL64_X + 1.0)
    x = a[:, None, :] + t[None, :, None] * dx[:, None, :]   # (L, 64, d)
    r = np.sum(np.abs(x) ** 2, axis=-1)
    prof = radial_profile(coeffs, r)
    inner = np.einsum("lkd,ld->lk", x.conj(), dx)           # <dx, x>
    q = prof.G * np.sum(np.abs(dx) ** 2, axis=-1)[:, None] + prof.dG * np.abs(inner) ** 2
    integrand = np.sqrt(np.maximum(q, 0.0))
    return float(np.sum(integrand * (0.5 * _GL64_W)[None, :]))


@dataclass(frozen=True)
class DistanceResult:
    value: float
    straight: float
    path: NDArray = field(repr=False)
    upper_bound: bool = True


def bergman_distance(coeffs: KernelCoeffs, z: ArrayLike, w: ArrayLike, *, legs: int = 4,
                     max_sweeps: int = 60) -> DistanceResult:
    """Upper bound on the Bergman distance by polyline length minimisation.

    Starts from the straight segment split into ``legs`` pieces and moves the
    interior vertices coordinate-wise while the length decreases.
    """
    z = np.asarray(z, dtype=complex).ravel()
    w = np.asarray(w, dtype=complex).ravel()
    sep = float(np.linalg.norm(z - w))
    if sep == 0.0:
        return DistanceResult(0.0, 0.0, np.stack([z, w]))
    pts = z[None, :] + np.linspace(0.0, 1.0, legs + 1)[:, None] * (w - z)[None, :]
    best = straight = _path_length(coeffs, np.stack([z, w]))
    d = z.size
    dirs = [(j, u) for j in range(d) for u in (1.0, 1j)]
    h = 0.25 * sep
    sweeps = 0
    while h > 1e-4 * sep and sweeps < max_sweeps:
        sweeps += 1
        improved = False
        for i in range(1, legs):
            for j, u in dirs:
                for sgn in (1.0, -1.0):
                    trial = pts.copy()
                    trial[i, j] += sgn * h * u
                    val = _path_length(coeffs, trial)
                    if val < best * (1.0 - 1e-12):
                        best, pts, improved = val, trial, True
        if not improved:
            h *= 0.5
    return DistanceResult(min(best, straight), straight, pts)


# ---------------------------------------------------------------------------
# polyballs D(z, a)


def _scales(weight: WeightModel, r: float, a: float) -> tuple[float, float]:
    """(radial, tangential) radii a Phi'(r)^{-1/2}, a Psi'(r)^{-1/2}."""
    return (a * math.exp(-0.5 * float(weight.log_dphi(np.array(r)))),
            a * math.exp(-0.5 * float(weight.log_dpsi(np.array(r)))))


def polyball_contains(z: ArrayLike, weight: WeightModel, a: float, w: ArrayLike) -> NDArray | bool:
    """Membership of w (shape (d,) or (n, d)) in D(z, a)."""
    if a <= 0:
        raise ValueError("a must be > 0")
    z = np.asarray(z, dtype=complex).ravel()
    w = np.asarray(w, dtype=complex)
    single = w.ndim == 1
    w = np.atleast_2d(w)
    r = float(np.vdot(z, z).real)
    rad, tan = _scales(weight, r, a)
    if r > 0:
        u = z / math.sqrt(r)
        pw = (w @ u.conj())[:, None] * u[None, :]
    else:
        pw = np.zeros_like(w)
    ok = (np.linalg.norm(z[None, :] - pw, axis=1) <= rad) & (np.linalg.norm(w - pw, axis=1) <= tan)
    return bool(ok[0]) if single else ok


def _complement_basis(u: NDArray) -> NDArray:
    """Orthonormal basis (columns) of the orthogonal complement of unit u."""
    d = u.size
    m = np.column_stack([u, np.eye(d, dtype=complex)])
    q, _ = np.linalg.qr(m)
    return q[:, 1:d]


def unitary_to(z: ArrayLike) -> NDArray:
    """A unitary U with U e_1 = z / |z| (identity for z = 0)."""
    z = np.asarray(z, dtype=complex).ravel()
    nz = float(np.linalg.norm(z))
    if nz == 0.0:
        return np.eye(z.size, dtype=complex)
    u = z / nz
    if z.size == 1:
        return u.reshape(1, 1)
    return np.column_stack([u, _complement_basis(u)])


def sample_polyball(z: ArrayLike, weight: WeightModel, a: float, n: int,
                    rng: np.random.Generator) -> NDArray:
    """n points uniformly distributed (Lebesgue) in D(z, a), z != 0."""
    z = np.asarray(z, dtype=complex).ravel()
    d = z.size
    r = float(np.vdot(z, z).real)
    if r == 0:
        raise ValueError("sampling needs z != 0")
    rad, tan = _scales(weight, r, a)
    u = z / math.sqrt(r)
    c = math.sqrt(r) + rad * np.sqrt(rng.random(n)) * np.exp(2j * math.pi * rng.random(n))
    pts = c[:, None] * u[None, :]
    if d > 1:
        k = 2 * (d - 1)
        g = rng.standard_normal((n, k))
        g *= (tan * rng.random(n) ** (1.0 / k) / np.linalg.norm(g, axis=1))[:, None]
        tcoef = g[:, : d - 1] + 1j * g[:, d - 1:]
        pts = pts + tcoef @ _complement_basis(u).T
    return pts


def polyball_unitary_check(U: ArrayLike, z: ArrayLike, a: float, weight: WeightModel,
                           samples: int = 200, rng: np.random.Generator | None = None) -> bool:
    """Membership of w in D(z, a) equals membership of Uw in D(Uz, a).

    Test points are drawn from a box of twice the polyball radii so that
    both members and non-members occur.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    U = np.asarray(U, dtype=complex)
    z = np.asarray(z, dtype=complex).ravel()
    d = z.size
    rad, tan = _scales(weight, float(np.vdot(z, z).real), a)
    spread = 2.0 * max(rad, tan)
    w = z[None, :] + spread * (rng.uniform(-1, 1, (samples, d)) + 1j * rng.uniform(-1, 1, (samples, d)))
    inside = polyball_contains(z, weight, a, w)
    moved = polyball_contains(U @ z, weight, a, w @ U.T)
    return bool(np.all(inside == moved))


# ---------------------------------------------------------------------------
# diagnostics


def kernel_diag_check(coeffs: KernelCoeffs, weight: WeightModel, z: ArrayLike) -> float:
    """K(z,z) / (e^Psi Phi' Psi'^(d-1)) at r = |z|^2, evaluated in log space."""
    r = float(np.sum(np.abs(np.asarray(z, dtype=complex)) ** 2))
    log_ratio = (log_kernel_diag(coeffs, z) - float(weight.log_dphi(np.array(r)))
                 - (coeffs.d - 1) * float(weight.log_dpsi(np.array(r))))
    return math.exp(log_ratio)


def kernel_near_constancy(coeffs: KernelCoeffs, w: ArrayLike, a: float, n: int,
                          rng: np.random.Generator) -> float:
    """Minimum of |K(z,w)|^2 / (K(z,z) K(w,w)) over n uniform samples z in D(w, a)."""
    w = np.asarray(w, dtype=complex).ravel()
    pts = sample_polyball(w, coeffs.weight, a, n, rng)
    lw = log_kernel_diag(coeffs, w) + float(coeffs.weight.psi(np.array(np.vdot(w, w).real)))
    worst = math.inf
    for z in pts:
        lzw = log_abs_kernel(coeffs, z, w)
        rz = float(np.vdot(z, z).real)
        lz = log_kernel_diag(coeffs, z) + float(coeffs.weight.psi(np.array(rz)))
        worst = min(worst, math.exp(2.0 * lzw - lz - lw))
    return worst


@dataclass(frozen=True)
class AdmissibleRadius:
    a: float
    tried: dict
    threshold: float


def admissible_radius(coeffs: KernelCoeffs, centers: ArrayLike, n: int, rng: np.random.Generator,
                      candidates=(0.5, 0.25, 0.1), threshold: float = 0.5,
                      floor: float = 1e-3) -> AdmissibleRadius:
    """Largest candidate a with near-constancy >= threshold at every centre.

    If no candidate passes, a keeps halving below the smallest candidate.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=complex))
    tried = {}
    cands = sorted(candidates, reverse=True)
    a = cands[0]
    queue = list(cands)
    while queue:
        a = queue.pop(0)
        worst = min(kernel_near_constancy(coeffs, c, a, n, rng) for c in centers)
        tried[a] = worst
        if worst >= threshold:
            return AdmissibleRadius(a, tried, threshold)
        if not queue and a / 2 >= floor:
            queue.append(a / 2)
    raise ValueError(f"no admissible polyball radius down to {floor}")
