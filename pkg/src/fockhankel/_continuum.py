"""Kernel series F(t) = sum_k f_k t^k when the dominant index is huge.

For the exp weight the terms f_k r^k peak near k = Phi(r), which is ~1e17 at
|z| = 6.  Summing is out of the question, but the terms form a smooth bell
of width sigma >> 1 in k, so by Poisson summation the sum equals the
integral over real k up to O(exp(-2 pi^2 sigma^2)).

Write l(k) = log f_k + k log r.  The log-moment log M(k) is the only hard
piece; around an anchor k0 it is expanded as

    log M(k0 + delta) - log M(k0) = delta log r + log E_k0[exp(delta v)],

with v = log s - log r under the density proportional to
s^(k0+d-1) exp(-Psi(s)).  The anchor quantities are computed in mpmath at
a precision scaled to |l(k0)|; everything relative to the anchor fits in
doubles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np

from .weights import WeightModel

_GL16_X, _GL16_W = np.polynomial.legendre.leggauss(16)
_U_HALFWIDTH = 36.0
_U_PANELS = 24
_K_HALFWIDTH = 14.0
_K_PANELS = 10


@dataclass(frozen=True)
class ContinuumProfile:
    r: float
    log_F: float
    log_F_minus_psi: float
    G: float           # F'/F at r
    dG: float          # (F'/F)' at r
    k_center: float
    k_sigma: float


def _lse(x: np.ndarray, axis=-1) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    return (m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))).squeeze(axis)


class _Anchor:
    """Density nodes of s^(k+d-1) e^{-Psi(s)} in u = log s, around its peak."""

    def __init__(self, weight: WeightModel, d: int, k, log_r):
        self.k = k
        A = k + d
        s_peak = weight.phi_inverse_mp(A)
        u_peak = mpmath.log(s_peak)
        width = 1 / mpmath.sqrt(s_peak * weight.dphi_mp(s_peak))
        h_peak = A * u_peak - weight.psi_mp(s_peak)
        edges = np.linspace(-_U_HALFWIDTH, _U_HALFWIDTH, _U_PANELS + 1)
        half = (edges[1] - edges[0]) / 2
        xs = (edges[:-1, None] + half * (_GL16_X[None, :] + 1.0)).ravel()
        ws = np.tile(_GL16_W * half, _U_PANELS)
        q = np.empty(xs.size)
        v = np.empty(xs.size)
        for i, x in enumerate(xs):
            u = u_peak + width * mpmath.mpf(float(x))
            s = mpmath.exp(u)
            q[i] = float(A * u - weight.psi_mp(s) - h_peak)
            v[i] = float(u - log_r)
        self.log_w = np.log(ws) + float(mpmath.log(width))
        self.q = q
        self.v = v
        self.base = _lse(self.log_w + q)
        self.log_M = h_peak + self.base  # mp + float
        self.d = d

    def delta_l(self, delta: np.ndarray) -> np.ndarray:
        """l(k + delta) - l(k) for an array of offsets."""
        delta = np.asarray(delta, dtype=float)
        k = float(self.k)
        out = np.zeros_like(delta)
        for i in range(1, self.d):
            out += np.log1p(delta / (k + i))
        lse = _lse(self.log_w[None, :] + self.q[None, :] + delta[:, None] * self.v[None, :])
        return out - (lse - self.base)

    def moments_v(self, delta: float):
        x = self.log_w + self.q + delta * self.v
        p = np.exp(x - x.max())
        p /= p.sum()
        mean = float(np.dot(p, self.v))
        var = float(np.dot(p, (self.v - mean) ** 2))
        return mean, var


def _dps_for(k_guess: float, log_r: float) -> int:
    scale = max(1.0, abs(k_guess) * (abs(log_r) + 1.0))
    return 30 + int(math.log10(scale))


@lru_cache(maxsize=4096)
def continuum_profile(weight: WeightModel, d: int, r: float) -> ContinuumProfile:
    """log F(r), F'/F and (F'/F)' by continuous-index summation (r > 0)."""
    if r <= 0:
        raise ValueError("continuum regime needs r > 0")
    k_guess = max(float(weight.phi(np.array(r))) - d, 10.0)
    if not math.isfinite(k_guess) or not math.isfinite(float(weight.psi(np.array(r)))):
        raise ValueError(f"continuum regime: Psi overflows at r={r:g}")
    with mpmath.workdps(_dps_for(k_guess, math.log(r))):
        log_r = mpmath.log(mpmath.mpf(r))
        k = max(weight.phi_mp(r) - d, mpmath.mpf(10))
        for _ in range(8):
            anc = _Anchor(weight, d, k, log_r)
            delta = 0.0
            for _ in range(50):
                mean, var = anc.moments_v(delta)
                g1 = sum(1.0 / (float(k) + delta + i) for i in range(1, d)) - mean
                g2 = -sum(1.0 / (float(k) + delta + i) ** 2 for i in range(1, d)) - var
                step = -g1 / g2
                delta += step
                if abs(delta) > 3.0 / math.sqrt(-g2):
                    break  # far from the anchor: recentre before iterating further
                if abs(step) < 1e-10 * (1.0 + abs(delta)):
                    break
            sigma = 1.0 / math.sqrt(-g2)
            if abs(delta) <= 3.0 * sigma:
                break
            k = k + mpmath.mpf(delta)
        else:
            raise RuntimeError("continuum kernel: could not centre the index window")
        if float(k) + delta < 20.0 * sigma:
            raise ValueError("continuum regime needs the index window far from k = 0")
        edges = delta + sigma * np.linspace(-_K_HALFWIDTH, _K_HALFWIDTH, _K_PANELS + 1)
        half = (edges[1] - edges[0]) / 2
        ds = (edges[:-1, None] + half * (_GL16_X[None, :] + 1.0)).ravel()
        wts = np.tile(_GL16_W * half, _K_PANELS)
        dl = anc.delta_l(ds)
        peak = dl.max()
        e = np.exp(dl - peak) * (wts / sigma)
        total = e.sum()
        x = (ds - delta) / sigma  # sigma units keep the moments finite for huge k
        mean_x = float(np.dot(e, x) / total)
        mean_d = delta + sigma * mean_x
        var_d = sigma * sigma * float(np.dot(e, (x - mean_x) ** 2) / total)
        l_anchor = (sum(mpmath.log(k + i) for i in range(1, d))
                    - anc.log_M + k * log_r - d * mpmath.log(mpmath.pi))
        log_F = l_anchor + peak + math.log(total) + math.log(sigma)
        log_F_minus_psi = log_F - weight.psi_mp(mpmath.mpf(r))
        k_mean = k + mean_d
        G = k_mean / r
        dG = (var_d - k_mean) / mpmath.mpf(r) ** 2
        return ContinuumProfile(r, float(log_F), float(log_F_minus_psi), float(G), float(dG),
                                float(k_mean), math.sqrt(var_d))


def continuum_log_F_complex(weight: WeightModel, d: int, t: complex) -> tuple[float, float]:
    """(log|F(t)|, arg F(t)) in the continuous-index regime."""
    rho = abs(t)
    theta = math.atan2(t.imag, t.real)
    prof = continuum_profile(weight, d, rho)
    with mpmath.workdps(_dps_for(prof.k_center, math.log(rho))):
        log_r = mpmath.log(mpmath.mpf(rho))
        k = mpmath.mpf(round(prof.k_center))
        anc = _Anchor(weight, d, k, log_r)
        delta = prof.k_center - float(k)
        edges = delta + prof.k_sigma * np.linspace(-_K_HALFWIDTH, _K_HALFWIDTH, _K_PANELS + 1)
        half = (edges[1] - edges[0]) / 2
        ds = (edges[:-1, None] + half * (_GL16_X[None, :] + 1.0)).ravel()
        wts = np.tile(_GL16_W * half, _K_PANELS)
        dl = anc.delta_l(ds)
        peak = dl.max()
        amp = np.sum(np.exp(dl - peak) * wts * np.exp(1j * ds * theta))
        l_anchor = (sum(mpmath.log(k + i) for i in range(1, d))
                    - anc.log_M + k * log_r - d * mpmath.log(mpmath.pi))
        phase0 = float(mpmath.fmod(k * mpmath.mpf(theta), 2 * mpmath.pi))
        if amp == 0:
            return -math.inf, 0.0
        return float(l_anchor + peak) + math.log(abs(amp)), phase0 + math.atan2(amp.imag, amp.real)
