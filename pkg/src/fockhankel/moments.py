"""Radial moments M_k = int_0^inf s^(k+d-1) exp(-Psi(s)) ds.

Each moment is integrated by composite Gauss-Legendre panels on the window
where the integrand exceeds 1e-30 of its peak.  The peak sits at
s* = Phi^{-1}(k+d-1), so windows are found by bisection around it.  Panel
counts double until two successive rules agree to ``QUAD_RTOL``.

Values are stored as log M_k: gaussian M_k = (k+d-1)! overflows a double
around k = 170 while the kernel truncation routinely needs more.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from . import _accel
from ._accel import njit
from .weights import WeightModel

CUTOFF_LOG = math.log(1e30)
QUAD_RTOL = 1e-13
REPORTED_RTOL = 1e-10
GL_ORDER = 20
MAX_PANELS = 2048
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_ORDER)


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class MomentTable:
    weight: WeightModel
    d: int
    log_m: NDArray
    rel_err: NDArray
    panels: NDArray
    nodes_per_panel: int = GL_ORDER
    cutoff: float = 1e-30

    @property
    def kmax(self) -> int:
        return len(self.log_m) - 1

    @property
    def values(self) -> NDArray:
        """M_k as plain floats (overflows to inf for very large k)."""
        with np.errstate(over="ignore"):
            return np.exp(self.log_m)


# --------------------------------------------------------------------------
# integrand: exp(h(s) - h(s*)) with h(s) = a log s - Psi(s), written in terms
# of the offset t = s - s* so that nothing is computed as a difference of
# large numbers.

@njit
def _panel_sums_numba(code, p, a, center, lo, hi, npan, gx, gw):
    n = a.shape[0]
    out = np.empty(n)
    for i in range(n):
        width = (hi[i] - lo[i]) / npan
        acc = 0.0
        c = center[i]
        for j in range(npan):
            left = lo[i] + j * width
            for q in range(gx.shape[0]):
                s = left + 0.5 * width * (gx[q] + 1.0)
                t = s - c
                if c > 0.0:
                    logterm = a[i] * math.log1p(t / c)
                    if code == 0:
                        dpsi = t
                    elif code == 1:
                        dpsi = math.expm1(p * math.log1p(t / c)) * c**p
                    else:
                        dpsi = math.exp(c) * math.expm1(t)
                else:
                    logterm = 0.0
                    if code == 0:
                        dpsi = t
                    elif code == 1:
                        dpsi = t**p
                    else:
                        dpsi = math.expm1(t)
                acc += gw[q] * math.exp(logterm - dpsi)
        out[i] = acc * 0.5 * width
    return out


def _panel_sums_numpy(code, p, a, center, lo, hi, npan, gx, gw, chunk=2048):
    out = np.empty(a.shape[0])
    frac = (np.arange(npan)[:, None] + 0.5 * (gx[None, :] + 1.0)).ravel()
    wts = np.tile(gw, npan)
    for start in range(0, a.shape[0], chunk):
        sl = slice(start, start + chunk)
        width = (hi[sl] - lo[sl]) / npan
        s = lo[sl, None] + width[:, None] * frac[None, :]
        c = center[sl, None]
        t = s - c
        pos = c > 0
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            logterm = np.where(pos, a[sl, None] * np.log1p(t / np.where(pos, c, 1.0)), 0.0)
            if code == 0:
                dpsi = t
            elif code == 1:
                dpsi = np.where(pos, np.expm1(p * np.log1p(t / np.where(pos, c, 1.0))) * c**p, t**p)
            else:
                dpsi = np.where(pos, np.exp(c) * np.expm1(t), np.expm1(t))
            vals = np.exp(logterm - dpsi)
        out[sl] = (vals * wts[None, :]).sum(axis=1) * 0.5 * width
    return out


def panel_sums(code, p, a, center, lo, hi, npan):
    if _accel.USE_NUMBA:
        return _panel_sums_numba(code, float(p), a, center, lo, hi, int(npan), _GL_X, _GL_W)
    return _panel_sums_numpy(code, float(p), a, center, lo, hi, int(npan), _GL_X, _GL_W)


# --------------------------------------------------------------------------

def _log_integrand_offset(weight: WeightModel, a, center, t):
    """h(center + t) - h(center) for h(s) = a log s - Psi(s)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        logterm = np.where(center > 0, a * np.log1p(t / np.where(center > 0, center, 1.0)), 0.0)
    return logterm - weight.psi_offset(center, t)


def _window(weight: WeightModel, a: NDArray, center: NDArray):
    """Bisection for the points where the integrand drops to 1e-30 of its peak."""
    target = -CUTOFF_LOG
    n = a.shape[0]
    # right side: expand until below the target
    step = np.maximum(center, 1.0)
    for _ in range(200):
        val = _log_integrand_offset(weight, a, center, step)
        grow = val > target
        if not grow.any():
            break
        step = np.where(grow, 2.0 * step, step)
    lo_t, hi_t = np.zeros(n), step
    for _ in range(120):
        mid = 0.5 * (lo_t + hi_t)
        above = _log_integrand_offset(weight, a, center, mid) > target
        lo_t = np.where(above, mid, lo_t)
        hi_t = np.where(above, hi_t, mid)
    right = center + hi_t
    # left side: only when the peak is interior
    left = np.zeros(n)
    interior = center > 0
    if interior.any():
        lo_t = -center.copy()
        hi_t = np.zeros(n)
        for _ in range(120):
            mid = 0.5 * (lo_t + hi_t)
            above = _log_integrand_offset(weight, a, center, mid) > target
            hi_t = np.where(above, mid, hi_t)
            lo_t = np.where(above, lo_t, mid)
        left = np.where(interior, center + lo_t, 0.0)
    return np.maximum(left, 0.0), right


def _integrate(weight: WeightModel, ks: NDArray, d: int):
    a = (ks + d - 1).astype(float)
    center = weight.phi_inverse(a)
    center = np.where(a > 0, center, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        hstar = np.where(a > 0, a * np.log(np.where(center > 0, center, 1.0)), 0.0) - weight.psi(center)
    lo, hi = _window(weight, a, center)
    npan = 4
    todo = np.arange(len(ks))
    result = np.full(len(ks), np.nan)
    err = np.full(len(ks), np.nan)
    panels = np.zeros(len(ks), dtype=int)
    prev = panel_sums(weight.code, weight.s, a, center, lo, hi, npan)
    while todo.size:
        if npan > MAX_PANELS:
            raise QuadratureError(f"moment quadrature did not converge for k={int(ks[todo[0]])}")
        npan *= 2
        cur = panel_sums(weight.code, weight.s, a[todo], center[todo], lo[todo], hi[todo], npan)
        rel = np.abs(cur - prev) / np.abs(cur)
        ok = rel <= QUAD_RTOL
        idx = todo[ok]
        result[idx] = cur[ok]
        err[idx] = np.maximum(rel[ok], 1e-16)
        panels[idx] = npan
        todo = todo[~ok]
        prev = cur[~ok]
    if np.any(err > REPORTED_RTOL):
        bad = int(ks[np.argmax(err)])
        raise QuadratureError(f"moment quadrature error above {REPORTED_RTOL:g} for k={bad}")
    return hstar + np.log(result), err, panels


_cache: dict[tuple[WeightModel, int], MomentTable] = {}
_lock = threading.Lock()


def compute_moments(weight: WeightModel, d: int, kmax: int) -> MomentTable:
    """Moments M_0..M_kmax for the given weight and dimension.

    Results are memoised per (weight, d) and grown on demand, so repeated
    calls with increasing ``kmax`` only integrate the new entries.
    """
    if kmax < 0:
        raise ValueError("kmax must be >= 0")
    if d < 1:
        raise ValueError("dimension must be >= 1")
    key = (weight, d)
    with _lock:
        have = _cache.get(key)
        if have is None or have.kmax < kmax:
            start = 0 if have is None else have.kmax + 1
            top = max(kmax, 0 if have is None else int(1.25 * have.kmax))
            ks = np.arange(start, top + 1)
            lm, err, pan = _integrate(weight, ks, d)
            if have is not None:
                lm = np.concatenate([have.log_m, lm])
                err = np.concatenate([have.rel_err, err])
                pan = np.concatenate([have.panels, pan])
            have = MomentTable(weight, d, lm, err, pan)
            _cache[key] = have
    if have.kmax == kmax:
        return have
    return MomentTable(weight, d, have.log_m[: kmax + 1], have.rel_err[: kmax + 1], have.panels[: kmax + 1])
