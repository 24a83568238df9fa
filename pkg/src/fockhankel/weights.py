"""Radial weight profiles Psi and the derived function Phi(x) = x Psi'(x).

The measure on C^d is exp(-Psi(|z|^2)) dm_d(z).  Three families are built in:

* ``gaussian``: Psi(x) = x (the classical Fock space)
* ``power``:    Psi(x) = x**s with s = 1 or s >= 2
* ``exp``:      Psi(x) = exp(x)

All derivative evaluators are closed-form.  Every family also exposes
``log_dpsi``/``log_dphi`` etc. so that sweeps far out (exp weight) can be
done without overflow.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import mpmath
import numpy as np
from numpy.typing import ArrayLike, NDArray

FAMILIES = ("gaussian", "power", "exp")
FAMILY_CODE = {"gaussian": 0, "power": 1, "exp": 2}

DEFAULT_VALIDATION_GRID = (1e-3, 1e3, 200)
DEFAULT_CLASS_S_CEILING = 1e3


class InadmissibleWeightError(ValueError):
    """Raised when a weight violates Psi' > 0, Psi'' >= 0, Psi''' >= 0."""


@dataclass(frozen=True)
class WeightModel:
    family: str
    s: float = 1.0
    eta: float = 0.25
    label: str = field(default="", compare=False)

    @property
    def code(self) -> int:
        return FAMILY_CODE[self.family]

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.family == "power":
            return f"power-{self.s:g}"
        return self.family

    # -- Psi and derivatives -------------------------------------------------
    def psi(self, x: ArrayLike) -> NDArray:
        x = np.asarray(x, dtype=float)
        if self.family == "gaussian":
            return x.copy()
        if self.family == "power":
            return x**self.s
        with np.errstate(over="ignore"):
            return np.exp(x)

    def dpsi(self, x: ArrayLike) -> NDArray:
        x = np.asarray(x, dtype=float)
        if self.family == "gaussian":
            return np.ones_like(x)
        if self.family == "power":
            return self.s * x ** (self.s - 1.0)
        with np.errstate(over="ignore"):
            return np.exp(x)

    def d2psi(self, x: ArrayLike) -> NDArray:
        x = np.asarray(x, dtype=float)
        if self.family == "gaussian":
            return np.zeros_like(x)
        if self.family == "power":
            s = self.s
            if s == 1.0:
                return np.zeros_like(x)
            return s * (s - 1.0) * x ** (s - 2.0)
        with np.errstate(over="ignore"):
            return np.exp(x)

    def d3psi(self, x: ArrayLike) -> NDArray:
        x = np.asarray(x, dtype=float)
        if self.family == "gaussian":
            return np.zeros_like(x)
        if self.family == "power":
            s = self.s
            if s in (1.0, 2.0):
                return np.zeros_like(x)
            return s * (s - 1.0) * (s - 2.0) * x ** (s - 3.0)
        with np.errstate(over="ignore"):
            return np.exp(x)

    def phi(self, x: ArrayLike) -> NDArray:
        x = np.asarray(x, dtype=float)
        return x * self.dpsi(x)

    def dphi(self, x: ArrayLike) -> NDArray:
        x = np.asarray(x, dtype=float)
        return self.dpsi(x) + x * self.d2psi(x)

    def d2phi(self, x: ArrayLike) -> NDArray:
        x = np.asarray(x, dtype=float)
        return 2.0 * self.d2psi(x) + x * self.d3psi(x)

    # -- log-space versions (overflow safe) ----------------------------------
    def log_dpsi(self, x: ArrayLike) -> NDArray:
        x = np.asarray(x, dtype=float)
        if self.family == "gaussian":
            return np.zeros_like(x)
        if self.family == "power":
            with np.errstate(divide="ignore"):
                return np.log(self.s) + (self.s - 1.0) * np.log(x)
        return x.copy()

    def log_d2psi(self, x: ArrayLike) -> NDArray:
        x = np.asarray(x, dtype=float)
        if self.family == "exp":
            return x.copy()
        with np.errstate(divide="ignore"):
            return np.log(self.d2psi(x))

    def log_dphi(self, x: ArrayLike) -> NDArray:
        x = np.asarray(x, dtype=float)
        if self.family == "exp":
            return np.log1p(x) + x
        with np.errstate(divide="ignore"):
            return np.log(self.dphi(x))

    def log_d2phi(self, x: ArrayLike) -> NDArray:
        x = np.asarray(x, dtype=float)
        if self.family == "exp":
            return np.log(2.0 + x) + x
        with np.errstate(divide="ignore"):
            return np.log(self.d2phi(x))

    def phi_inverse(self, a: ArrayLike) -> NDArray:
        """Solve Phi(x) = a for x >= 0 (Phi is strictly increasing)."""
        a = np.asarray(a, dtype=float)
        if self.family == "gaussian":
            return a.copy()
        if self.family == "power":
            return (a / self.s) ** (1.0 / self.s)
        from scipy.special import lambertw

        return np.real(lambertw(a))

    # -- mpmath versions for the large-index kernel regime -------------------
    def psi_mp(self, x):
        if self.family == "gaussian":
            return mpmath.mpf(x)
        if self.family == "power":
            return mpmath.power(x, self.s)
        return mpmath.exp(x)

    def phi_mp(self, x):
        x = mpmath.mpf(x)
        if self.family == "gaussian":
            return x
        if self.family == "power":
            return self.s * mpmath.power(x, self.s)
        return x * mpmath.exp(x)

    def phi_inverse_mp(self, a):
        a = mpmath.mpf(a)
        if self.family == "gaussian":
            return a
        if self.family == "power":
            return mpmath.power(a / self.s, 1 / mpmath.mpf(self.s))
        return mpmath.lambertw(a).real

    def dphi_mp(self, x):
        x = mpmath.mpf(x)
        if self.family == "gaussian":
            return mpmath.mpf(1)
        if self.family == "power":
            s = mpmath.mpf(self.s)
            return s * s * mpmath.power(x, s - 1)
        return (1 + x) * mpmath.exp(x)

    def psi_offset(self, center: NDArray, t: NDArray) -> NDArray:
        """Psi(center + t) - Psi(center), computed without cancellation."""
        center = np.asarray(center, dtype=float)
        t = np.asarray(t, dtype=float)
        if self.family == "gaussian":
            return t + 0.0 * center
        if self.family == "power":
            with np.errstate(divide="ignore", invalid="ignore"):
                rel = np.expm1(self.s * np.log1p(t / center)) * center**self.s
            return np.where(center > 0, rel, np.abs(t) ** self.s)
        with np.errstate(over="ignore"):
            return np.exp(center) * np.expm1(t)


def make_weight(family: str, params: dict | Sequence[float] | None = None, *,
                eta: float | None = None,
                grid: tuple[float, float, int] = DEFAULT_VALIDATION_GRID) -> WeightModel:
    """Build and validate a weight.

    ``family`` may also carry its exponent inline, e.g. ``"power-2"``.
    """
    family = family.strip().lower()
    s = 1.0
    if family.startswith("power-"):
        s = float(family.split("-", 1)[1])
        family = "power"
    if family not in FAMILIES:
        raise InadmissibleWeightError(f"unknown weight family {family!r}; expected one of {FAMILIES}")
    if isinstance(params, dict):
        s = float(params.get("s", s))
        if eta is None and "eta" in params:
            eta = float(params["eta"])
    elif params:
        s = float(params[0])
    if eta is None:
        eta = 0.25
    if eta >= 0.5:
        raise InadmissibleWeightError(f"class-S exponent eta={eta} must be < 1/2")
    if family == "power":
        if s < 1.0:
            raise InadmissibleWeightError(f"power-{s:g}: Psi'' < 0 (need s = 1 or s >= 2)")
        if 1.0 < s < 2.0:
            raise InadmissibleWeightError(f"power-{s:g}: Psi''' < 0 since s(s-1)(s-2) < 0 for 1 < s < 2")
    w = WeightModel(family, s if family == "power" else 1.0, eta)
    validate_weight(w, grid)
    return w


def validate_weight(w: WeightModel, grid: tuple[float, float, int] = DEFAULT_VALIDATION_GRID) -> None:
    lo, hi, n = grid
    x = np.geomspace(lo, hi, n)
    with np.errstate(over="ignore", invalid="ignore"):
        checks = [
            ("Psi' > 0", w.dpsi(x) > 0),
            ("Psi'' >= 0", w.d2psi(x) >= 0),
            ("Psi''' >= 0", w.d3psi(x) >= 0),
            ("Phi' > 0", w.dphi(x) > 0),
        ]
    for name, ok in checks:
        if not np.all(ok):
            bad = x[~ok][0]
            raise InadmissibleWeightError(f"{w.name}: condition {name} violated at x={bad:.3g}")


@dataclass(frozen=True)
class ClassSReport:
    component: str
    eta: float
    max_ratio: float
    ceiling: float
    passed: bool


def class_s_diagnostic(weight: WeightModel, component: str = "phi", eta: float | None = None,
                       interval: tuple[float, float] = (1e-3, 1e3), n: int = 200,
                       ceiling: float = DEFAULT_CLASS_S_CEILING) -> ClassSReport:
    """Finite-range proxy for g'' = O(x^{-1/2} g'^{1+eta}).

    Reports sup of g''(x) x^{1/2} / g'(x)^{1+eta} over a log grid and passes
    iff it stays below ``ceiling``.
    """
    eta = weight.eta if eta is None else eta
    if eta >= 0.5:
        raise ValueError("eta must be < 1/2")
    lo, hi = interval
    if lo <= 0:
        raise ValueError("interval must lie in (0, inf)")
    x = np.geomspace(lo, hi, n)
    if component == "phi":
        lg1, lg2 = weight.log_dphi(x), weight.log_d2phi(x)
    elif component == "psi":
        lg1, lg2 = weight.log_dpsi(x), weight.log_d2psi(x)
    else:
        raise ValueError("component must be 'phi' or 'psi'")
    if not np.all(np.isfinite(lg1)):
        raise ValueError(f"{component}' vanishes on the sampled range")
    with np.errstate(invalid="ignore"):
        log_ratio = lg2 + 0.5 * np.log(x) - (1.0 + eta) * lg1
    ratio = np.exp(np.where(np.isfinite(log_ratio), log_ratio, -np.inf))
    sup = float(ratio.max())
    return ClassSReport(component, eta, sup, ceiling, sup <= ceiling)


def growth_estimates(weight: WeightModel, interval: tuple[float, float] = (1e-3, 50.0),
                     n: int = 200) -> dict[str, float]:
    """Sup over a grid of the two growth ratios used to place Bloch symbols in the
    admissible symbol class:

    * Psi'(x) / (1 + Psi(x))^{1/(1-eta)}
    * Phi'(x) / ((1 + x) (1 + Psi(x))^3)
    """
    x = np.geomspace(*interval, n)
    eta = weight.eta
    log1p_psi = np.log1p(weight.psi(x)) if weight.family != "exp" else np.logaddexp(0.0, np.exp(x))
    a = weight.log_dpsi(x) - log1p_psi / (1.0 - eta)
    b = weight.log_dphi(x) - np.log1p(x) - 3.0 * log1p_psi
    return {"A": float(np.exp(a.max())), "B": float(np.exp(b.max()))}


GAUSSIAN = WeightModel("gaussian")
POWER2 = WeightModel("power", 2.0)
EXP = WeightModel("exp")
BUILTIN_WEIGHTS = {"gaussian": GAUSSIAN, "power-2": POWER2, "exp": EXP}
