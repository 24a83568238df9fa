"""Experiment configuration: a JSON document of scenarios.

Example::

    {
      "seed": 42,
      "defaults": {"N": 14, "p": [3, 6]},
      "scenarios": [
        {"id": "fock-z", "weight": "gaussian", "d": 1, "m": 1, "symbol": "z"},
        {"id": "p2-mat", "weight": {"family": "power", "s": 2}, "d": 1, "m": 2,
         "symbol": [{"index": [1], "matrix": [[1, [0, 1]], [0, 2]]}]}
      ]
    }

Errors are reported as ``ConfigError`` with the JSON line/column or the
dotted path of the offending field.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np

from .symbols import OperatorSymbol, SymbolError, symbol_from_literal
from .weights import InadmissibleWeightError, WeightModel, make_weight

DEFAULT_TOLERANCES = {
    "route_agreement": 1e-9,
    "mo_agreement": 1e-6,
    "gram_consistency": 1e-10,
    "inverse_consistency": 1e-12,
    "reproducing": 1e-6,
    "trace_d1": 1e-4,
    "trace_d2": 1e-3,
    "hs_multiplier": 0.02,
    "e_ratio_slack": 0.1,
    "lipschitz_slack": 0.2,
    "m4_slack": 0.1,
    "equivalence_band": 100.0,
    "gaussian_band": 0.01,
    "diag_band": 10.0,
    "stabilization": 1e-4,
    "fejer_target": 0.05,
    "divergence_growth": 0.05,
    "besov_mo_factor": 10.0,
    "near_constancy": 0.5,
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    radii: tuple = (0.1, 8.0, 24)          # (lo, hi, count) log-spaced
    directions: int = 32

    def radii_array(self) -> np.ndarray:
        lo, hi, n = self.radii
        return np.geomspace(lo, hi, int(n))


@dataclass(frozen=True)
class Scenario:
    id: str
    weight: WeightModel
    d: int
    m: int
    symbol: OperatorSymbol
    symbol_text: Any
    N: int
    N_list: tuple
    p_list: tuple
    grid: GridSpec
    tolerances: dict
    cutoffs: tuple = (2.0, 4.0, 8.0, 16.0)
    tail_R: float = 5.0
    fejer_N: tuple = (1, 2, 4, 8, 16, 64)
    pairs: int = 6
    mc_samples: int = 500
    polyball_a: tuple = (0.5, 0.25, 0.1)


@dataclass(frozen=True)
class ExperimentConfig:
    scenarios: tuple
    seed: int = 42
    out_dir: str = "out"
    source: str = ""


_SCENARIO_KEYS = {"id", "weight", "d", "m", "symbol", "N", "N_list", "p", "grid", "tolerances",
                  "cutoffs", "tail_R", "fejer_N", "pairs", "mc_samples", "polyball_a"}


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _int(v, path, lo=None, hi=None) -> int:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or float(v) != int(v):
        _fail(path, f"expected an integer, got {v!r}")
    v = int(v)
    if lo is not None and v < lo or hi is not None and v > hi:
        _fail(path, f"value {v} outside [{lo}, {hi}]")
    return v


def _num(v, path, positive=False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        _fail(path, f"expected a finite number, got {v!r}")
    if positive and v <= 0:
        _fail(path, f"must be > 0, got {v}")
    return float(v)


def _num_list(v, path, positive=False) -> tuple:
    if not isinstance(v, list) or not v:
        _fail(path, "expected a non-empty list of numbers")
    return tuple(_num(x, f"{path}[{i}]", positive) for i, x in enumerate(v))


def _weight(v, path) -> WeightModel:
    try:
        if isinstance(v, str):
            return make_weight(v)
        if isinstance(v, dict):
            fam = v.get("family")
            if not isinstance(fam, str):
                _fail(f"{path}.family", "missing weight family")
            params = {k: val for k, val in v.items() if k != "family"}
            return make_weight(fam, params)
    except InadmissibleWeightError as exc:
        _fail(path, str(exc))
    _fail(path, "expected a family name or an object with 'family'")


def _scenario(raw: dict, idx: int, defaults: dict) -> Scenario:
    path = f"scenarios[{idx}]"
    if not isinstance(raw, dict):
        _fail(path, "expected an object")
    merged = {**defaults, **raw}
    unknown = set(merged) - _SCENARIO_KEYS
    if unknown:
        _fail(path, f"unknown field(s) {sorted(unknown)}")
    sid = merged.get("id", f"s{idx}")
    if not isinstance(sid, str) or not sid:
        _fail(f"{path}.id", "must be a non-empty string")
    if "weight" not in merged:
        _fail(f"{path}.weight", "required")
    weight = _weight(merged["weight"], f"{path}.weight")
    d = _int(merged.get("d", 1), f"{path}.d", 1, 3)
    m = _int(merged.get("m", 1), f"{path}.m", 1, 16)
    if "symbol" not in merged:
        _fail(f"{path}.symbol", "required")
    try:
        symbol = symbol_from_literal(merged["symbol"], d, m)
    except SymbolError as exc:
        _fail(f"{path}.symbol", str(exc))
    N = _int(merged.get("N", {1: 14, 2: 8}.get(d, 6)), f"{path}.N", 1, 200)
    N_list = tuple(_int(x, f"{path}.N_list[{i}]", 1, 200)
                   for i, x in enumerate(merged.get("N_list", [max(1, N - 4), max(1, N - 2), N])))
    p_list = _num_list(merged.get("p", [2, 4, 6]), f"{path}.p", positive=True)
    for i, p in enumerate(p_list):
        if p < 1:
            _fail(f"{path}.p[{i}]", "Schatten exponent must be >= 1")
    g = merged.get("grid", {})
    if not isinstance(g, dict):
        _fail(f"{path}.grid", "expected an object")
    radii = g.get("radii", [0.1, 8.0, 24])
    if not (isinstance(radii, list) and len(radii) == 3):
        _fail(f"{path}.grid.radii", "expected [lo, hi, count]")
    lo = _num(radii[0], f"{path}.grid.radii[0]", True)
    hi = _num(radii[1], f"{path}.grid.radii[1]", True)
    cnt = _int(radii[2], f"{path}.grid.radii[2]", 1, 10_000)
    if hi < lo:
        _fail(f"{path}.grid.radii", "hi < lo")
    grid = GridSpec((lo, hi, cnt), _int(g.get("directions", 32), f"{path}.grid.directions", 1, 100_000))
    tol = dict(DEFAULT_TOLERANCES)
    tov = merged.get("tolerances", {})
    if not isinstance(tov, dict):
        _fail(f"{path}.tolerances", "expected an object")
    for k, v in tov.items():
        if k not in DEFAULT_TOLERANCES:
            _fail(f"{path}.tolerances.{k}", "unknown tolerance")
        tol[k] = _num(v, f"{path}.tolerances.{k}", positive=True)
    return Scenario(
        id=sid, weight=weight, d=d, m=m, symbol=symbol, symbol_text=merged["symbol"], N=N,
        N_list=N_list, p_list=p_list, grid=grid, tolerances=tol,
        cutoffs=_num_list(merged.get("cutoffs", [2, 4, 8, 16]), f"{path}.cutoffs", True),
        tail_R=_num(merged.get("tail_R", 5.0), f"{path}.tail_R", True),
        fejer_N=tuple(_int(x, f"{path}.fejer_N[{i}]", 0, 10_000)
                      for i, x in enumerate(merged.get("fejer_N", [1, 2, 4, 8, 16, 64]))),
        pairs=_int(merged.get("pairs", 6), f"{path}.pairs", 0, 10_000),
        mc_samples=_int(merged.get("mc_samples", 500), f"{path}.mc_samples", 1, 10**7),
        polyball_a=_num_list(merged.get("polyball_a", [0.5, 0.25, 0.1]), f"{path}.polyball_a", True),
    )


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be an object")
    unknown = set(raw) - {"seed", "defaults", "scenarios", "out_dir", "name"}
    if unknown:
        raise ConfigError(f"{source}: unknown top-level field(s) {sorted(unknown)}")
    seed = _int(raw.get("seed", 42), "seed", 0)
    defaults = raw.get("defaults", {})
    if not isinstance(defaults, dict):
        _fail("defaults", "expected an object")
    scen = raw.get("scenarios")
    if not isinstance(scen, list) or not scen:
        _fail("scenarios", "expected a non-empty list")
    scenarios = tuple(_scenario(s, i, defaults) for i, s in enumerate(scen))
    ids = [s.id for s in scenarios]
    dup = {i for i in ids if ids.count(i) > 1}
    if dup:
        _fail("scenarios", f"duplicate id(s) {sorted(dup)}")
    out_dir = raw.get("out_dir", "out")
    if not isinstance(out_dir, str):
        _fail("out_dir", "expected a string")
    return ExperimentConfig(scenarios, seed, out_dir, source)


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{p}: {exc.strerror}") from None
    return parse_config(text, str(p))


def with_seed(cfg: ExperimentConfig, seed: int | None) -> ExperimentConfig:
    return cfg if seed is None else replace(cfg, seed=seed)
