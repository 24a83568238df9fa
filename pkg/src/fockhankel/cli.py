"""Command-line experiment runner.

    fockhankel <subcommand> --config cfg.json [--out DIR] [--seed N] [--jobs N] [--strict]

Each subcommand runs every scenario of the config and writes
``<out>/<subcommand>.json`` plus flat CSV tables ``<out>/<subcommand>_<table>.csv``.
Exit status: 0 when every asserted check passes, 1 otherwise (band checks
count too under ``--strict``), 2 on configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .berezin import (averaged_oscillation_check, bloch_bmo_ratio, bmo_norm, kern_ev_constant,
                      mo_norms, mo_squared)
from .config import ConfigError, ExperimentConfig, Scenario, load_config, with_seed
from .hankel import (ConsistencyError, MixedPoly, SchattenRegimeWarning, assemble_hankel, besov_integral,
                     gram_consistency_check, hs_growth, kernel_degree, hs_multiplier_identity_check,
                     m4_bound_ratio, mo_schatten_integral, multi_indices, quadrature_points,
                     random_polynomial, random_unitaries, schatten_norm, singular_values,
                     trace_identity_check)
from .kernel import (BergmanError, KernelRangeError, admissible_radius, bergman_data,
                     bergman_distance, kernel_diag_check, make_kernel, polyball_unitary_check)
from .symbols import (berg_norm, bloch_norm, default_grid, e_norm_ratio, fejer_approx, fejer_by_convolution,
                      little_bloch_tail, q_matrix, q_norms, random_symbol, tail_radii)
from .weights import class_s_diagnostic, growth_estimates

SUBCOMMANDS = ("moments", "kernel-check", "bloch", "bmo", "hankel", "schatten", "compactness",
               "equivalence", "fejer", "identities")


# ---------------------------------------------------------------------------
# report helpers


def check(name: str, passed: bool, value: Any, tolerance: Any, kind: str = "assert",
          detail: str = "") -> dict:
    return {"name": name, "kind": kind, "passed": bool(passed), "value": value,
            "tolerance": tolerance, "detail": detail}


def jsonable(x):
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (complex, np.complexfloating)):
        return [jsonable(float(x.real)), jsonable(float(x.imag))]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def _grid(sc: Scenario) -> np.ndarray:
    return default_grid(sc.d, sc.grid.radii_array(), sc.grid.directions, seed=0)


def _subgrid(sc: Scenario, count: int, rmax: float | None = None) -> np.ndarray:
    g = _grid(sc)
    if rmax is not None:
        g = g[np.linalg.norm(g, axis=1) <= rmax]
    idx = np.linspace(0, len(g) - 1, min(count, len(g))).astype(int)
    return g[idx]


def _random_points(rng, d, n, rmin, rmax) -> np.ndarray:
    v = rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * rng.uniform(rmin, rmax, n)[:, None]


def _mo_feasible(c, grid: np.ndarray) -> tuple[np.ndarray, int]:
    """Grid points whose MO^2 series fits the direct kernel range; and the count dropped."""
    keep = []
    for z in grid:
        try:
            kernel_degree(c, float(np.vdot(z, z).real))
            keep.append(True)
        except KernelRangeError:
            keep.append(False)
    keep = np.array(keep)
    return grid[keep], int((~keep).sum())


def _opnorm(a) -> float:
    return float(np.linalg.norm(a, 2))


# ---------------------------------------------------------------------------
# subcommands: each returns (results, checks, tables)


def run_moments(sc: Scenario, rng) -> tuple[dict, list, dict]:
    c = make_kernel(sc.weight, sc.d)
    mt = c.moments
    lm = mt.log_m
    second = lm[2:] - 2 * lm[1:-1] + lm[:-2]
    checks = [
        check("quadrature_rel_err", mt.rel_err.max() <= 1e-10, float(mt.rel_err.max()), 1e-10),
        check("log_convexity", second.min() >= -1e-9, float(second.min()), -1e-9,
              detail="min second difference of log M_k"),
    ]
    cs = {}
    for comp in ("phi", "psi"):
        try:
            rep = class_s_diagnostic(sc.weight, comp)
            cs[comp] = {"max_ratio": rep.max_ratio, "ceiling": rep.ceiling, "passed": rep.passed}
            checks.append(check(f"class_s_{comp}", rep.passed, rep.max_ratio, rep.ceiling, "band"))
        except ValueError as exc:
            cs[comp] = {"error": str(exc)}
    rows = [{"scenario": sc.id, "k": k, "log_M": lm[k], "rel_err": mt.rel_err[k],
             "panels": int(mt.panels[k])} for k in range(len(lm))]
    results = {"kmax": mt.kmax, "log_M_head": lm[:8], "class_s": cs,
               "growth": growth_estimates(sc.weight)}
    return results, checks, {"moments": rows}


def run_kernel_check(sc: Scenario, rng) -> tuple[dict, list, dict]:
    w, d = sc.weight, sc.d
    c = make_kernel(w, d)
    tol = sc.tolerances
    e1 = np.eye(d)[0]
    radii = np.linspace(0.5, 6.0, 12)
    ratios = np.array([kernel_diag_check(c, w, x * e1) for x in radii])
    band = float(ratios.max() / ratios.min())
    checks = [check("diag_ratio_band", band <= tol["diag_band"], band, tol["diag_band"], "band")]
    if w.family == "gaussian":
        err = float(np.abs(ratios * math.pi**d - 1).max())
        checks.append(check("diag_ratio_closed_form", err <= 1e-10, err, 1e-10))
    rr = np.linspace(0.5, 8.0, 16)
    lam_ratio, mu_ratio, inv_err = [], [], 0.0
    for x in rr:
        bd = bergman_data(c, x * e1)
        r = x * x
        lam_ratio.append(math.exp(math.log(bd.lam) - float(w.log_dphi(np.array(r)))))
        mu_ratio.append(math.exp(math.log(bd.mu) - float(w.log_dpsi(np.array(r))))
                        if w.family != "power" or r > 0 else math.nan)
        scale = _opnorm(bd.B_inv)
        inv_err = max(inv_err, _opnorm(bd.B_inv - np.linalg.inv(bd.B)) / scale,
                      _opnorm(bd.B_inv_sqrt @ bd.B_inv_sqrt - bd.B_inv) / scale)
    lam_ratio, mu_ratio = np.array(lam_ratio), np.array(mu_ratio)
    both = np.concatenate([lam_ratio, mu_ratio])
    C = float(max(both.max(), 1.0 / both.min()))
    checks.append(check("inverse_consistency", inv_err <= tol["inverse_consistency"], inv_err,
                        tol["inverse_consistency"]))
    if w.family == "gaussian":
        checks.append(check("eigen_comparison_gaussian", C <= 1.01, C, 1.01))
    else:
        checks.append(check("eigen_comparison_band", math.isfinite(C), C, "recorded", "band"))
    # reproducing property by quadrature
    if d <= 2:
        N = 8 if d == 1 else 3
        z0 = _random_points(rng, d, 1, 0.3, 1.5)[0]
        basis = np.array(multi_indices(d, N))
        pts, wts = quadrature_points(c, N, angles=2 * N + 2, panels=12 if d == 1 else 10,
                                     order=20 if d == 1 else 16)
        kz = np.prod(np.conj(z0) ** basis, axis=1) * np.exp(-c.log_w(basis))
        lhs = np.zeros(len(basis), dtype=complex)
        for i in range(0, len(pts), 50_000):
            mono = np.prod(pts[i:i + 50_000, None, :] ** basis[None], axis=2)
            lhs += mono.T @ (wts[i:i + 50_000] * np.conj(mono @ kz))
        want = np.prod(z0 ** basis, axis=1)
        worst = float(np.max(np.abs(lhs - want) / np.abs(want)))
        checks.append(check("reproducing_property", worst <= tol["reproducing"], worst, tol["reproducing"]))
    # polyball unitary invariance
    Us = random_unitaries(rng, 20, d)
    zs = _random_points(rng, d, 20, 0.5, 3.0)
    ok = all(polyball_unitary_check(U, z, 0.5, w, 200, rng) for U, z in zip(Us, zs))
    checks.append(check("polyball_unitary_invariance", ok, ok, "exact"))
    # near-constancy radius
    centres = _random_points(rng, d, 10, 0.5, 3.0)
    try:
        adm = admissible_radius(c, centres, sc.mc_samples, rng, candidates=sc.polyball_a,
                                threshold=tol["near_constancy"])
        adm_res = {"a": adm.a, "tried": {str(k): v for k, v in adm.tried.items()}}
        checks.append(check("near_constancy_admissible_a", True, adm.a, tol["near_constancy"], "band"))
    except ValueError as exc:
        adm_res = {"error": str(exc)}
        checks.append(check("near_constancy_admissible_a", False, None, tol["near_constancy"], "band",
                            str(exc)))
    rows = [{"scenario": sc.id, "quantity": "diag_ratio", "abs_z": x, "value": v}
            for x, v in zip(radii, ratios)]
    rows += [{"scenario": sc.id, "quantity": "lambda_over_dphi", "abs_z": x, "value": v}
             for x, v in zip(rr, lam_ratio)]
    rows += [{"scenario": sc.id, "quantity": "mu_over_dpsi", "abs_z": x, "value": v}
             for x, v in zip(rr, mu_ratio)]
    results = {"diag_ratio": {"min": ratios.min(), "max": ratios.max()},
               "eigen_comparison": {"lambda_over_dphi": [lam_ratio.min(), lam_ratio.max()],
                                    "mu_over_dpsi": [mu_ratio.min(), mu_ratio.max()], "C": C},
               "polyball": adm_res}
    return results, checks, {"grid": rows}


def run_bloch(sc: Scenario, rng) -> tuple[dict, list, dict]:
    T, c, tol, d = sc.symbol, make_kernel(sc.weight, sc.d), sc.tolerances, sc.d
    grid = _grid(sc)
    qn = q_norms(T, c, grid)
    semi = float(qn.max()) if not T.is_constant() else 0.0
    bn = _opnorm(T.constant_term()) + semi
    checks = []
    worst = 0.0
    for z in _subgrid(sc, 20):
        bd = bergman_data(c, z)
        Qs = [q_matrix(T, bd, r).Q for r in ("qt", "b2", "cj")]
        worst = max(worst, float(np.abs(Qs[0] - Qs[1]).max()), float(np.abs(Qs[0] - Qs[2]).max()))
    checks.append(check("route_agreement", worst <= tol["route_agreement"], worst, tol["route_agreement"]))
    # triangle inequality and rotation covariance
    S = random_symbol(rng, d, sc.m, max(1, T.degree))
    tri, rot = 0.0, 0.0
    theta = rng.uniform(0, 2 * math.pi, d)
    R = np.diag(np.exp(1j * theta))
    TR = T.compose_unitary(R)
    for z in _subgrid(sc, 10, rmax=4.0):
        bd = bergman_data(c, z)
        lhs = q_matrix(T + S, bd).sqrt_norm
        tri = max(tri, lhs - q_matrix(T, bd).sqrt_norm - q_matrix(S, bd).sqrt_norm)
        rot = max(rot, float(np.abs(q_matrix(TR, bd).Q - q_matrix(T, bergman_data(c, R @ z)).Q).max()))
    checks.append(check("triangle_inequality", tri <= 1e-10, tri, 1e-10))
    checks.append(check("rotation_covariance", rot <= tol["route_agreement"], rot, tol["route_agreement"]))
    lo, hi = (1 - tol["e_ratio_slack"]) / math.sqrt(d), math.sqrt(d) * (1 + tol["e_ratio_slack"])
    er = [] if T.is_constant() else [e_norm_ratio(T, c, z, rng=rng) for z in _subgrid(sc, 10, rmax=6.0)]
    er = [x for x in er if math.isfinite(x)]
    if er:
        checks.append(check("e_norm_ratio", lo <= min(er) and max(er) <= hi, [min(er), max(er)], [lo, hi]))
    pairs = []
    if sc.pairs and not T.is_constant():
        pts = _random_points(rng, d, 2 * sc.pairs, 0.2, 3.0)
        pairs = [(pts[2 * i], pts[2 * i + 1]) for i in range(sc.pairs)]
        quot = [_opnorm(T(z) - T(w)) / bergman_distance(c, z, w).value for z, w in pairs]
        lip = max(quot) / semi
        bound = math.sqrt(d) * (1 + tol["lipschitz_slack"])
        checks.append(check("lipschitz_estimate", lip <= bound, lip, bound))
        bergn = _opnorm(T.constant_term()) + max(quot)
    else:
        bergn = _opnorm(T.constant_term())
    lbt = little_bloch_tail(T, c, sc.tail_R, directions=min(sc.grid.directions, 16))
    rows = [{"scenario": sc.id, "quantity": "q_sqrt_norm", "z_re": z.real.tolist(),
             "z_im": z.imag.tolist(), "abs_z": float(np.linalg.norm(z)), "value": v}
            for z, v in zip(grid, qn)]
    results = {"bloch_norm": bn, "bloch_seminorm": semi, "berg_norm_lower_bound": bergn,
               "little_bloch_tail": {"R": sc.tail_R, "value": lbt}}
    return results, checks, {"grid": rows}


def run_bmo(sc: Scenario, rng) -> tuple[dict, list, dict]:
    T, c, tol = sc.symbol, make_kernel(sc.weight, sc.d), sc.tolerances
    grid, dropped = _mo_feasible(c, _grid(sc))
    bn = bmo_norm(T, c, grid)
    checks = [check("grid_coverage", dropped == 0, dropped, 0, "band",
                    "grid points beyond the direct kernel-series range")]
    worst = 0.0
    err = ""
    for z in grid[np.linspace(0, len(grid) - 1, min(20, len(grid))).astype(int)]:
        try:
            r = mo_squared(T, c, z, check=True, rtol=tol["mo_agreement"])
            worst = max(worst, r.error_estimate / max(1.0, float(np.abs(r.matrix).max())))
        except (ConsistencyError, KernelRangeError) as exc:
            worst, err = math.inf, str(exc)
            break
    checks.append(check("mo_route_agreement", worst <= tol["mo_agreement"], worst, tol["mo_agreement"],
                        detail=err))
    results = {"bmo_norm": bn}
    if not T.is_constant():
        inner = grid[(np.linalg.norm(grid, axis=1) >= 0.5) & (np.linalg.norm(grid, axis=1) <= 4.0)]
        inner = inner[np.linspace(0, len(inner) - 1, min(24, len(inner))).astype(int)]
        bb = np.array([bloch_bmo_ratio(T, c, z) for z in inner])
        kev = np.array([kern_ev_constant(T, c, z) for z in inner])
        med = float(np.median(kev))
        spread = float(np.max(np.abs(kev / med - 1))) if med > 0 else math.inf
        checks.append(check("bloch_bmo_ratio_bounded", bool(np.all(np.isfinite(bb))), float(bb.max()),
                            "recorded", "band"))
        checks.append(check("kern_ev_stability", spread <= 0.2, spread, 0.2, "band",
                            "max relative deviation of C_low from its median"))
        cents = _random_points(rng, sc.d, 3, 0.5, 3.0)
        av = [averaged_oscillation_check(T, c, w, 0.25, sc.mc_samples, rng).ratio for w in cents]
        results.update({"bloch_bmo_ratio": [bb.min(), bb.max()],
                        "kern_ev_constant": [kev.min(), kev.max()],
                        "averaged_constant": max(av)})
        checks.append(check("averaged_lower_bound", all(math.isfinite(a) for a in av), max(av),
                            "recorded", "band"))
    return results, checks, {}


def run_hankel(sc: Scenario, rng, previous: dict | None = None) -> tuple[dict, list, dict]:
    T, c, tol = sc.symbol, make_kernel(sc.weight, sc.d), sc.tolerances
    Ns = sorted(set(sc.N_list) | {sc.N})
    spectra, smax = {}, []
    rows = []
    checks = []
    for N in Ns:
        th = assemble_hankel(T, c, N)
        s = singular_values(th)
        spectra[N] = s
        smax.append(float(s[0]) if s.size else 0.0)
        rows += [{"scenario": sc.id, "N": N, "n": i + 1, "s": v} for i, v in enumerate(s)]
    mono = all(b >= a - 1e-12 * max(1.0, a) for a, b in zip(smax, smax[1:]))
    checks.append(check("s_max_monotone_in_N", mono, smax, "nondecreasing"))
    if sc.N - 2 in spectra:
        stab = abs(smax[-1] - float(spectra[sc.N - 2][0]))
        checks.append(check("s_max_stabilization", stab < tol["stabilization"], stab,
                            tol["stabilization"], "band"))
    th = assemble_hankel(T, c, sc.N)
    f = random_polynomial(rng, sc.d, sc.m, sc.N)
    gc = gram_consistency_check(th, f)
    checks.append(check("gram_consistency", gc.rel_err <= tol["gram_consistency"], gc.rel_err,
                        tol["gram_consistency"]))
    semi = 0.0 if T.is_constant() else float(q_norms(T, c, _grid(sc)).max())
    ratio = m4_bound_ratio(th, semi)
    checks.append(check("upper_bound_m4", ratio <= 1 + tol["m4_slack"], ratio, 1 + tol["m4_slack"]))
    if T.is_constant():
        checks.append(check("constant_symbol_zero", smax[-1] == 0.0, smax[-1], 0.0))
    if previous is not None and previous.get("s_max") is not None:
        prev_N, prev_s = previous["N"], previous["s_max"]
        if isinstance(prev_s, (int, float)) and sc.N >= prev_N:
            checks.append(check("cross_run_monotone", smax[-1] >= prev_s - 1e-12 * max(1.0, prev_s),
                                [prev_s, smax[-1]], "nondecreasing"))
    s = spectra[sc.N]
    norms = {}
    for p in sc.p_list:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SchattenRegimeWarning)
            norms[str(p)] = schatten_norm(th, p)
    results = {"N": sc.N, "s_max": smax[-1], "s_max_by_N": dict(zip(map(str, Ns), smax)),
               "singular_values": s, "operator_norm": smax[-1], "schatten": norms,
               "bloch_seminorm": semi, "dim": th.dim}
    return results, checks, {"spectra": rows}


def run_schatten(sc: Scenario, rng) -> tuple[dict, list, dict]:
    T, c, tol = sc.symbol, make_kernel(sc.weight, sc.d), sc.tolerances
    checks, rows, res = [], [], {"besov": {}, "mo": {}}
    if not T.is_constant():
        g = hs_growth(T, c, (6, 10, 14, 18))
        res["hs_growth"] = g
        checks.append(check("no_hilbert_schmidt", all(x > tol["divergence_growth"] for x in g["increase"]),
                            g["increase"], tol["divergence_growth"],
                            detail="sum s_n^2 must grow by more than the threshold per step"))
    for p in sc.p_list:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SchattenRegimeWarning)
            bes = besov_integral(T, c, p, cutoffs=sc.cutoffs)
            try:
                mo = mo_schatten_integral(T, c, p, cutoffs=sc.cutoffs)
            except KernelRangeError as exc:
                res["mo"][str(p)] = {"error": str(exc)}
                checks.append(check(f"verdicts_agree_p{p:g}", False, [bes.verdict, None], "equal", "band",
                                    f"MO integral out of range: {exc}"))
                res["besov"][str(p)] = {"cutoffs": bes.cutoffs, "values": bes.values, "growth": bes.growth,
                                        "verdict": bes.verdict, "outside_p_ge_2": bes.outside_regime}
                continue
        for kind, pi in (("besov", bes), ("mo", mo)):
            res[kind][str(p)] = {"cutoffs": pi.cutoffs, "values": pi.values, "growth": pi.growth,
                                 "verdict": pi.verdict, "outside_p_ge_2": pi.outside_regime}
            rows += [{"scenario": sc.id, "integral": kind, "p": p, "cutoff": R, "value": v}
                     for R, v in zip(pi.cutoffs, pi.values)]
        agree = bes.verdict == mo.verdict
        checks.append(check(f"verdicts_agree_p{p:g}", agree, [bes.verdict, mo.verdict], "equal", "band"))
        if bes.verdict == "convergent" and mo.verdict == "convergent" and mo.values[-1] > 0:
            fac = float(max(bes.values[-1] / mo.values[-1], mo.values[-1] / bes.values[-1]))
            checks.append(check(f"besov_vs_mo_factor_p{p:g}", fac <= tol["besov_mo_factor"], fac,
                                tol["besov_mo_factor"]))
    return res, checks, {"integrals": rows}


def run_compactness(sc: Scenario, rng) -> tuple[dict, list, dict]:
    T, c = sc.symbol, make_kernel(sc.weight, sc.d)
    R = sc.tail_R
    dirs = min(sc.grid.directions, 16)
    tails = []
    for k in (0.5, 1, 2, 4):
        try:
            tails.append(little_bloch_tail(T, c, R * k, directions=dirs))
        except (ValueError, ArithmeticError):
            tails.append(math.nan)  # Psi overflows on this shell
    mos = []
    for k in (0.5, 1, 2):
        pts, _ = _mo_feasible(c, default_grid(sc.d, tail_radii(R * k), dirs, 0))
        mos.append(math.sqrt(float(mo_norms(T, c, pts).max())) if len(pts) and not T.is_constant() else 0.0)
        if not len(pts):
            mos[-1] = math.nan
    s = singular_values(assemble_hankel(T, c, sc.N))
    bloch_flag = bool(tails[0] > 0 and tails[-1] <= 0.5 * tails[1])
    bmo_flag = bool(mos[0] > 0 and mos[-1] <= 0.5 * mos[0])
    in_range = all(math.isfinite(x) for x in mos + tails)
    half = s[(len(s) + 1) // 2 - 1] / s[0] if s.size and s[0] > 0 else 0.0
    results = {"little_bloch_tail": dict(zip(["0.5R", "R", "2R", "4R"], tails)),
               "bmo_decay": dict(zip(["0.5R", "R", "2R"], mos)), "R": R,
               "decay_flag": bloch_flag, "bmo_decay_flag": bmo_flag,
               "spectrum_half_ratio": half, "singular_values": s}
    checks = [check("bloch_bmo_flags_agree", in_range and bloch_flag == bmo_flag, [bloch_flag, bmo_flag],
                    "equal", "band", "" if in_range else "some tail shells lie beyond the numerical range")]
    return results, checks, {}


def run_equivalence(sc: Scenario, rng) -> tuple[dict, list, dict]:
    T, c, tol = sc.symbol, make_kernel(sc.weight, sc.d), sc.tolerances
    grid = _grid(sc)
    b = bloch_norm(T, c, grid)
    mgrid, dropped = _mo_feasible(c, grid)
    m = bmo_norm(T, c, mgrid)
    h = float(singular_values(assemble_hankel(T, c, sc.N))[0]) + _opnorm(T.constant_term())
    results = {"bloch": b, "bmo": m, "hankel_plus_T0": h, "bmo_points_dropped": dropped}
    checks = [check("grid_coverage", dropped == 0, dropped, 0, "band",
                    "BMO grid points beyond the direct kernel-series range")]
    if min(b, m, h) > 0:
        ratios = {"bloch/hankel": b / h, "bloch/bmo": b / m, "hankel/bmo": h / m}
        allr = list(ratios.values()) + [1.0 / x for x in ratios.values()]
        width = max(allr)
        results["ratios"] = ratios
        checks.append(check("equivalence_band", width <= tol["equivalence_band"], width,
                            tol["equivalence_band"]))
        if sc.weight.family == "gaussian" and T.degree <= 1:
            dev = max(abs(x - 1) for x in ratios.values())
            checks.append(check("gaussian_linear_exact", dev <= tol["gaussian_band"], dev, tol["gaussian_band"]))
    if sc.pairs and not T.is_constant():
        pts = _random_points(rng, sc.d, 2 * sc.pairs, 0.2, 3.0)
        results["berg_lower_bound"] = berg_norm(T, c, [(pts[2 * i], pts[2 * i + 1]) for i in range(sc.pairs)])
    return results, checks, {}


def run_fejer(sc: Scenario, rng) -> tuple[dict, list, dict]:
    T, c, tol = sc.symbol, make_kernel(sc.weight, sc.d), sc.tolerances
    grid = _grid(sc)
    Ns = sorted(sc.fejer_N)
    vals = []
    for N in Ns:
        diff = fejer_approx(T, N) - T
        vals.append(0.0 if diff.is_constant() else float(q_norms(diff, c, grid).max()))
    mono = all(b <= a * (1 + 1e-12) + 1e-15 for a, b in zip(vals, vals[1:]))
    checks = [check("fejer_monotone", mono, vals, "nonincreasing"),
              check("fejer_target", vals[-1] < tol["fejer_target"], vals[-1], tol["fejer_target"],
                    detail=f"sup-grid ||Q_(T_N - T)||^(1/2) at N={Ns[-1]}")]
    if sc.d == 1:
        z = np.array([0.7 + 0.4j])
        err = max(float(np.abs(fejer_by_convolution(T, N, z) - fejer_approx(T, N)(z)).max())
                  for N in Ns[:4])
        checks.append(check("multiplier_vs_convolution", err <= 1e-10, err, 1e-10))
    rows = [{"scenario": sc.id, "N": N, "sup_q_sqrt": v} for N, v in zip(Ns, vals)]
    return {"N": Ns, "sup_q_sqrt": vals}, checks, {"fejer": rows}


def run_identities(sc: Scenario, rng) -> tuple[dict, list, dict]:
    c, tol, d, m = make_kernel(sc.weight, sc.d), sc.tolerances, sc.d, sc.m
    if d > 2:
        return {"skipped": "quadrature identities run for d <= 2"}, [], {}
    N = 0
    while len(multi_indices(d, N + 1)) * m <= 20:
        N += 1
    D = len(multi_indices(d, N)) * m
    X = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
    S = X @ X.conj().T / D
    tr = trace_identity_check(S, c, N, m, rng)
    ttol = tol["trace_d1"] if d == 1 else tol["trace_d2"]
    checks = [check("trace_identity", tr.rel_err <= ttol, tr.rel_err, ttol)]
    T = sc.symbol
    Rz = MixedPoly.from_symbol(T) if not T.is_constant() else MixedPoly(d, m, {((0,) * d, (0,) * d): 1.0})
    Rid = MixedPoly(d, m, {((0,) * d, (0,) * d): np.eye(m)})
    Nh = 10 if d == 1 else 4
    hs = {}
    for name, R in (("symbol", Rz), ("identity", Rid)):
        r = hs_multiplier_identity_check(R, c, Nh)
        hs[name] = {"direct": r.lhs, "integral": r.rhs, "rel_err": r.rel_err, **r.extra}
        checks.append(check(f"hs_multiplier_{name}", r.rel_err <= tol["hs_multiplier"], r.rel_err,
                            tol["hs_multiplier"]))
    return {"trace": {"lhs": tr.lhs, "rhs": tr.rhs, "dim": D}, "hs_multiplier": hs}, checks, {}


RUNNERS: dict[str, Callable] = {
    "moments": run_moments, "kernel-check": run_kernel_check, "bloch": run_bloch, "bmo": run_bmo,
    "hankel": run_hankel, "schatten": run_schatten, "compactness": run_compactness,
    "equivalence": run_equivalence, "fejer": run_fejer, "identities": run_identities,
}


# ---------------------------------------------------------------------------


def _scenario_task(args) -> dict:
    sub, sc, seed, index, previous = args
    rng = np.random.default_rng([seed, index])
    t0 = time.perf_counter()
    record = {"id": sc.id, "weight": sc.weight.name, "d": sc.d, "m": sc.m,
              "symbol": sc.symbol_text, "N": sc.N, "seed": [seed, index]}
    try:
        fn = RUNNERS[sub]
        if sub == "hankel":
            res, checks, tables = fn(sc, rng, previous)
        else:
            res, checks, tables = fn(sc, rng)
        record.update(results=res, checks=checks, error=None)
    except (ConsistencyError, KernelRangeError, BergmanError, ArithmeticError, ValueError) as exc:
        tables = {}
        record.update(results={}, checks=[check("numerical_consistency", False, None, None,
                                                detail=f"{type(exc).__name__}: {exc}")],
                      error=f"{type(exc).__name__}: {exc}")
    record["runtime_s"] = time.perf_counter() - t0
    return {"record": jsonable(record), "tables": jsonable(tables)}


def run(subcommand: str, cfg: ExperimentConfig, jobs: int = 1, previous: dict | None = None) -> dict:
    """Run one subcommand over every scenario; returns the report and CSV tables."""
    if subcommand not in RUNNERS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    prev = {} if previous is None else {s["id"]: s.get("results", {}) for s in previous.get("scenarios", [])}
    tasks = [(subcommand, sc, cfg.seed, i, prev.get(sc.id)) for i, sc in enumerate(cfg.scenarios)]
    t0 = time.perf_counter()
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            outs = list(ex.map(_scenario_task, tasks))
    else:
        outs = [_scenario_task(t) for t in tasks]
    scenarios = [o["record"] for o in outs]
    tables: dict[str, list] = {}
    for o in outs:
        for name, rows in o["tables"].items():
            tables.setdefault(name, []).extend(rows)
    allc = [c for s in scenarios for c in s["checks"]]
    fa = sum(1 for c in allc if c["kind"] == "assert" and not c["passed"])
    fb = sum(1 for c in allc if c["kind"] == "band" and not c["passed"])
    report = {
        "tool": "fockhankel", "version": __version__, "subcommand": subcommand, "seed": cfg.seed,
        "config": cfg.source, "scenarios": scenarios,
        "summary": {"scenarios": len(scenarios), "checks": len(allc), "failed_asserts": fa,
                    "failed_bands": fb, "passed": fa == 0},
        "runtime_s": time.perf_counter() - t0,
    }
    return {"report": report, "tables": tables}


def write_outputs(out_dir: Path, subcommand: str, result: dict) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    rp = out_dir / f"{subcommand}.json"
    rp.write_text(json.dumps(result["report"], indent=2, allow_nan=False) + "\n", encoding="utf-8")
    paths.append(rp)
    for name, rows in result["tables"].items():
        if not rows:
            continue
        p = out_dir / f"{subcommand}_{name}.csv"
        fields = list(rows[0].keys())
        with p.open("w", newline="", encoding="utf-8") as fh:
            wr = csv.DictWriter(fh, fieldnames=fields)
            wr.writeheader()
            for row in rows:
                wr.writerow({k: (json.dumps(v) if isinstance(v, (list, dict)) else v) for k, v in row.items()})
        paths.append(p)
    return paths


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fockhankel", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment configuration (JSON)")
        p.add_argument("--out", default=None, help="output directory (default: config out_dir)")
        p.add_argument("--seed", type=int, default=None, help="random seed (default 42 or config seed)")
        p.add_argument("--jobs", type=int, default=1, help="parallel scenario workers")
        p.add_argument("--strict", action="store_true", help="band violations also fail the run")
        if name == "hankel":
            p.add_argument("--compare", default=None,
                           help="earlier hankel report; s_max must not decrease for larger N")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = with_seed(load_config(args.config), args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    previous = None
    if getattr(args, "compare", None):
        try:
            previous = json.loads(Path(args.compare).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            print(f"config error: cannot read {args.compare}: {exc}", file=sys.stderr)
            return 2
    result = run(args.subcommand, cfg, max(1, args.jobs), previous)
    out = Path(args.out or cfg.out_dir)
    paths = write_outputs(out, args.subcommand, result)
    rep = result["report"]
    for sc in rep["scenarios"]:
        for c in sc["checks"]:
            flag = "PASS" if c["passed"] else "FAIL"
            print(f"[{flag}] {sc['id']:<16} {c['kind']:<6} {c['name']}: value={c['value']} tol={c['tolerance']}")
    s = rep["summary"]
    print(f"{s['checks']} checks, {s['failed_asserts']} failed asserts, {s['failed_bands']} failed bands;"
          f" report: {paths[0]}")
    failed = s["failed_asserts"] > 0 or (args.strict and s["failed_bands"] > 0)
    return 1 if failed else 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
