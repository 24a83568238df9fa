"""Numba versus numpy for the two hot kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both variants are called directly, so the env flag FOCKHANKEL_NUMBA does not
matter here.  Each timing is the best of ``repeat`` runs after one warm-up
call (which also triggers JIT compilation).  Results are checked to agree.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from fockhankel import _accel
from fockhankel.hankel import _accumulate_numba, _accumulate_numpy
from fockhankel.moments import _GL_W, _GL_X, _panel_sums_numba, _panel_sums_numpy, _window
from fockhankel.weights import BUILTIN_WEIGHTS


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def panel_case(name, kmax, npan=32):
    w = BUILTIN_WEIGHTS[name]
    a = np.arange(kmax + 1, dtype=float) + 1.0     # s^(k+d-1) with d = 2
    center = w.phi_inverse(a)
    lo, hi = _window(w, a, center)
    args = (w.code, float(w.s), a, center, lo, hi, npan, _GL_X, _GL_W)
    return (lambda: _panel_sums_numba(*args)), (lambda: _panel_sums_numpy(*args))


def accumulate_case(D, m, terms, seed=0):
    rng = np.random.default_rng(seed)
    pairs = rng.choice(D * D, size=min(terms, D * D), replace=False)
    ia, ib = np.divmod(pairs, D)
    c = rng.standard_normal(ia.size)
    X = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))

    def run(fn):
        M = np.zeros((D * m, D * m), dtype=complex)
        fn(M, ia, ib, c, X, m)
        return M

    return (lambda: run(_accumulate_numba)), (lambda: run(_accumulate_numpy))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        print("numba is not importable; both columns time the numpy path")
    cases = [
        (f"panel_sums {n} kmax={k}", *panel_case(n, k))
        for n in ("gaussian", "power-2", "exp") for k in (200, 5000)
    ] + [
        (f"accumulate D={D} m={m} terms={t}", *accumulate_case(D, m, t))
        for D, m, t in ((45, 2, 1500), (190, 4, 20000), (400, 8, 100000))
    ]
    print(f"{'case':<42}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>9}  max|diff|")
    for label, nb, npy in cases:
        t_nb, r_nb = best_of(nb, args.repeat)
        t_np, r_np = best_of(npy, args.repeat)
        diff = float(np.max(np.abs(r_nb - r_np)) / max(1e-300, np.max(np.abs(r_np))))
        print(f"{label:<42}{t_nb:>12.2e}{t_np:>12.2e}{t_np / t_nb:>9.1f}  {diff:.1e}")


if __name__ == "__main__":
    main()
