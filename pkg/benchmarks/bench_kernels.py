"""Compiled vs pure-Python kernels, and incremental vs full vs naive swarm rates.

    python benchmarks/bench_kernels.py [--quick]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from jsl import kernels
from jsl.mean_field import gain_coefficients
from jsl.params import ModelParams
from jsl.swarm import RateIndex, Swarm, gillespie_step, naive_particle_rates, particle_rates


def best_of(fn, repeat=5, number=1):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def bench_gain(size, repeat):
    s = np.random.default_rng(0).random(size)
    r, a, b = gain_coefficients(2.0, 0.02)
    rows = []
    for name, impl in (("python", kernels.fallback), ("cython", kernels.compiled)):
        if impl is None:
            continue
        rows.append((f"gain_recurrence[{name}] n={size}", best_of(lambda: impl.gain_recurrence(s, r, a, b),
                                                                   repeat, 20)))
    return rows


def bench_swarm_advance(size, proposals, repeat):
    rng = np.random.default_rng(1)
    x0 = rng.normal(size=size)
    u = rng.random(5 * proposals)
    state0 = np.array([0.0, x0.sum(), x0.max(), x0.min(), 0.0, 0.0])
    rows = []
    for name, impl in (("python", kernels.fallback), ("cython", kernels.compiled)):
        if impl is None:
            continue

        def go():
            impl.swarm_advance(x0.copy(), state0.copy(), u, 0, np.inf, 0.5, 2.0, 1.0)

        t = best_of(go, repeat)
        rows.append((f"swarm_advance[{name}] N={size} per proposal", t / proposals))
    return rows


def bench_rates(size, events, naive):
    sw = Swarm.from_initial(size, ModelParams(lam=2.0, n=0.5), seed=3)
    idx = RateIndex(sw)
    rows = []
    t_inc = best_of(lambda: gillespie_step(sw, idx), repeat=3, number=events)
    rows.append((f"incremental update + step N={size}", t_inc))
    rows.append((f"full recompute (sort) N={size}", best_of(lambda: particle_rates(sw), repeat=3, number=5)))
    if naive:
        t_naive = best_of(lambda: naive_particle_rates(sw.positions, sw.params), repeat=1, number=1)
        rows.append((f"naive O(N^2) recompute N={size}", t_naive))
        rows.append(("speedup incremental vs naive", t_naive / t_inc))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = ap.parse_args(argv)
    quick = args.quick
    rows = []
    rows += bench_gain(1001 if quick else 2501, 3 if quick else 7)
    rows += bench_swarm_advance(2000 if quick else 10_000, 20_000 if quick else 200_000, 3)
    rows += bench_rates(2000 if quick else 10_000, 50 if quick else 200, naive=True)
    print(f"backend in use: {kernels.BACKEND}")
    width = max(len(r[0]) for r in rows)
    for name, value in rows:
        unit = "x" if name.startswith("speedup") else "s"
        print(f"{name:<{width}}  {value:.3e} {unit}")
    by = dict(rows)
    for kind in ("gain_recurrence", "swarm_advance"):
        py = [v for k, v in by.items() if k.startswith(kind + "[python]")]
        cy = [v for k, v in by.items() if k.startswith(kind + "[cython]")]
        if py and cy:
            print(f"{kind}: compiled is {py[0] / cy[0]:.1f}x faster")


if __name__ == "__main__":
    main()
