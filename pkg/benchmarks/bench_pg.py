"""Throughput comparison of the Polya-Gamma backends.

Times PG(1, c) batches and binomial PG(b, c) draws in the regimes the
sampler actually hits (per-cell tilts, mixed trial counts), for every
available backend, plus one end-to-end sweep benchmark of the Gibbs
engine under each backend.

Run:  python benchmarks/bench_pg.py [--quick]
"""

import argparse
import time

import numpy as np

from bgrass import pg


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(quick=False):
    sizes = [1_000, 100_000] if quick else [1_000, 10_000, 100_000, 1_000_000]
    repeats = 3 if quick else 5
    print(f"{'case':<34}" + "".join(f"{b:>14}" for b in pg.available_backends()))
    for n in sizes:
        for c in (0.0, 2.0):
            row = f"pg1  n={n:<9,} c={c:<4}"
            cols = []
            for backend in pg.available_backends():
                pg.use_backend(backend)
                rng = np.random.default_rng(1)
                arr = np.full(n, c)
                dt = _time(lambda: pg.sample_pg1(arr, rng), repeats)
                cols.append(f"{n / dt / 1e6:>11.2f}M/s")
            print(row + "".join(f"{c_:>14}" for c_ in cols))
    # binomial draws across the exact/approximate split
    rng0 = np.random.default_rng(2)
    b_mixed = rng0.integers(1, 200, size=20_000)
    c_mixed = np.abs(rng0.normal(0, 2, size=20_000))
    row = "pg   mixed b in [1,200)   "
    cols = []
    for backend in pg.available_backends():
        pg.use_backend(backend)
        rng = np.random.default_rng(3)
        dt = _time(lambda: pg.sample_pg(b_mixed, c_mixed, rng), repeats)
        cols.append(f"{b_mixed.size / dt / 1e6:>11.2f}M/s")
    print(row + "".join(f"{c_:>14}" for c_ in cols))


def bench_engine(quick=False):
    from bgrass.engine import GibbsSampler, Hyperparams, Schedule
    from bgrass.ontology import build_graph, correlation_from_precision, laplacian
    from bgrass.simgen import block_groups, generate_sim2

    mapping, vocab, _ = block_groups([6] * 8, n_isolated=12)
    data = generate_sim2(mapping, vocab, 0.02, seed=0, n_reports=4000)
    corr = correlation_from_precision(
        laplacian(build_graph(mapping, vocab)), 0.1
    )
    iters = 500 if quick else 2000
    print(f"\nengine sweeps (J={len(vocab)}, S={data.cells.n_strata}, {iters} iterations):")
    for backend in pg.available_backends():
        pg.use_backend(backend)
        sampler = GibbsSampler(data.cells, corr, Hyperparams())
        t0 = time.perf_counter()
        sampler.run(Schedule(iters=iters, burn_in=iters, thin=1), seed=0)
        dt = time.perf_counter() - t0
        print(f"  {backend:<10} {dt / iters * 1e3:8.3f} ms/sweep")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="smaller sizes, fewer repeats")
    args = parser.parse_args()
    default = pg.current_backend()
    print(f"backends available: {pg.available_backends()} (default: {default})\n")
    try:
        bench_kernels(args.quick)
        bench_engine(args.quick)
    finally:
        pg.use_backend(default)


if __name__ == "__main__":
    main()
