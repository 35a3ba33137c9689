"""Time the compiled kernels against the numpy fallback.

Usage: ``python3 benchmarks/bench_kernels.py [--repeat N]``.  Prints one line
per kernel with the best wall time of each backend and the speed-up.
"""
import argparse
import logging
import timeit

import numpy as np

from smithcl import _fallback, kernels
from smithcl.model import SmithParams
from smithcl.simulate import regular_grid, simulate_field

logger = logging.getLogger("bench_kernels")
SITES = regular_grid(7, 1)
PARAMS = SmithParams(200.0, 300.0, 150.0)


def frechet_case(n=200_000, seed=0):
    rng = np.random.default_rng(seed)
    a_pair = rng.uniform(0.05, 6, 300)
    pair = rng.integers(0, a_pair.size, n).astype(np.int32)
    z1, z2 = np.exp(rng.normal(scale=2, size=(2, n)))
    kind = rng.integers(0, 3, n).astype(np.int8)
    return (a_pair, pair, z1, z2, kind)


def rt_case(n=200_000, seed=1):
    rng = np.random.default_rng(seed)
    a_pair = rng.uniform(0.05, 6, 300)
    pair = rng.integers(0, a_pair.size, n).astype(np.int32)
    x1, x2 = rng.exponential(size=(2, n))
    return (a_pair, pair, x1, x2)


def storm_run(mod, days=20, seed=2):
    """Simulate ``days`` fields on the 7 x 7 unit grid with one kernel backend."""
    saved = kernels.storm_batch
    kernels.storm_batch = mod.storm_batch
    try:
        rng = np.random.default_rng(seed)
        for _ in range(days):
            simulate_field(SITES, PARAMS, rng)
    finally:
        kernels.storm_batch = saved


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        from smithcl import _kernels
    except ImportError:
        logger.error("compiled extension not built; run pip install -e . --no-build-isolation")
        return 1
    fr, rt = frechet_case(), rt_case()
    cases = {
        "frechet_terms (2e5 terms)": (lambda m: m.frechet_terms(*fr)),
        "rt_terms (2e5 terms)": (lambda m: m.rt_terms(*rt)),
        "storm_batch (20 fields, 49 sites)": (lambda m: storm_run(m)),
    }
    logger.info("%-36s %12s %12s %9s", "kernel", "cython [s]", "python [s]", "speed-up")
    for name, call in cases.items():
        tc = best(lambda: call(_kernels), args.repeat)
        tp = best(lambda: call(_fallback), args.repeat)
        logger.info("%-36s %12.4f %12.4f %8.1fx", name, tc, tp, tp / tc)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
