"""Time the compiled kernels against the NumPy fallback on identical inputs.

    python benchmarks/bench_kernels.py [--repeat 5] [--size 4]
"""

import argparse
import time

import numpy as np

from hetoll import _core_py
from hetoll.model import random_feasible_flow, random_instance
from hetoll.optimum import _compositions

try:
    from hetoll import _core
except ImportError:
    _core = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(size, rng):
    inst = random_instance(rng, size, size)
    starts = [random_feasible_flow(inst, rng) for _ in range(20)]
    tolls = rng.uniform(0, 1, (size, size))
    splits = [np.ascontiguousarray(_compositions(12, min(size, 3)) * d / 12) for d in inst.demand[:3]]
    grid_a = np.ascontiguousarray(inst.a[:3, :3])
    grid_b = inst.b[:3]

    def pgd(core):
        for f0 in starts:
            core.pgd(inst.a, inst.b, inst.demand, f0, 20000, 1e-8)

    def dynamics(core):
        for f0 in starts:
            core.br_dynamics(inst.a, inst.b, inst.demand, tolls, f0, 0.3, 1e-6, 20000, 1e-7, 500)

    def grid(core):
        core.grid_search(grid_a, grid_b, splits)

    return {"projected gradient (20 starts)": pgd, "best-response dynamics (20 starts)": dynamics,
            "grid search": grid}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--size", type=int, default=4, help="roads = types")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    if _core is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<38}{'python [s]':>12}{'cython [s]':>12}{'speedup':>10}")
    for name, fn in cases(args.size, rng).items():
        tp = best_of(lambda: fn(_core_py), args.repeat)
        tc = best_of(lambda: fn(_core), args.repeat)
        print(f"{name:<38}{tp:12.4f}{tc:12.5f}{tp / tc:9.0f}x")


if __name__ == "__main__":
    main()
