"""Compare the compiled and numpy kernels on pooling and border gradients.

    python bench/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from adaptive_pool import _backend
from adaptive_pool.grid import OffsetVector, apply_offsets, discretize, uniform_grid
from adaptive_pool.pooling import chain_border_gradients, pool_forward

CASES = [
    # (height, width, channels, k)
    (32, 32, 1, 6),
    (112, 112, 1, 30),
    (112, 112, 3, 30),
    (224, 224, 3, 56),
]


def make_case(h, w, c, k, seed=0):
    rng = np.random.default_rng(seed)
    base = uniform_grid(w, h, k)
    grid = discretize(apply_offsets(base, OffsetVector.from_flat(rng.normal(0, 1, base.n_movable), base))[0])
    return rng.random((h, w, c)), grid, rng.standard_normal((k, k, c))


def best_of(fn, repeat):
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    backends = _backend.available()
    if "cython" not in backends:
        print("compiled kernels not built; only timing the numpy fallback")
    header = f"{'case':<18}{'op':<8}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for h, w, c, k in CASES:
        x, grid, up = make_case(h, w, c, k)
        label = f"{h}x{w}x{c} k={k}"
        ops = {
            "forward": lambda b: pool_forward(x, grid, backend=b),
            "chain": lambda b: chain_border_gradients(x, grid, up, backend=b),
        }
        for name, op in ops.items():
            times = [best_of(lambda b=b: op(b), args.repeat) for b in backends]
            row = f"{label:<18}{name:<8}" + "".join(f"{t * 1e3:>10.3f}ms" for t in times)
            if len(times) == 2:
                row += f"{times[1] / times[0]:>9.1f}x"
            print(row)


if __name__ == "__main__":
    main()
