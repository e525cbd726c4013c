"""Compare the compiled and NumPy kernel backends.

    python3 benchmarks/bench_kernels.py [--sizes 32 64 128] [--repeat 20]
"""

import argparse
import timeit

import numpy as np

from wentzell import kernels
from wentzell.geometry import build_grid, breathing
from wentzell.operators import conductances


def _bench(fn, repeat):
    fn()  # warm-up
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128, 256])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    impls = kernels.backends()
    if "cython" not in impls:
        print("compiled backend not built; only timing the NumPy path")
    rng = np.random.default_rng(0)
    metric = breathing(0.2)
    print(f"{'kernel':<16}{'grid':>10}" + "".join(f"{n:>12}" for n in impls) + f"{'speedup':>10}")
    for n in args.sizes:
        grid = build_grid(n + 1, n)
        c = conductances(0.3, grid, metric)
        u = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        coef = rng.uniform(-1, 1, grid.shape)
        ref = {}
        cases = {
            "stiffness_apply": lambda m: kernels.stiffness_apply(u, c.cx, c.ct_total, impl=m),
            "power_law a=3": lambda m: kernels.power_law(u, coef, 3.0, impl=m),
        }
        for name, case in cases.items():
            times = {}
            for key, mod in impls.items():
                times[key] = _bench(lambda: case(mod), args.repeat)
                ref.setdefault(name, case(mod))
                assert np.allclose(case(mod), ref[name], rtol=1e-13, atol=1e-13), f"{key} disagrees on {name}"
            speed = times["python"] / times["cython"] if "cython" in times else float("nan")
            row = "".join(f"{times[k] * 1e6:>10.1f}us" for k in impls)
            print(f"{name:<16}{f'{n + 1}x{n}':>10}{row}{speed:>9.1f}x")


if __name__ == "__main__":
    main()
