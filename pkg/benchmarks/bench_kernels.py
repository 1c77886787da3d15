"""Time the compiled kernel primitives against the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--n 200] [--d 8] [--repeat 5]

For each primitive the script checks that both backends agree to 1e-12
relative error, then reports the best-of-``repeat`` wall time and the
speed-up of the compiled version.
"""

import argparse
import timeit

import numpy as np

from asmfgp import _backend

CASES = {
    "product_kernel": lambda X, Xs, t, f: (X, X, t, f),
    "product_kernel_grad": lambda X, Xs, t, f: (X, t, f),
    "additive_kernel": lambda X, Xs, t, f: (X, X, t, f),
    "additive_kernel_grad": lambda X, Xs, t, f: (X, t, f),
    "product_kernel_xgrad": lambda X, Xs, t, f: (Xs, X, t, f),
    "additive_kernel_xgrad": lambda X, Xs, t, f: (Xs, X, t, f),
}


def as_tuple(out):
    return out if isinstance(out, tuple) else (out,)


def max_rel_diff(a, b):
    return max(float(np.max(np.abs(x - y)) / max(np.max(np.abs(y)), 1e-300))
               for x, y in zip(as_tuple(a), as_tuple(b)))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=200, help="training points")
    parser.add_argument("--d", type=int, default=8, help="input dimension")
    parser.add_argument("--repeat", type=int, default=5, help="timing repetitions")
    args = parser.parse_args(argv)

    try:
        compiled = _backend.get("cython")
    except ImportError:
        print("compiled extension not built; nothing to compare")
        return 1
    python = _backend.get("python")

    rng = np.random.default_rng(0)
    X = rng.uniform(size=(args.n, args.d))
    Xs = rng.uniform(size=(args.n // 2, args.d))
    theta = rng.uniform(0.3, 1.5, args.d)

    print(f"n={args.n} d={args.d} best of {args.repeat}")
    print(f"{'primitive':<24}{'family':<10}{'numpy ms':>10}{'cython ms':>11}{'speed-up':>10}{'max rel diff':>14}")
    for name, make_args in CASES.items():
        for family, label in ((0, "matern52"), (1, "gaussian")):
            call_args = make_args(X, Xs, theta, family)
            py_fn, c_fn = getattr(python, name), getattr(compiled, name)
            diff = max_rel_diff(c_fn(*call_args), py_fn(*call_args))
            if diff > 1e-12:
                raise SystemExit(f"{name} ({label}): backends disagree, max rel diff {diff:.2e}")
            t_py = min(timeit.repeat(lambda: py_fn(*call_args), number=1, repeat=args.repeat))
            t_c = min(timeit.repeat(lambda: c_fn(*call_args), number=1, repeat=args.repeat))
            print(f"{name:<24}{label:<10}{1e3 * t_py:>10.2f}{1e3 * t_c:>11.2f}{t_py / t_c:>9.1f}x{diff:>14.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
