"""Compare the compiled and pure-Python graph kernels.

    python benchmarks/bench_kernels.py [--nodes 200000] [--repeat 3]

Prints one line per kernel with the best-of-N wall time for each backend and
the speed-up. Results from the two backends are checked for equality first.
"""

from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from cellsentry import _kernels_py

try:
    from cellsentry import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def random_graph(n: int, out_degree: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """CSR graph shaped like a spreadsheet: mostly forward edges plus a few loops back."""
    src = np.repeat(np.arange(n, dtype=np.int64), out_degree)
    step = rng.integers(1, 50, size=src.size)
    dst = src + step
    back = rng.random(src.size) < 0.001
    dst[back] = src[back] - step[back]
    keep = (dst >= 0) & (dst < n)
    src, dst = src[keep], dst[keep]
    order = np.argsort(src, kind="stable")
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    return np.cumsum(indptr), dst[order].astype(np.int64)


def class_codes(n: int, rng: np.random.Generator) -> np.ndarray:
    """Long copied runs with sparse outliers and gaps, like formula columns."""
    codes = np.repeat(rng.integers(0, 50, size=n // 20 + 1), 20)[:n].astype(np.int64)
    codes[rng.random(n) < 0.02] = 999
    codes[rng.random(n) < 0.01] = -1
    return codes


def best(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--nodes", type=int, default=200_000)
    parser.add_argument("--degree", type=int, default=3)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if _kernels_c is None:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation` first", file=sys.stderr)
        return 1

    rng = np.random.default_rng(args.seed)
    indptr, indices = random_graph(args.nodes, args.degree, rng)
    seeds = rng.integers(0, args.nodes, size=10).astype(np.int64)
    codes = class_codes(args.nodes, rng)

    cases = {
        "tarjan_scc": lambda impl: impl.tarjan_scc(indptr, indices),
        "reachable": lambda impl: impl.reachable(indptr, indices, seeds),
        "line_outliers": lambda impl: impl.line_outliers(codes, 3, 0.7),
    }
    print(f"{args.nodes} nodes, {indices.size} edges, best of {args.repeat}")
    print(f"{'kernel':<14} {'python s':>10} {'cython s':>10} {'speed-up':>9}")
    for name, call in cases.items():
        if not np.array_equal(call(_kernels_py), call(_kernels_c)):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 1
        py = best(lambda: call(_kernels_py), args.repeat)
        cy = best(lambda: call(_kernels_c), args.repeat)
        print(f"{name:<14} {py:>10.4f} {cy:>10.4f} {py / cy:>8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
