"""Time the compiled kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--size 128] [--repeat 3]

Both backends are timed on the same inputs and their outputs are checked for
bit-identity before any timing is reported.
"""

import argparse
import timeit

import numpy as np

from deepcofib import _backend
from deepcofib.image import patch_field, patch_grid
from deepcofib.matching import WindowSpec


def _inputs(size, n, seed):
    img = np.random.default_rng(seed).random((size, size))
    field = patch_field(img, n)
    refs = patch_grid(size, size, n)
    values = field.reshape(-1, n * n).copy()
    return field, refs, values


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=128, help="square image side")
    parser.add_argument("--S", type=int, default=50, help="search window side")
    parser.add_argument("--d", type=int, default=5, help="patches per match set")
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    n = 5
    half = WindowSpec(args.S, args.d).half_width(n)
    field, refs, values = _inputs(args.size, n, args.seed)
    backends = _backend.available()
    if "compiled" not in backends:
        print("compiled extension not built; only the fallback is available")

    results = {}
    for name in backends:
        results[name] = (
            _backend.match_patches(field, refs, half, args.d, backend=name),
            _backend.accumulate(values, refs, n, args.size, args.size, backend=name),
        )
    ref = results[backends[0]]
    for name in backends[1:]:
        for a, b in zip(ref[0] + ref[1], results[name][0] + results[name][1]):
            assert a.tobytes() == b.tobytes(), f"{name} differs from {backends[0]}"

    print(f"image {args.size}x{args.size}, {len(refs)} references, S={args.S}, d={args.d}")
    print(f"{'kernel':<14}{'backend':<10}{'seconds':>10}")
    timings = {}
    for kernel in ("match_patches", "accumulate"):
        for name in backends:
            if kernel == "match_patches":
                fn = lambda: _backend.match_patches(field, refs, half, args.d, backend=name)  # noqa: E731
            else:
                fn = lambda: _backend.accumulate(values, refs, n, args.size, args.size,  # noqa: E731
                                                 backend=name)
            timings[kernel, name] = _best(fn, args.repeat)
            print(f"{kernel:<14}{name:<10}{timings[kernel, name]:>10.4f}")
        if len(backends) == 2:
            ratio = timings[kernel, "python"] / timings[kernel, "compiled"]
            print(f"{kernel:<14}{'speedup':<10}{ratio:>9.1f}x")


if __name__ == "__main__":
    main()
