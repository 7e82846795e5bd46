"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--threads N]

Inputs mirror one training frame on the default rig: the gather samples a
160x96x8 feature image at 5x200x48 anchor points; the splat and its adjoint
push one 200x48 heightmap footprint into the image.
"""

import argparse
import os
import timeit

import numpy as np

from heightlab import _core_py

try:
    from heightlab import _core
except ImportError:
    _core = None


def cases(rng):
    H, W, C = 96, 160, 8
    field = rng.normal(size=(H, W, C))
    n_gather = 5 * 200 * 48
    gu, gv = rng.uniform(-5, W + 5, n_gather), rng.uniform(-5, H + 5, n_gather)
    n_splat = 200 * 48
    su, sv = rng.uniform(-2, W + 1, n_splat), rng.uniform(-2, H + 1, n_splat)
    mass, grad = rng.random(n_splat), rng.normal(size=(H, W))
    return {
        "gather": lambda m, t: m.bilinear_gather(field, gu, gv, t),
        "splat": lambda m, t: m.bilinear_splat(su, sv, mass, H, W),
        "splat_adjoint": lambda m, t: m.bilinear_splat_adjoint(su, sv, mass, grad, t),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=20)
    ap.add_argument("--threads", type=int, default=int(os.environ.get("HEIGHTLAB_THREADS", os.cpu_count() or 1)))
    args = ap.parse_args()
    if _core is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<14} {'numpy ms':>9} {'cython ms':>10} {'speedup':>8}  (threads={args.threads})")
    for name, fn in cases(rng).items():
        py_out, cy_out = fn(_core_py, 1), fn(_core, args.threads)
        as_tuple = lambda o: o if isinstance(o, tuple) else (o,)
        same = all(np.array_equal(a, b) for a, b in zip(as_tuple(py_out), as_tuple(cy_out)))
        t_py = min(timeit.repeat(lambda: fn(_core_py, 1), number=args.number, repeat=args.repeat)) / args.number
        t_cy = min(timeit.repeat(lambda: fn(_core, args.threads), number=args.number, repeat=args.repeat)) / args.number
        flag = "" if same else "  OUTPUTS DIFFER"
        print(f"{name:<14} {t_py * 1e3:9.3f} {t_cy * 1e3:10.3f} {t_py / t_cy:7.1f}x{flag}")


if __name__ == "__main__":
    main()
