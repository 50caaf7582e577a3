"""Time the pixel-adaptive filter and fusion kernels under both backends.

    python3 benchmarks/bench_kernels.py [--size 256] [--channels 3] [--k 3] [--repeat 20]

The numba kernels are compiled (or loaded from cache) before timing.
"""

import argparse
import time

import numpy as np

from jpgnet import _accel
from jpgnet.filtering import apply_fusion, apply_pixelwise_filter


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times), float(np.median(times))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--repeat", type=int, default=20)
    args = p.parse_args(argv)

    rng = np.random.default_rng(0)
    n, c, s, k = 1, args.channels, args.size, args.k
    img = rng.random((n, c, s, s))
    i2 = rng.random((n, c, s, s))
    ker = rng.normal(size=(n, c * k * k, s, s))
    field = rng.normal(size=(n, 2 * c * k * k, s, s))
    grad = rng.normal(size=img.shape)

    cases = {
        "filter forward": lambda: apply_pixelwise_filter(img, ker),
        "filter backward": lambda: _accel.filter_backward(grad, img, ker, k),
        "fusion forward": lambda: apply_fusion(img, i2, field),
    }
    backends = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])
    prev = _accel.get_backend()
    results = {}
    try:
        for backend in backends:
            _accel.set_backend(backend)
            for fn in cases.values():
                fn()  # warm-up / JIT
            for name, fn in cases.items():
                results[backend, name] = best_of(fn, args.repeat)
    finally:
        _accel.set_backend(prev)

    print(f"{n}x{c}x{s}x{s}, K={k}, best/median of {args.repeat} runs (ms)")
    print(f"{'case':<18}" + "".join(f"{b:>22}" for b in backends) + ("   speed-up" if len(backends) > 1 else ""))
    for name in cases:
        row = f"{name:<18}"
        for b in backends:
            best, med = results[b, name]
            row += f"{best * 1e3:>12.2f} / {med * 1e3:>7.2f}"
        if len(backends) > 1:
            row += f"{results['numpy', name][0] / results['numba', name][0]:>10.1f}x"
        print(row)


if __name__ == "__main__":
    main()
