"""Compare the compiled and numpy convolution kernels.

Times im2col / col2im at the shapes the toy codec uses, plus one full
training step of the 32x32 codec with each backend, and checks that both
backends produce bit-identical results.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import time

import numpy as np

from bitjscc import kernels
from bitjscc.autodiff import Adam, Tensor, backward
from bitjscc.codec import SemanticCodec
from bitjscc.training import stage1_loss

# (N, C, H, W, kernel, stride, pad) as seen by the 32x32 codec with batch 32
SHAPES = [
    (32, 3, 32, 32, 3, 1, 1),
    (32, 16, 32, 32, 4, 2, 1),
    (32, 32, 16, 16, 3, 1, 1),
    (32, 32, 16, 16, 4, 2, 1),
    (32, 32, 8, 8, 3, 1, 1),
]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench_lowering(backends, repeat):
    rng = np.random.default_rng(0)
    print(f"{'shape':<28}{'op':<8}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for n, c, h, w, k, s, p in SHAPES:
        x = rng.standard_normal((n, c, h, w)).astype(np.float32)
        cols = kernels.im2col(x, k, k, s, p, backend="numpy")
        results = {}
        for op in ("im2col", "col2im"):
            row = {}
            for b in backends:
                if op == "im2col":
                    fn = lambda b=b: kernels.im2col(x, k, k, s, p, backend=b)
                else:
                    fn = lambda b=b: kernels.col2im(cols, x.shape, k, k, s, p, backend=b)
                results[(op, b)] = fn()
                row[b] = best_of(fn, repeat)
            label = f"{n}x{c}x{h}x{w} k{k} s{s}"
            speed = row["numpy"] / row["cython"] if "cython" in row else 1.0
            print(f"{label:<28}{op:<8}" + "".join(f"{row[b] * 1e3:>10.2f}ms" for b in backends)
                  + f"{speed:>9.2f}x")
        if len(backends) == 2:
            for op in ("im2col", "col2im"):
                assert np.array_equal(results[(op, "cython")], results[(op, "numpy")]), op


def bench_training_step(backends, repeat):
    images = np.random.default_rng(1).random((32, 3, 32, 32)).astype(np.float32)
    final = {}
    for b in backends:
        original = kernels.BACKEND
        kernels.BACKEND = b
        try:
            codec = SemanticCodec(32, 32, 4, widths=(16, 32), seed=0)
            opt = Adam(codec.parameters(), lr=1e-3)

            def step():
                backward(stage1_loss(codec, Tensor(images)))
                opt.step()

            step()
            t = best_of(step, repeat)
            final[b] = [p.data.copy() for p in codec.parameters()]
        finally:
            kernels.BACKEND = original
        print(f"training step (batch 32, 32x32 codec), {b:>6}: {t * 1e3:8.1f} ms")
    if len(backends) == 2:
        same = all(np.array_equal(a, c) for a, c in zip(final["cython"], final["numpy"]))
        print(f"parameters identical after {repeat + 1} steps on both backends: {same}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = kernels.available_backends()
    print(f"default backend: {kernels.BACKEND}; available: {', '.join(backends)}")
    if "cython" not in backends:
        print("compiled kernels not built; showing the numpy fallback only")
    bench_lowering(backends, args.repeat)
    bench_training_step(backends, args.repeat)


if __name__ == "__main__":
    main()
