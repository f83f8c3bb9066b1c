"""Compiled vs numpy kernels, on the shapes one batch-128 training step sees.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--step]

Prints the best-of-N wall time per kernel for each backend and the speedup.
``--step`` also times a whole forward/backward/update of the default network
with each backend swapped in.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from choixgrade.autograd import _pykernels, kernels

try:
    from choixgrade.autograd import _ckernels
except ImportError:
    _ckernels = None

# (name, input shape, kernel, stride, pad)
CONV_SHAPES = [("stem 1->16 @64", (128, 1, 64, 64), 3, 1, 1),
               ("stage1 16 @64", (128, 16, 64, 64), 3, 1, 1),
               ("stage2 down 16->32", (128, 16, 64, 64), 3, 2, 1),
               ("stage3 64 @16", (128, 64, 16, 16), 3, 1, 1)]


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_cases(rng):
    for name, shape, k, s, p in CONV_SHAPES:
        x = rng.standard_normal(shape, dtype=np.float32)
        ho = kernels.out_size(shape[2], k, s, p)
        rows = rng.standard_normal((shape[0] * ho * ho, shape[1] * k * k), dtype=np.float32)
        yield f"im2col   {name}", lambda m, x=x, k=k, s=s, p=p: m.im2col(x, k, s, p)
        yield f"col2im   {name}", lambda m, r=rows, sh=shape, k=k, s=s, p=p: m.col2im(r, sh, k, s, p)
    x = rng.standard_normal((128, 16, 64, 64), dtype=np.float32)
    out, arg = _pykernels.maxpool_forward(x, 2, 2)
    g = rng.standard_normal(out.shape, dtype=np.float32)
    yield "maxpool fwd 2x2 @64", lambda m: m.maxpool_forward(x, 2, 2)
    yield "maxpool bwd 2x2 @64", lambda m: m.maxpool_backward(g, arg, x.shape)


def time_step(impl, repeat):
    from choixgrade.nn import build_mini_resnet
    from choixgrade.optim import SgdConfig
    from choixgrade.train import train_step

    saved = {n: getattr(kernels, n) for n in ("im2col", "col2im", "maxpool_forward", "maxpool_backward")}
    for n in saved:
        setattr(kernels, n, getattr(impl, n))
    try:
        rng = np.random.default_rng(0)
        model = build_mini_resnet()
        x = rng.uniform(0, 1, (128, 1, 64, 64)).astype(np.float32)
        y = rng.integers(0, 5, 128)
        vel = {}
        return best(lambda: train_step(model, x, y, SgdConfig(), vel, 0.01), repeat)
    finally:
        for n, f in saved.items():
            setattr(kernels, n, f)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--step", action="store_true", help="also time a full training step")
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels not built; only the numpy backend is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in kernel_cases(rng):
        tp = best(lambda: fn(_pykernels), args.repeat) * 1e3
        if _ckernels is None:
            print(f"{name:34s} {tp:10.2f}")
            continue
        tc = best(lambda: fn(_ckernels), args.repeat) * 1e3
        print(f"{name:34s} {tp:10.2f} {tc:10.2f} {tp / tc:7.2f}x")
    if args.step:
        tp = time_step(_pykernels, 2)
        line = f"{'train step, batch 128':34s} {tp * 1e3:10.0f}"
        if _ckernels is not None:
            tc = time_step(_ckernels, 2)
            line += f" {tc * 1e3:10.0f} {tp / tc:7.2f}x"
        print(line)


if __name__ == "__main__":
    main()
