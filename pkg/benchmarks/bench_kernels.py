#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Times each fused kernel on a range of shapes, then one full forecaster
forward+backward per backend. Run after building the extension:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from adpgcn import _kernels_py, kernels


def timeit(fn, repeats=200, warmup=5):
    for _ in range(warmup):
        fn()
    best = float("inf")
    for _ in range(3):
        start = time.perf_counter()
        for _ in range(repeats):
            fn()
        best = min(best, (time.perf_counter() - start) / repeats)
    return best


def backend_impls():
    impls = {"python": _kernels_py}
    try:
        from adpgcn import _ckernels

        impls["cython"] = _ckernels
    except ImportError:
        pass
    return impls


def bench_kernels():
    rng = np.random.default_rng(0)
    impls = backend_impls()
    shapes = {
        "small (192, 32)": (192, 32),
        "medium (1536, 64)": (1536, 64),
        "large (6144, 48)": (6144, 48),
    }
    rows = []
    for label, shape in shapes.items():
        x = rng.normal(size=shape)
        g = rng.normal(size=shape)
        gain = rng.normal(size=shape[1])
        bias = rng.normal(size=shape[1])
        y = _kernels_py.softmax_rows_fwd(x)
        _, xhat, inv_std = _kernels_py.layer_norm_fwd(x, gain, bias, 1e-5)
        cases = {
            "relu_fwd": lambda impl: impl.relu_fwd(x),
            "relu_bwd": lambda impl: impl.relu_bwd(x, g),
            "softmax_fwd": lambda impl: impl.softmax_rows_fwd(x),
            "softmax_bwd": lambda impl: impl.softmax_rows_bwd(y, g),
            "layer_norm_fwd": lambda impl: impl.layer_norm_fwd(x, gain, bias, 1e-5),
            "layer_norm_bwd": lambda impl: impl.layer_norm_bwd(g, xhat, inv_std, gain),
        }
        for name, call in cases.items():
            timings = {
                backend: timeit(lambda impl=impl, c=call: c(impl))
                for backend, impl in impls.items()
            }
            rows.append((f"{name:15s} {label}", timings))

    # Adam on a parameter-sized flat buffer
    n = 200_000
    timings = {}
    for backend, impl in impls.items():
        p = rng.normal(size=n)
        g = rng.normal(size=n)
        m = np.zeros(n)
        v = np.zeros(n)
        timings[backend] = timeit(
            lambda: impl.adam_update(p, g, m, v, 10, 1e-4, 0.9, 0.999, 1e-8),
            repeats=50,
        )
    rows.append((f"{'adam_update':15s} flat {n}", timings))
    return rows


def bench_model():
    """Full forward+backward per backend through the kernel dispatch."""
    from adpgcn.data import collate, make_windows, synthesize_coupled
    from adpgcn.model import Forecaster, ModelConfig
    from adpgcn.training import mse_loss

    series, _ = synthesize_coupled(
        6, 400, [(0, 3, 4, 0.8)], noise_std=0.1, seed=0
    )
    cfg = ModelConfig(n_dims=6, seq_len=48, pred_len=24, d_model=32,
                      n_heads=4, d_ff=64, dropout=0.05)
    batch = collate(make_windows(series, 48, 24, 24)[:32])
    rows = []
    original = kernels.BACKEND
    try:
        for backend in kernels.available_backends():
            kernels.set_backend(backend)
            model = Forecaster(cfg, seed=0)
            model.train_mode()

            def step():
                model.zero_grad()
                mse_loss(model.forward_batch(batch), batch["y"]).backward()

            rows.append((backend, timeit(step, repeats=10, warmup=2)))
    finally:
        kernels.set_backend(original)
    return rows


def main():
    impls = backend_impls()
    print(f"available backends: {', '.join(impls)}")
    if len(impls) == 1:
        print("compiled kernels not built; timing the numpy fallback only\n")

    print(f"{'kernel / shape':42s}" + "".join(f"{b:>12s}" for b in impls)
          + ("     speedup" if len(impls) == 2 else ""))
    for label, timings in bench_kernels():
        line = f"{label:42s}"
        for backend in impls:
            line += f"{timings[backend] * 1e6:10.1f}us"
        if len(timings) == 2:
            line += f"{timings['python'] / timings['cython']:10.2f}x"
        print(line)

    print("\nforecaster forward+backward (batch 32, seq 48, pred 24, d_model 32):")
    model_rows = bench_model()
    for backend, t in model_rows:
        print(f"  {backend:8s} {t * 1e3:8.1f} ms/step")
    if len(model_rows) == 2:
        ratio = model_rows[0][1] / model_rows[1][1]
        first, second = model_rows[0][0], model_rows[1][0]
        print(f"  {second} is {ratio:.2f}x the speed of {first}"
              if ratio > 1 else
              f"  {first} is {1 / ratio:.2f}x the speed of {second}")


if __name__ == "__main__":
    main()
