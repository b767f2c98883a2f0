"""Compare the compiled dense-MLP kernels against the numpy fallback.

Runs forward and forward+backward over a range of batch sizes on the
default reward-network shape and prints a timing table. Run with:

    python benchmarks/bench_kernels.py
"""
import time

import numpy as np

from irlad import nn
from irlad._kernels import IMPL, dense_py


def make_problem(rng, batch):
    params = nn.init_params(rng, 0.1, (64, 16), K=1, input_dim=7)
    X = rng.normal(size=(batch, 7))
    out_grad = rng.normal(size=(batch, 1))
    return params, X, out_grad


def time_fn(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_impl(kernels, params, X, out_grad):
    trunk_ws = [W for W, _ in params.trunk]
    trunk_bs = [b for _, b in params.trunk]
    head_w, head_b = params.heads[0]

    def fwd():
        kernels.forward(trunk_ws, trunk_bs, head_w, head_b, X)

    def fwd_bwd():
        _, acts = kernels.forward(trunk_ws, trunk_bs, head_w, head_b, X)
        kernels.backward(trunk_ws, head_w, X, acts, out_grad)

    return time_fn(fwd), time_fn(fwd_bwd)


def main():
    if IMPL != "cython":
        print(f"active kernel is {IMPL!r}; compiled extension unavailable, "
              "nothing to compare")
        return
    from irlad._kernels import dense_cy

    rng = np.random.default_rng(0)
    print(f"{'batch':>8} {'fwd cy (ms)':>12} {'fwd py (ms)':>12} {'speedup':>8} "
          f"{'fb cy (ms)':>12} {'fb py (ms)':>12} {'speedup':>8}")
    for batch in (16, 64, 256, 1024, 4096):
        params, X, og = make_problem(rng, batch)
        f_cy, fb_cy = bench_impl(dense_cy, params, X, og)
        f_py, fb_py = bench_impl(dense_py, params, X, og)
        print(f"{batch:>8} {f_cy * 1e3:>12.3f} {f_py * 1e3:>12.3f} "
              f"{f_py / f_cy:>7.1f}x {fb_cy * 1e3:>12.3f} {fb_py * 1e3:>12.3f} "
              f"{fb_py / fb_cy:>7.1f}x")

    # Numerical agreement spot check alongside the timings.
    params, X, og = make_problem(rng, 128)
    trunk_ws = [W for W, _ in params.trunk]
    trunk_bs = [b for _, b in params.trunk]
    hw, hb = params.heads[0]
    out_cy, acts_cy = dense_cy.forward(trunk_ws, trunk_bs, hw, hb, X)
    out_py, _ = dense_py.forward(trunk_ws, trunk_bs, hw, hb, X)
    print(f"max |forward difference|: {np.abs(out_cy - out_py).max():.3e}")


if __name__ == "__main__":
    main()
