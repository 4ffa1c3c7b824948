"""Benchmark the compiled recurrence kernel against the numpy fallback.

Usage: python3 benchmarks/bench_gru.py [--repeats 200]

Times the forward pass and the forward+backward pair at several sequence
lengths, checks that both backends agree to float tolerance, and prints a
speedup table.
"""

import argparse
import time

import numpy as np

from ppn.kernels import gru_numpy

try:
    from ppn.kernels import _gru_cy
except ImportError:
    _gru_cy = None


def make_inputs(t, hidden, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((t, 2))
    wz, wr, wc = (rng.standard_normal((hidden, 2)) for _ in range(3))
    uz, ur, uc = (0.1 * rng.standard_normal((hidden, hidden)) for _ in range(3))
    bz, br, bc = (rng.standard_normal(hidden) for _ in range(3))
    return x, wz, wr, wc, uz, ur, uc, bz, br, bc


def run_forward(impl, args):
    return impl.gru_forward(*args, want_states=True)


def run_backward(impl, args, cache):
    h_seq, (z, r, c) = cache
    d_last = np.ones_like(h_seq[-1])
    return impl.gru_backward(args[0], args[1], args[2], args[3], args[4],
                             args[5], args[6], h_seq, z, r, c, d_last)


def time_call(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=200)
    opts = ap.parse_args()

    if _gru_cy is None:
        print("compiled extension not built; nothing to compare "
              "(pip install -e . rebuilds it)")
        return

    print(f"{'T':>4} {'H':>4} {'phase':>9} {'numpy':>10} {'compiled':>10} {'speedup':>8}")
    for t, hidden in [(8, 32), (30, 32), (30, 64), (120, 64)]:
        args = make_inputs(t, hidden)

        h_np, states_np = run_forward(gru_numpy, args)
        h_cy, states_cy = run_forward(_gru_cy, args)
        if not np.allclose(h_np, h_cy, atol=1e-12):
            raise AssertionError(f"forward mismatch at T={t} H={hidden}")
        g_np = run_backward(gru_numpy, args, (h_np, states_np))
        g_cy = run_backward(_gru_cy, args, (h_cy, states_cy))
        for a, b in zip(g_np, g_cy):
            if not np.allclose(a, b, atol=1e-10):
                raise AssertionError(f"backward mismatch at T={t} H={hidden}")

        fwd_np = time_call(lambda: run_forward(gru_numpy, args), opts.repeats)
        fwd_cy = time_call(lambda: run_forward(_gru_cy, args), opts.repeats)
        bwd_np = time_call(lambda: run_backward(gru_numpy, args, (h_np, states_np)),
                           opts.repeats)
        bwd_cy = time_call(lambda: run_backward(_gru_cy, args, (h_cy, states_cy)),
                           opts.repeats)
        for phase, a, b in [("forward", fwd_np, fwd_cy),
                            ("backward", bwd_np, bwd_cy)]:
            print(f"{t:>4} {hidden:>4} {phase:>9} {a * 1e6:>8.1f}us "
                  f"{b * 1e6:>8.1f}us {a / b:>7.2f}x")


if __name__ == "__main__":
    main()
