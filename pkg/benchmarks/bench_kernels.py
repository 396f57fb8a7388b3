"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 20]

Each kernel is run once to trigger compilation, the two backends are
checked for agreement, and the best wall time over ``--repeat`` calls
is reported.
"""
import argparse
import time

import numpy as np

from dirfolio.kernels import KERNELS, NUMBA_AVAILABLE


def make_inputs(rng):
    n = 4096
    rewards = rng.normal(0, 0.01, n)
    values = rng.normal(0, 0.01, n)
    dones = np.zeros(n, bool)
    dones[::512] = True
    equity = np.cumprod(1 + rng.normal(0, 0.01, 20000))
    v = rng.normal(0.02, 0.05, 500)
    caps = np.full(500, 0.05)
    x = rng.normal(0, 0.01, (30, 10))
    valid = rng.random((30, 10)) > 0.05
    return {
        "gae": (rewards, values, 0.0, dones, 0.99, 0.95),
        "discounted": (rewards, dones, 0.99),
        "drawdown": (equity,),
        "project_capped": (v, caps),
        "pairwise_cov": (x, valid),
    }


def wide_cov_inputs(rng):
    x = rng.normal(0, 0.01, (60, 200))
    return x, rng.random((60, 200)) > 0.05


def best_time(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not NUMBA_AVAILABLE:
        print("numba not installed; only the numpy path is available")
        return
    rng = np.random.default_rng(args.seed)
    inputs = make_inputs(rng)
    print(f"{'kernel':<16}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}{'max diff':>12}")
    for name, (fast, slow) in KERNELS.items():
        a = inputs[name]
        ref = slow(*a)
        t0 = time.perf_counter()
        out = fast(*a)
        compile_s = time.perf_counter() - t0
        diff = float(np.max(np.abs(np.asarray(out) - np.asarray(ref))))
        t_np = best_time(slow, a, args.repeat)
        t_nb = best_time(fast, a, args.repeat)
        print(f"{name:<16}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>9.1f}x{diff:>12.1e}"
              f"   (first call {compile_s:.2f}s)")
    # past a few dozen names the BLAS formulation wins; pairwise_cov switches over
    fast, slow = KERNELS["pairwise_cov"]
    a = wide_cov_inputs(rng)
    t_np = best_time(slow, a, args.repeat)
    t_nb = best_time(fast, a, args.repeat)
    print(f"{'cov N=200':<16}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
