"""Timing comparison for the hot kernels: compiled vs pure-Python path.

Run:  python3 benchmarks/bench_kernels.py
The TRACKBENCH_NUMBA env var picks the import-time path; when the compiled
path is active this script also times each kernel's .py_func fallback and
checks the two agree.
"""

import math
import time

import numpy as np

from trackbench import kernels


def _timeit(fn, *args, repeat=5, inner=1):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / inner)
    return best


def _fallback(fn):
    return getattr(fn, "py_func", fn)


def bench():
    rng = np.random.default_rng(0)
    print(f"numba path active: {kernels.USING_NUMBA}")

    rows = []

    # single-step kinematics, batched by an outer loop
    n = 20000
    states = rng.normal(size=(n, 4))
    controls = rng.normal(size=(n, 2))

    def steps(fn):
        def run():
            for i in range(n):
                fn(states[i, 0], states[i, 1], states[i, 2], abs(states[i, 3]) + 1.0,
                   controls[i, 0], 0.3 * math.tanh(controls[i, 1]), 0.02, 2.5, 1.25)
        return run

    rows.append(("kin_step x20k", steps(kernels.kin_step), steps(_fallback(kernels.kin_step))))

    # horizon rollout + cost, the MPC inner loop
    p, m = 30, 6
    seq = np.ascontiguousarray(rng.normal(size=(m, 2)) * 0.2)
    refs = np.ascontiguousarray(rng.normal(size=(p, 4)))
    out = np.empty((p, 4))

    def rollout(fn):
        return lambda: fn(0.0, 0.0, 0.1, 8.0, seq, 0.02, 2.5, 1.25, out)

    def cost(fn):
        return lambda: fn(0.0, 0.0, 0.1, 8.0, seq, 0.0, 0.0, refs, 0.02, 2.5, 1.25,
                          1.0, 3.0, 0.3, 0.05, 1.0, 0.0, 0.0, 0.0, 10.0)

    rows.append(("kin_rollout p=30", rollout(kernels.kin_rollout),
                 rollout(_fallback(kernels.kin_rollout))))
    rows.append(("mpc_cost p=30", cost(kernels.mpc_cost),
                 cost(_fallback(kernels.mpc_cost))))

    # nearest-point search over a long polyline
    npts = 4000
    ang = np.linspace(0.0, 2.0 * math.pi, npts, endpoint=False)
    xs = np.ascontiguousarray(30.0 * np.cos(ang))
    ys = np.ascontiguousarray(30.0 * np.sin(ang))

    def nearest(fn):
        return lambda: fn(xs, ys, 12.0, 27.0, 0, npts, npts, npts, True)

    rows.append(("nearest_on_polyline n=4k", nearest(kernels.nearest_on_polyline),
                 nearest(_fallback(kernels.nearest_on_polyline))))

    # agreement check between paths before timing
    if kernels.USING_NUMBA:
        a = kernels.mpc_cost(0.0, 0.0, 0.1, 8.0, seq, 0.0, 0.0, refs, 0.02, 2.5, 1.25,
                             1.0, 3.0, 0.3, 0.05, 1.0, 0.0, 0.0, 0.0, 10.0)
        b = kernels.mpc_cost.py_func(0.0, 0.0, 0.1, 8.0, seq, 0.0, 0.0, refs, 0.02,
                                     2.5, 1.25, 1.0, 3.0, 0.3, 0.05, 1.0, 0.0, 0.0,
                                     0.0, 10.0)
        assert abs(a - b) <= 1e-9 * max(1.0, abs(a)), (a, b)
        print(f"path agreement on mpc_cost: {a:.12g} == {b:.12g}")

    print(f"{'kernel':<28}{'active path':>14}{'pure python':>14}{'speedup':>10}")
    for name, fast, slow in rows:
        fast()  # warm up (JIT compile)
        t_fast = _timeit(fast)
        t_slow = _timeit(slow) if kernels.USING_NUMBA else float("nan")
        ratio = t_slow / t_fast if kernels.USING_NUMBA else float("nan")
        print(f"{name:<28}{t_fast * 1e3:>11.3f} ms{t_slow * 1e3:>11.3f} ms{ratio:>9.1f}x")


if __name__ == "__main__":
    bench()
