"""Compare the compiled kernels against the pure-NumPy fallbacks.

Run:  python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from reachplan._kernels import HAVE_COMPILED, _fallback

if HAVE_COMPILED:
    from reachplan._kernels import _core
else:
    _core = None
    print("compiled kernels unavailable; timing fallback only\n")


def bench(label, fn, *args, repeat=200):
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    dt = (time.perf_counter() - t0) / repeat
    print(f"  {label:<14} {dt * 1e6:9.1f} us/call")
    return dt


def main():
    rng = np.random.default_rng(0)

    print("khachiyan_weights (MVEE weight iteration)")
    for n_pts in (8, 64, 512):
        P = rng.normal(size=(n_pts, 2))
        print(f" n={n_pts}")
        t_py = bench("fallback", _fallback.khachiyan_weights, P, 1e-7, 1000)
        if _core is not None:
            t_c = bench("compiled", _core.khachiyan_weights, P, 1e-7, 1000)
            u_py = _fallback.khachiyan_weights(P, 1e-7, 1000)
            u_c = _core.khachiyan_weights(P, 1e-7, 1000)
            assert np.allclose(u_py, u_c, atol=1e-8), "kernel results diverge"
            print(f"  speedup        {t_py / t_c:9.1f}x")

    print("\npolar_targets (per-iteration obstacle targets)")
    for N, M in ((50, 1), (50, 4), (50, 16)):
        dx = rng.normal(scale=20, size=(N, M))
        dy = rng.normal(scale=5, size=(N, M))
        lx = np.full((N, M), 6.0)
        ly = np.full((N, M), 4.0)
        d_prev = np.abs(rng.normal(loc=2, size=(N, M)))
        print(f" N={N} M={M}")
        t_py = bench("fallback", _fallback.polar_targets, dx, dy, lx, ly, 0.8, d_prev)
        if _core is not None:
            t_c = bench("compiled", _core.polar_targets, dx, dy, lx, ly, 0.8, d_prev)
            o_py, d_py = _fallback.polar_targets(dx, dy, lx, ly, 0.8, d_prev)
            o_c, d_c = _core.polar_targets(dx, dy, lx, ly, 0.8, d_prev)
            assert np.allclose(o_py, o_c) and np.allclose(d_py, d_c)
            print(f"  speedup        {t_py / t_c:9.1f}x")


if __name__ == "__main__":
    main()
