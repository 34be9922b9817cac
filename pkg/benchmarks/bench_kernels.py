"""Timing comparison of the LIF kernel backends.

Runs the fused forward/backward recurrence on a sweep of problem sizes
with both the compiled extension and the numpy fallback, and prints a
table of per-call times and the speedup. Usage:

    python benchmarks/bench_kernels.py [repeats]
"""

import importlib
import sys
import time

import numpy as np

BACKENDS = ["numpy", "compiled"]
SHAPES = [(8, 256), (8, 4096), (8, 65536), (32, 16384)]
K, V_TH, EPS = 0.5, 1.0, 2.0


def _load(name):
    if name == "numpy":
        return importlib.import_module("spike_diffuser.kernels._numpy")
    try:
        return importlib.import_module("spike_diffuser.kernels._lifcore")
    except ImportError:
        return None


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    repeats = int(sys.argv[1]) if len(sys.argv) > 1 else 20
    mods = {name: _load(name) for name in BACKENDS}
    if mods["compiled"] is None:
        print("compiled backend unavailable; showing numpy only")
    rng = np.random.default_rng(0)

    header = f"{'shape':>14} {'direction':>9}"
    for name in BACKENDS:
        header += f" {name:>12}"
    header += f" {'speedup':>8}"
    print(header)

    for t_steps, n in SHAPES:
        x = rng.normal(0.8, 0.5, (t_steps, n))
        grad = rng.standard_normal((t_steps, n))
        times = {}
        results = {}
        for name, mod in mods.items():
            if mod is None:
                continue
            spikes, u_pre = mod.lif_forward(x, K, V_TH)
            results[name] = (spikes, u_pre)
            times[(name, "fwd")] = _time(lambda m=mod: m.lif_forward(x, K, V_TH),
                                         repeats)
            times[(name, "bwd")] = _time(
                lambda m=mod, s=spikes, u=u_pre:
                m.lif_backward(grad, s, u, K, V_TH, EPS),
                repeats)
        if len(results) == 2:
            same = all(
                np.array_equal(results["numpy"][i], results["compiled"][i])
                for i in range(2))
            if not same:
                print(f"  WARNING: backend outputs differ on {(t_steps, n)}")
        for direction in ("fwd", "bwd"):
            row = f"{str((t_steps, n)):>14} {direction:>9}"
            for name in BACKENDS:
                t = times.get((name, direction))
                row += f" {t * 1e6:>10.1f}us" if t is not None else f" {'-':>12}"
            t_np = times.get(("numpy", direction))
            t_c = times.get(("compiled", direction))
            if t_np and t_c:
                row += f" {t_np / t_c:>7.2f}x"
            print(row)


if __name__ == "__main__":
    main()
