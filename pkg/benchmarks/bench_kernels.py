"""Time the compiled kernels against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Also times one short end-to-end simulation per backend in a subprocess, since
the backend is fixed at import time.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from dpbandit import kernels


def kernel_cases(impl):
    rng = np.random.default_rng(0)
    data = rng.integers(0, 2, 4096).astype(float).tolist()
    scores = rng.random(12).tolist()
    counts = rng.integers(0, 50, 12).tolist()
    points = rng.random((1000, 2)).tolist()

    def counter():
        ctr = impl.DyadicCounter(4096, 1.0, np.random.default_rng(1))
        for t, v in enumerate(data, 1):
            ctr.insert(v)
            ctr.prefix_sum(t)

    def locate():
        for x in points:
            impl.locate_cell(x, 8)

    def select():
        for i in range(1000):
            impl.exp_sample(scores, 5.0, (i + 0.5) / 1000)
            impl.argmax_first(scores)
            impl.first_below(counts, 25.0)

    return {"counter insert+prefix x4096": counter, "locate_cell x1000": locate,
            "exp_sample+argmax+first_below x1000": select}


SIM = ("import time\n"
       "from dpbandit.experiment import ExperimentConfig, run_single\n"
       "t = time.perf_counter()\n"
       "run_single(ExperimentConfig(T=5000, explore_scale=0.05, gamma_scale=0.001), 'P-DAP', 1)\n"
       "print(time.perf_counter() - t)\n")


def simulate(pure):
    env = dict(os.environ)
    env.pop("DPBANDIT_PURE", None)
    if pure:
        env["DPBANDIT_PURE"] = "1"
    out = subprocess.run([sys.executable, "-c", SIM], env=env, capture_output=True, text=True,
                         check=True)
    return float(out.stdout.strip())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    found = kernels.backends()
    if "cython" not in found:
        print("compiled extension not built; only the fallback is available")
    timings = {}
    for name, impl in found.items():
        for case, fn in kernel_cases(impl).items():
            timings[name, case] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
    cases = list(kernel_cases(found["python"]))
    print(f"{'kernel':40s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for case in cases:
        py = timings["python", case] * 1e3
        cy = timings.get(("cython", case))
        if cy is None:
            print(f"{case:40s} {py:10.2f} {'-':>10s} {'-':>8s}")
        else:
            print(f"{case:40s} {py:10.2f} {cy * 1e3:10.2f} {py / (cy * 1e3):7.2f}x")
    py = simulate(pure=True)
    line = f"{'simulation P-DAP T=5000 (s)':40s} {py:10.2f}"
    if "cython" in found:
        cy = simulate(pure=False)
        line += f" {cy:10.2f} {py / cy:7.2f}x"
    print(line)


if __name__ == "__main__":
    main()
