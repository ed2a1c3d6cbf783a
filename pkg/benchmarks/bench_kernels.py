"""Compare the compiled and numpy kernels on a calibration-sized temperature sweep.

    python benchmarks/bench_kernels.py [--stages 5] [--samples 1000] [--classes 10] [--repeat 3]
"""
import argparse
import time

import numpy as np

from stagebank import _kernels_py
from stagebank.trainer import candidate_temperatures

try:
    from stagebank import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--stages", type=int, default=5)
    ap.add_argument("--samples", type=int, default=1000)
    ap.add_argument("--classes", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    logits = rng.normal(-8, 3, (args.stages, args.samples, args.classes))
    counts = np.full(args.stages, args.classes, dtype=np.int64)
    temps = candidate_temperatures()
    print(f"stage_winners: S={args.stages} N={args.samples} C={args.classes} temperatures={temps.size}")

    t_py, w_py = best_of(lambda: _kernels_py.stage_winners(logits, counts, temps), args.repeat)
    print(f"  numpy   {t_py:8.3f} s")
    if _kernels is None:
        print("  cython  (extension not built)")
        return
    t_c, w_c = best_of(lambda: _kernels.stage_winners(logits, counts, temps), args.repeat)
    print(f"  cython  {t_c:8.3f} s   speedup x{t_py / t_c:.2f}")
    print(f"  winner mismatches: {int(np.sum(w_py != w_c))}")
    c_py = _kernels_py.confidences(logits, counts, 0.37)
    c_c = _kernels.confidences(logits, counts, 0.37)
    print(f"  max |confidence difference| at T=0.37: {np.abs(c_py - c_c).max():.2e}")


if __name__ == "__main__":
    main()
