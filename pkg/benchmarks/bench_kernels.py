"""Compiled vs numpy kernel timings.

    python3 benchmarks/bench_kernels.py [--repeats 5]

Rows without a cython column mean the extension was not built (or
TWOPC_KERNELS=python is set).
"""
import argparse

from twopc._kernels import BACKEND
from twopc.bench import kernel_table


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    print(f"active backend: {BACKEND}")
    print(f"{'kernel':<22}{'numpy (s)':>12}{'cython (s)':>12}{'speedup':>10}")
    for r in kernel_table(args.repeats):
        c = f"{r['cython_s']:12.5f}{r['speedup']:10.1f}" if "cython_s" in r else f"{'-':>12}{'-':>10}"
        print(f"{r['kernel']:<22}{r['numpy_s']:12.5f}{c}")


if __name__ == "__main__":
    main()
