"""Compare numba and numpy backends on the hot kernels.

    python benchmarks/bench_kernels.py [repeats]
"""

import sys

from jacreg.bench import run_benchmarks


def main():
    repeats = int(sys.argv[1]) if len(sys.argv) > 1 else 3
    rows = run_benchmarks(repeats)
    by_kernel = {}
    for kernel, backend, sec in rows:
        by_kernel.setdefault(kernel, {})[backend] = sec
    print(f"{'kernel':<24}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for kernel, t in by_kernel.items():
        nb, npy = t.get("numba", float("nan")), t["numpy"]
        print(f"{kernel:<24}{nb:>12.4f}{npy:>12.4f}{npy / nb:>10.1f}")


if __name__ == "__main__":
    main()
