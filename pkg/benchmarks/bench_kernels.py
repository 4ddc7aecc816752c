"""Compare the numba kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py

Same numbers as ``impurity-vqdmft bench``.
"""

from impurity_vqdmft.bench import run_benchmark

if __name__ == "__main__":
    print(f"{'case':<28} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for r in run_benchmark():
        print(f"{r['case']:<28} {r['numpy_ms']:10.3f} {r['numba_ms']:10.3f} {r['speedup']:8.1f}")
