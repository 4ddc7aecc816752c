"""Kernel timing: numba against the pure-numpy fallback."""

from __future__ import annotations

import time

import numpy as np

from . import _kernels
from .circuits import AnsatzSpec, hva_ansatz


def _time(fn, repeat=5, number=20):
    fn()  # warm up (and compile)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(number):
            fn()
        best = min(best, (time.perf_counter() - t0) / number)
    return best * 1e3


def _cases(rng):
    for B, L in ((1, 2), (2, 3), (3, 3)):
        circ = hva_ansatz(AnsatzSpec(B, L))
        n = circ.n_qubits
        x = rng.normal(size=circ.n_params)
        psi = rng.normal(size=(2, 1 << n)) + 1j * rng.normal(size=(2, 1 << n))
        psi /= np.linalg.norm(psi, axis=1, keepdims=True)
        target = psi[::-1].copy()

        def cost(out, target=target):
            return float(-np.vdot(target, out).real), -target

        yield f"apply B={B} L={L}", lambda c=circ, x=x, p=psi: c.apply(x, p)
        yield f"value_and_grad B={B} L={L}", lambda c=circ, x=x, p=psi, f=cost: c.value_and_grad(x, p, f)


def run_benchmark(seed: int = 0) -> list[dict]:
    """Time each case under both backends; the active backend is restored."""
    if not _kernels.HAVE_NUMBA:
        raise RuntimeError("numba is not importable; nothing to compare")
    was = "numba" if _kernels.using_numba() else "numpy"
    rows = []
    try:
        for name, fn in _cases(np.random.default_rng(seed)):
            _kernels.set_backend("numpy")
            t_np = _time(fn)
            _kernels.set_backend("numba")
            t_nb = _time(fn)
            rows.append({"case": name, "numpy_ms": t_np, "numba_ms": t_nb, "speedup": t_np / t_nb})
    finally:
        _kernels.set_backend(was)
    return rows
