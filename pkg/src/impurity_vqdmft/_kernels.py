"""
Statevector gate kernels.

Every simulated circuit funnels through ``apply_1q`` / ``apply_2q``.  Two
implementations exist: numba-compiled index loops and a pure numpy
reshape/einsum path.  The numba path is the default; set
``VQDMFT_NUMBA=0`` in the environment to force the numpy path (useful for
debugging and for platforms without numba).

States are passed as 2-d arrays of shape ``(batch, 2**n)`` so that several
states can be pushed through the same gate in one call.  Qubit 0 is the most
significant bit of the basis index.
"""

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False


def _env_wants_numba():
    flag = os.environ.get("VQDMFT_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


# ---------------------------------------------------------------------------
# numpy reference path


def apply_1q_numpy(psi, mat, q, n):
    batch = psi.shape[0]
    v = psi.reshape(batch, 1 << q, 2, 1 << (n - q - 1))
    out = np.einsum("ij,bajc->baic", mat, v)
    return out.reshape(batch, -1)


def apply_2q_numpy(psi, mat, q1, q2, n):
    batch = psi.shape[0]
    if q2 == q1 + 1:
        v = psi.reshape(batch, 1 << q1, 4, 1 << (n - q2 - 1))
        out = np.einsum("ij,bajc->baic", mat, v)
        return out.reshape(batch, -1)
    v = psi.reshape((batch,) + (2,) * n)
    m = mat.reshape(2, 2, 2, 2)
    out = np.tensordot(m, v, axes=([2, 3], [q1 + 1, q2 + 1]))
    # tensordot puts the two gate axes first
    out = np.moveaxis(out, [0, 1], [q1 + 1, q2 + 1])
    return np.ascontiguousarray(out).reshape(batch, -1)


# ---------------------------------------------------------------------------
# numba path

if HAVE_NUMBA:

    @numba.njit(cache=True, nogil=True)
    def _apply_1q_nb(psi, mat, q, n):
        out = psi.copy()
        stride = 1 << (n - q - 1)
        dim = psi.shape[1]
        m00, m01, m10, m11 = mat[0, 0], mat[0, 1], mat[1, 0], mat[1, 1]
        for b in range(psi.shape[0]):
            for i in range(dim):
                if i & stride:
                    continue
                j = i | stride
                a0 = psi[b, i]
                a1 = psi[b, j]
                out[b, i] = m00 * a0 + m01 * a1
                out[b, j] = m10 * a0 + m11 * a1
        return out

    @numba.njit(cache=True, nogil=True)
    def _apply_2q_nb(psi, mat, q1, q2, n):
        out = psi.copy()
        s1 = 1 << (n - q1 - 1)
        s2 = 1 << (n - q2 - 1)
        dim = psi.shape[1]
        idx = np.empty(4, dtype=np.int64)
        amp = np.empty(4, dtype=np.complex128)
        for b in range(psi.shape[0]):
            for i in range(dim):
                if (i & s1) or (i & s2):
                    continue
                idx[0] = i
                idx[1] = i | s2
                idx[2] = i | s1
                idx[3] = i | s1 | s2
                for k in range(4):
                    amp[k] = psi[b, idx[k]]
                for r in range(4):
                    acc = 0j
                    for k in range(4):
                        acc += mat[r, k] * amp[k]
                    out[b, idx[r]] = acc
        return out

    def apply_1q_numba(psi, mat, q, n):
        return _apply_1q_nb(np.ascontiguousarray(psi, dtype=np.complex128), np.asarray(mat, dtype=np.complex128), q, n)

    def apply_2q_numba(psi, mat, q1, q2, n):
        return _apply_2q_nb(np.ascontiguousarray(psi, dtype=np.complex128), np.asarray(mat, dtype=np.complex128), q1, q2, n)

else:  # pragma: no cover
    apply_1q_numba = apply_1q_numpy
    apply_2q_numba = apply_2q_numpy


# ---------------------------------------------------------------------------
# dispatch

_USE_NUMBA = HAVE_NUMBA and _env_wants_numba()


def using_numba():
    return _USE_NUMBA


def set_backend(name):
    """Switch kernels at runtime; ``name`` is ``"numba"`` or ``"numpy"``."""
    global _USE_NUMBA, apply_1q, apply_2q
    if name == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba is not importable")
        _USE_NUMBA = True
        apply_1q, apply_2q = apply_1q_numba, apply_2q_numba
    elif name == "numpy":
        _USE_NUMBA = False
        apply_1q, apply_2q = apply_1q_numpy, apply_2q_numpy
    else:
        raise ValueError(f"unknown kernel backend {name!r}")


if _USE_NUMBA:
    apply_1q, apply_2q = apply_1q_numba, apply_2q_numba
else:
    apply_1q, apply_2q = apply_1q_numpy, apply_2q_numpy


def apply_gate(psi, mat, qubits, n):
    """Apply a 2x2 or 4x4 matrix to ``qubits`` of every row of ``psi``."""
    if len(qubits) == 1:
        return apply_1q(psi, mat, qubits[0], n)
    return apply_2q(psi, mat, qubits[0], qubits[1], n)


# ---------------------------------------------------------------------------
# whole-circuit kernels
#
# A circuit is packed as mats (G, 4, 4), qubits (G, 2), arity (G,); one-qubit
# gates use the top-left 2x2 block.  The vjp walks the circuit backwards with
# the output state and the cotangent, accumulating Im<mu|G psi> per slot.


def circuit_apply_numpy(psi, mats, qubits, arity, n):
    for g in range(mats.shape[0]):
        if arity[g] == 1:
            psi = apply_1q_numpy(psi, mats[g, :2, :2], qubits[g, 0], n)
        else:
            psi = apply_2q_numpy(psi, mats[g], qubits[g, 0], qubits[g, 1], n)
    return psi


def circuit_vjp_numpy(psi, mu, mats, gens, qubits, arity, slots, n_params, n):
    grad = np.zeros(n_params)
    for g in range(mats.shape[0] - 1, -1, -1):
        one = arity[g] == 1
        q1, q2 = qubits[g, 0], qubits[g, 1]
        if slots[g] >= 0:
            if one:
                gp = apply_1q_numpy(psi, gens[g, :2, :2], q1, n)
            else:
                gp = apply_2q_numpy(psi, gens[g], q1, q2, n)
            grad[slots[g]] += np.vdot(mu, gp).imag
        inv = mats[g].conj().T
        if one:
            psi = apply_1q_numpy(psi, inv[:2, :2], q1, n)
            mu = apply_1q_numpy(mu, inv[:2, :2], q1, n)
        else:
            psi = apply_2q_numpy(psi, inv, q1, q2, n)
            mu = apply_2q_numpy(mu, inv, q1, q2, n)
    return grad


if HAVE_NUMBA:

    @numba.njit(cache=True, nogil=True)
    def _inplace_1q(psi, m, q, n):
        stride = 1 << (n - q - 1)
        dim = psi.shape[1]
        m00, m01, m10, m11 = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
        for b in range(psi.shape[0]):
            for i in range(dim):
                if i & stride:
                    continue
                j = i | stride
                a0 = psi[b, i]
                a1 = psi[b, j]
                psi[b, i] = m00 * a0 + m01 * a1
                psi[b, j] = m10 * a0 + m11 * a1

    @numba.njit(cache=True, nogil=True)
    def _inplace_2q(psi, m, q1, q2, n):
        s1 = 1 << (n - q1 - 1)
        s2 = 1 << (n - q2 - 1)
        dim = psi.shape[1]
        for b in range(psi.shape[0]):
            for i in range(dim):
                if (i & s1) or (i & s2):
                    continue
                i1 = i | s2
                i2 = i | s1
                i3 = i | s1 | s2
                a0 = psi[b, i]
                a1 = psi[b, i1]
                a2 = psi[b, i2]
                a3 = psi[b, i3]
                psi[b, i] = m[0, 0] * a0 + m[0, 1] * a1 + m[0, 2] * a2 + m[0, 3] * a3
                psi[b, i1] = m[1, 0] * a0 + m[1, 1] * a1 + m[1, 2] * a2 + m[1, 3] * a3
                psi[b, i2] = m[2, 0] * a0 + m[2, 1] * a1 + m[2, 2] * a2 + m[2, 3] * a3
                psi[b, i3] = m[3, 0] * a0 + m[3, 1] * a1 + m[3, 2] * a2 + m[3, 3] * a3

    @numba.njit(cache=True, nogil=True)
    def _circuit_apply_nb(psi, mats, qubits, arity, n):
        out = psi.copy()
        for g in range(mats.shape[0]):
            if arity[g] == 1:
                _inplace_1q(out, mats[g], qubits[g, 0], n)
            else:
                _inplace_2q(out, mats[g], qubits[g, 0], qubits[g, 1], n)
        return out

    @numba.njit(cache=True, nogil=True)
    def _circuit_vjp_nb(psi, mu, mats, gens, qubits, arity, slots, n_params, n):
        psi = psi.copy()
        mu = mu.copy()
        tmp = np.empty_like(psi)
        grad = np.zeros(n_params)
        inv = np.empty((4, 4), dtype=np.complex128)
        for g in range(mats.shape[0] - 1, -1, -1):
            q1 = qubits[g, 0]
            q2 = qubits[g, 1]
            if slots[g] >= 0:
                tmp[:, :] = psi
                if arity[g] == 1:
                    _inplace_1q(tmp, gens[g], q1, n)
                else:
                    _inplace_2q(tmp, gens[g], q1, q2, n)
                acc = 0.0
                for b in range(psi.shape[0]):
                    for i in range(psi.shape[1]):
                        z = mu[b, i].conjugate() * tmp[b, i]
                        acc += z.imag
                grad[slots[g]] += acc
            for r in range(4):
                for c in range(4):
                    inv[r, c] = mats[g, c, r].conjugate()
            if arity[g] == 1:
                _inplace_1q(psi, inv, q1, n)
                _inplace_1q(mu, inv, q1, n)
            else:
                _inplace_2q(psi, inv, q1, q2, n)
                _inplace_2q(mu, inv, q1, q2, n)
        return grad

    def circuit_apply_numba(psi, mats, qubits, arity, n):
        return _circuit_apply_nb(np.ascontiguousarray(psi, dtype=np.complex128), mats, qubits, arity, n)

    def circuit_vjp_numba(psi, mu, mats, gens, qubits, arity, slots, n_params, n):
        return _circuit_vjp_nb(
            np.ascontiguousarray(psi, dtype=np.complex128), np.ascontiguousarray(mu, dtype=np.complex128),
            mats, gens, qubits, arity, slots, n_params, n,
        )

else:  # pragma: no cover
    circuit_apply_numba = circuit_apply_numpy
    circuit_vjp_numba = circuit_vjp_numpy


def circuit_apply(psi, mats, qubits, arity, n):
    if _USE_NUMBA:
        return circuit_apply_numba(psi, mats, qubits, arity, n)
    return circuit_apply_numpy(psi, mats, qubits, arity, n)


def circuit_vjp(psi, mu, mats, gens, qubits, arity, slots, n_params, n):
    if _USE_NUMBA:
        return circuit_vjp_numba(psi, mu, mats, gens, qubits, arity, slots, n_params, n)
    return circuit_vjp_numpy(psi, mu, mats, gens, qubits, arity, slots, n_params, n)
