"""Exact statevector simulator for the gate set used by the impurity circuits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .pauli import PauliSum, QubitLayout, apply_pauli

_SQ2 = 1 / np.sqrt(2)


def rz(theta):
    return np.array([[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]], dtype=complex)


def ry(theta):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def fsim(theta, phi):
    c, s = np.cos(theta), np.sin(theta)
    return np.array(
        [[1, 0, 0, 0], [0, c, -1j * s, 0], [0, -1j * s, c, 0], [0, 0, 0, np.exp(-1j * phi)]],
        dtype=complex,
    )


FSWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, -1]], dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.diag([1.0, -1.0]).astype(complex)
HADAMARD = _SQ2 * np.array([[1, 1], [1, -1]], dtype=complex)
S_GATE = np.diag([1.0, 1j])
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
CY = np.block([[np.eye(2), np.zeros((2, 2))], [np.zeros((2, 2)), PAULI_Y]]).astype(complex)


def rzz(phi):
    return fsim(0.0, phi)


def rxxyy(theta):
    return FSWAP @ fsim(theta, 0.0)


# generators G with dU/dtheta = -i G U for the parametrised kinds
GENERATORS = {
    "RZ": PAULI_Z / 2,
    "RY": PAULI_Y / 2,
    "RZZ": np.diag([0, 0, 0, 1.0]).astype(complex),
    "RXXYY": np.array([[0, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 0]], dtype=complex),
}

_PARAM_BUILDERS = {"RZ": rz, "RY": ry, "RZZ": rzz, "RXXYY": rxxyy}
_FIXED = {
    "X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z, "H": HADAMARD, "S": S_GATE,
    "SDG": S_GATE.conj(), "FSWAP": FSWAP, "CNOT": CNOT, "CY": CY,
}
_ARITY = {
    "RZ": 1, "RY": 1, "X": 1, "Y": 1, "Z": 1, "H": 1, "S": 1, "SDG": 1,
    "RZZ": 2, "RXXYY": 2, "FSIM": 2, "FSWAP": 2, "CNOT": 2, "CY": 2,
}
_INVERSE_FIXED = {"S": "SDG", "SDG": "S"}


@dataclass(frozen=True)
class Gate:
    """One gate.  ``params`` holds the angle(s) for the rotation kinds."""

    kind: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in _ARITY:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        qs = tuple(int(q) for q in self.qubits)
        if len(qs) != _ARITY[self.kind]:
            raise ValueError(f"{self.kind} acts on {_ARITY[self.kind]} qubit(s)")
        if len(set(qs)) != len(qs):
            raise ValueError("repeated qubit index")
        object.__setattr__(self, "qubits", qs)
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    def matrix(self) -> np.ndarray:
        if self.kind == "FSIM":
            return fsim(*self.params)
        if self.kind in _PARAM_BUILDERS:
            return _PARAM_BUILDERS[self.kind](self.params[0])
        return _FIXED[self.kind]

    def inverse(self) -> Gate:
        if self.params:
            return Gate(self.kind, self.qubits, tuple(-p for p in self.params))
        return Gate(_INVERSE_FIXED.get(self.kind, self.kind), self.qubits)


def RZ(q, theta):
    return Gate("RZ", (q,), (theta,))


def RY(q, theta):
    return Gate("RY", (q,), (theta,))


def RZZ(q1, q2, phi):
    return Gate("RZZ", (q1, q2), (phi,))


def RXXYY(q1, q2, theta):
    return Gate("RXXYY", (q1, q2), (theta,))


def FSIM(q1, q2, theta, phi):
    return Gate("FSIM", (q1, q2), (theta, phi))


def FSWAP_GATE(q1, q2):
    return Gate("FSWAP", (q1, q2))


def X(q):
    return Gate("X", (q,))


class StateVector:
    """Normalised amplitude vector over ``n_qubits`` (qubit 0 most significant)."""

    __slots__ = ("n_qubits", "amps")

    def __init__(self, amps, n_qubits: int | None = None, *, check: bool = True):
        amps = np.asarray(amps, dtype=complex).reshape(-1)
        n = int(round(np.log2(amps.size))) if n_qubits is None else n_qubits
        if amps.size != 1 << n:
            raise ValueError("amplitude count is not 2**n_qubits")
        if check and abs(np.vdot(amps, amps).real - 1) > 1e-10:
            raise ValueError("state is not normalised")
        self.n_qubits = n
        self.amps = amps

    @classmethod
    def zero(cls, n_qubits: int) -> StateVector:
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[0] = 1
        return cls(amps, n_qubits)

    @classmethod
    def basis(cls, n_qubits: int, bits) -> StateVector:
        """Computational basis state with the listed qubits set to |1>."""
        idx = sum(1 << (n_qubits - 1 - q) for q in bits)
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[idx] = 1
        return cls(amps, n_qubits)

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amps, self.amps).real))

    def __repr__(self):
        return f"StateVector(n_qubits={self.n_qubits})"


def _check_qubits(gate: Gate, n: int):
    for q in gate.qubits:
        if not 0 <= q < n:
            raise IndexError(f"qubit {q} out of range for {n} qubits")


def apply_raw(psi: np.ndarray, gates, n: int) -> np.ndarray:
    """Apply ``gates`` in order to a ``(batch, 2**n)`` array."""
    for g in gates:
        _check_qubits(g, n)
        psi = _kernels.apply_gate(psi, g.matrix(), g.qubits, n)
    return psi


def apply(state: StateVector, gate: Gate) -> StateVector:
    _check_qubits(gate, state.n_qubits)
    out = _kernels.apply_gate(state.amps[None, :], gate.matrix(), gate.qubits, state.n_qubits)
    return StateVector(out[0], state.n_qubits, check=False)


def apply_circuit(state: StateVector, gates) -> StateVector:
    out = apply_raw(state.amps[None, :], list(gates), state.n_qubits)
    return StateVector(out[0], state.n_qubits, check=False)


def inverse_circuit(gates) -> list[Gate]:
    return [g.inverse() for g in reversed(list(gates))]


def circuit_unitary(gates, n: int) -> np.ndarray:
    """Dense unitary of a gate list (columns are images of basis states)."""
    eye = np.eye(1 << n, dtype=complex)
    return apply_raw(eye, list(gates), n).T


def expectation(state, obs: PauliSum, atol: float = 1e-10) -> float:
    amps = state.amps if isinstance(state, StateVector) else np.asarray(state)
    if obs.n_qubits != int(np.log2(amps.size)):
        raise ValueError("observable and state have different qubit counts")
    val = obs.identity_coeff * np.vdot(amps, amps)
    for c, s in obs.terms:
        val += c * np.vdot(amps, apply_pauli(s, amps))
    if abs(val.imag) > atol:
        raise ValueError("expectation value has an imaginary part; observable not Hermitian")
    return float(val.real)


def inner(a, b) -> complex:
    av = a.amps if isinstance(a, StateVector) else np.asarray(a)
    bv = b.amps if isinstance(b, StateVector) else np.asarray(b)
    if av.shape != bv.shape:
        raise ValueError("states have different sizes")
    return complex(np.vdot(av, bv))


def occupation_counts(layout: QubitLayout) -> tuple[np.ndarray, np.ndarray]:
    """Per basis index, number of |1> qubits in each spin sector."""
    n = layout.n_qubits
    idx = np.arange(1 << n)
    counts = []
    for spin in (0, 1):
        c = np.zeros(1 << n, dtype=int)
        for q in layout.sector_qubits(spin):
            c += (idx >> (n - 1 - q)) & 1
        counts.append(c)
    return counts[0], counts[1]


def sector_probabilities(state, layout: QubitLayout, cutoff: float = 0.0) -> dict[tuple[int, int], float]:
    amps = state.amps if isinstance(state, StateVector) else np.asarray(state)
    n_up, n_dn = occupation_counts(layout)
    probs = np.abs(amps) ** 2
    out: dict[tuple[int, int], float] = {}
    key = n_up * (layout.B + 2) + n_dn
    totals = np.bincount(key, weights=probs, minlength=(layout.B + 2) ** 2)
    for k, p in enumerate(totals):
        if p > cutoff:
            out[(k // (layout.B + 2), k % (layout.B + 2))] = float(p)
    return out


def hadamard_test(prep: np.ndarray, first: Gate, evolution: np.ndarray, second: Gate) -> float:
    """Ancilla interferometer used for Green's-function matrix elements.

    Ancilla H, controlled-``first``, system ``evolution`` (dense unitary),
    controlled-``second``, ancilla H, then ``<Z_anc>``.  With
    ``|psi> = U|prep>`` and ``|phi> = U first|prep>`` the result is
    ``Re <psi| second |phi>``.  The ancilla is an extra most-significant qubit.
    """
    prep = np.asarray(prep, dtype=complex)
    n = int(np.log2(prep.size))
    psi = np.kron(np.array([1, 0], dtype=complex), prep)[None, :]
    anc = 0

    def shifted(g: Gate) -> Gate:
        return Gate(g.kind, tuple(q + 1 for q in g.qubits), g.params)

    psi = _kernels.apply_gate(psi, HADAMARD, (anc,), n + 1)
    psi = _controlled(psi, shifted(first), n + 1)
    full = np.kron(np.eye(2), evolution)
    psi = psi @ full.T
    psi = _controlled(psi, shifted(second), n + 1)
    psi = _kernels.apply_gate(psi, HADAMARD, (anc,), n + 1)
    half = 1 << n
    p0 = np.vdot(psi[0, :half], psi[0, :half]).real
    p1 = np.vdot(psi[0, half:], psi[0, half:]).real
    return float(p0 - p1)


def _controlled(psi: np.ndarray, g: Gate, n: int) -> np.ndarray:
    """Single-qubit ``g`` controlled on qubit 0."""
    if len(g.qubits) != 1:
        raise ValueError("only single-qubit targets are supported")
    ctrl = np.eye(4, dtype=complex)
    ctrl[2:, 2:] = g.matrix()
    return _kernels.apply_gate(psi, ctrl, (0, g.qubits[0]), n)
