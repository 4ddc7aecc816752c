"""Pauli strings, the Jordan-Wigner image of the Anderson model, dense forms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import SiamParams

MAX_DENSE_QUBITS = 14


@dataclass(frozen=True)
class QubitLayout:
    """Linear-chain placement of the ``2B + 2`` spin orbitals.

    Spin 0 occupies wires ``B, B-1, ..., 0`` (impurity first), spin 1 occupies
    ``B+1, ..., 2B+1``, so the two impurity orbitals sit next to each other in
    the middle of the chain.
    """

    B: int

    def __post_init__(self):
        if self.B < 0:
            raise ValueError("B must be non-negative")

    @property
    def n_qubits(self) -> int:
        return 2 * self.B + 2

    def qubit(self, site: int, spin: int) -> int:
        if not 0 <= site <= self.B or spin not in (0, 1):
            raise ValueError(f"no orbital (site={site}, spin={spin})")
        return self.B - site if spin == 0 else self.B + 1 + site

    def impurity(self, spin: int) -> int:
        return self.qubit(0, spin)

    def sector_qubits(self, spin: int) -> list[int]:
        return [self.qubit(s, spin) for s in range(self.B + 1)]

    @property
    def assignment(self) -> dict[tuple[int, int], int]:
        return {(s, sp): self.qubit(s, sp) for sp in (0, 1) for s in range(self.B + 1)}


PauliString = str
"""A Pauli string is the plain text ``"IXZZY..."``, one letter per qubit."""


def pauli_string(n: int, ops: dict[int, str]) -> PauliString:
    letters = ["I"] * n
    for q, p in ops.items():
        letters[q] = p
    return "".join(letters)


@dataclass
class PauliSum:
    n_qubits: int
    identity_coeff: float = 0.0
    coeffs: dict[PauliString, float] = field(default_factory=dict)

    def add(self, coeff: float, string: PauliString) -> None:
        if len(string) != self.n_qubits:
            raise ValueError("Pauli string length does not match qubit count")
        if set(string) <= {"I"}:
            self.identity_coeff += float(coeff)
            return
        self.coeffs[string] = self.coeffs.get(string, 0.0) + float(coeff)

    @property
    def terms(self) -> list[tuple[float, PauliString]]:
        return [(c, s) for s, c in self.coeffs.items() if c != 0.0]

    def __add__(self, other: PauliSum) -> PauliSum:
        if other.n_qubits != self.n_qubits:
            raise ValueError("qubit count mismatch")
        out = PauliSum(self.n_qubits, self.identity_coeff, dict(self.coeffs))
        out.identity_coeff += other.identity_coeff
        for c, s in other.terms:
            out.add(c, s)
        return out

    def scaled(self, a: float) -> PauliSum:
        return PauliSum(self.n_qubits, a * self.identity_coeff, {s: a * c for s, c in self.coeffs.items()})


def _masks(string: PauliString):
    n = len(string)
    x = z = 0
    ny = 0
    for q, p in enumerate(string):
        bit = 1 << (n - 1 - q)
        if p in "XY":
            x |= bit
        if p in "ZY":
            z |= bit
        ny += p == "Y"
    return x, z, ny


def _parity(a: np.ndarray) -> np.ndarray:
    a = a.copy()
    p = np.zeros_like(a)
    while np.any(a):
        p ^= a & 1
        a >>= 1
    return p


def apply_pauli(string: PauliString, psi: np.ndarray) -> np.ndarray:
    """``P |psi>`` for a Pauli string acting on the last axis of ``psi``."""
    n = len(string)
    x, z, ny = _masks(string)
    idx = np.arange(1 << n)
    # P|i> = i^ny (-1)^{popcount(i & z)} |i ^ x>
    phase = (1j) ** ny * (1 - 2 * _parity(idx & z))
    out = np.empty_like(psi, dtype=complex)
    out[..., idx ^ x] = phase * psi[..., idx]
    return out


def to_dense(ps: PauliSum) -> np.ndarray:
    n = ps.n_qubits
    if n > MAX_DENSE_QUBITS:
        raise ValueError(f"{n} qubits exceeds the dense limit of {MAX_DENSE_QUBITS}")
    dim = 1 << n
    mat = ps.identity_coeff * np.eye(dim, dtype=complex)
    idx = np.arange(dim)
    for c, s in ps.terms:
        x, z, ny = _masks(s)
        phase = (1j) ** ny * (1 - 2 * _parity(idx & z))
        mat[idx ^ x, idx] += c * phase
    return mat


def commutes(a: PauliSum, b: PauliSum, atol: float = 1e-12) -> bool:
    if a.n_qubits != b.n_qubits:
        raise ValueError("qubit count mismatch")
    ma, mb = to_dense(a), to_dense(b)
    return bool(np.max(np.abs(ma @ mb - mb @ ma)) < atol)


def _zstring_hop(layout: QubitLayout, p: int, spin: int, letter: str) -> PauliString:
    n = layout.n_qubits
    ops = {layout.impurity(spin): letter, layout.qubit(p, spin): letter}
    for s in range(1, p):
        ops[layout.qubit(s, spin)] = "Z"
    return pauli_string(n, ops)


def siam_parts(siam: SiamParams, layout: QubitLayout) -> dict[str, PauliSum]:
    """The impurity, hybridization and bath pieces separately (constants kept
    with the piece they belong to)."""
    if layout.B != siam.B:
        raise ValueError("layout does not match the bath size")
    n = layout.n_qubits
    U, mu = siam.U, siam.mu
    up, dn = layout.impurity(0), layout.impurity(1)

    imp = PauliSum(n, U / 4 - mu)
    imp.add(U / 4, pauli_string(n, {up: "Z", dn: "Z"}))
    for q in (up, dn):
        imp.add(mu / 2 - U / 4, pauli_string(n, {q: "Z"}))

    hyb = PauliSum(n)
    bath = PauliSum(n)
    for p, (eps, V) in enumerate(siam.bath, start=1):
        for spin in (0, 1):
            hyb.add(V / 2, _zstring_hop(layout, p, spin, "X"))
            hyb.add(V / 2, _zstring_hop(layout, p, spin, "Y"))
            bath.add(-eps / 2, pauli_string(n, {layout.qubit(p, spin): "Z"}))
            bath.identity_coeff += eps / 2
    return {"imp": imp, "hyb": hyb, "bath": bath}


def jwt_siam(siam: SiamParams, layout: QubitLayout | None = None) -> PauliSum:
    """Jordan-Wigner image of the Anderson Hamiltonian, constants included.

    The transformation is done per spin sector (impurity first, bath sites in
    order), which with this layout needs no inter-sector parity string.
    """
    layout = layout or QubitLayout(siam.B)
    parts = siam_parts(siam, layout)
    return parts["imp"] + parts["hyb"] + parts["bath"]


def total_z(layout: QubitLayout, spin: int | None = None) -> PauliSum:
    """``sum Z`` over one spin sector, or over all qubits when ``spin`` is None."""
    n = layout.n_qubits
    out = PauliSum(n)
    spins = (0, 1) if spin is None else (spin,)
    for sp in spins:
        for q in layout.sector_qubits(sp):
            out.add(1.0, pauli_string(n, {q: "Z"}))
    return out


def single(n: int, q: int, letter: str, coeff: float = 1.0) -> PauliSum:
    out = PauliSum(n)
    out.add(coeff, pauli_string(n, {q: letter}))
    return out


def to_sparse(ps: PauliSum):
    """CSR matrix of a PauliSum, built term by term without a dense step."""
    from scipy import sparse

    n = ps.n_qubits
    dim = 1 << n
    idx = np.arange(dim)
    rows, cols, data = [idx], [idx], [np.full(dim, ps.identity_coeff, dtype=complex)]
    for c, s in ps.terms:
        x, z, ny = _masks(s)
        rows.append(idx ^ x)
        cols.append(idx)
        data.append(c * (1j) ** ny * (1 - 2 * _parity(idx & z)))
    mat = sparse.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim))
    return mat.tocsr()
