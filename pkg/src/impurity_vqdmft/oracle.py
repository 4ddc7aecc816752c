"""Exact diagonalization reference: spectra, propagators, Lehmann sets, and a
classical DMFT loop."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .greens import LehmannSet
from .model import SiamParams
from .pauli import PauliSum, QubitLayout, to_dense
from .sim import occupation_counts

DEGENERACY_TOL = 1e-9
POLE_MERGE_TOL = 1e-8


# ---------------------------------------------------------------------------
# independent second-quantized builder


def fock_hamiltonian(siam: SiamParams, layout: QubitLayout | None = None) -> np.ndarray:
    """Anderson Hamiltonian built from creation/annihilation operators on
    occupation bitmasks, returned in the qubit basis of ``layout``.

    Fermionic signs use the mode order (spin 0 sites 0..B, spin 1 sites 0..B),
    independent of the Pauli-string machinery.
    """
    layout = layout or QubitLayout(siam.B)
    B, n = siam.B, layout.n_qubits
    n_modes = 2 * (B + 1)

    def mode(site, spin):
        return spin * (B + 1) + site

    # qubit basis index of each mode bitmask
    qbit = [0] * n_modes
    for spin in (0, 1):
        for s in range(B + 1):
            qbit[mode(s, spin)] = 1 << (n - 1 - layout.qubit(s, spin))

    def to_index(occ):
        idx = 0
        for m in range(n_modes):
            if occ >> m & 1:
                idx |= qbit[m]
        return idx

    def hop(occ, dst, src):
        """c_dst^dag c_src |occ> -> (sign, occ') or None."""
        if not occ >> src & 1:
            return None
        sign = -1 if bin(occ & ((1 << src) - 1)).count("1") % 2 else 1
        occ ^= 1 << src
        if occ >> dst & 1:
            return None
        if bin(occ & ((1 << dst) - 1)).count("1") % 2:
            sign = -sign
        return sign, occ | (1 << dst)

    dim = 1 << n_modes
    H = np.zeros((dim, dim))
    for occ in range(dim):
        i = to_index(occ)
        nu = occ >> mode(0, 0) & 1
        nd = occ >> mode(0, 1) & 1
        diag = siam.U * nu * nd - siam.mu * (nu + nd)
        for p, (eps, V) in enumerate(siam.bath, start=1):
            for spin in (0, 1):
                diag += eps * (occ >> mode(p, spin) & 1)
                for dst, src in ((mode(0, spin), mode(p, spin)), (mode(p, spin), mode(0, spin))):
                    r = hop(occ, dst, src)
                    if r is not None:
                        H[to_index(r[1]), i] += V * r[0]
        H[i, i] += diag
    return H


# ---------------------------------------------------------------------------
# spectra


@dataclass(frozen=True)
class Spectrum:
    energies: np.ndarray
    states: np.ndarray  # columns are eigenvectors
    sectors: np.ndarray | None = None  # (n_up, n_down) per eigenvector
    layout: QubitLayout | None = None

    @property
    def ground_energy(self) -> float:
        return float(self.energies[0])

    @property
    def ground_indices(self) -> list[int]:
        return [k for k, e in enumerate(self.energies) if e - self.energies[0] < DEGENERACY_TOL]

    @property
    def ground_degenerate(self) -> bool:
        return len(self.ground_indices) > 1

    def ground_sectors(self) -> list[tuple[int, int]]:
        if self.sectors is None:
            raise ValueError("spectrum was built without a layout")
        return [tuple(int(x) for x in self.sectors[k]) for k in self.ground_indices]

    def ground_state(self, which: str = "single") -> np.ndarray:
        idx = self.ground_indices
        if which == "single" or len(idx) == 1:
            return self.states[:, idx[0]].copy()
        if which == "superposition":
            v = self.states[:, idx[:2]].sum(axis=1)
            return v / np.linalg.norm(v)
        raise ValueError(f"unknown ground-state option {which!r}")


def _fix_gauge(vecs: np.ndarray) -> np.ndarray:
    for k in range(vecs.shape[1]):
        col = vecs[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-10)
        if nz.size:
            ph = col[nz[0]] / abs(col[nz[0]])
            vecs[:, k] = col / ph
    return vecs


def diagonalize(h: PauliSum | np.ndarray, layout: QubitLayout | None = None) -> Spectrum:
    """Full spectrum, ascending.

    With a ``layout`` the matrix is diagonalized block by block in
    ``(n_up, n_down)`` so degenerate eigenvectors stay sector-pure; inside a
    degenerate ground manifold the member with the larger ``n_up`` comes first.
    """
    H = to_dense(h) if isinstance(h, PauliSum) else np.asarray(h, dtype=complex)
    dim = H.shape[0]
    if layout is None:
        w, v = np.linalg.eigh(H)
        return Spectrum(w, _fix_gauge(v.astype(complex)))

    n_up, n_dn = occupation_counts(layout)
    key = n_up * (layout.B + 2) + n_dn
    same = key[:, None] == key[None, :]
    if np.max(np.abs(np.where(same, 0, H)), initial=0.0) > 1e-12:
        raise ValueError("Hamiltonian mixes excitation sectors; diagonalize without a layout")
    energies = np.empty(dim)
    states = np.zeros((dim, dim), dtype=complex)
    sectors = np.empty((dim, 2), dtype=int)
    col = 0
    for k in np.unique(key):
        idx = np.flatnonzero(key == k)
        w, v = np.linalg.eigh(H[np.ix_(idx, idx)])
        m = len(idx)
        energies[col:col + m] = w
        states[idx, col:col + m] = v
        sectors[col:col + m] = (k // (layout.B + 2), k % (layout.B + 2))
        col += m
    order = np.argsort(energies, kind="stable")
    ground = np.flatnonzero(energies - energies.min() < DEGENERACY_TOL)
    ground = ground[np.lexsort((sectors[ground, 1], -sectors[ground, 0]))]
    order = np.concatenate([ground, order[~np.isin(order, ground)]])
    return Spectrum(energies[order], _fix_gauge(states[:, order]), sectors[order], layout)


def exact_propagate(spec: Spectrum, state, t: float) -> np.ndarray:
    amps = state.amps if hasattr(state, "amps") else np.asarray(state, dtype=complex)
    coef = spec.states.conj().T @ amps
    return spec.states @ (np.exp(-1j * spec.energies * t) * coef)


def propagator(spec: Spectrum, t: float) -> np.ndarray:
    return (spec.states * np.exp(-1j * spec.energies * t)) @ spec.states.conj().T


def creation_matrix(layout: QubitLayout, spin: int = 0) -> np.ndarray:
    """Dense ``c^dag`` of the impurity orbital: ``(X - iY)/2`` on its wire."""
    n = layout.n_qubits
    q = layout.impurity(spin)
    sp = np.array([[0, 0], [1, 0]], dtype=complex)
    return np.kron(np.kron(np.eye(1 << q), sp), np.eye(1 << (n - q - 1)))


def _merge(omegas, alphas, betas) -> LehmannSet:
    order = np.argsort(omegas, kind="stable")
    poles: list[list[float]] = []
    for k in order:
        w, a, b = omegas[k], alphas[k], betas[k]
        if a + b < 1e-12:
            continue
        if poles and abs(w - poles[-1][0]) < POLE_MERGE_TOL:
            poles[-1][1] += a
            poles[-1][2] += b
        else:
            poles.append([w, a, b])
    return LehmannSet.from_arrays(*(np.array(c) for c in zip(*poles)) if poles else ([], [], []))


def exact_lehmann(spec: Spectrum, layout: QubitLayout, spin: int = 0, degenerate: str = "single") -> LehmannSet:
    """Poles of ``<c(t)c^dag> + <c^dag c(t)>`` from the spectrum.

    ``degenerate="single"`` uses the first member of a degenerate ground
    manifold; ``"superposition"`` gives equal weight to the two lowest
    (sector-pure) ground states, which averages their Green's functions.
    """
    cdag = creation_matrix(layout, spin)
    c = cdag.conj().T
    e0 = spec.ground_energy
    idx = spec.ground_indices
    members = idx[:1] if degenerate == "single" or len(idx) == 1 else idx[:2]
    if degenerate not in ("single", "superposition"):
        raise ValueError(f"unknown degenerate option {degenerate!r}")
    omegas, alphas, betas = [], [], []
    w = spec.energies - e0
    for k in members:
        gs = spec.states[:, k]
        a = np.abs(spec.states.conj().T @ (cdag @ gs)) ** 2 / len(members)
        b = np.abs(spec.states.conj().T @ (c @ gs)) ** 2 / len(members)
        omegas += [w, w]
        alphas += [a, np.zeros_like(b)]
        betas += [np.zeros_like(a), b]
    return _merge(np.concatenate(omegas), np.concatenate(alphas), np.concatenate(betas))


def siam_spectrum(siam: SiamParams) -> Spectrum:
    from .pauli import jwt_siam

    layout = QubitLayout(siam.B)
    return diagonalize(jwt_siam(siam, layout), layout)


def filling(spec: Spectrum, which: str = "single") -> float:
    """Impurity occupation per spin of the chosen ground state."""
    layout = spec.layout
    if layout is None:
        raise ValueError("spectrum was built without a layout")
    gs = spec.ground_state(which)
    n = layout.n_qubits
    idx = np.arange(1 << n)
    probs = np.abs(gs) ** 2
    occ = [probs @ ((idx >> (n - 1 - layout.impurity(s))) & 1) for s in (0, 1)]
    return float(np.mean(occ))


def reference_dmft(hubbard, B: int, grid, cfg=None):
    """Classical DMFT loop with :func:`exact_lehmann` as the impurity solver."""
    from .dmft import DmftConfig, run_dmft

    if cfg is None:
        cfg = DmftConfig(hubbard=hubbard, B=B, grid=grid, solver="exact")
    else:
        cfg = cfg.replace(hubbard=hubbard, B=B, grid=grid, solver="exact")
    return run_dmft(cfg)
