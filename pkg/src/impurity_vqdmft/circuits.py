"""Trotter step, cone-shaped Hamiltonian variational ansatz and state-prep prefixes.

One Trotter step (and one ansatz layer) on the chain

    (B,up) ... (1,up) (0,up) | (0,dn) (1,dn) ... (B,dn)

is the palindrome

    RZZ(imp) . sweep-out . RZ layer . sweep-in . RZZ(imp)

where each sweep moves the impurity orbital of a sector along its bath with
``RXXYY = FSWAP . FSIM(theta, 0)`` gates.  The embedded fermionic swaps are
what let every hybridisation term act on neighbouring wires; the inward sweep
undoes the permutation of the outward one, so a step starts and ends in the
identity ordering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import SiamParams
from .pauli import QubitLayout
from .sim import GENERATORS, Gate, fsim

PARAM_KINDS = ("RZ", "RY", "RZZ", "RXXYY")


@dataclass(frozen=True)
class GateTemplate:
    kind: str
    qubits: tuple[int, ...]
    slot: int | None = None
    value: tuple[float, ...] = ()
    role: tuple = ()

    def bind(self, params) -> Gate:
        if self.slot is None:
            return Gate(self.kind, self.qubits, self.value)
        return Gate(self.kind, self.qubits, (params[self.slot],))


class ParamCircuit:
    """Gate sequence with named parameter slots.

    ``apply`` pushes a batch of states through the bound circuit;
    ``value_and_grad`` does the same and back-propagates a cotangent through
    the gates (adjoint differentiation), which gives the exact gradient for
    the cost of roughly three forward passes.
    """

    def __init__(self, templates, n_qubits: int, layout: QubitLayout | None = None):
        self.templates = list(templates)
        self.n_qubits = n_qubits
        self.layout = layout
        slots = sorted({t.slot for t in self.templates if t.slot is not None})
        if slots != list(range(len(slots))):
            raise ValueError("parameter slots must be dense 0..n_params-1")
        self.n_params = len(slots)
        self._slot_kind = {t.slot: t.kind for t in self.templates if t.slot is not None}
        unknown = {k for k in self._slot_kind.values() if k not in PARAM_KINDS}
        if unknown:
            raise ValueError(f"no parametrised form for {sorted(unknown)}")
        self._pack()

    def __len__(self):
        return len(self.templates)

    def slot_kind(self, slot: int) -> str:
        return self._slot_kind[slot]

    def bind(self, params) -> list[Gate]:
        params = np.asarray(params, dtype=float)
        if params.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {params.shape}")
        return [t.bind(params) for t in self.templates]

    def _pack(self):
        G = len(self.templates)
        self._qubits = np.zeros((G, 2), dtype=np.int64)
        self._arity = np.zeros(G, dtype=np.int64)
        self._slots = np.full(G, -1, dtype=np.int64)
        self._fixed = np.zeros((G, 4, 4), dtype=complex)
        self._gens = np.zeros((G, 4, 4), dtype=complex)
        self._kind_idx = {}
        for g, t in enumerate(self.templates):
            k = len(t.qubits)
            self._arity[g] = k
            self._qubits[g, :k] = t.qubits
            if t.slot is None:
                self._fixed[g, :2 * k, :2 * k] = Gate(t.kind, t.qubits, t.value).matrix()
            else:
                self._slots[g] = t.slot
                self._gens[g, :2 * k, :2 * k] = GENERATORS[t.kind]
                self._kind_idx.setdefault(t.kind, []).append(g)
        self._kind_idx = {k: np.array(v) for k, v in self._kind_idx.items()}

    def _mats(self, params) -> np.ndarray:
        params = np.asarray(params, dtype=float)
        if params.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {params.shape}")
        m = self._fixed.copy()
        for kind, idx in self._kind_idx.items():
            a = params[self._slots[idx]]
            if kind == "RZ":
                m[idx, 0, 0] = np.exp(-0.5j * a)
                m[idx, 1, 1] = np.exp(0.5j * a)
            elif kind == "RY":
                c, s = np.cos(a / 2), np.sin(a / 2)
                m[idx, 0, 0], m[idx, 0, 1], m[idx, 1, 0], m[idx, 1, 1] = c, -s, s, c
            elif kind == "RZZ":
                m[idx, 0, 0] = m[idx, 1, 1] = m[idx, 2, 2] = 1
                m[idx, 3, 3] = np.exp(-1j * a)
            elif kind == "RXXYY":
                # FSWAP . FSIM(a, 0)
                c, s = np.cos(a), -1j * np.sin(a)
                m[idx, 0, 0] = 1
                m[idx, 1, 1], m[idx, 1, 2], m[idx, 2, 1], m[idx, 2, 2] = s, c, c, s
                m[idx, 3, 3] = -1
            else:  # pragma: no cover - guarded in __init__
                raise ValueError(kind)
        return m

    def apply(self, params, psi: np.ndarray) -> np.ndarray:
        psi = np.atleast_2d(np.asarray(psi, dtype=complex))
        return _kernels.circuit_apply(psi, self._mats(params), self._qubits, self._arity, self.n_qubits)

    def unitary(self, params) -> np.ndarray:
        return self.apply(params, np.eye(1 << self.n_qubits, dtype=complex)).T

    def value_and_grad(self, params, psi0: np.ndarray, cost):
        """``cost(out) -> (value, mu)`` with ``d value = Re sum <mu|d out>``.

        Adjoint differentiation: ``d/dtheta U = -i G U`` gives the slot
        contribution ``Re<lambda|-i G psi> = Im<lambda|G psi>`` while both
        vectors are walked back through the circuit.
        """
        mats = self._mats(params)
        psi = np.atleast_2d(np.asarray(psi0, dtype=complex))
        out = _kernels.circuit_apply(psi, mats, self._qubits, self._arity, self.n_qubits)
        value, mu = cost(out)
        mu = np.broadcast_to(np.atleast_2d(mu), out.shape)
        grad = _kernels.circuit_vjp(
            out, mu, mats, self._gens, self._qubits, self._arity, self._slots, self.n_params, self.n_qubits
        )
        return value, grad

    def concat(self, other: ParamCircuit) -> ParamCircuit:
        shift = self.n_params
        moved = [
            GateTemplate(t.kind, t.qubits, None if t.slot is None else t.slot + shift, t.value, t.role)
            for t in other.templates
        ]
        return ParamCircuit(self.templates + moved, self.n_qubits, self.layout or other.layout)

    @classmethod
    def fixed(cls, gates, n_qubits: int, layout=None) -> ParamCircuit:
        return cls([GateTemplate(g.kind, g.qubits, None, g.params) for g in gates], n_qubits, layout)

    def dump(self, params=None) -> str:
        """Line format ``KIND q[,q'] angle|slot:k``; angles printed with repr."""
        lines = []
        for t in self.templates:
            qs = ",".join(str(q) for q in t.qubits)
            if t.slot is not None:
                arg = repr(float(params[t.slot])) if params is not None else f"slot:{t.slot}"
            elif t.value:
                arg = ",".join(repr(float(v)) for v in t.value)
            else:
                arg = ""
            lines.append(f"{t.kind} {qs} {arg}".rstrip())
        return "\n".join(lines) + "\n"


def dump_gates(gates) -> str:
    lines = []
    for g in gates:
        qs = ",".join(str(q) for q in g.qubits)
        arg = ",".join(repr(float(p)) for p in g.params)
        lines.append(f"{g.kind} {qs} {arg}".rstrip())
    return "\n".join(lines) + "\n"


def parse_gates(text: str) -> list[Gate]:
    gates = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        qs = tuple(int(q) for q in parts[1].split(","))
        params = tuple(float(a) for a in parts[2].split(",")) if len(parts) > 2 else ()
        gates.append(Gate(parts[0], qs, params))
    return gates


def check_adjacent(gates) -> None:
    for g in gates:
        if len(g.qubits) == 2 and abs(g.qubits[0] - g.qubits[1]) != 1:
            raise ValueError(f"{g.kind} on non-adjacent wires {g.qubits}")


# ---------------------------------------------------------------------------
# layer pattern


def layer_pattern(layout: QubitLayout) -> list[tuple[str, tuple[int, ...], tuple]]:
    """Gate kinds, wires and Hamiltonian role of one second-order step."""
    B = layout.B
    up, dn = layout.impurity(0), layout.impurity(1)
    out = [("RZZ", (up, dn), ("zz",))]
    for s in range(1, B + 1):
        out.append(("RXXYY", (B - s, B - s + 1), ("hop", 0, s)))
        out.append(("RXXYY", (B + s, B + s + 1), ("hop", 1, s)))
    # after the outward sweep: wire 0 holds imp(up), wire B-s+1 holds bath s (up),
    # wire 2B+1 holds imp(dn), wire B+s holds bath s (dn)
    for pos in range(layout.n_qubits):
        if pos == 0:
            role = ("zimp", 0)
        elif pos <= B:
            role = ("zbath", 0, B - pos + 1)
        elif pos == 2 * B + 1:
            role = ("zimp", 1)
        else:
            role = ("zbath", 1, pos - B)
        out.append(("RZ", (pos,), role))
    for s in range(B, 0, -1):
        out.append(("RXXYY", (B - s, B - s + 1), ("hop", 0, s)))
        out.append(("RXXYY", (B + s, B + s + 1), ("hop", 1, s)))
    out.append(("RZZ", (up, dn), ("zz",)))
    return out


def role_angle(role: tuple, siam: SiamParams, dt: float) -> float:
    """Gate angle that reproduces ``exp(-i dt h)`` for the term ``role``."""
    kind = role[0]
    if kind == "zz":
        return siam.U * dt / 2  # RZZ(phi) = exp(-i phi n n), applied twice
    if kind == "hop":
        return siam.V[role[2] - 1] * dt / 2  # FSIM(theta,0) = exp(-i theta (XX+YY)/2)
    if kind == "zimp":
        return siam.mu * dt  # exp(+i mu n dt) = RZ(mu dt) up to phase
    if kind == "zbath":
        return -siam.eps[role[2] - 1] * dt
    raise ValueError(f"unknown role {role!r}")


def trotter_step(siam: SiamParams, dt: float, layout: QubitLayout | None = None) -> list[Gate]:
    """One symmetric second-order Trotter step as a fixed-angle gate list.

    Equal to ``exp(-i dt H)`` up to a global phase and O(dt**3).
    """
    layout = layout or QubitLayout(siam.B)
    if layout.B != siam.B:
        raise ValueError("layout does not match the bath size")
    return [Gate(k, q, (role_angle(r, siam, dt),)) for k, q, r in layer_pattern(layout)]


@dataclass(frozen=True)
class AnsatzSpec:
    B: int
    L: int
    shape: str = "cone"

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("ansatz needs at least one layer")
        if self.shape != "cone":
            raise ValueError("only the cone-shaped layer is implemented")

    @property
    def params_per_layer(self) -> int:
        return 6 * self.B + 4


def hva_ansatz(spec: AnsatzSpec) -> ParamCircuit:
    layout = QubitLayout(spec.B)
    templates = []
    slot = 0
    for layer in range(spec.L):
        for kind, qubits, role in layer_pattern(layout):
            templates.append(GateTemplate(kind, qubits, slot, (), (layer,) + role))
            slot += 1
    return ParamCircuit(templates, layout.n_qubits, layout)


def hva_trotter_params(siam: SiamParams, dt: float, L: int, spread: bool = False) -> np.ndarray:
    """HVA parameters reproducing Trotter steps.

    ``spread=False``: first layer is one step of ``dt``, the rest identity.
    ``spread=True``: every layer is a step of ``dt / L``.
    """
    layout = QubitLayout(siam.B)
    pattern = layer_pattern(layout)
    if spread:
        one = [role_angle(r, siam, dt / L) for _, _, r in pattern]
        return np.tile(one, L)
    first = [role_angle(r, siam, dt) for _, _, r in pattern]
    return np.concatenate([first, np.zeros(len(pattern) * (L - 1))])


def count_two_qubit(circ: ParamCircuit) -> int:
    return sum(len(t.qubits) == 2 for t in circ.templates)


def ry_probe_layer(layout: QubitLayout) -> ParamCircuit:
    templates = [GateTemplate("RY", (q,), q) for q in range(layout.n_qubits)]
    return ParamCircuit(templates, layout.n_qubits, layout)


# ---------------------------------------------------------------------------
# excitation prefixes


def init_qubits(n_up: int, n_down: int, layout: QubitLayout, superposition: bool = False) -> list[int]:
    """Qubits hit by an X gate in :func:`excitation_init` (the set M_ini)."""
    B = layout.B
    for n in (n_up, n_down):
        if not 0 <= n <= B + 1:
            raise ValueError(f"excitation count {n} outside 0..{B + 1}")
    if superposition:
        if abs(n_up - n_down) != 1:
            raise ValueError("superposition needs counts differing by one")
        n = min(n_up, n_down)
        qs = [layout.qubit(s, sp) for sp in (0, 1) for s in range(1, n + 1)]
        return sorted(qs + [layout.impurity(0)])
    qs = [layout.qubit(s, 0) for s in range(n_up)] + [layout.qubit(s, 1) for s in range(n_down)]
    return sorted(qs)


def excitation_init(n_up: int, n_down: int, layout: QubitLayout, superposition: bool = False) -> list[Gate]:
    """Gates preparing a computational state with the requested sector fillings.

    Definite counts fill the innermost orbitals of each sector with X gates.
    With ``superposition=True`` and ``|n_up - n_down| == 1`` the shared
    excitations go on bath orbitals and the impurity pair is put into
    ``(|10> + |01>)/sqrt(2)`` with ``S . FSIM(pi/4, 0) . X``, giving equal
    weight on ``(n_up, n_down)`` and its spin mirror.
    """
    qs = init_qubits(n_up, n_down, layout, superposition)
    if not superposition:
        return [Gate("X", (q,)) for q in qs]
    up, dn = layout.impurity(0), layout.impurity(1)
    gates = [Gate("X", (q,)) for q in qs if q != up]
    gates += [Gate("X", (up,)), Gate("FSIM", (up, dn), (np.pi / 4, 0.0)), Gate("S", (dn,))]
    return gates


__all__ = [
    "AnsatzSpec", "GateTemplate", "ParamCircuit", "check_adjacent", "count_two_qubit",
    "dump_gates", "excitation_init", "fsim", "hva_ansatz", "hva_trotter_params", "init_qubits",
    "layer_pattern", "parse_gates", "role_angle", "ry_probe_layer", "trotter_step",
]
