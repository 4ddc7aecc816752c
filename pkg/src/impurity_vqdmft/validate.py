"""Named invariant checks run by ``impurity-vqdmft validate``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from . import circuits, greens, oracle, pauli, sim
from .model import MatsubaraGrid, SiamParams


@dataclass
class CheckResult:
    name: str
    ok: bool
    value: float
    limit: object

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        lim = f"[{self.limit[0]}, {self.limit[1]}]" if isinstance(self.limit, tuple) else f"< {self.limit:.1e}"
        return f"{status} {self.name}: {self.value:.3e} (want {lim})"


def _random_siam(rng, B, U=None, mu=None):
    U = rng.uniform(0, 6) if U is None else U
    mu = rng.uniform(-1, 4) if mu is None else mu
    return SiamParams.from_arrays(U, mu, rng.uniform(-2, 2, B), rng.uniform(-1, 1, B))


def check_fusion():
    worst = 0.0
    for th in np.linspace(-3, 3, 13):
        lhs = sim.FSWAP @ sim.fsim(th, 0)
        rhs = sim.fsim(th + 3 * np.pi / 2, 0) @ np.kron(sim.PAULI_Z, sim.PAULI_Z) @ np.kron(sim.S_GATE, sim.S_GATE)
        worst = max(worst, np.max(np.abs(lhs - rhs)))
    return worst, 1e-14


def check_unitary():
    worst = 0.0
    for kind, npar in (("RZ", 1), ("RY", 1), ("RZZ", 1), ("RXXYY", 1), ("FSIM", 2)):
        for a in np.linspace(-2, 2, 5):
            m = sim.Gate(kind, (0,) if kind in ("RZ", "RY") else (0, 1), (a,) * npar).matrix()
            worst = max(worst, np.max(np.abs(m.conj().T @ m - np.eye(len(m)))))
    return worst, 1e-14


def check_jwt_equivalence():
    rng = np.random.default_rng(11)
    worst = 0.0
    for B in range(4):
        for _ in range(3):
            s = _random_siam(rng, B)
            worst = max(worst, np.max(np.abs(pauli.to_dense(pauli.jwt_siam(s)) - oracle.fock_hamiltonian(s))))
    return worst, 1e-12


def check_hermitian():
    s = _random_siam(np.random.default_rng(5), 3)
    H = pauli.to_dense(pauli.jwt_siam(s))
    return float(np.max(np.abs(H - H.conj().T))), 1e-14


def check_commutators():
    s = _random_siam(np.random.default_rng(7), 3)
    lay = pauli.QubitLayout(3)
    parts = pauli.siam_parts(s, lay)
    zs = pauli.to_dense(pauli.total_z(lay))
    worst = 0.0
    for p in parts.values():
        m = pauli.to_dense(p)
        worst = max(worst, np.max(np.abs(m @ zs - zs @ m)))
    return worst, 1e-12


def check_trotter_order():
    rng = np.random.default_rng(3)
    s = _random_siam(rng, 1)
    H = pauli.to_dense(pauli.jwt_siam(s))

    def err(dt):
        U = sim.circuit_unitary(circuits.trotter_step(s, dt), 4)
        E = expm(-1j * H * dt)
        tr = np.trace(U @ E.conj().T)
        return np.linalg.norm(U - tr / abs(tr) * E, 2)

    return err(0.1) / err(0.05), (6.0, 10.0)


def _small_problem(flavor="global", L=1):
    from .variational import AnsatzSpec, Reference, compression_problem, vqe_ground_state

    s = SiamParams.from_arrays(4.0, 1.1, [0.4], [0.7])
    prep = vqe_ground_state(pauli.jwt_siam(s), AnsatzSpec(1, 2), siam=s)
    circ = circuits.hva_ansatz(AnsatzSpec(1, L))
    prob = compression_problem(circ, None, Reference(s, 0.1), prep, flavor)
    return s, prep, circ, prob


def check_gradient_parity():
    from .variational import parameter_shift_grad

    s, prep, circ, prob = _small_problem(L=2)
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(10):
        x = rng.normal(size=circ.n_params)
        k = int(rng.integers(circ.n_params))
        h = 1e-5
        e = np.zeros_like(x)
        e[k] = h
        fd = (prob.cost(x + e) - prob.cost(x - e)) / (2 * h)
        ps = parameter_shift_grad(prob.cost, x, k, circ.slot_kind(k))
        _, g = prob.value_and_grad(x)
        worst = max(worst, abs(ps - fd), abs(g[k] - fd))
    return worst, 1e-6


def check_phase_alignment():
    s, prep, circ, prob = _small_problem()
    x = circuits.hva_trotter_params(s, 0.1, 1)
    c = prob.cost(x)
    l_ov, k_ov = prob.overlaps(x)
    eps = max(c, 1e-16)
    dev = max(0.0, (1 - eps) - abs(l_ov), (1 - eps) - abs(k_ov), abs(np.angle(l_ov * k_ov)) - np.sqrt(2 * eps))
    return max(c, dev), 1e-10


def check_local_zero_set():
    s, prep, circ, prob = _small_problem("local_final")
    x = circuits.hva_trotter_params(s, 0.1, 1)
    return abs(prob.cost(x)), 1e-10


def _oracle_set():
    s = SiamParams.from_arrays(4.0, 2.0, [-1.1, 1.1], [0.55, 0.55])
    spec = oracle.siam_spectrum(s)
    return s, spec, oracle.exact_lehmann(spec, pauli.QubitLayout(2), 0, "superposition")


def check_lehmann_sum_rule():
    _, _, lset = _oracle_set()
    return abs(lset.total_weight - 1), 1e-10


def check_g0():
    s, spec, _ = _oracle_set()
    lay = pauli.QubitLayout(2)
    evo = greens.ExactEvolution(spec, 0.1)
    series = greens.greens_time_series(spec.ground_state(), evo, lay, 3)
    return abs(series.values[0] - 1), 1e-6


def check_hadamard_protocol():
    s, spec, _ = _oracle_set()
    lay = pauli.QubitLayout(2)
    try:
        greens.greens_time_series(spec.ground_state(), greens.ExactEvolution(spec, 0.3), lay, 4, hadamard_check=True)
    except AssertionError:
        return 1.0, 1e-10
    return 0.0, 1e-10


def check_lehmann_roundtrip():
    s, _, lset = _oracle_set()
    t = np.arange(501) * 0.1
    series = greens.GreensSeries(t, lset.time_series(t))
    fit = greens.lehmann_fit(series, s)
    grid = MatsubaraGrid()
    a = greens.lehmann_to_matsubara(fit.lehmann, grid)
    b = greens.lehmann_to_matsubara(lset, grid)
    return float(np.max(np.abs(a - b))), 1e-3


def check_u0_sigma():
    s = SiamParams.from_arrays(0.0, 0.3, [-0.8, 0.5], [0.6, 0.4])
    spec = oracle.siam_spectrum(s)
    lset = oracle.exact_lehmann(spec, pauli.QubitLayout(2))
    grid = MatsubaraGrid()
    sig = greens.self_energy(greens.lehmann_to_matsubara(lset, grid), s, grid)
    return float(np.max(np.abs(sig.values))), 1e-8


CHECKS = {
    "gates.fusion": check_fusion,
    "gates.unitary": check_unitary,
    "jwt.equivalence": check_jwt_equivalence,
    "jwt.hermitian": check_hermitian,
    "commutators.sumz": check_commutators,
    "trotter.order": check_trotter_order,
    "gradient.parity": check_gradient_parity,
    "cost.phase_alignment": check_phase_alignment,
    "cost.local_zero": check_local_zero_set,
    "lehmann.sum_rule": check_lehmann_sum_rule,
    "lehmann.roundtrip": check_lehmann_roundtrip,
    "greens.t0": check_g0,
    "greens.ancilla": check_hadamard_protocol,
    "pipeline.u0_sigma": check_u0_sigma,
}


def run_checks(filter: str | None = None) -> list[CheckResult]:
    out = []
    for name, fn in CHECKS.items():
        if filter and filter not in name:
            continue
        try:
            value, limit = fn()
            ok = limit[0] <= value <= limit[1] if isinstance(limit, tuple) else value < limit
        except Exception as exc:  # a crashing check is a failing check
            value, limit, ok = float("inf"), 0.0, False
            name = f"{name} ({type(exc).__name__}: {exc})"
        out.append(CheckResult(name, bool(ok), float(value), limit))
    return out
