"""Ground-state VQE and iterative time-evolution compression."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import _kernels
from .circuits import (
    AnsatzSpec,
    ParamCircuit,
    excitation_init,
    hva_ansatz,
    hva_trotter_params,
    init_qubits,
    ry_probe_layer,
    trotter_step,
)
from .model import SiamParams
from .pauli import PauliSum, QubitLayout, jwt_siam, to_sparse
from .sim import PAULI_X, PAULI_Z, Gate, StateVector, apply_raw, expectation, sector_probabilities

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# optimizers


@dataclass(frozen=True)
class OptConfig:
    """``method`` is ``"lbfgs"`` (analytic gradient, default) or ``"adam"``."""

    method: str = "lbfgs"
    maxiter: int = 2000
    lr: float = 0.01
    tol: float = 1e-10
    rel_tol: float = 1e-12
    ftol: float = 1e-15
    restarts: int = 2
    sector_threshold: float = 1e-3
    seed: int = 0


@dataclass
class OptResult:
    x: np.ndarray
    fun: float
    nit: int
    success: bool


def _adam(fg, x0, cfg: OptConfig) -> OptResult:
    x = np.array(x0, float)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    b1, b2, eps = 0.9, 0.999, 1e-8
    best_x, best_f = x.copy(), np.inf
    prev = np.inf
    for k in range(1, cfg.maxiter + 1):
        f, g = fg(x)
        if f < best_f:
            best_x, best_f = x.copy(), f
        if f < cfg.tol or abs(prev - f) <= cfg.rel_tol * max(abs(prev), 1e-300):
            return OptResult(best_x, best_f, k, True)
        prev = f
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - cfg.lr * (m / (1 - b1**k)) / (np.sqrt(v / (1 - b2**k)) + eps)
    f, _ = fg(x)
    if f < best_f:
        best_x, best_f = x, f
    return OptResult(best_x, best_f, cfg.maxiter, best_f < cfg.tol)


def optimize(fg, x0, cfg: OptConfig, floor: float | None = None) -> OptResult:
    """Minimize ``fg(x) -> (f, grad)``.  ``floor`` is a known lower bound used
    for the absolute stopping test (0 for compression costs)."""
    if cfg.method == "adam":
        return _adam(fg, x0, cfg)
    if cfg.method != "lbfgs":
        raise ValueError(f"unknown optimizer {cfg.method!r}")
    res = minimize(
        fg, np.asarray(x0, float), jac=True, method="L-BFGS-B",
        options={"maxiter": cfg.maxiter, "ftol": cfg.ftol, "gtol": 1e-13, "maxcor": 30},
    )
    ok = bool(res.success) or (floor is not None and res.fun - floor < cfg.tol)
    return OptResult(np.asarray(res.x), float(res.fun), int(res.nit), ok)


# ---------------------------------------------------------------------------
# ground state


@dataclass
class GroundStatePrep:
    init_gates: list[Gate]
    ansatz: ParamCircuit
    params: np.ndarray
    energy: float
    sector: tuple
    layout: QubitLayout
    converged: bool = True
    superposition: bool = False
    degenerate_sectors: list = field(default_factory=list)
    candidates: dict = field(default_factory=dict)

    @property
    def init_state(self) -> np.ndarray:
        n = self.layout.n_qubits
        return apply_raw(StateVector.zero(n).amps[None, :], self.init_gates, n)[0]

    @property
    def state(self) -> np.ndarray:
        return self.ansatz.apply(self.params, self.init_state)[0]

    def apply_unitary(self, psi, inverse: bool = False) -> np.ndarray:
        """``U_GS`` (or its inverse) on a batch of states."""
        n = self.layout.n_qubits
        gates = list(self.init_gates) + self.ansatz.bind(self.params)
        if inverse:
            gates = [g.inverse() for g in reversed(gates)]
        return apply_raw(np.atleast_2d(psi), gates, n)

    @property
    def init_qubits(self) -> list[int]:
        if self.superposition:
            return init_qubits(*self.sector[0], self.layout, True)
        return init_qubits(*self.sector, self.layout)


def cost_ground(h: PauliSum, state) -> float:
    return expectation(state, h)


def _energy_fg(circ: ParamCircuit, H, psi0):
    def fg(x):
        def cost(out):
            hpsi = (H @ out[0])[None, :]
            return float(np.vdot(out[0], hpsi[0]).real), 2 * hpsi

        return circ.value_and_grad(x, psi0, cost)

    return fg


def _best_of(fg, x0, cfg: OptConfig, rng, scale=0.05, floor=None) -> OptResult:
    best = optimize(fg, x0, cfg, floor)
    for _ in range(cfg.restarts):
        if floor is not None and best.fun - floor < cfg.tol:
            break
        trial = optimize(fg, best.x + rng.normal(scale=scale, size=best.x.size), cfg, floor)
        if trial.fun < best.fun:
            best = trial
    return best


def vqe_ground_state(
    h: PauliSum,
    spec: AnsatzSpec,
    opt_cfg: OptConfig | None = None,
    *,
    siam: SiamParams | None = None,
    warm: GroundStatePrep | None = None,
) -> GroundStatePrep:
    """Two-phase ground-state search.

    Phase 1 optimizes an RY probe layer plus the HVA from the vacuum and reads
    off which excitation sectors carry weight.  Phase 2 restarts inside each
    candidate sector (plus its spin mirror) from an X-gate prefix with the
    number-conserving HVA alone and keeps the lowest energy.  With ``warm``
    phase 1 is skipped and the previous sector(s) and parameters are reused.
    """
    cfg = opt_cfg or OptConfig()
    layout = QubitLayout(spec.B)
    n = layout.n_qubits
    if h.n_qubits != n:
        raise ValueError("Hamiltonian and ansatz disagree on the qubit count")
    H = to_sparse(h)
    rng = np.random.default_rng(cfg.seed)
    hva = hva_ansatz(spec)
    hva0 = hva_trotter_params(siam, 0.1, spec.L) if siam is not None else rng.uniform(-0.1, 0.1, hva.n_params)

    if warm is not None and warm.ansatz.n_params == hva.n_params:
        sectors = [warm.sector] + [s for s in warm.degenerate_sectors if s != warm.sector]
        start = warm.params
        probs = {}
    else:
        probe = ry_probe_layer(layout).concat(hva)
        x0 = np.concatenate([rng.uniform(-0.1, 0.1, n), hva0])
        vac = StateVector.zero(n).amps[None, :]
        res1 = _best_of(_energy_fg(probe, H, vac), x0, cfg, rng)
        out = probe.apply(res1.x, vac)[0]
        probs = sector_probabilities(out, layout, cfg.sector_threshold)
        sectors = sorted(probs, key=lambda s: -probs[s])
        start = res1.x[n:]
        logger.info("phase 1 energy %.8f, sectors %s", res1.fun, probs)

    # every spin-mirrored partner is tried too
    todo = []
    for s in sectors:
        for c in (tuple(s), (s[1], s[0])):
            if c not in todo:
                todo.append(c)

    results = {}

    def solve(sec):
        gates = excitation_init(*sec, layout)
        psi0 = apply_raw(StateVector.zero(n).amps[None, :], gates, n)
        fg = _energy_fg(hva, H, psi0)
        best = None
        for x0 in (start, hva0):
            r = _best_of(fg, x0, cfg, rng)
            if best is None or r.fun < best.fun:
                best = r
        results[sec] = (best, gates)
        logger.info("sector %s energy %.10f", sec, best.fun)

    for sec in todo:
        solve(sec)
    # the probe can settle in a neighbouring sector; climb over adjacent
    # fillings until the best energy stops improving
    while True:
        cur = min(results, key=lambda s: results[s][0].fun)
        fresh = [
            (cur[0] + du, cur[1] + dd)
            for du, dd in ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1))
            if 0 <= cur[0] + du <= spec.B + 1 and 0 <= cur[1] + dd <= spec.B + 1
        ]
        fresh = [f for f in fresh if f not in results]
        if not fresh:
            break
        for f in fresh:
            solve(f)
        if min(results, key=lambda s: results[s][0].fun) == cur:
            break
    for s in list(results):
        if (s[1], s[0]) not in results:
            solve((s[1], s[0]))

    sec = min(results, key=lambda s: (results[s][0].fun, -s[0]))
    best, gates = results[sec]
    e0 = best.fun
    degenerate = [s for s in results if abs(results[s][0].fun - e0) < 1e-6 * max(1.0, abs(e0))]
    degenerate.sort(key=lambda s: -s[0])
    prep = GroundStatePrep(
        init_gates=gates, ansatz=hva, params=best.x, energy=e0, sector=sec, layout=layout,
        converged=best.success, degenerate_sectors=degenerate,
        candidates={s: r[0].fun for s, r in results.items()},
    )
    prep.energy = cost_ground(h, prep.state)
    return prep


def superposition_ground_state(
    h: PauliSum, spec: AnsatzSpec, sectors, opt_cfg: OptConfig | None = None, *, start=None,
) -> GroundStatePrep:
    """Equal-weight superposition of two spin-mirrored sectors.

    The prefix puts the impurity pair in ``(|10> + |01>)/sqrt(2)``; one HVA is
    then optimized for the mean energy of both branches.
    """
    cfg = opt_cfg or OptConfig()
    a, b = (tuple(s) for s in sectors)
    if a != (b[1], b[0]) or abs(a[0] - a[1]) != 1:
        raise ValueError("superposition needs two spin-mirrored sectors differing by one")
    layout = QubitLayout(spec.B)
    n = layout.n_qubits
    H = to_sparse(h)
    hva = hva_ansatz(spec)
    rng = np.random.default_rng(cfg.seed)
    gates = excitation_init(*a, layout, superposition=True)
    psi0 = apply_raw(StateVector.zero(n).amps[None, :], gates, n)
    x0 = np.zeros(hva.n_params) if start is None else np.asarray(start, float)
    best = _best_of(_energy_fg(hva, H, psi0), x0, cfg, rng)
    for _ in range(cfg.restarts):
        r = _best_of(_energy_fg(hva, H, psi0), rng.normal(scale=0.3, size=hva.n_params), cfg, rng)
        if r.fun < best.fun:
            best = r
    prep = GroundStatePrep(
        init_gates=gates, ansatz=hva, params=best.x, energy=best.fun, sector=(a, b), layout=layout,
        converged=best.success, superposition=True, degenerate_sectors=[a, b],
    )
    prep.energy = cost_ground(h, prep.state)
    return prep


# ---------------------------------------------------------------------------
# compression


class Reference:
    """One step of the reference propagator, ``trotter`` or ``exact``."""

    def __init__(self, siam: SiamParams, dt: float, kind: str = "trotter", spectrum=None):
        self.kind = kind
        self.layout = QubitLayout(siam.B)
        self.dt = dt
        if kind == "trotter":
            self._gates = [(g.matrix(), g.qubits) for g in trotter_step(siam, dt, self.layout)]
        elif kind == "exact":
            if spectrum is None:
                from .oracle import siam_spectrum

                spectrum = siam_spectrum(siam)
            S = spectrum.states
            self._U = (S * np.exp(-1j * spectrum.energies * dt)) @ S.conj().T
        else:
            raise ValueError(f"unknown reference {kind!r}")

    def apply(self, psi, inverse: bool = False) -> np.ndarray:
        psi = np.atleast_2d(psi)
        if self.kind == "exact":
            U = self._U.conj().T if inverse else self._U
            return psi @ U.T
        n = self.layout.n_qubits
        seq = reversed(self._gates) if inverse else self._gates
        for m, q in seq:
            psi = _kernels.apply_gate(psi, m.conj().T if inverse else m, q, n)
        return psi


@dataclass
class CompressionProblem:
    """Cost ``c - Re <V g| M |V X g>`` for one time step.

    ``global``: ``M = |W g><W X g|`` with ``c = 1``.
    ``local_final``: ``M = W O X W^dag`` with
    ``O = 1 + 1/2 sum Z + sum_{j in M_ini} U_GS Z_j U_GS^dag`` and
    ``c = B + 2``; the ``sum Z`` block is dropped when ``B + 1 = |M_ini|``.
    Here ``W = U_ref V(theta_prev)``.
    """

    circuit: ParamCircuit
    gs: np.ndarray
    xgs: np.ndarray
    flavor: str
    const: float
    a: np.ndarray | None = None
    b: np.ndarray | None = None
    M: np.ndarray | None = None

    def states(self, params) -> np.ndarray:
        return self.circuit.apply(params, np.stack([self.gs, self.xgs]))

    def _m_apply(self, phi2, phi1):
        if self.flavor == "global":
            return self.a * np.vdot(self.b, phi2), self.b * np.vdot(self.a, phi1)
        return self.M @ phi2, self.M.conj().T @ phi1

    def cost(self, params) -> float:
        out = self.states(params)
        m2, _ = self._m_apply(out[1], out[0])
        return float(self.const - np.vdot(out[0], m2).real)

    def value_and_grad(self, params):
        def cost(out):
            m2, m1 = self._m_apply(out[1], out[0])
            return float(self.const - np.vdot(out[0], m2).real), -np.stack([m2, m1])

        return self.circuit.value_and_grad(params, np.stack([self.gs, self.xgs]), cost)

    def overlaps(self, params):
        """``(<GS|L^dag|GS>, <GS|K|GS>)`` for the global decomposition."""
        out = self.states(params)
        return np.vdot(out[0], self.a), np.vdot(self.b, out[1])


def _local_observable(prep: GroundStatePrep, layout: QubitLayout, include_z: bool):
    n = layout.n_qubits
    dim = 1 << n
    eye = np.eye(dim, dtype=complex)
    # U_GS Z_j U_GS^dag as dense columns
    udag = prep.apply_unitary(eye, inverse=True)  # rows: U^dag e_i
    acc = eye.copy()
    zsum = np.zeros_like(udag)
    for j in prep.init_qubits:
        zsum += _kernels.apply_gate(udag, PAULI_Z, (j,), n)
    acc += prep.apply_unitary(zsum).T  # columns U Z U^dag e_i
    if include_z:
        idx = np.arange(dim)
        diag = sum(1 - 2 * ((idx >> (n - 1 - q)) & 1) for q in range(n))
        acc += 0.5 * np.diag(diag.astype(complex))
    return acc


def compression_problem(
    circuit: ParamCircuit,
    params_prev,
    reference: Reference,
    prep: GroundStatePrep,
    flavor: str = "global",
    spin: int = 0,
    _cache: dict | None = None,
) -> CompressionProblem:
    layout = prep.layout
    n = layout.n_qubits
    q = layout.impurity(spin)
    gs = prep.state
    xgs = _kernels.apply_gate(gs[None, :], PAULI_X, (q,), n)[0]
    pair = np.stack([gs, xgs])
    if params_prev is not None:
        pair = circuit.apply(params_prev, pair)
    a, b = reference.apply(pair)
    if flavor == "global":
        return CompressionProblem(circuit, gs, xgs, "global", 1.0, a=a, b=b)
    if flavor != "local_final":
        raise ValueError(f"unknown cost flavor {flavor!r}")
    N = len(prep.init_qubits)
    include_z = layout.B + 1 != N
    key = ("O", include_z)
    if _cache is not None and key in _cache:
        O = _cache[key]
    else:
        O = _local_observable(prep, layout, include_z)
        if _cache is not None:
            _cache[key] = O
    dim = 1 << n
    eye = np.eye(dim, dtype=complex)
    # W as a dense matrix (columns W e_i)
    w_rows = eye if params_prev is None else circuit.apply(params_prev, eye)
    W = reference.apply(w_rows).T
    X = np.eye(dim)[np.arange(dim) ^ (1 << (n - 1 - q))]
    M = W @ O @ X @ W.conj().T
    return CompressionProblem(circuit, gs, xgs, "local_final", float(layout.B + 2), a=a, b=b, M=M)


def compression_cost(params_n, params_prev, reference: Reference, prep: GroundStatePrep, flavor="global", circuit=None) -> float:
    circuit = circuit or hva_ansatz(AnsatzSpec(prep.layout.B, _layers_from(params_n, prep.layout.B)))
    return compression_problem(circuit, params_prev, reference, prep, flavor).cost(params_n)


def _layers_from(params, B):
    return len(params) // (6 * B + 4)


TWO_TERM = {"RZ", "RY", "RZZ"}
FOUR_TERM = {"RXXYY"}


def parameter_shift_grad(cost, params, slot: int, kind: str) -> float:
    """Exact derivative of ``cost`` in one slot from shifted evaluations.

    Generators with two eigenvalues one apart (RZ, RY, and RZZ after removing
    its identity part) take the two-term rule; the XX+YY generator with
    eigenvalues -1, 0, 1 takes the four-term rule.
    """
    params = np.asarray(params, float)

    def shifted(s):
        p = params.copy()
        p[slot] += s
        q = params.copy()
        q[slot] -= s
        return cost(p) - cost(q)

    if kind in TWO_TERM:
        return 0.5 * shifted(np.pi / 2)
    if kind in FOUR_TERM:
        return shifted(np.pi / 4) + (1 - np.sqrt(2)) / 2 * shifted(np.pi / 2)
    raise ValueError(f"no shift rule for gate kind {kind!r}")


def parameter_shift_gradient(cost, params, circuit: ParamCircuit) -> np.ndarray:
    return np.array([parameter_shift_grad(cost, params, k, circuit.slot_kind(k)) for k in range(circuit.n_params)])


@dataclass
class CompressionTrace:
    dt: float
    params_per_step: list = field(default_factory=list)
    cost_per_step: list = field(default_factory=list)
    cost_init: list = field(default_factory=list)
    fidelity_diag: list = field(default_factory=list)
    converged: list = field(default_factory=list)
    layers: int = 1

    @property
    def n_steps(self) -> int:
        return len(self.params_per_step)

    def records(self):
        for k in range(self.n_steps):
            rec = {"n": k + 1, "t": (k + 1) * self.dt, "cost": self.cost_per_step[k]}
            if self.fidelity_diag:
                rec["fidelity"] = self.fidelity_diag[k]
            rec["params"] = list(map(float, self.params_per_step[k]))
            yield rec


def compress_evolution(
    siam: SiamParams,
    prep: GroundStatePrep,
    spec: AnsatzSpec,
    dt: float,
    t_max: float,
    reference: str = "trotter",
    opt_cfg: OptConfig | None = None,
    *,
    flavor: str = "global",
    spin: int = 0,
    init_params=None,
    fidelity: bool = True,
    spectrum=None,
    callback=None,
) -> CompressionTrace:
    """Train ``V(theta_n)`` step by step so that ``V(theta_n)`` acts like
    ``n`` reference steps on ``|GS>`` and ``X|GS>``.

    ``theta_1`` starts from the single-step Trotter angles, later steps from
    the previous solution.  Entries of ``init_params`` (one vector per step)
    replace that start whenever their cost is lower.
    """
    cfg = opt_cfg or OptConfig()
    n_steps = int(round(t_max / dt))
    if abs(n_steps * dt - t_max) > 1e-9 * max(1.0, t_max):
        raise ValueError("t_max must be an integer multiple of dt")
    circ = hva_ansatz(spec)
    ref = Reference(siam, dt, reference, spectrum)
    layout = QubitLayout(siam.B)
    n = layout.n_qubits
    q = layout.impurity(spin)
    trace = CompressionTrace(dt=dt, layers=spec.L)
    cache: dict = {}
    xgs = _kernels.apply_gate(prep.state[None, :], PAULI_X, (q,), n)
    target = xgs
    prev = None
    for k in range(n_steps):
        x0 = hva_trotter_params(siam, dt, spec.L) if prev is None else prev
        prob = compression_problem(circ, prev, ref, prep, flavor, spin, cache)
        c0 = prob.cost(x0)
        if init_params is not None and k < len(init_params):
            # parameters from an earlier run (previous DMFT iteration) compete
            # with the in-run warm start
            alt = np.asarray(init_params[k], float)
            c_alt = prob.cost(alt)
            if c_alt < c0:
                x0, c0 = alt, c_alt
        res = optimize(prob.value_and_grad, x0, cfg, floor=0.0)
        x = res.x if res.fun <= c0 else x0
        trace.params_per_step.append(x)
        trace.cost_per_step.append(float(max(min(res.fun, c0), 0.0)))
        trace.cost_init.append(float(c0))
        trace.converged.append(bool(res.success))
        if fidelity:
            target = ref.apply(target)
            out = circ.apply(x, xgs)
            trace.fidelity_diag.append(float(abs(np.vdot(target[0], out[0])) ** 2))
        if callback is not None:
            callback(k, trace)
        prev = x
    return trace


def hamiltonian_of(siam: SiamParams) -> PauliSum:
    return jwt_siam(siam, QubitLayout(siam.B))
