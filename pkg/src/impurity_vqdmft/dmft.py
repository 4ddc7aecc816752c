"""DMFT self-consistency on the Bethe lattice with pluggable impurity solvers."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .circuits import AnsatzSpec
from .greens import (
    CompressedEvolution,
    FitConfig,
    GreensSeries,
    LehmannSet,
    TrotterEvolution,
    greens_time_series,
    lehmann_fit,
    lehmann_to_matsubara,
    quasiparticle_weight,
    self_energy,
)
from .model import (
    BathFitNotConverged,
    HubbardParams,
    HybridizationSamples,
    MatsubaraGrid,
    SiamParams,
    bath_fit,
    bethe_g0,
    bethe_target,
    hybridization_matsubara,
    mapping_cost,
)
from .pauli import QubitLayout, jwt_siam

logger = logging.getLogger(__name__)

SOLVERS = ("exact", "trotter", "compressed")


@dataclass(frozen=True)
class DmftConfig:
    hubbard: HubbardParams
    B: int
    grid: MatsubaraGrid = field(default_factory=MatsubaraGrid)
    solver: str = "exact"
    dt: float = 0.1
    t_max: float = 50.0
    layers_gs: int = 2
    layers_evo: int = 3
    tol: float = 1e-3
    mixing: float = 0.7
    max_iter: int = 30
    eta: float = 0.1
    k_fit: int = 2
    n_conv: int = 50
    seed: int = 0
    bath_restarts: int = 8
    flavor: str = "global"
    degenerate: str = "superposition"
    fit: FitConfig = field(default_factory=FitConfig)

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 <= self.mixing <= 1:
            raise ValueError("mixing must lie in [0, 1]")
        if self.B < 1:
            raise ValueError("DMFT needs at least one bath site")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}")
        if self.degenerate not in ("single", "superposition"):
            raise ValueError("degenerate must be 'single' or 'superposition'")

    def replace(self, **kw) -> DmftConfig:
        return replace(self, **kw)


@dataclass
class IterationRecord:
    iteration: int
    siam: SiamParams
    lehmann: LehmannSet
    sigma: np.ndarray
    z: float
    delta_sigma: float
    mapping_cost: float
    next_siam: SiamParams
    converged: bool = False
    sum_rule_error: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> str:
        d = {
            "iteration": self.iteration,
            "siam": self.siam.to_dict(),
            "lehmann": self.lehmann.to_dict(),
            "sigma_re": self.sigma.real.tolist(),
            "sigma_im": self.sigma.imag.tolist(),
            "z": self.z,
            "delta_sigma": self.delta_sigma,
            "mapping_cost": self.mapping_cost,
            "next_siam": self.next_siam.to_dict(),
            "converged": self.converged,
            "sum_rule_error": self.sum_rule_error,
            "diagnostics": self.diagnostics,
        }
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> IterationRecord:
        d = json.loads(line)
        return cls(
            iteration=d["iteration"],
            siam=SiamParams.from_dict(d["siam"]),
            lehmann=LehmannSet.from_dict(d["lehmann"]),
            sigma=np.array(d["sigma_re"]) + 1j * np.array(d["sigma_im"]),
            z=d["z"],
            delta_sigma=d["delta_sigma"],
            mapping_cost=d["mapping_cost"],
            next_siam=SiamParams.from_dict(d["next_siam"]),
            converged=d["converged"],
            sum_rule_error=d.get("sum_rule_error", 0.0),
            diagnostics=d.get("diagnostics", {}),
        )


@dataclass
class DmftHistory:
    config: DmftConfig
    records: list[IterationRecord] = field(default_factory=list)
    converged: bool = False
    error: str | None = None
    last_series: GreensSeries | None = None
    last_trace: object = None

    @property
    def final(self) -> IterationRecord:
        return self.records[-1]

    @property
    def z(self) -> float:
        return self.final.z


def initial_guess(cfg: DmftConfig):
    """``Sigma_0 = 0`` and the bath fitted to the non-interacting Bethe hybridization.

    The non-interacting G is taken at ``mu - U/2`` so that ``mu = U/2`` maps
    to the particle-hole symmetric band.
    """
    hub = cfg.hubbard
    g0 = bethe_g0(cfg.grid, hub.mu - hub.U / 2, hub.v)
    target = bethe_target(g0, hub.v, cfg.grid)
    siam = _fit(target, cfg, None, U=hub.U, mu=hub.mu)
    return np.zeros(len(cfg.grid), dtype=complex), siam


def _fit(target, cfg, init, U=None, mu=None) -> SiamParams:
    try:
        return bath_fit(target, cfg.B, init, U=U, mu=mu, restarts=cfg.bath_restarts, seed=cfg.seed)
    except BathFitNotConverged as exc:
        logger.warning("bath fit: %s; using best parameters", exc)
        return exc.best


# ---------------------------------------------------------------------------
# impurity solvers


class ImpuritySolver:
    """Holds warm starts between DMFT iterations."""

    def __init__(self, cfg: DmftConfig):
        self.cfg = cfg
        self.prep = None
        self.traces: dict[int, object] = {}
        self.last_series: GreensSeries | None = None

    def solve(self, siam: SiamParams):
        if self.cfg.solver == "exact":
            return self._exact(siam)
        return self._quantum(siam)

    def _exact(self, siam):
        from .oracle import exact_lehmann, siam_spectrum

        spec = siam_spectrum(siam)
        lset = exact_lehmann(spec, QubitLayout(siam.B), 0, self.cfg.degenerate)
        return lset, {"ground_energy": spec.ground_energy, "degenerate": spec.ground_degenerate}

    def _quantum(self, siam):
        from .variational import OptConfig, compress_evolution, vqe_ground_state

        cfg = self.cfg
        layout = QubitLayout(siam.B)
        h = jwt_siam(siam, layout)
        opt = OptConfig(seed=cfg.seed)
        self.prep = vqe_ground_state(h, AnsatzSpec(siam.B, cfg.layers_gs), opt, siam=siam, warm=self.prep)
        mirrored = len(self.prep.degenerate_sectors) > 1
        spins = (0, 1) if mirrored and cfg.degenerate == "superposition" else (0,)
        n_steps = int(round(cfg.t_max / cfg.dt))
        diag = {"vqe_energy": self.prep.energy, "sector": list(self.prep.sector), "spins": list(spins)}
        series = []
        for spin in spins:
            if cfg.solver == "trotter":
                evo = TrotterEvolution(siam, cfg.dt)
            else:
                prev = self.traces.get(spin)
                trace = compress_evolution(
                    siam, self.prep, AnsatzSpec(siam.B, cfg.layers_evo), cfg.dt, cfg.t_max, "trotter", opt,
                    flavor=cfg.flavor, spin=spin, init_params=None if prev is None else prev.params_per_step,
                    fidelity=True,
                )
                self.traces[spin] = trace
                diag[f"min_fidelity_spin{spin}"] = float(min(trace.fidelity_diag))
                diag[f"max_cost_spin{spin}"] = float(max(trace.cost_per_step))
                evo = CompressedEvolution(_hva(siam.B, cfg.layers_evo), trace.params_per_step, cfg.dt)
            series.append(greens_time_series(self.prep.state, evo, layout, n_steps, spin))
        avg = GreensSeries(series[0].times, np.mean([s.values for s in series], axis=0))
        self.last_series = avg
        fit = lehmann_fit(avg, siam, cfg=cfg.fit)
        diag["fit_residual"] = fit.residual
        diag["fit_poles"] = len(fit.lehmann)
        return fit.lehmann, diag


def _hva(B, L):
    from .circuits import hva_ansatz

    return hva_ansatz(AnsatzSpec(B, L))


# ---------------------------------------------------------------------------
# loop


def _sigma_distance(a, b, n_conv) -> float:
    return float(np.max(np.abs(a[:n_conv] - b[:n_conv])))


def run_dmft(cfg: DmftConfig, history: DmftHistory | None = None, on_record=None) -> DmftHistory:
    """Iterate impurity solve, Lehmann -> Matsubara, Dyson, mixing and bath fit.

    ``history`` continues an interrupted run from its last record;
    ``on_record`` is called with each finished :class:`IterationRecord`.
    """
    grid = cfg.grid
    v = cfg.hubbard.v
    if history is None or not history.records:
        history = DmftHistory(cfg)
        sigma_prev, siam = initial_guess(cfg)
        start = 1
    else:
        siam = history.final.next_siam
        sigma_prev = history.final.sigma
        start = history.final.iteration + 1
        history.converged = False
    solver = ImpuritySolver(cfg)

    for it in range(start, cfg.max_iter + 1):
        try:
            lset, diag = solver.solve(siam)
            g = lehmann_to_matsubara(lset, grid)
            sigma = self_energy(g, siam, grid).values
        except Exception as exc:  # backend failure aborts with the history so far
            history.error = f"iteration {it}: {type(exc).__name__}: {exc}"
            logger.error(history.error)
            break
        try:
            z = quasiparticle_weight(_samples(grid, sigma), cfg.k_fit)
        except ValueError:
            z = float("nan")
        delta_sigma = _sigma_distance(sigma, sigma_prev, cfg.n_conv)
        target = bethe_target(g, v, grid)
        current = hybridization_matsubara(siam, grid).values
        mixed = HybridizationSamples(grid, cfg.mixing * target.values + (1 - cfg.mixing) * current)
        new_siam = _fit(mixed, cfg, siam)
        conv = it > 1 and delta_sigma < cfg.tol
        rec = IterationRecord(
            iteration=it, siam=siam, lehmann=lset, sigma=sigma, z=z, delta_sigma=delta_sigma,
            mapping_cost=mapping_cost(new_siam, mixed), next_siam=new_siam, converged=conv,
            sum_rule_error=abs(lset.total_weight - 1), diagnostics=_jsonable(diag),
        )
        history.records.append(rec)
        history.last_series = solver.last_series
        history.last_trace = solver.traces.get(0)
        logger.info("iteration %d: dSigma=%.3e Z=%.5f", it, delta_sigma, z)
        if on_record is not None:
            on_record(rec)
        if conv:
            history.converged = True
            break
        sigma_prev, siam = sigma, new_siam
    return history


def _samples(grid, sigma):
    from .greens import SelfEnergySamples

    return SelfEnergySamples(grid, sigma)


def _jsonable(d: dict) -> dict:
    out = {}
    for k, val in d.items():
        if isinstance(val, (np.floating, np.integer)):
            val = val.item()
        elif isinstance(val, np.bool_):
            val = bool(val)
        out[k] = val
    return out


def config_dict(cfg: DmftConfig) -> dict:
    d = asdict(cfg)
    d["grid"] = {"beta": cfg.grid.beta, "n_max": cfg.grid.n_max}
    return d
