"""Command-line entry point ``impurity-vqdmft``.

Exit codes: 0 success, 1 configuration or validation error, 2 numerical
non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

EXIT_OK, EXIT_CONFIG, EXIT_NONCONV = 0, 1, 2

log = logging.getLogger("impurity_vqdmft")


# ---------------------------------------------------------------------------
# configuration schema


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(_Strict):
    U: float = Field(ge=0)
    mu: float
    v: float = Field(default=1.0, gt=0)
    B: int = Field(ge=1, le=5)
    bath: list[tuple[float, float]] | None = None


class GridSection(_Strict):
    beta: float = Field(default=200.0, gt=0)
    n_max: int = Field(default=200, ge=0)


class DmftSection(_Strict):
    solver: Literal["exact", "trotter", "compressed"] = "exact"
    tol: float = Field(default=1e-3, gt=0)
    mixing: float = Field(default=0.7, ge=0, le=1)
    max_iter: int = Field(default=30, ge=1)
    n_conv: int = Field(default=50, ge=1)
    bath_restarts: int = Field(default=8, ge=0)


class EvolutionSection(_Strict):
    dt: float = Field(default=0.1, gt=0)
    t_max: float = Field(default=50.0, gt=0)
    layers_gs: int = Field(default=2, ge=1)
    layers_evo: int = Field(default=3, ge=1)
    reference: Literal["trotter", "exact"] = "trotter"
    flavor: Literal["global", "local_final"] = "global"
    degenerate: Literal["single", "superposition"] = "superposition"


class FitSection(_Strict):
    eta: float = Field(default=0.1, gt=0)
    delta_fit: float = Field(default=1e-2, gt=0)
    k_fit: int = Field(default=2, ge=1)
    t_fits: list[float] = Field(default_factory=lambda: [10.0, 20.0, 30.0, 40.0, 50.0])


class OptimizerSection(_Strict):
    method: Literal["lbfgs", "adam"] = "lbfgs"
    maxiter: int = Field(default=2000, ge=1)
    lr: float = Field(default=0.01, gt=0)
    tol: float = Field(default=1e-10, gt=0)


class RunConfig(_Strict):
    model: ModelSection
    grid: GridSection = Field(default_factory=GridSection)
    dmft: DmftSection = Field(default_factory=DmftSection)
    evolution: EvolutionSection = Field(default_factory=EvolutionSection)
    fit: FitSection = Field(default_factory=FitSection)
    optimizer: OptimizerSection = Field(default_factory=OptimizerSection)
    seed: int = 0
    output: str = "run"


class ConfigError(Exception):
    pass


def load_config(path) -> RunConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"])
            msgs.append(f"{loc}: {err['msg']}")
        raise ConfigError("invalid config: " + "; ".join(msgs)) from exc


def parse_layers(text: str) -> list[int]:
    """``"3"``, ``"1..4"`` or ``"1,3,5"``."""
    try:
        if ".." in text:
            lo, hi = text.split("..")
            out = list(range(int(lo), int(hi) + 1))
        else:
            out = [int(x) for x in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad --layers value {text!r}") from exc
    if not out or min(out) < 1:
        raise ConfigError(f"bad --layers value {text!r}")
    return out


# ---------------------------------------------------------------------------
# helpers


def _siam(cfg: RunConfig):
    from .dmft import initial_guess
    from .model import SiamParams

    m = cfg.model
    if m.bath is not None:
        if len(m.bath) != m.B:
            raise ConfigError(f"model.bath has {len(m.bath)} entries, model.B is {m.B}")
        return SiamParams(m.U, m.mu, tuple(m.bath))
    return initial_guess(_dmft_cfg(cfg))[1]


def _grid(cfg: RunConfig):
    from .model import MatsubaraGrid

    return MatsubaraGrid(cfg.grid.beta, cfg.grid.n_max)


def _fit_cfg(cfg: RunConfig):
    from .greens import FitConfig

    return FitConfig(eta=cfg.fit.eta, delta_fit=cfg.fit.delta_fit)


def _opt_cfg(cfg: RunConfig):
    from .variational import OptConfig

    o = cfg.optimizer
    return OptConfig(method=o.method, maxiter=o.maxiter, lr=o.lr, tol=o.tol, seed=cfg.seed)


def _dmft_cfg(cfg: RunConfig):
    from .dmft import DmftConfig
    from .model import HubbardParams

    e, d = cfg.evolution, cfg.dmft
    return DmftConfig(
        hubbard=HubbardParams(cfg.model.U, cfg.model.mu, cfg.model.v), B=cfg.model.B, grid=_grid(cfg),
        solver=d.solver, dt=e.dt, t_max=e.t_max, layers_gs=e.layers_gs, layers_evo=e.layers_evo,
        tol=d.tol, mixing=d.mixing, max_iter=d.max_iter, eta=cfg.fit.eta, k_fit=cfg.fit.k_fit,
        n_conv=d.n_conv, seed=cfg.seed, bath_restarts=d.bath_restarts, flavor=e.flavor,
        degenerate=e.degenerate, fit=_fit_cfg(cfg),
    )


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_rows(path, header, rows):
    from .greens import write_csv

    write_csv(path, header, rows)


def _prepare_out(cfg: RunConfig, raw_text: str) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.copy").write_text(raw_text)
    return out


def _emit_frequency_tables(out: Path, lset, siam, grid, eta):
    from .greens import lehmann_to_matsubara, self_energy, spectral_function

    g = lehmann_to_matsubara(lset, grid)
    sig = self_energy(g, siam, grid).values
    _write_rows(
        out / "sigma_matsubara.csv", ["n", "omega_n", "ReSigma", "ImSigma", "ReG", "ImG"],
        [(n, w, s.real, s.imag, gg.real, gg.imag) for n, (w, s, gg) in enumerate(zip(grid.omegas, sig, g))],
    )
    omega = np.round(np.arange(-800, 801) * 0.01, 10)
    A = spectral_function(lset, omega, eta)
    _write_rows(out / "spectral.csv", ["omega", "A"], zip(omega, A))
    lset.to_csv(out / "lehmann.csv")


# ---------------------------------------------------------------------------
# commands


def cmd_gs(cfg: RunConfig, args, raw) -> int:
    from .circuits import AnsatzSpec
    from .oracle import siam_spectrum
    from .pauli import jwt_siam
    from .variational import vqe_ground_state

    out = _prepare_out(cfg, raw)
    siam = _siam(cfg)
    layers = parse_layers(args.layers) if args.layers else [cfg.evolution.layers_gs]
    exact = siam_spectrum(siam)
    rows, ok = [], True
    with (out / "gs.ndjson").open("w") as fh:
        for L in layers:
            prep = vqe_ground_state(jwt_siam(siam), AnsatzSpec(siam.B, L), _opt_cfg(cfg), siam=siam)
            rel = abs(prep.energy - exact.ground_energy) / abs(exact.ground_energy)
            rec = {
                "layers": L, "energy": prep.energy, "exact_energy": exact.ground_energy,
                "relative_error": rel, "sector": list(prep.sector),
                "degenerate_sectors": [list(s) for s in prep.degenerate_sectors],
                "converged": prep.converged, "siam": siam.to_dict(),
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            rows.append((L, prep.energy, exact.ground_energy, rel))
            ok &= prep.converged
            print(f"L={L} E_vqe={prep.energy:.10f} E_exact={exact.ground_energy:.10f} rel_err={rel:.3e} sector={prep.sector}")
    _write_rows(out / "gs_layers.csv", ["layers", "energy", "exact_energy", "relative_error"], rows)
    return EXIT_OK if ok else EXIT_NONCONV


def _prepare_gs(cfg, siam):
    from .circuits import AnsatzSpec
    from .pauli import jwt_siam
    from .variational import vqe_ground_state

    return vqe_ground_state(jwt_siam(siam), AnsatzSpec(siam.B, cfg.evolution.layers_gs), _opt_cfg(cfg), siam=siam)


def cmd_evolve(cfg: RunConfig, args, raw) -> int:
    from .circuits import AnsatzSpec
    from .variational import compress_evolution

    out = _prepare_out(cfg, raw)
    siam = _siam(cfg)
    prep = _prepare_gs(cfg, siam)
    e = cfg.evolution
    layers = parse_layers(args.layers) if args.layers else [e.layers_evo]
    ok = True
    rows = []
    for L in layers:
        trace = compress_evolution(siam, prep, AnsatzSpec(siam.B, L), e.dt, e.t_max, e.reference, _opt_cfg(cfg), flavor=e.flavor)
        with (out / f"evolve_L{L}.ndjson").open("w") as fh:
            for rec in trace.records():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        fmin = min(trace.fidelity_diag)
        rows.append((L, fmin, trace.fidelity_diag[-1], max(trace.cost_per_step)))
        ok &= all(trace.converged)
        print(f"L={L} min_fidelity={fmin:.6f} final_fidelity={trace.fidelity_diag[-1]:.6f}")
    _write_rows(out / "evolve_layers.csv", ["layers", "min_fidelity", "final_fidelity", "max_cost"], rows)
    return EXIT_OK if ok else EXIT_NONCONV


def cmd_greens(cfg: RunConfig, args, raw) -> int:
    from .circuits import AnsatzSpec, hva_ansatz
    from .greens import (
        CompressedEvolution, ExactEvolution, TrotterEvolution, greens_time_series, lehmann_fit, z_vs_tfit,
    )
    from .oracle import siam_spectrum
    from .pauli import QubitLayout
    from .variational import compress_evolution

    out = _prepare_out(cfg, raw)
    siam = _siam(cfg)
    e = cfg.evolution
    solver = cfg.dmft.solver
    layout = QubitLayout(siam.B)
    n_steps = int(round(e.t_max / e.dt))
    if solver == "exact":
        spec = siam_spectrum(siam)
        gs = spec.ground_state(e.degenerate if spec.ground_degenerate else "single")
        evo = ExactEvolution(spec, e.dt)
    else:
        prep = _prepare_gs(cfg, siam)
        gs = prep.state
        if solver == "trotter":
            evo = TrotterEvolution(siam, e.dt)
        else:
            trace = compress_evolution(siam, prep, AnsatzSpec(siam.B, e.layers_evo), e.dt, e.t_max, e.reference, _opt_cfg(cfg), flavor=e.flavor)
            evo = CompressedEvolution(hva_ansatz(AnsatzSpec(siam.B, e.layers_evo)), trace.params_per_step, e.dt)
            _write_rows(out / "fidelity.csv", ["n", "t", "cost", "fidelity"],
                        [(k + 1, (k + 1) * e.dt, c, f) for k, (c, f) in enumerate(zip(trace.cost_per_step, trace.fidelity_diag))])
    series = greens_time_series(gs, evo, layout, n_steps)
    series.to_csv(out / "greens_t.csv")
    fit = lehmann_fit(series, siam, cfg=_fit_cfg(cfg))
    grid = _grid(cfg)
    _emit_frequency_tables(out, fit.lehmann, siam, grid, cfg.fit.eta)
    t_fits = [t for t in cfg.fit.t_fits if t <= series.t_max + 1e-9]
    table = z_vs_tfit(series, siam, grid, t_fits, _fit_cfg(cfg), cfg.fit.k_fit)
    _write_rows(out / "z_vs_tfit.csv", ["t_fit", "Z", "sum_rule_error"], table)
    _write_json(out / "summary.json", {
        "solver": solver, "poles": len(fit.lehmann), "sum_rule_error": fit.sum_rule_error,
        "fit_converged": fit.converged, "Z": table[-1][1] if table else None,
    })
    print(f"poles={len(fit.lehmann)} sum_rule_error={fit.sum_rule_error:.2e}")
    return EXIT_OK if fit.converged else EXIT_NONCONV


def cmd_dmft(cfg: RunConfig, args, raw) -> int:
    from .dmft import DmftHistory, IterationRecord, run_dmft
    from .greens import GreensSeries, z_vs_tfit

    out = Path(cfg.output)
    hist_path = out / "history.ndjson"
    dcfg = _dmft_cfg(cfg)
    history = None
    if args.resume and hist_path.exists():
        lines = [ln for ln in hist_path.read_text().splitlines() if ln.strip()]
        history = DmftHistory(dcfg, [IterationRecord.from_json(ln) for ln in lines])
        print(f"resuming after iteration {history.records[-1].iteration if history.records else 0}")
    else:
        _prepare_out(cfg, raw)
        hist_path.write_text("")
    out.mkdir(parents=True, exist_ok=True)

    def flush(rec):
        with hist_path.open("a") as fh:
            fh.write(rec.to_json() + "\n")
        print(f"iteration {rec.iteration}: dSigma={rec.delta_sigma:.3e} Z={rec.z:.5f}")

    history = run_dmft(dcfg, history, on_record=flush)
    if not history.records:
        print(f"error: {history.error}", file=sys.stderr)
        return EXIT_NONCONV
    final = history.final
    grid = dcfg.grid
    _emit_frequency_tables(out, final.lehmann, final.siam, grid, dcfg.eta)
    n_steps = int(round(dcfg.t_max / dcfg.dt))
    series = history.last_series
    if series is None:
        t = np.arange(n_steps + 1) * dcfg.dt
        series = GreensSeries(t, final.lehmann.time_series(t))
    series.to_csv(out / "greens_t.csv")
    t_fits = [t for t in cfg.fit.t_fits if t <= series.t_max + 1e-9]
    table = z_vs_tfit(series, final.siam, grid, t_fits, dcfg.fit, dcfg.k_fit)
    _write_rows(out / "z_vs_tfit.csv", ["t_fit", "Z", "sum_rule_error"], table)
    if history.last_trace is not None:
        tr = history.last_trace
        _write_rows(out / "fidelity.csv", ["n", "t", "cost", "fidelity"],
                    [(k + 1, (k + 1) * tr.dt, c, f) for k, (c, f) in enumerate(zip(tr.cost_per_step, tr.fidelity_diag))])
    _write_json(out / "summary.json", {
        "converged": history.converged, "iterations": final.iteration, "Z": final.z,
        "delta_sigma": final.delta_sigma, "solver": dcfg.solver, "error": history.error,
        "siam": final.siam.to_dict(),
    })
    print(f"converged={history.converged} Z={final.z:.6f}")
    if history.error:
        print(f"error: {history.error}", file=sys.stderr)
    return EXIT_OK if history.converged else EXIT_NONCONV


def cmd_validate(args) -> int:
    from .validate import run_checks

    results = run_checks(args.filter)
    for r in results:
        print(r.line())
    if not results:
        print(f"no check matches {args.filter!r}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK if all(r.ok for r in results) else EXIT_CONFIG


def cmd_bench(args) -> int:
    from .bench import run_benchmark

    rows = run_benchmark()
    for r in rows:
        print(f"{r['case']:<28} numpy {r['numpy_ms']:9.3f} ms   numba {r['numba_ms']:9.3f} ms   x{r['speedup']:.1f}")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        _write_rows(Path(args.out) / "bench.csv", ["case", "numpy_ms", "numba_ms", "speedup"],
                    [(r["case"], r["numpy_ms"], r["numba_ms"], r["speedup"]) for r in rows])
    return EXIT_OK


COMMANDS = {"gs": cmd_gs, "evolve": cmd_evolve, "greens": cmd_greens, "dmft": cmd_dmft}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="impurity-vqdmft", description="Variational DMFT impurity solver on a statevector simulator")
    p.add_argument("command", choices=["gs", "evolve", "greens", "dmft", "validate", "bench"])
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--layers", help="layer count or range, e.g. 3, 1..4, 1,3")
    p.add_argument("--solver", choices=["exact", "trotter", "compressed"])
    p.add_argument("--resume", action="store_true", help="continue a dmft run from history.ndjson")
    p.add_argument("--filter", help="validate: run only checks whose name contains this text")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    threads = os.environ.get("VQDMFT_THREADS")
    if threads:
        try:
            import numba

            numba.set_num_threads(int(threads))
        except (ImportError, ValueError):
            pass
    if args.command == "validate":
        return cmd_validate(args)
    if args.command == "bench":
        return cmd_bench(args)
    if not args.config:
        print("error: --config is required for this command", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out:
            overrides["output"] = args.out
        if overrides:
            cfg = cfg.model_copy(update=overrides)
        if args.solver:
            cfg = cfg.model_copy(update={"dmft": cfg.dmft.model_copy(update={"solver": args.solver})})
        raw = yaml.safe_dump(cfg.model_dump(), sort_keys=True)
        return COMMANDS[args.command](cfg, args, raw)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
