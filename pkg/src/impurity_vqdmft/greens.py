"""Impurity Green's function: time series on the simulator, Lehmann pole fit,
Matsubara/real-frequency transforms, self-energy and quasiparticle weight.

Normalization: the time-domain object is ``G(t) = <c(t)c^dag> + <c^dag c(t)>``
(no ``-i theta(t)``), so ``G(0) = 1`` and a Lehmann set reads
``G(t) = sum_j alpha_j exp(-i w_j t) + beta_j exp(+i w_j t)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares, nnls
from scipy.signal import find_peaks

from . import _kernels
from .model import MatsubaraGrid, SiamParams, hybridization_matsubara
from .pauli import QubitLayout
from .sim import PAULI_X, PAULI_Y, Gate, hadamard_test

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class LehmannSet:
    omegas: np.ndarray
    alphas: np.ndarray
    betas: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.omegas, float).reshape(-1)
        a = np.asarray(self.alphas, float).reshape(-1)
        b = np.asarray(self.betas, float).reshape(-1)
        if not (w.shape == a.shape == b.shape):
            raise ValueError("omegas, alphas and betas must have equal length")
        if np.any(a < -1e-12) or np.any(b < -1e-12):
            raise ValueError("spectral weights must be non-negative")
        object.__setattr__(self, "omegas", w)
        object.__setattr__(self, "alphas", np.clip(a, 0, None))
        object.__setattr__(self, "betas", np.clip(b, 0, None))

    @classmethod
    def from_arrays(cls, omegas, alphas, betas) -> LehmannSet:
        return cls(np.asarray(omegas, float), np.asarray(alphas, float), np.asarray(betas, float))

    def __len__(self):
        return self.omegas.size

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.alphas + self.betas))

    def time_series(self, times) -> np.ndarray:
        t = np.asarray(times, float)[:, None]
        ph = np.exp(-1j * self.omegas[None, :] * t)
        return ph @ self.alphas + ph.conj() @ self.betas

    def real_axis(self, omega) -> np.ndarray:
        """``sum alpha/(w - w_j) + beta/(w + w_j)`` for real (or complex) ``w``."""
        w = np.asarray(omega)[..., None]
        return np.sum(self.alphas / (w - self.omegas) + self.betas / (w + self.omegas), axis=-1)

    def derivative(self, omega) -> np.ndarray:
        w = np.asarray(omega)[..., None]
        return -np.sum(self.alphas / (w - self.omegas) ** 2 + self.betas / (w + self.omegas) ** 2, axis=-1)

    def to_dict(self) -> dict:
        return {"omega": self.omegas.tolist(), "alpha": self.alphas.tolist(), "beta": self.betas.tolist()}

    @classmethod
    def from_dict(cls, d) -> LehmannSet:
        return cls.from_arrays(d["omega"], d["alpha"], d["beta"])

    def to_csv(self, path) -> None:
        data = np.column_stack([self.omegas, self.alphas, self.betas])
        np.savetxt(path, data, delimiter=",", header="omega,alpha,beta", comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path) -> LehmannSet:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls.from_arrays(data[:, 0], data[:, 1], data[:, 2])


@dataclass(frozen=True)
class GreensSeries:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, float)
        v = np.asarray(self.values, complex)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and values must be 1-d arrays of equal length")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def t_max(self) -> float:
        return float(self.times[-1])

    def window(self, t_fit: float) -> GreensSeries:
        keep = self.times <= t_fit + 1e-9
        return GreensSeries(self.times[keep], self.values[keep])

    def to_csv(self, path) -> None:
        data = np.column_stack([self.times, self.values.real, self.values.imag])
        np.savetxt(path, data, delimiter=",", header="t,ReG,ImG", comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path) -> GreensSeries:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1] + 1j * data[:, 2])


@dataclass(frozen=True)
class SelfEnergySamples:
    grid: MatsubaraGrid
    values: np.ndarray


# ---------------------------------------------------------------------------
# evolutions


class ExactEvolution:
    """Propagation through the eigenbasis of a :class:`~impurity_vqdmft.oracle.Spectrum`."""

    def __init__(self, spectrum, dt: float):
        self.spectrum = spectrum
        self.dt = dt

    def trajectory(self, psi, n_steps: int):
        S = self.spectrum.states
        coef = np.atleast_2d(psi) @ S.conj()  # rows: <k|psi>
        phase = np.exp(-1j * self.spectrum.energies * self.dt)
        for _ in range(n_steps + 1):
            yield coef @ S.T
            coef = coef * phase


class TrotterEvolution:
    def __init__(self, siam: SiamParams, dt: float, substeps: int = 1):
        from .circuits import trotter_step

        self.layout = QubitLayout(siam.B)
        self.dt = dt
        step = trotter_step(siam, dt / substeps, self.layout) * substeps
        self._mats = [(g.matrix(), g.qubits) for g in step]

    def step(self, psi):
        n = self.layout.n_qubits
        for m, q in self._mats:
            psi = _kernels.apply_gate(psi, m, q, n)
        return psi

    def trajectory(self, psi, n_steps: int):
        psi = np.atleast_2d(np.asarray(psi, complex))
        yield psi
        for _ in range(n_steps):
            psi = self.step(psi)
            yield psi


class CompressedEvolution:
    """``V(theta_n)`` from a compression trace; step 0 is the identity."""

    def __init__(self, circuit, params_per_step, dt: float):
        self.circuit = circuit
        self.params = [np.asarray(p, float) for p in params_per_step]
        self.dt = dt

    def trajectory(self, psi, n_steps: int):
        if n_steps > len(self.params):
            raise ValueError(f"trace covers {len(self.params)} steps, {n_steps} requested")
        psi = np.atleast_2d(np.asarray(psi, complex))
        yield psi
        for n in range(n_steps):
            yield self.circuit.apply(self.params[n], psi)


def _x_on(psi, q, n):
    return _kernels.apply_gate(psi, PAULI_X, (q,), n)


def greens_time_series(
    gs,
    evolution,
    layout: QubitLayout,
    n_steps: int,
    spin: int = 0,
    *,
    hadamard_check: bool = False,
) -> GreensSeries:
    """``G(t_n)`` for ``t_n = n dt``, ``n = 0..n_steps``.

    ``|psi> = U|GS>`` and ``|phi> = U X|GS>`` give
    ``G = Re<psi|X|phi> + i Re<psi|Y|phi>``.  With ``hadamard_check`` every
    value is recomputed with the ancilla interferometer (needs a dense
    propagator, so only for exact/Trotter evolutions on small systems).
    """
    gs = np.asarray(getattr(gs, "state", gs), complex).reshape(-1)
    n = layout.n_qubits
    q = layout.impurity(spin)
    pair = np.stack([gs, _x_on(gs[None, :], q, n)[0]])
    vals = np.empty(n_steps + 1, complex)
    for k, states in enumerate(evolution.trajectory(pair, n_steps)):
        psi, phi = states[0], states[1]
        xphi = _kernels.apply_gate(phi[None, :], PAULI_X, (q,), n)[0]
        yphi = _kernels.apply_gate(phi[None, :], PAULI_Y, (q,), n)[0]
        vals[k] = np.vdot(psi, xphi).real + 1j * np.vdot(psi, yphi).real
    times = np.arange(n_steps + 1) * evolution.dt
    if hadamard_check:
        _hadamard_crosscheck(gs, evolution, layout, q, vals, n_steps)
    return GreensSeries(times, vals)


def _hadamard_crosscheck(gs, evolution, layout, q, vals, n_steps, tol=1e-10):
    n = layout.n_qubits
    eye = np.eye(1 << n, dtype=complex)
    for k, U in enumerate(evolution.trajectory(eye, n_steps)):
        U = U.T
        re = hadamard_test(gs, Gate("X", (q,)), U, Gate("X", (q,)))
        im = hadamard_test(gs, Gate("X", (q,)), U, Gate("Y", (q,)))
        if abs(re + 1j * im - vals[k]) > tol:
            raise AssertionError(f"ancilla protocol disagrees at step {k}")


# ---------------------------------------------------------------------------
# Fourier seeds


def damped_ft(series: GreensSeries, eta: float = 0.1, pad: int = 8):
    """``F(w) = dt sum_n exp(i w t_n - eta t_n) G(t_n)`` on the padded FFT grid."""
    N = series.times.size
    M = max(pad * N, 1024)
    w = series.values * np.exp(-eta * series.times)
    F = np.fft.ifft(w, n=M) * M * series.dt
    omegas = 2 * np.pi * np.fft.fftfreq(M, d=series.dt)
    order = np.argsort(omegas)
    return omegas[order], F[order]


def fft_seed(series: GreensSeries, eta: float = 0.1, prominence: float = 0.02, pad: int = 8) -> list[float]:
    """Pole candidates (``w >= 0``) from peaks of the damped Fourier transform."""
    if series.times.size < 32:
        raise ValueError("series needs at least 32 samples")
    omegas, F = damped_ft(series, eta, pad)
    mag = np.abs(F)
    if mag.max() < 1e-12:
        return []
    peaks, _ = find_peaks(mag, prominence=prominence * mag.max())
    bin_w = 2 * np.pi / series.t_max
    out: list[float] = []
    for w in sorted(np.abs(omegas[peaks])):
        if not out or w - out[-1] > bin_w / 2:
            out.append(float(w))
    return out


# ---------------------------------------------------------------------------
# Lehmann fit


@dataclass(frozen=True)
class FitConfig:
    w_sum: float = 1e3
    w_root: float = 10.0
    w_deriv: float = 10.0
    delta_fit: float = 1e-2
    eta: float = 0.1
    max_poles: int = 16
    rel_improve: float = 1e-4
    patience: int = 3
    data_tol: float = 1e-12
    seed_window_bins: float = 2.0


@dataclass
class FitResult:
    lehmann: LehmannSet
    residual: float
    sum_rule_error: float
    converged: bool
    history: list = field(default_factory=list)


def _design(omegas, series: GreensSeries, siam: SiamParams | None, cfg: FitConfig):
    t = series.times
    J = omegas.size
    s = 1 / np.sqrt(t.size)
    wt = omegas[None, :] * t[:, None]
    c, sn = np.cos(wt), np.sin(wt)
    rows = [np.hstack([c, c]) * s, np.hstack([-sn, sn]) * s]
    rhs = [series.values.real * s, series.values.imag * s]
    rows.append(np.sqrt(cfg.w_sum) * np.ones((1, 2 * J)))
    rhs.append(np.array([np.sqrt(cfg.w_sum)]))
    if siam is not None:
        for eps, V in siam.bath:
            if abs(V) < 1e-12:
                continue
            dm = eps - omegas
            dp = eps + omegas
            dm = np.where(np.abs(dm) < 1e-9, 1e-9, dm)
            dp = np.where(np.abs(dp) < 1e-9, 1e-9, dp)
            rows.append(np.sqrt(cfg.w_root) * np.concatenate([1 / dm, 1 / dp])[None, :])
            rhs.append(np.zeros(1))
            rows.append(np.sqrt(cfg.w_deriv) * V * V * np.concatenate([1 / dm**2, 1 / dp**2])[None, :])
            rhs.append(np.array([np.sqrt(cfg.w_deriv)]))
    return np.vstack(rows), np.concatenate(rhs)


def _solve_weights(omegas, series, siam, cfg):
    A, b = _design(omegas, series, siam, cfg)
    x, _ = nnls(A, b, maxiter=50 * A.shape[1])
    return x, A @ x - b


def _refine(omegas, seeds, series, siam, cfg, bin_w):
    lo = np.maximum(seeds - cfg.seed_window_bins * bin_w, 0.0)
    hi = seeds + cfg.seed_window_bins * bin_w
    x0 = np.clip(omegas, lo + 1e-12, hi - 1e-12)

    def resid(w):
        return _solve_weights(w, series, siam, cfg)[1]

    res = least_squares(resid, x0, bounds=(lo, hi), method="trf", x_scale=bin_w, xtol=1e-12, ftol=1e-14, gtol=1e-14, max_nfev=200 * x0.size)
    w = res.x
    x, r = _solve_weights(w, series, siam, cfg)
    return w, x, float(r @ r)


def _pack(omegas, x) -> LehmannSet:
    J = omegas.size
    a, b = x[:J], x[J:]
    keep = (a + b) > 1e-10
    order = np.argsort(omegas[keep])
    return LehmannSet(omegas[keep][order], a[keep][order], b[keep][order])


def lehmann_fit(series: GreensSeries, siam: SiamParams | None, seeds=None, cfg: FitConfig | None = None) -> FitResult:
    """Fit the pole ansatz to ``series`` with sum-rule and bath-energy penalties.

    Pole weights enter linearly and are solved by non-negative least squares
    at fixed positions; positions are refined by bounded least squares within
    a window of two frequency bins around their seeds.  Further poles are
    inserted greedily at the frequency that most reduces the residual until
    the residual stops improving.
    """
    cfg = cfg or FitConfig()
    if seeds is None:
        seeds = fft_seed(series, cfg.eta)
    bin_w = 2 * np.pi / series.t_max
    seeds = np.asarray(sorted(seeds), float)
    if seeds.size == 0:
        seeds = np.array([0.0])
    omegas = seeds.copy()
    omegas, x, cost = _refine(omegas, seeds, series, siam, cfg, bin_w)
    history = [cost]
    scan = np.arange(0.0, max(omegas.max(), *(abs(siam.eps) if siam and siam.B else [0.0])) + 4.0, bin_w / 4)

    while omegas.size < cfg.max_poles and cost > cfg.data_tol:
        trial = [(_solve_weights(np.append(omegas, w), series, siam, cfg)[1], w) for w in scan]
        r_best, w_new = min(trial, key=lambda rw: rw[0] @ rw[0])
        seeds = np.append(seeds, w_new)
        omegas = np.append(omegas, w_new)
        omegas, x, cost = _refine(omegas, seeds, series, siam, cfg, bin_w)
        history.append(cost)
        logger.debug("lehmann fit: %d poles, cost %.3e", omegas.size, cost)
        if len(history) > cfg.patience:
            old = history[-1 - cfg.patience]
            if old - cost < cfg.rel_improve * old:
                break

    lset = _pack(omegas, x)
    err = abs(lset.total_weight - 1)
    return FitResult(lset, cost, err, err <= cfg.delta_fit, history)


# ---------------------------------------------------------------------------
# frequency domain


def lehmann_to_matsubara(lset: LehmannSet, grid: MatsubaraGrid) -> np.ndarray:
    return lset.real_axis(grid.iw)


def lehmann_to_realfreq(lset: LehmannSet, omega, eta: float) -> np.ndarray:
    if not eta > 0:
        raise ValueError("eta must be positive")
    return lset.real_axis(np.asarray(omega, float) + 1j * eta)


def spectral_function(lset: LehmannSet, omega, eta: float) -> np.ndarray:
    return -lehmann_to_realfreq(lset, omega, eta).imag / np.pi


def self_energy(g, siam: SiamParams, grid: MatsubaraGrid) -> SelfEnergySamples:
    g = np.asarray(g, complex)
    if np.any(np.abs(g) < 1e-14):
        raise ZeroDivisionError("Green's function vanishes on the grid")
    delta = hybridization_matsubara(siam, grid).values
    return SelfEnergySamples(grid, grid.iw + siam.mu - delta - 1 / g)


def quasiparticle_weight(sigma: SelfEnergySamples, k_fit: int = 2) -> float:
    if k_fit < 1:
        raise ValueError("k_fit must be at least 1")
    w = sigma.grid.omegas[:k_fit]
    y = sigma.values.imag[:k_fit]
    slope = y[0] / w[0] if k_fit == 1 else np.polyfit(w, y, 1)[0]
    if slope >= 1:
        raise ValueError(f"self-energy slope {slope:.3g} >= 1; input is unphysical")
    return float(1 / (1 - slope))


def realfreq_from_ft(series: GreensSeries, eta: float = 0.1, pad: int = 8):
    """Retarded ``G(w + i eta) = -i int_0^T exp(i w t - eta t) G(t) dt`` (trapezoid)."""
    vals = series.values.copy()
    vals[0] *= 0.5
    vals[-1] *= 0.5
    omegas, F = damped_ft(GreensSeries(series.times, vals), eta, pad)
    return omegas, -1j * F


def matsubara_from_ft(series: GreensSeries, grid: MatsubaraGrid, eta: float = 0.1, pad: int = 8) -> np.ndarray:
    """Matsubara ``G`` from the damped-FT spectral function by direct quadrature."""
    omegas, g = realfreq_from_ft(series, eta, pad)
    A = -g.imag / np.pi
    kern = 1 / (grid.iw[:, None] - omegas[None, :])
    return np.trapezoid(A[None, :] * kern, omegas, axis=1)


def z_from_lehmann(lset: LehmannSet, siam: SiamParams, grid: MatsubaraGrid, k_fit: int = 2) -> float:
    g = lehmann_to_matsubara(lset, grid)
    return quasiparticle_weight(self_energy(g, siam, grid), k_fit)


def z_vs_tfit(series: GreensSeries, siam: SiamParams, grid: MatsubaraGrid, t_fits, cfg: FitConfig | None = None, k_fit: int = 2):
    """Quasiparticle weight from fits on growing windows ``t <= t_fit``."""
    rows = []
    for tf in t_fits:
        fit = lehmann_fit(series.window(tf), siam, cfg=cfg)
        rows.append((float(tf), z_from_lehmann(fit.lehmann, siam, grid, k_fit), fit.sum_rule_error))
    return rows


def write_csv(path, header: list[str], rows) -> None:
    with Path(path).open("w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(_cell(x) for x in r) + "\n")


def _cell(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))
