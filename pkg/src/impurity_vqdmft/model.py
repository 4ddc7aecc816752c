"""Hubbard/Anderson parameters, Matsubara machinery and the bath fit."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HubbardParams:
    U: float
    mu: float
    v: float = 1.0

    def __post_init__(self):
        if not self.v > 0:
            raise ValueError("hopping v must be positive")
        if self.U < 0:
            raise ValueError("interaction U must be non-negative")


@dataclass(frozen=True)
class SiamParams:
    """Star-geometry Anderson impurity: ``bath`` is a tuple of ``(eps_p, V_p)``.

    The order of ``bath`` fixes the qubit assignment (site ``p`` is bath
    entry ``p - 1``).
    """

    U: float
    mu: float
    bath: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        bath = tuple((float(e), float(v)) for e, v in self.bath)
        if not all(np.isfinite(e) and np.isfinite(v) for e, v in bath):
            raise ValueError("bath parameters must be finite")
        object.__setattr__(self, "bath", bath)

    @property
    def B(self) -> int:
        return len(self.bath)

    @property
    def eps(self) -> np.ndarray:
        return np.array([e for e, _ in self.bath], dtype=float)

    @property
    def V(self) -> np.ndarray:
        return np.array([v for _, v in self.bath], dtype=float)

    @classmethod
    def from_arrays(cls, U, mu, eps, V) -> SiamParams:
        return cls(U=U, mu=mu, bath=tuple(zip(np.asarray(eps, float), np.asarray(V, float))))

    def canonical(self) -> SiamParams:
        """|V_p| and bath sites sorted by energy; removes the gauge freedom."""
        pairs = sorted((e, abs(v)) for e, v in self.bath)
        return replace(self, bath=tuple(pairs))

    def to_dict(self) -> dict:
        return {"U": self.U, "mu": self.mu, "eps": self.eps.tolist(), "V": self.V.tolist()}

    @classmethod
    def from_dict(cls, d) -> SiamParams:
        return cls.from_arrays(d["U"], d["mu"], d["eps"], d["V"])


@dataclass(frozen=True)
class MatsubaraGrid:
    beta: float = 200.0
    n_max: int = 200
    omegas: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.n_max < 0:
            raise ValueError("n_max must be non-negative")
        n = np.arange(self.n_max + 1)
        object.__setattr__(self, "omegas", (2 * n + 1) * np.pi / self.beta)

    @property
    def iw(self) -> np.ndarray:
        return 1j * self.omegas

    def __len__(self):
        return self.n_max + 1


@dataclass(frozen=True)
class HybridizationSamples:
    grid: MatsubaraGrid
    values: np.ndarray


def hybridization_matsubara(siam: SiamParams, grid: MatsubaraGrid) -> HybridizationSamples:
    iw = grid.iw[:, None]
    vals = np.sum(siam.V[None, :] ** 2 / (iw - siam.eps[None, :]), axis=1)
    return HybridizationSamples(grid, np.asarray(vals, dtype=complex))


def weiss_function(siam: SiamParams, grid: MatsubaraGrid) -> np.ndarray:
    """Inverse non-interacting impurity propagator ``iw + mu - Delta(iw)``."""
    return grid.iw + siam.mu - hybridization_matsubara(siam, grid).values


def bethe_target(g_imp, v: float, grid: MatsubaraGrid) -> HybridizationSamples:
    """Bethe-lattice self-consistency ``Delta = v**2 G``."""
    g = np.asarray(g_imp, dtype=complex)
    if len(g) != len(grid):
        raise ValueError("g_imp is not sampled on the given grid")
    return HybridizationSamples(grid, v**2 * g)


def bethe_g0(grid: MatsubaraGrid, mu: float, v: float = 1.0) -> np.ndarray:
    """Non-interacting local Green's function of the infinite-connectivity
    Bethe lattice (semicircular DOS of half-width ``2v``)."""
    z = grid.iw + mu
    root = np.sqrt(z * z - 4 * v * v)
    # branch with G ~ 1/z at large |z|, i.e. Im G < 0 on the upper half plane
    root = np.where(np.imag(z) * np.imag(root) < 0, -root, root)
    return (z - root) / (2 * v * v)


def _cost_norm(grid: MatsubaraGrid) -> float:
    return 1.0 / max(grid.n_max, 1)


def mapping_cost(siam: SiamParams, target: HybridizationSamples) -> float:
    delta = hybridization_matsubara(siam, target.grid).values
    return float(_cost_norm(target.grid) * np.sum(np.abs(target.values - delta) ** 2))


def mapping_cost_grad(eps, V, target: HybridizationSamples):
    """Cost and its analytic gradient with respect to ``(eps, V)``."""
    eps = np.asarray(eps, float)
    V = np.asarray(V, float)
    iw = target.grid.iw[:, None]
    den = iw - eps[None, :]
    delta = np.sum(V**2 / den, axis=1)
    r = target.values - delta
    norm = _cost_norm(target.grid)
    d_eps = V**2 / den**2
    d_V = 2 * V / den
    g_eps = -2 * norm * np.real(np.conj(r)[:, None] * d_eps).sum(axis=0)
    g_V = -2 * norm * np.real(np.conj(r)[:, None] * d_V).sum(axis=0)
    return float(norm * np.sum(np.abs(r) ** 2)), g_eps, g_V


class BathFitNotConverged(RuntimeError):
    """Raised when no restart of the bath fit converged; ``best`` holds the
    lowest-cost parameters seen."""

    def __init__(self, best: SiamParams, cost: float):
        super().__init__(f"bath fit did not converge (best cost {cost:.3e})")
        self.best = best
        self.cost = cost


def _residuals(x, target, B):
    eps, V = x[:B], x[B:]
    iw = target.grid.iw[:, None]
    delta = np.sum(V**2 / (iw - eps), axis=1)
    r = (delta - target.values) * np.sqrt(_cost_norm(target.grid))
    return np.concatenate([r.real, r.imag])


def _jacobian(x, target, B):
    eps, V = x[:B], x[B:]
    iw = target.grid.iw[:, None]
    den = iw - eps
    jac = np.concatenate([V**2 / den**2, 2 * V / den], axis=1) * np.sqrt(_cost_norm(target.grid))
    return np.concatenate([jac.real, jac.imag], axis=0)


def bath_fit(
    target: HybridizationSamples,
    B: int,
    init: SiamParams | None = None,
    *,
    U: float | None = None,
    mu: float | None = None,
    restarts: int = 8,
    seed: int = 0,
    tol: float = 1e-14,
) -> SiamParams:
    """Fit ``B`` discrete bath sites to a Matsubara hybridization.

    Local least-squares descent (analytic Jacobian) from the warm start plus
    ``restarts`` random initial points; the lowest-cost result is returned in
    canonical form.  ``U`` and ``mu`` are copied from ``init`` unless given.
    """
    if B < 1:
        raise ValueError("bath_fit needs B >= 1")
    if init is not None:
        U = init.U if U is None else U
        mu = init.mu if mu is None else mu
    if U is None or mu is None:
        raise ValueError("U and mu must be given when there is no init")

    rng = np.random.default_rng(seed)
    # sum_p V_p^2 from the 1/(iw) tail of the target
    w_last = target.grid.omegas[-1]
    v2 = max(float(-np.imag(target.values[-1]) * w_last), 1e-6)
    starts = []
    if init is not None and init.B == B:
        starts.append(np.concatenate([init.eps, np.abs(init.V)]))
    else:
        # evenly spread sites sharing the tail weight
        starts.append(np.concatenate([np.linspace(-1.0, 1.0, B) if B > 1 else [0.0], np.full(B, np.sqrt(v2 / B))]))
    for _ in range(restarts):
        eps0 = np.sort(rng.uniform(-2.0, 2.0, B))
        V0 = np.sqrt(v2 / B) * rng.uniform(0.5, 1.5, B)
        starts.append(np.concatenate([eps0, V0]))

    best_x, best_cost, any_ok = None, np.inf, False
    for x0 in starts:
        res = least_squares(
            _residuals, x0, jac=_jacobian, args=(target, B), method="lm",
            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000,
        )
        cost = float(2 * res.cost)
        ok = res.status > 0 or cost < tol
        if cost < best_cost:
            best_x, best_cost = res.x, cost
        any_ok |= ok
        logger.debug("bath restart cost=%.3e status=%d", cost, res.status)

    best = SiamParams.from_arrays(U, mu, best_x[:B], best_x[B:]).canonical()
    if init is not None and init.B == B:
        init_cost = mapping_cost(init, target)
        if init_cost <= best_cost:
            best, best_cost = init.canonical(), init_cost
    if not any_ok:
        raise BathFitNotConverged(best, best_cost)
    return best
