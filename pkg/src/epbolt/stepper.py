"""Fully implicit time step solved by a Picard fixed-point iteration.

One application of the Picard map ``T`` takes a velocity guess ``u_k`` and

1. solves the implicit continuity equation for ``rho_bar(u_k)``,
2. solves the Poisson-Boltzmann equation for ``phi(rho_bar)``,
3. solves the momentum equation (fluxes frozen at ``u_k``) for ``v = T(u_k)``.

The loop stops once the relative max-norm increment ``|v - u_k| / |u_k|``
drops below ``picard_rel_tol`` (absolute increment when ``u_k = 0``); the new
state is then ``(rho_bar(u_k), u_k, phi(rho_bar(u_k)))``.

With ``picard_relaxation = w < 1`` the update is ``u_{k+1} = u_k + w (v - u_k)``.
Fixed points and the stopping test are unchanged; the relaxation only damps
the grid-scale acoustic mode, whose Picard multiplier sits near ``-1`` when
``dt = dx/2`` and drops below ``-1`` across steep density gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .errors import ConvergenceError, DomainError, EPBError
from .flux import FluxScheme
from .mesh import DualField, PrimalField
from .poisson import PoissonConfig, PoissonSolver
from .state import PlasmaState
from .transport import MomentumProblem, _continuity_values

__all__ = [
    "PlasmaState",
    "StepConfig",
    "StepInfo",
    "PicardResult",
    "StepFailure",
    "picard_map",
    "advance",
    "run",
    "RunResult",
    "CFLReport",
    "cfl_bound",
]


@dataclass(frozen=True)
class StepConfig:
    dt: float
    picard_rel_tol: float = 1e-7
    picard_max_iter: int = 200
    poisson_cfg: Optional[PoissonConfig] = None
    newton_tol_momentum: float = 1e-15
    momentum_max_iter: int = 50
    picard_relaxation: float = 1.0

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise DomainError(f"dt must be positive and finite, got {self.dt!r}")
        if not self.picard_rel_tol > 0:
            raise DomainError("picard_rel_tol must be positive")
        if self.picard_max_iter < 1:
            raise DomainError("picard_max_iter must be >= 1")
        if not 0 < self.picard_relaxation <= 1:
            raise DomainError("picard_relaxation must lie in (0, 1]")

    def poisson_for(self, epsilon: float) -> PoissonConfig:
        if self.poisson_cfg is None:
            return PoissonConfig(epsilon=epsilon)
        if self.poisson_cfg.epsilon != epsilon:
            raise DomainError("Poisson config epsilon differs from the state epsilon")
        return self.poisson_cfg


@dataclass
class PicardResult:
    rho_bar: np.ndarray
    phi: np.ndarray
    v: np.ndarray
    poisson_iters: int
    momentum_iters: int


@dataclass
class StepInfo:
    picard_iters: int
    increments: list = field(default_factory=list)


class StepFailure(EPBError, RuntimeError):
    """A time step failed; ``step`` is the index of the step being computed."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step} failed: {cause}")
        self.step = step
        self.cause = cause


def picard_map(
    scheme: FluxScheme,
    state: PlasmaState,
    u_guess,
    cfg: StepConfig,
    phi_guess=None,
    poisson: PoissonSolver | None = None,
) -> PicardResult:
    """One application of the Picard map starting from the velocity ``u_guess``."""
    grid = state.grid
    dx, dt = grid.dx, cfg.dt
    u_k = np.asarray(u_guess, dtype=float)
    rho_n = state.rho.values
    rho_bar = _continuity_values(scheme, rho_n, u_k, dt, dx)
    solver = poisson or PoissonSolver(cfg.poisson_for(state.epsilon))
    phi = solver.solve_values(rho_bar, dx, state.phi.values if phi_guess is None else phi_guess)
    rho_n_dual = 0.5 * (rho_n + np.roll(rho_n, -1))
    problem = MomentumProblem(scheme, rho_bar, phi, u_k, rho_n_dual, state.u.values, dt, dx)
    v, trace = problem.solve_from(
        (u_k, state.u.values), tol=cfg.newton_tol_momentum, max_iter=cfg.momentum_max_iter
    )
    return PicardResult(rho_bar, phi, v, solver.iterations, len(trace) - 1)


def advance(scheme: FluxScheme, state: PlasmaState, cfg: StepConfig):
    """Advance ``state`` by one step of size ``cfg.dt``.

    Returns ``(new_state, picard_iters)`` where ``picard_iters`` counts the
    applications of the Picard map (a steady state takes one).
    """
    if not np.all(state.rho.values > 0):
        raise DomainError("density must be positive")
    solver = PoissonSolver(cfg.poisson_for(state.epsilon))
    u_k = state.u.values.copy()
    phi_guess = state.phi.values
    increments = []
    for k in range(cfg.picard_max_iter):
        res = picard_map(scheme, state, u_k, cfg, phi_guess=phi_guess, poisson=solver)
        inc = float(np.max(np.abs(res.v - u_k)))
        norm = float(np.max(np.abs(u_k)))
        crit = inc / norm if norm > 0 else inc
        increments.append(crit)
        if crit <= cfg.picard_rel_tol:
            grid = state.grid
            new = PlasmaState(
                rho=PrimalField(grid, res.rho_bar),
                u=DualField(grid, u_k),
                phi=PrimalField(grid, res.phi),
                epsilon=state.epsilon,
                time=state.time + cfg.dt,
            )
            return new, k + 1
        w = cfg.picard_relaxation
        u_k = res.v if w == 1.0 else u_k + w * (res.v - u_k)
        phi_guess = res.phi
    raise ConvergenceError(
        f"Picard iteration did not converge in {cfg.picard_max_iter} iterations "
        f"(last increment {increments[-1]:.3e})",
        increments[-1],
        increments,
    )


Observer = Callable[[int, PlasmaState, PlasmaState, int], None]


@dataclass
class RunResult:
    state: PlasmaState
    steps: int
    picard_iters: list


def run(
    scheme: FluxScheme,
    state: PlasmaState,
    cfg: StepConfig,
    n_steps: int,
    observers: Iterable[Observer] = (),
) -> RunResult:
    """Take ``n_steps`` steps, calling ``obs(step, old, new, picard_iters)`` after each.

    ``step`` is 1-based.  A failure inside step ``k`` is re-raised as
    :class:`StepFailure` with ``step = k``; observers have already seen
    steps ``1 .. k-1``.
    """
    if n_steps < 0:
        raise DomainError("n_steps must be >= 0")
    observers = list(observers)
    iters = []
    for k in range(1, n_steps + 1):
        try:
            new, n_it = advance(scheme, state, cfg)
        except EPBError as exc:
            raise StepFailure(k, exc) from exc
        for obs in observers:
            obs(k, state, new, n_it)
        iters.append(n_it)
        state = new
    return RunResult(state=state, steps=n_steps, picard_iters=iters)


@dataclass(frozen=True)
class CFLReport:
    dt_max: float
    small_velocity: bool

    @property
    def admissible(self) -> bool:
        return self.small_velocity


def cfl_bound(scheme: FluxScheme, u_bar: float, K: float, dx: float, epsilon: float) -> CFLReport:
    """Sufficient time step bound of the linear stability analysis about ``(u_bar, phi_bar)``.

    ``K`` bounds the reference density; the bound is infinite when
    ``u_bar = 0``.  ``small_velocity`` reports ``|u_bar| <= g(0) / Lip(g)``,
    the other hypothesis of the analysis.
    """
    if not (dx > 0 and K >= 0):
        raise DomainError("need dx > 0 and K >= 0")
    if not epsilon > 0:
        raise DomainError("the CFL bound needs epsilon > 0")
    small = abs(u_bar) <= scheme.g0 / scheme.lip_g
    if u_bar == 0:
        return CFLReport(math.inf, small)
    denom = abs(u_bar) / dx * (8 * scheme.lip_g + 4 + 2 * dx**2 * K / epsilon**2)
    return CFLReport(1.0 / denom, small)
