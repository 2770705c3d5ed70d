"""Discrete Poisson-Boltzmann equation ``eps^2 (Lap phi)_i + exp(-phi_i) = rho_i``.

For ``eps > 0`` the equation is solved by damped Newton iterations whose
Jacobian is a strictly diagonally dominant cyclic tridiagonal matrix.  For
``eps = 0`` it degenerates to the algebraic relation ``phi = -log(rho)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DomainError, InternalError, PreconditionError
from .linalg import cyclic_tridiagonal_solve
from .mesh import PrimalField, h1_seminorm, lp_norm, mean

__all__ = [
    "PoissonConfig",
    "PoissonSolver",
    "solve_poisson",
    "poisson_residual",
    "EllipticReport",
    "elliptic_report",
]

_EPS = np.finfo(float).eps
MAX_HALVINGS = 30


@dataclass(frozen=True)
class PoissonConfig:
    epsilon: float
    newton_tol: float = 1e-15
    max_iter: int = 50
    initial_guess: str = "previous_solution"

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise DomainError(f"epsilon must be >= 0, got {self.epsilon!r}")
        if not self.newton_tol > 0:
            raise DomainError("newton_tol must be positive")
        if self.max_iter < 1:
            raise DomainError("max_iter must be >= 1")
        if self.initial_guess not in ("previous_solution", "log_density"):
            raise DomainError(f"unknown initial_guess policy {self.initial_guess!r}")


def _residual(phi, rho, c):
    """Residual and the magnitude of the summed terms (for the roundoff floor)."""
    left = np.roll(phi, 1)
    right = np.roll(phi, -1)
    e = np.exp(-phi)
    r = c * (right - 2.0 * phi + left) + e - rho
    scale = c * (np.abs(right) + 2.0 * np.abs(phi) + np.abs(left)) + e + np.abs(rho)
    return r, scale


def roundoff_floor(scale) -> float:
    """Smallest max-norm residual that floating point can resolve for these terms."""
    return 4.0 * _EPS * float(np.max(scale))


def poisson_residual(rho: PrimalField, phi: PrimalField, epsilon: float) -> PrimalField:
    c = epsilon**2 / rho.grid.dx**2
    r, _ = _residual(phi.values, rho.values, c)
    return PrimalField(rho.grid, r)


class PoissonSolver:
    """Newton solver with backtracking on the max-norm residual.

    The iteration stops once the residual is below ``newton_tol`` or below the
    roundoff floor of the residual evaluation, whichever is larger: with
    ``eps^2/dx^2`` large the three-point Laplacian cannot be evaluated to
    ``1e-15`` absolute.  ``iterations`` and ``residual`` describe the last solve.
    """

    def __init__(self, config: PoissonConfig):
        self.config = config
        self.iterations = 0
        self.residual = 0.0
        self.trace: list[float] = []

    def solve(self, rho: PrimalField, guess: PrimalField | None = None) -> PrimalField:
        phi = self.solve_values(rho.values, rho.grid.dx, None if guess is None else guess.values)
        return PrimalField(rho.grid, phi)

    def solve_values(self, rho, dx, guess=None):
        cfg = self.config
        rho = np.asarray(rho, dtype=float)
        if not np.all(rho > 0):
            raise DomainError("Poisson-Boltzmann solve needs a positive density")
        if cfg.epsilon == 0.0:
            self.iterations, self.residual, self.trace = 0, 0.0, [0.0]
            return -np.log(rho)

        c = cfg.epsilon**2 / dx**2
        if guess is None or cfg.initial_guess == "log_density":
            phi = -np.log(rho)
        else:
            phi = np.array(guess, dtype=float)

        r, scale = _residual(phi, rho, c)
        res = float(np.max(np.abs(r)))
        trace = [res]
        n = phi.shape[0]
        off = np.full(n, c)
        for it in range(cfg.max_iter + 1):
            floor = roundoff_floor(scale)
            if res <= max(cfg.newton_tol, floor):
                self.iterations, self.residual, self.trace = it, res, trace
                return phi
            if it == cfg.max_iter:
                break
            e = np.exp(-phi)
            if not np.all(e > 0):
                raise InternalError("Poisson Jacobian lost strict diagonal dominance")
            diag = -2.0 * c - e
            step = cyclic_tridiagonal_solve(off, diag, off, -r)
            lam = 1.0
            for _ in range(MAX_HALVINGS + 1):
                trial = phi + lam * step
                r_t, scale_t = _residual(trial, rho, c)
                res_t = float(np.max(np.abs(r_t)))
                if res_t < res:
                    break
                lam *= 0.5
            else:
                # no decrease possible: accept only if we already sit on the roundoff floor
                if res <= 64.0 * floor:
                    self.iterations, self.residual, self.trace = it, res, trace
                    return phi
                raise ConvergenceError(
                    f"Poisson Newton line search failed (residual {res:.3e})", res, trace
                )
            phi, r, scale, res = trial, r_t, scale_t, res_t
            trace.append(res)
        raise ConvergenceError(
            f"Poisson Newton did not converge in {cfg.max_iter} iterations (residual {res:.3e})",
            res,
            trace,
        )


def solve_poisson(rho: PrimalField, cfg: PoissonConfig, guess: PrimalField | None = None) -> PrimalField:
    """Solve ``eps^2 Lap(phi) + exp(-phi) = rho`` for ``phi``."""
    return PoissonSolver(cfg).solve(rho, guess)


@dataclass
class EllipticReport:
    """Outcome of the discrete elliptic estimates for one ``(rho, phi)`` pair.

    ``checks`` maps a check name to ``(lhs, rhs, ok)``; inequalities read
    ``lhs <= rhs`` and the ``exp_l1_equality`` entry compares both sides.
    """

    checks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(ok for _, _, ok in self.checks.values())

    def failures(self):
        return {k: v for k, v in self.checks.items() if not v[2]}

    def slack(self, name) -> float:
        lhs, rhs, _ = self.checks[name]
        return rhs - lhs


def elliptic_report(rho: PrimalField, phi: PrimalField, epsilon: float, rtol: float = 1e-12) -> EllipticReport:
    """Evaluate the a priori bounds satisfied by any discrete Poisson-Boltzmann solution.

    Raises :class:`PreconditionError` if ``phi`` does not solve the equation
    for ``rho`` up to roundoff.
    """
    if not np.all(rho.values > 0):
        raise PreconditionError("elliptic estimates need a positive density")
    grid = rho.grid
    dx = grid.dx
    c = epsilon**2 / dx**2
    r, scale = _residual(phi.values, rho.values, c)
    res = float(np.max(np.abs(r)))
    if res > max(1e-12, 64.0 * roundoff_floor(scale)):
        raise PreconditionError(f"phi does not solve the Poisson equation (residual {res:.3e})")

    def leq(lhs, rhs):
        lhs, rhs = float(lhs), float(rhs)
        return (lhs, rhs, lhs <= rhs + rtol * abs(rhs) + 1e-14)

    checks = {}
    e = PrimalField(grid, np.exp(-phi.values))
    for p in (1, 2, 3):
        checks[f"exp_lp_p{p}"] = leq(lp_norm(e, p), lp_norm(rho, p))
    l1e, l1r = lp_norm(e, 1), lp_norm(rho, 1)
    tol_eq = rtol * l1r + grid.domain_length * res
    checks["exp_l1_equality"] = (l1e, l1r, abs(l1e - l1r) <= tol_eq)

    ph = phi.values
    dphi = (np.roll(ph, -1) - ph) / dx
    for p in (1, 2, 3):
        w = np.exp(-(p - 1) * ph)
        dw = (np.roll(w, -1) - w) / dx
        lhs = epsilon**2 * np.sum(np.abs(dphi * dw)) * dx
        checks[f"grad_exp_p{p}"] = leq(lhs, lp_norm(rho, p) ** p)

    log_rho = np.log(rho.values)
    m, M = float(log_rho.min()), float(log_rho.max())
    tol_mp = 1e-12 * max(1.0, abs(m), abs(M))
    checks["max_principle_upper"] = (float((-ph).max()), M, float((-ph).max()) <= M + tol_mp)
    checks["max_principle_lower"] = (m, float((-ph).min()), m <= float((-ph).min()) + tol_mp)
    avg = mean(phi)
    checks["mean_upper"] = (-avg, M, -avg <= M + tol_mp)
    checks["mean_lower"] = (m, -avg, m <= -avg + tol_mp)

    alpha = np.exp(m)
    fluct = phi - avg
    bound = lp_norm(rho, 2) + lp_norm(rho, 1)
    checks["l2_fluctuation"] = leq(alpha * lp_norm(fluct, 2), bound)
    checks["h1_fluctuation"] = leq(epsilon * h1_seminorm(fluct), bound / np.sqrt(alpha))
    return EllipticReport(checks)
