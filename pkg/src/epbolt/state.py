"""One time level of the plasma model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PreconditionError
from .mesh import DualField, PeriodicGrid, PrimalField, check_same_grid
from .poisson import PoissonConfig, PoissonSolver, _residual, roundoff_floor

__all__ = ["PlasmaState"]


@dataclass(frozen=True)
class PlasmaState:
    """Density and potential on primal cells, velocity on dual cells."""

    rho: PrimalField
    u: DualField
    phi: PrimalField
    epsilon: float
    time: float = 0.0

    def __post_init__(self):
        check_same_grid(self.rho, self.u, self.phi)
        if not self.epsilon >= 0:
            raise DomainError("epsilon must be >= 0")

    @property
    def grid(self) -> PeriodicGrid:
        return self.rho.grid

    @classmethod
    def from_density(cls, rho: PrimalField, u: DualField, epsilon: float, time: float = 0.0,
                     poisson: PoissonConfig | None = None) -> "PlasmaState":
        """Build a state whose potential solves the Poisson equation for ``rho``."""
        cfg = poisson or PoissonConfig(epsilon=epsilon, initial_guess="log_density")
        if cfg.epsilon != epsilon:
            raise DomainError("Poisson config epsilon differs from the state epsilon")
        phi = PoissonSolver(cfg).solve(rho)
        return cls(rho=rho, u=u, phi=phi, epsilon=float(epsilon), time=float(time))

    def poisson_residual(self) -> float:
        if self.epsilon == 0.0:
            return float(np.max(np.abs(np.exp(-self.phi.values) - self.rho.values)))
        c = self.epsilon**2 / self.grid.dx**2
        r, _ = _residual(self.phi.values, self.rho.values, c)
        return float(np.max(np.abs(r)))

    def validate(self, tol: float = 1e-12) -> None:
        """Positivity of ``rho`` and the Poisson relation (up to roundoff)."""
        if not np.all(self.rho.values > 0):
            raise PreconditionError("density must be positive")
        if self.epsilon == 0.0:
            expected = -np.log(self.rho.values)
            if not np.allclose(self.phi.values, expected, rtol=0, atol=tol * max(1.0, np.abs(expected).max())):
                raise PreconditionError("phi must equal -log(rho) when epsilon = 0")
            return
        c = self.epsilon**2 / self.grid.dx**2
        r, scale = _residual(self.phi.values, self.rho.values, c)
        res = float(np.max(np.abs(r)))
        if res > max(tol, 64.0 * roundoff_floor(scale)):
            raise PreconditionError(f"phi violates the Poisson equation (residual {res:.3e})")
