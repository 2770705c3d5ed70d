"""Initial states for the experiments.

Fluctuation data on the unit torus around ``(rho_bar, u_bar) = (1, u_bar)``
are discretised as exact cell averages, so that for a mode ``sin(2 pi k x)``
the average over ``[a, b]`` is ``(cos(2 pi k a) - cos(2 pi k b)) / (2 pi k dx)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DomainError, PreconditionError
from .mesh import DualField, PeriodicGrid, PrimalField
from .poisson import PoissonConfig
from .state import PlasmaState

__all__ = [
    "ExperimentSpec",
    "KINDS",
    "well_prepared",
    "ill_prepared",
    "five_branch",
    "five_branch_density",
    "from_file",
    "build_initial_state",
]

KINDS = ("well_prepared", "ill_prepared", "five_branch", "custom_file")


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    epsilon: float
    n_cells: int
    dt: float
    n_steps: int
    s_exponent: float = 1.0
    u_bar: float = 0.0
    domain_length: float = 1.0
    input_file: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if not self.epsilon >= 0:
            raise DomainError("epsilon must be >= 0")
        if self.n_cells < 2:
            raise DomainError("n_cells must be >= 2")
        if not self.dt > 0:
            raise DomainError("dt must be positive")
        if self.n_steps < 0:
            raise DomainError("n_steps must be >= 0")
        if not self.domain_length > 0:
            raise DomainError("domain_length must be positive")

    @property
    def grid(self) -> PeriodicGrid:
        return PeriodicGrid(self.n_cells, self.domain_length)

    @property
    def final_time(self) -> float:
        return self.n_steps * self.dt


def _sine_cell_average(k, left, right, dx):
    return (np.cos(2 * np.pi * k * left) - np.cos(2 * np.pi * k * right)) / (2 * np.pi * k * dx)


def _fluctuation(spec: ExperimentSpec, rho_amp: float, u_amp: float) -> PlasmaState:
    if spec.epsilon == 0:
        raise DomainError("fluctuation data needs epsilon > 0 (the density mode is floor(1/epsilon))")
    if spec.domain_length != 1.0:
        raise DomainError("fluctuation data is defined on the unit torus (domain_length = 1)")
    grid = spec.grid
    dx = grid.dx
    x = grid.primal_centers
    k = math.floor(1.0 / spec.epsilon)
    # primal cell [x_i - dx/2, x_i + dx/2]; dual cell [x_i, x_{i+1}]
    rho = 1.0 + rho_amp * _sine_cell_average(k, x - dx / 2, x + dx / 2, dx)
    u = spec.u_bar + u_amp * _sine_cell_average(1, x, x + dx, dx)
    if not np.all(rho > 0):
        raise DomainError("fluctuation amplitude makes the density non-positive")
    return PlasmaState.from_density(grid.primal(rho), grid.dual(u), spec.epsilon)


def well_prepared(spec: ExperimentSpec) -> PlasmaState:
    """``rho = 1 + eps^s/2 sin(2 pi floor(1/eps) x)``, ``u = u_bar + eps sin(2 pi x)``."""
    return _fluctuation(spec, 0.5 * spec.epsilon**spec.s_exponent, spec.epsilon)


def ill_prepared(spec: ExperimentSpec) -> PlasmaState:
    """``rho = 1 + sin(2 pi floor(1/eps) x)/2``, ``u = u_bar + sin(2 pi x)``."""
    return _fluctuation(spec, 0.5, 1.0)


BUMP_LEFT = 3 * math.pi / 4
BUMP_RIGHT = 5 * math.pi / 4


def five_branch_density(x):
    """``0.1 + exp(0.1 / ((x - 3pi/4)(x - 5pi/4)))`` inside the bump, ``0.1`` outside."""
    x = np.asarray(x, dtype=float)
    inside = (x > BUMP_LEFT) & (x < BUMP_RIGHT)
    q = np.where(inside, (x - BUMP_LEFT) * (x - BUMP_RIGHT), -1.0)
    return 0.1 + np.where(inside, np.exp(0.1 / q), 0.0)


def _gauss_average(f, left, right, order=5):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    pts = mid[:, None] + half[:, None] * nodes[None, :]
    return 0.5 * (f(pts) @ weights)


def five_branch(spec: ExperimentSpec) -> PlasmaState:
    """Bump density with ``u = sin(x)^3`` on the torus of length ``2 pi``; 5-point Gauss cell averages."""
    if not math.isclose(spec.domain_length, 2 * math.pi, rel_tol=1e-12):
        raise DomainError("five-branch data lives on a torus of length 2*pi")
    grid = spec.grid
    dx = grid.dx
    x = grid.primal_centers
    rho = _gauss_average(five_branch_density, x - dx / 2, x + dx / 2)
    u = _gauss_average(lambda y: np.sin(y) ** 3, x, x + dx)
    cfg = PoissonConfig(epsilon=spec.epsilon, initial_guess="log_density")
    return PlasmaState.from_density(grid.primal(rho), grid.dual(u), spec.epsilon, poisson=cfg)


def from_file(spec: ExperimentSpec) -> PlasmaState:
    """Read ``rho,u`` rows (cell ``i`` density, velocity at ``x_{i+1/2}``) from a CSV with a header."""
    if not spec.input_file:
        raise DomainError("custom_file needs input_file")
    path = Path(spec.input_file)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"rho", "u"} <= set(reader.fieldnames):
            raise PreconditionError(f"{path}: header must contain 'rho' and 'u'")
        rows = [(float(r["rho"]), float(r["u"])) for r in reader]
    if len(rows) != spec.n_cells:
        raise PreconditionError(f"{path}: {len(rows)} rows but n_cells = {spec.n_cells}")
    data = np.array(rows)
    if not np.all(data[:, 0] > 0):
        raise PreconditionError(f"{path}: density must be positive")
    grid = spec.grid
    return PlasmaState.from_density(grid.primal(data[:, 0]), grid.dual(data[:, 1]), spec.epsilon)


def build_initial_state(spec: ExperimentSpec) -> PlasmaState:
    return {
        "well_prepared": well_prepared,
        "ill_prepared": ill_prepared,
        "five_branch": five_branch,
        "custom_file": from_file,
    }[spec.kind](spec)
