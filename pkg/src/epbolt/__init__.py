"""Implicit staggered finite volumes for the Euler-Poisson-Boltzmann system on the 1-D torus."""

from .diagnostics import (
    ConstantState,
    DiagnosticsRecord,
    dissipation_rate,
    mass,
    modulated_energy,
    tau,
    total_energy,
    total_momentum,
)
from .errors import (
    ConvergenceError,
    DomainError,
    EPBError,
    GridMismatchError,
    InternalError,
    PreconditionError,
)
from .flux import FluxScheme, QuadraticUpwind
from .initial_data import ExperimentSpec, build_initial_state, five_branch, ill_prepared, well_prepared
from .mesh import DualField, PeriodicGrid, PrimalField
from .poisson import PoissonConfig, PoissonSolver, elliptic_report, solve_poisson
from .state import PlasmaState
from .stepper import StepConfig, StepFailure, advance, cfl_bound, picard_map, run

__version__ = "0.1.0"
