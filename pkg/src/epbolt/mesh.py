"""Periodic staggered grid, cell fields and the discrete calculus on the torus.

Primal cells ``C_i`` are centred at ``x_i = i*dx`` and carry densities and
potentials; dual cells ``C_{i+1/2}`` are centred at ``x_{i+1/2} = x_i + dx/2``
and carry velocities.  Both field kinds store exactly ``n_cells`` values and
every neighbour access wraps around (no ghost cells).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, GridMismatchError

__all__ = [
    "PeriodicGrid",
    "PrimalField",
    "DualField",
    "discrete_gradient",
    "discrete_laplacian",
    "h1_seminorm",
    "lp_norm",
    "mean",
]


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid on the torus ``[0, domain_length)``."""

    n_cells: int
    domain_length: float = 1.0

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 1:
            raise DomainError(f"n_cells must be a positive integer, got {self.n_cells!r}")
        if not self.domain_length > 0:
            raise DomainError(f"domain_length must be positive, got {self.domain_length!r}")
        object.__setattr__(self, "n_cells", int(self.n_cells))
        object.__setattr__(self, "domain_length", float(self.domain_length))

    @property
    def dx(self) -> float:
        return self.domain_length / self.n_cells

    @cached_property
    def primal_centers(self) -> np.ndarray:
        x = np.arange(self.n_cells) * self.dx
        x.flags.writeable = False
        return x

    @cached_property
    def dual_centers(self) -> np.ndarray:
        x = (np.arange(self.n_cells) + 0.5) * self.dx
        x.flags.writeable = False
        return x

    def wrap(self, i):
        """Map any integer index (or integer array) to ``0..n_cells-1``."""
        return np.mod(i, self.n_cells)

    def primal(self, values) -> "PrimalField":
        return PrimalField(self, values)

    def dual(self, values) -> "DualField":
        return DualField(self, values)

    def primal_constant(self, c: float) -> "PrimalField":
        return PrimalField(self, np.full(self.n_cells, float(c)))

    def dual_constant(self, c: float) -> "DualField":
        return DualField(self, np.full(self.n_cells, float(c)))


class _CellField:
    """Read-only array of cell values bound to a grid.

    Binary arithmetic is allowed with scalars or with a field of the same
    kind on the same grid; anything else raises :class:`GridMismatchError`.
    """

    __slots__ = ("grid", "values")
    kind = "cell"

    def __init__(self, grid: PeriodicGrid, values):
        arr = np.array(values, dtype=float, copy=True)
        if arr.ndim == 0:
            arr = np.full(grid.n_cells, float(arr))
        if arr.shape != (grid.n_cells,):
            raise DomainError(
                f"{type(self).__name__} on {grid.n_cells} cells needs {grid.n_cells} values, got shape {arr.shape}"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    def __len__(self):
        return self.grid.n_cells

    def __getitem__(self, i):
        if isinstance(i, (int, np.integer)):
            return float(self.values[i % self.grid.n_cells])
        return self.values[i]

    def __iter__(self):
        return iter(self.values.tolist())

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.values
        return self.values.astype(dtype)

    def __repr__(self):
        return f"{type(self).__name__}(n_cells={self.grid.n_cells}, values={self.values!r})"

    def __eq__(self, other):
        return (
            type(other) is type(self)
            and other.grid == self.grid
            and np.array_equal(other.values, self.values)
        )

    __hash__ = None

    def _operand(self, other):
        if isinstance(other, _CellField):
            if type(other) is not type(self):
                raise GridMismatchError(
                    f"cannot combine {type(self).__name__} with {type(other).__name__}"
                )
            if other.grid != self.grid:
                raise GridMismatchError("fields live on different grids")
            return other.values
        if np.ndim(other) != 0:
            raise GridMismatchError("fields combine only with scalars or fields of the same grid")
        return float(other)

    def _new(self, values):
        return type(self)(self.grid, values)

    def __add__(self, other):
        return self._new(self.values + self._operand(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._new(self.values - self._operand(other))

    def __rsub__(self, other):
        return self._new(self._operand(other) - self.values)

    def __mul__(self, other):
        return self._new(self.values * self._operand(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._new(self.values / self._operand(other))

    def __neg__(self):
        return self._new(-self.values)

    def shift(self, k: int):
        """Values at index ``i + k`` (periodic)."""
        return np.roll(self.values, -k)

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def integral(self) -> float:
        """``sum_i f_i dx``."""
        return float(np.sum(self.values) * self.grid.dx)


class PrimalField(_CellField):
    """Cell averages over the primal cells ``C_i``."""

    __slots__ = ()
    kind = "primal"


class DualField(_CellField):
    """Cell averages over the dual cells ``C_{i+1/2}`` (index ``i`` holds ``i+1/2``)."""

    __slots__ = ()
    kind = "dual"


def check_same_grid(*fields) -> PeriodicGrid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError("fields live on different grids")
    return grid


def discrete_gradient(phi: PrimalField) -> DualField:
    """``(phi_{i+1} - phi_i) / dx`` at every dual point."""
    v = phi.values
    return DualField(phi.grid, (np.roll(v, -1) - v) / phi.grid.dx)


def discrete_laplacian(phi: PrimalField) -> PrimalField:
    """Three-point Laplacian ``(phi_{i+1} - 2 phi_i + phi_{i-1}) / dx**2``."""
    v = phi.values
    return PrimalField(phi.grid, (np.roll(v, -1) - 2.0 * v + np.roll(v, 1)) / phi.grid.dx**2)


def dual_divergence(v: DualField) -> PrimalField:
    """``(v_{i+1/2} - v_{i-1/2}) / dx`` at every primal point."""
    w = v.values
    return PrimalField(v.grid, (w - np.roll(w, 1)) / v.grid.dx)


def h1_seminorm(phi: PrimalField) -> float:
    grad = (np.roll(phi.values, -1) - phi.values) / phi.grid.dx
    return float(np.sqrt(np.sum(grad**2) * phi.grid.dx))


def lp_norm(f, p=2.0) -> float:
    """Discrete ``L^p`` norm ``(sum |f_i|^p dx)^(1/p)``; ``p=inf`` gives the max norm."""
    if not (p == np.inf or p >= 1):
        raise DomainError(f"lp_norm needs p >= 1 or p = inf, got {p!r}")
    a = np.abs(f.values)
    if p == np.inf:
        return float(a.max())
    if p == 1:
        return float(np.sum(a) * f.grid.dx)
    return float((np.sum(a**p) * f.grid.dx) ** (1.0 / p))


def mean(f) -> float:
    """Discrete average ``(1/L) sum f_i dx``."""
    return float(np.sum(f.values) * f.grid.dx / f.grid.domain_length)
