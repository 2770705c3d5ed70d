"""Scalar functionals of plasma states: mass, energies and the dissipation ``tau``."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import DomainError
from .flux import FluxScheme

__all__ = [
    "ConstantState",
    "DiagnosticsRecord",
    "mass",
    "total_momentum",
    "total_energy",
    "modulated_energy",
    "modulated_energy_split",
    "tau",
    "tau_terms",
    "dissipation_rate",
    "make_record",
]


def h(s):
    """Potential energy density ``-(s + 1) exp(-s)``."""
    return -(s + 1.0) * np.exp(-s)


@dataclass(frozen=True)
class ConstantState:
    """Reference state ``(u_bar, phi_bar)`` with ``rho_bar = exp(-phi_bar)``."""

    u_bar: float = 0.0
    phi_bar: float = 0.0

    @property
    def rho_bar(self) -> float:
        return math.exp(-self.phi_bar)


@dataclass
class DiagnosticsRecord:
    step: int
    time: float
    mass: float
    momentum: float
    total_energy: float
    modulated_energy: float
    tau: float
    picard_iters: int
    min_rho: float
    max_rho: float

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def as_dict(self):
        return asdict(self)


def _dual_rho(rho):
    return 0.5 * (rho + np.roll(rho, -1))


def mass(state) -> float:
    return float(np.sum(state.rho.values) * state.grid.dx)


def total_momentum(state) -> float:
    return float(np.sum(_dual_rho(state.rho.values) * state.u.values) * state.grid.dx)


def _field_energy(state) -> float:
    phi = state.phi.values
    dphi = (np.roll(phi, -1) - phi) / state.grid.dx
    return 0.5 * state.epsilon**2 * float(np.sum(dphi**2)) * state.grid.dx


def total_energy(state) -> float:
    """Kinetic + electric field + potential energy of a state."""
    dx = state.grid.dx
    rd = _dual_rho(state.rho.values)
    kinetic = 0.5 * float(np.sum(rd * state.u.values**2)) * dx
    potential = float(np.sum(h(state.phi.values))) * dx
    return kinetic + _field_energy(state) + potential


def modulated_energy(state, ref: ConstantState = ConstantState()) -> float:
    """Energy of a state relative to the constant state ``ref`` (always >= 0)."""
    dx = state.grid.dx
    rd = _dual_rho(state.rho.values)
    kinetic = 0.5 * float(np.sum(rd * (state.u.values - ref.u_bar) ** 2)) * dx
    phi = state.phi.values
    e = np.exp(-phi)
    # Bregman divergence of psi log psi - psi between exp(-phi) and exp(-phi_bar)
    relative_entropy = float(np.sum(e * (ref.phi_bar - phi) - e + ref.rho_bar)) * dx
    return kinetic + _field_energy(state) + relative_entropy


def modulated_energy_split(state, ref: ConstantState = ConstantState()):
    """``(H, E_kin, E_int)`` with ``E = H + E_kin - E_int``."""
    dx = state.grid.dx
    rd = _dual_rho(state.rho.values)
    ub, pb, rb = ref.u_bar, ref.phi_bar, ref.rho_bar
    e_kin = float(np.sum(rd * (0.5 * ub**2 - state.u.values * ub))) * dx
    h_tilde_bar = rb * math.log(rb) - rb
    e_int = float(np.sum(h_tilde_bar + (-pb) * (np.exp(-state.phi.values) - rb))) * dx
    return total_energy(state), e_kin, e_int


def tau_terms(scheme: FluxScheme, state_n, state_np1, dt: float) -> dict:
    """The non-negative pieces of the per-step energy dissipation.

    ``kinetic`` is the upwind/time-implicit kinetic dissipation, ``potential``
    the convexity remainder of ``exp(-phi)`` (evaluated exactly, no
    intermediate point), ``field`` the time increment of the electric field,
    and ``diffusion_field`` / ``diffusion_density`` the two ``g(0)``
    weighted contributions of the spatial regularisation.
    """
    dx = state_np1.grid.dx
    eps = state_np1.epsilon
    rho1 = state_np1.rho.values
    u1 = state_np1.u.values
    u0 = state_n.u.values
    rd0 = _dual_rho(state_n.rho.values)

    F = scheme.G(rho1, np.roll(rho1, -1), u1)  # F_{i+1/2}
    Fp = 0.5 * (F + np.roll(F, 1))  # F_i at primal points
    up = np.where(Fp >= 0, np.roll(u1, 1), u1)  # u_i
    Fp_next = np.roll(Fp, -1)
    up_next = np.roll(up, -1)
    S = (
        -Fp_next * (up_next - u1) ** 2 / (2 * dx)
        + Fp * (up - u1) ** 2 / (2 * dx)
        + rd0 * (u0 - u1) ** 2 / (2 * dt)
    )

    p0, p1 = state_n.phi.values, state_np1.phi.values
    e0, e1 = np.exp(-p0), np.exp(-p1)
    bregman = e1 - e0 + e0 * (p1 - p0)
    d0 = (np.roll(p0, -1) - p0) / dx
    d1 = (np.roll(p1, -1) - p1) / dx
    g0 = scheme.g0
    return {
        "kinetic": float(np.sum(S)) * dx,
        "potential": float(np.sum(bregman)) * dx / dt,
        "field": eps**2 / (2 * dt) * float(np.sum((d1 - d0) ** 2)) * dx,
        "diffusion_field": g0 / dx * eps**2 * float(np.sum((d1 - np.roll(d1, 1)) ** 2)) * dx,
        "diffusion_density": g0 / dx * float(np.sum(np.abs((e1 - np.roll(e1, 1)) * (p1 - np.roll(p1, 1))))) * dx,
    }


def tau(scheme: FluxScheme, state_n, state_np1, dt: float) -> float:
    """Dissipation ``tau`` with ``H(n+1) - H(n) = -dt * tau`` for an exact step."""
    return float(sum(tau_terms(scheme, state_n, state_np1, dt).values()))


def dissipation_rate(E_final: float, E_initial: float, T: float) -> float:
    """``(log E_final - log E_initial) / T``."""
    if not (E_final > 0 and E_initial > 0):
        raise DomainError("dissipation rate needs positive energies")
    if not T > 0:
        raise DomainError("dissipation rate needs T > 0")
    return (math.log(E_final) - math.log(E_initial)) / T


def make_record(step, state, ref: ConstantState, tau_value=float("nan"), picard_iters=0) -> DiagnosticsRecord:
    return DiagnosticsRecord(
        step=int(step),
        time=float(state.time),
        mass=mass(state),
        momentum=total_momentum(state),
        total_energy=total_energy(state),
        modulated_energy=modulated_energy(state, ref),
        tau=float(tau_value),
        picard_iters=int(picard_iters),
        min_rho=state.rho.min(),
        max_rho=state.rho.max(),
    )
