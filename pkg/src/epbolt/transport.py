"""Inner solves of one Picard step: implicit continuity and implicit momentum.

Continuity is linear in the density once the interface velocity is given;
the resulting matrix is a cyclic tridiagonal M-matrix whose columns all sum
to one.  Momentum freezes the advective fluxes at the Picard iterate and
keeps only the time derivative and the force density ``rho_tilde(v)``
implicit; the remaining nonlinearity is diagonal, so each Newton step is a
cyclic tridiagonal solve as well.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError, InternalError
from .flux import FluxScheme
from .linalg import cyclic_tridiagonal_matvec, cyclic_tridiagonal_solve
from .mesh import DualField, PrimalField, check_same_grid

__all__ = [
    "ContinuitySystem",
    "assemble_continuity",
    "solve_continuity",
    "MomentumProblem",
    "solve_momentum",
]

_EPS = np.finfo(float).eps
MAX_HALVINGS = 30


@dataclass(frozen=True)
class ContinuitySystem:
    """Rows of ``L(u) rho_bar = rho_n``; ``sub[i]`` couples ``i-1``, ``sup[i]`` couples ``i+1``."""

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray

    def column_sums(self) -> np.ndarray:
        return self.diag + np.roll(self.sup, 1) + np.roll(self.sub, -1)

    def is_m_matrix(self) -> bool:
        """Sign pattern plus strict column diagonal dominance."""
        off = np.abs(np.roll(self.sup, 1)) + np.abs(np.roll(self.sub, -1))
        return bool(
            np.all(self.diag > 0)
            and np.all(self.sub <= 0)
            and np.all(self.sup <= 0)
            and np.all(self.diag > off)
        )

    def dense(self) -> np.ndarray:
        from .linalg import cyclic_tridiagonal_dense

        return cyclic_tridiagonal_dense(self.sub, self.diag, self.sup)


def assemble_continuity(scheme: FluxScheme, u, dt: float, dx: float) -> ContinuitySystem:
    u = np.asarray(u, dtype=float)
    lam = dt / dx
    g_plus = scheme.g(u)  # g(u_{i+1/2})
    u_minus = np.roll(u, 1)  # u_{i-1/2}
    g_minus = np.roll(g_plus, 1)
    diag = 1.0 + lam * (g_plus + g_minus - u_minus)
    sup = -lam * (g_plus - u)
    sub = -lam * g_minus
    return ContinuitySystem(sub=sub, diag=diag, sup=sup)


def _continuity_values(scheme, rho_n, u, dt, dx):
    system = assemble_continuity(scheme, u, dt, dx)
    if not system.is_m_matrix():
        raise InternalError("continuity matrix is not an M-matrix; check g >= max(u, 0)")
    rho_bar = cyclic_tridiagonal_solve(system.sub, system.diag, system.sup, rho_n)
    if not np.all(rho_bar > 0):
        raise InternalError("continuity solve lost positivity")
    return rho_bar


def solve_continuity(scheme: FluxScheme, rho_n: PrimalField, u: DualField, dt: float) -> PrimalField:
    """Implicit upwind-type continuity step with the interface velocity ``u`` given."""
    grid = check_same_grid(rho_n, u)
    if not dt > 0:
        raise DomainError("dt must be positive")
    if not np.all(rho_n.values > 0):
        raise DomainError("continuity solve needs a positive density")
    return PrimalField(grid, _continuity_values(scheme, rho_n.values, u.values, dt, grid.dx))


class MomentumProblem:
    """Frozen-coefficient momentum equation for the dual velocity ``v``.

    Row ``j`` (dual point ``j+1/2``) reads::

        (rb_j v_j - rn_j un_j)/dt + (Q_{j+1} v*_{j+1} - Q_j v*_j)/dx
            - rho_tilde(rho_bar_j, rho_bar_{j+1}, v_j) dphi_j = 0

    where ``Q_i`` is the primal-point average of the frozen mass fluxes and
    ``v*_i`` picks the upwind neighbour by the sign of ``Q_i``.  The upwind
    pattern is fixed at construction.
    """

    def __init__(self, scheme, rho_bar, phi, u_frozen, rho_n_dual, u_n, dt, dx):
        self.scheme = scheme
        self.dt = float(dt)
        self.dx = float(dx)
        rb = np.asarray(rho_bar, dtype=float)
        self.rho_l = rb
        self.rho_r = np.roll(rb, -1)
        self.rho_bar_dual = 0.5 * (rb + self.rho_r)
        F = scheme.G(rb, self.rho_r, np.asarray(u_frozen, dtype=float))
        self.Q = 0.5 * (F + np.roll(F, 1))  # at primal points
        self.dphi = (np.roll(phi, -1) - phi) / dx
        self.momentum_n = np.asarray(rho_n_dual, dtype=float) * np.asarray(u_n, dtype=float)

        q_plus = np.maximum(self.Q, 0.0)  # Q_i >= 0 -> v*_i = v_{i-1/2}
        q_minus = np.maximum(-self.Q, 0.0)
        q_plus_next = np.roll(q_plus, -1)  # Q_{j+1}
        self.lin_diag = self.rho_bar_dual / dt + (q_plus_next + q_minus) / dx
        self.lin_sub = -q_plus / dx
        self.lin_sup = -np.roll(q_minus, -1) / dx

    def residual(self, v):
        lin = cyclic_tridiagonal_matvec(self.lin_sub, self.lin_diag, self.lin_sup, v)
        force = self.scheme.rho_tilde(self.rho_l, self.rho_r, v) * self.dphi
        r = lin - self.momentum_n / self.dt - force
        scale = (
            np.abs(self.lin_sub * np.roll(v, 1))
            + np.abs(self.lin_diag * v)
            + np.abs(self.lin_sup * np.roll(v, -1))
            + np.abs(self.momentum_n) / self.dt
            + np.abs(force)
        )
        return r, scale

    def jacobian_diag(self, v):
        return self.lin_diag - self.scheme.drho_tilde_du(self.rho_l, self.rho_r, v) * self.dphi

    def solve(self, v0, tol=1e-15, max_iter=50):
        """Damped Newton; returns ``(v, residual_trace)``."""
        v = np.array(v0, dtype=float)
        r, scale = self.residual(v)
        res = float(np.max(np.abs(r)))
        trace = [res]
        for it in range(max_iter + 1):
            floor = 4.0 * _EPS * float(np.max(scale))
            if res <= max(tol, floor):
                return v, trace
            if it == max_iter:
                break
            step = cyclic_tridiagonal_solve(self.lin_sub, self.jacobian_diag(v), self.lin_sup, -r)
            lam = 1.0
            for _ in range(MAX_HALVINGS + 1):
                trial = v + lam * step
                r_t, scale_t = self.residual(trial)
                res_t = float(np.max(np.abs(r_t)))
                if res_t < res:
                    break
                lam *= 0.5
            else:
                if res <= 64.0 * floor:
                    return v, trace
                raise ConvergenceError(
                    f"momentum Newton line search failed (residual {res:.3e})", res, trace
                )
            v, r, scale, res = trial, r_t, scale_t, res_t
            trace.append(res)
        raise ConvergenceError(
            f"momentum Newton did not converge in {max_iter} iterations (residual {res:.3e})", res, trace
        )


    def continuation(self, v0, rtol=1e-9, max_iter=200):
        """Pseudo-transient continuation towards a root of the residual.

        Each step solves ``(sigma I + J) dv = -r`` with the shift ``sigma``
        large enough to make the diagonal positive and shrinking with the
        residual.  This follows the flow ``dv/dtau = -r(v)`` through folds
        where plain Newton stalls; the result is meant to be polished by
        :meth:`solve`.
        """
        v = np.array(v0, dtype=float)
        r, scale = self.residual(v)
        res0 = res = float(np.max(np.abs(r)))
        sigma0 = float(np.mean(self.lin_diag))
        for _ in range(max_iter):
            if res <= rtol * float(np.max(scale)):
                return v
            jd = self.jacobian_diag(v)
            sigma = 1.1 * max(0.0, -float(jd.min())) + sigma0 * min(1.0, res / res0)
            v = v + cyclic_tridiagonal_solve(self.lin_sub, jd + sigma, self.lin_sup, -r)
            r, scale = self.residual(v)
            res = float(np.max(np.abs(r)))
            if not np.isfinite(res):
                break
        raise ConvergenceError(f"momentum continuation did not converge (residual {res:.3e})", res)

    def solve_from(self, starts, tol=1e-15, max_iter=50):
        """Newton from each start in turn, globalised by :meth:`continuation`.

        Inside the regularisation window ``|v| < w`` of ``g`` the force term
        can make a row non-monotone in ``v``: its slope is
        ``(t - s) g_hat'(v) dphi`` and ``(t - s) dphi <= 0`` when
        ``phi ~ -log(rho)``.  Damped Newton may then stall at a fold of the
        residual although a root exists beyond it.
        """
        error = None
        for v0 in starts:
            try:
                return self.solve(v0, tol=tol, max_iter=max_iter)
            except ConvergenceError as exc:
                error = exc
            try:
                return self.solve(self.continuation(v0), tol=tol, max_iter=max_iter)
            except ConvergenceError as exc:
                error = exc
        raise error


def solve_momentum(
    scheme: FluxScheme,
    rho_bar: PrimalField,
    phi: PrimalField,
    u_frozen: DualField,
    rho_n_dual: DualField,
    u_n: DualField,
    dt: float,
    newton_tol: float = 1e-15,
    max_iter: int = 50,
) -> DualField:
    """Implicit momentum update with advective fluxes frozen at ``u_frozen``.

    Newton starts from ``u_frozen``; see :meth:`MomentumProblem.solve_from`.
    """
    grid = check_same_grid(rho_bar, phi, u_frozen, rho_n_dual, u_n)
    if not np.all(rho_bar.values > 0):
        raise DomainError("momentum solve needs a positive density")
    problem = MomentumProblem(
        scheme, rho_bar.values, phi.values, u_frozen.values, rho_n_dual.values, u_n.values, dt, grid.dx
    )
    v, _ = problem.solve_from((u_frozen.values, u_n.values), tol=newton_tol, max_iter=max_iter)
    return DualField(grid, v)
