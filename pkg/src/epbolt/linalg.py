"""Cyclic tridiagonal systems.

Row ``i`` of the matrix reads ``sub[i]*x[i-1] + diag[i]*x[i] + sup[i]*x[i+1]``
with indices taken modulo ``n``, so ``sub[0]`` and ``sup[n-1]`` are the two
periodic corner entries.
"""

import numpy as np
from scipy.linalg import solve_banded

__all__ = ["cyclic_tridiagonal_solve", "cyclic_tridiagonal_matvec", "cyclic_tridiagonal_dense"]


def cyclic_tridiagonal_dense(sub, diag, sup):
    """Assemble the dense ``n x n`` matrix (used by small systems and tests)."""
    n = len(diag)
    A = np.zeros((n, n))
    for i in range(n):
        A[i, (i - 1) % n] += sub[i]
        A[i, i] += diag[i]
        A[i, (i + 1) % n] += sup[i]
    return A


def cyclic_tridiagonal_matvec(sub, diag, sup, x):
    return sub * np.roll(x, 1) + diag * x + sup * np.roll(x, -1)


def cyclic_tridiagonal_solve(sub, diag, sup, rhs):
    """Solve the periodic tridiagonal system by a banded solve plus a rank-one correction."""
    sub = np.asarray(sub, dtype=float)
    diag = np.asarray(diag, dtype=float)
    sup = np.asarray(sup, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    n = diag.shape[0]
    if n <= 3:
        return np.linalg.solve(cyclic_tridiagonal_dense(sub, diag, sup), rhs)

    alpha = sup[-1]  # A[n-1, 0]
    beta = sub[0]  # A[0, n-1]
    gamma = -diag[0]

    ab = np.empty((3, n))
    ab[0, 0] = 0.0
    ab[0, 1:] = sup[:-1]
    ab[1] = diag
    ab[1, 0] = diag[0] - gamma
    ab[1, -1] = diag[-1] - alpha * beta / gamma
    ab[2, :-1] = sub[1:]
    ab[2, -1] = 0.0

    u = np.zeros(n)
    u[0] = gamma
    u[-1] = alpha
    sol = solve_banded((1, 1), ab, np.column_stack([rhs, u]), check_finite=False)
    y, z = sol[:, 0], sol[:, 1]
    # v = (1, 0, ..., 0, beta/gamma)
    vy = y[0] + beta * y[-1] / gamma
    vz = z[0] + beta * z[-1] / gamma
    return y - z * (vy / (1.0 + vz))
