"""Dense reference solvers used as independent oracles."""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.optimize as sopt


class RayTermination(RuntimeError):
    pass


def _pivot(T, r, c):
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def lemke(M, q, max_pivots=None, polish=True) -> np.ndarray:
    """Solve ``0 <= z  _|_  M z + q >= 0`` by Lemke's complementary pivoting.

    Uses the covering vector of ones. For P-matrices (in particular symmetric
    positive definite ``M``) the method terminates with the unique solution.
    With ``polish`` the support found by pivoting is re-solved directly.
    """
    M = np.asarray(M, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    n = q.shape[0]
    if n == 0 or np.all(q >= 0):
        return np.zeros(n)
    max_pivots = 50 * (n + 1) if max_pivots is None else max_pivots
    z0 = 2 * n
    T = np.hstack([np.eye(n), -M, -np.ones((n, 1)), q[:, None]])
    basis = list(range(n))
    r = int(np.argmin(q))
    leaving = basis[r]
    _pivot(T, r, z0)
    basis[r] = z0
    entering = leaving + n
    scale = max(1.0, np.abs(M).max())
    for _ in range(max_pivots):
        col = T[:, entering]
        mask = col > 1e-12 * scale
        if not np.any(mask):
            raise RayTermination("Lemke terminated on a secondary ray")
        ratios = np.full(n, np.inf)
        ratios[mask] = T[mask, -1] / col[mask]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + 1e-12 * max(1.0, abs(best)))
        r = next((i for i in ties if basis[i] == z0), int(ties[0]))
        leaving = basis[r]
        _pivot(T, r, entering)
        basis[r] = entering
        if leaving == z0:
            break
        entering = leaving + n if leaving < n else leaving - n
    else:
        raise RuntimeError("Lemke exceeded the pivot budget")
    z = np.zeros(n)
    for i, v in enumerate(basis):
        if n <= v < 2 * n:
            z[v - n] = max(T[i, -1], 0.0)
    if polish:
        z = polish_support(M, q, z)
    return z


def polish_support(M, q, z, tol=1e-10):
    """Re-solve ``M_SS z_S = -q_S`` on the support of ``z`` if that stays complementary."""
    S = z > tol * max(1.0, np.abs(z).max(initial=0.0))
    if not np.any(S):
        return np.zeros_like(z)
    zs = np.zeros_like(z)
    try:
        zs[S] = np.linalg.solve(M[np.ix_(S, S)], -q[S])
    except np.linalg.LinAlgError:
        return z
    w = M @ zs + q
    scale = max(1.0, np.abs(q).max())
    if np.all(zs >= 0) and np.all(w[~S] >= -1e-9 * scale):
        return zs
    return z


def nnls_lcp(A, b) -> np.ndarray:
    """Solve the symmetric positive definite LCP ``(A, b)`` as a least-squares problem.

    With ``A = L L^T`` the equivalent quadratic program is
    ``min_{x>=0} ||L^T x + L^{-1} b||^2``.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if b.size == 0:
        return np.zeros(0)
    L = np.linalg.cholesky(A)
    rhs = -sla.solve_triangular(L, b, lower=True)
    x, _ = sopt.nnls(L.T, rhs, maxiter=50 * b.size + 100)
    return polish_support(A, b, x)


def dense_prox_oracle(B, x_tilde) -> np.ndarray:
    """``argmin_{x>=0} 1/2 ||x - x_tilde||_B^2`` for dense positive definite ``B``."""
    B = np.asarray(B, dtype=np.float64)
    L = np.linalg.cholesky(B)
    x, _ = sopt.nnls(L.T, L.T @ x_tilde, maxiter=50 * len(x_tilde) + 100)
    return polish_support(B, -B @ x_tilde, x)
