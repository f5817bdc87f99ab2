"""Estimation of the fundamental quantity c(A) and the LCP perturbation bound.

For a positive definite ``A``

    c(A) = min_{||z||_inf = 1} h(z),    h(z) = max_j z_j (A z)_j,

is bracketed by ``lambda_min / n <= c(A) <= lambda_min``. The minimum is
nonconvex; it is estimated by projected subgradient descent restarted on every
face ``z_i = sigma`` of the unit cube.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .operators import infnorm_distance


@dataclass
class CofAResult:
    c_est: float
    argmin_z: np.ndarray
    lower: float
    upper: float
    restarts: int = 0

    def in_bracket(self, tol: float = 1e-8) -> bool:
        return self.lower - tol <= self.c_est <= self.upper + tol


@dataclass
class CofAOptions:
    shrink: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 40
    max_iter: int = 500
    tol: float = 1e-13
    stall_window: int = 10
    stall_tol: float = 1e-10


def h_value(A, z) -> tuple[float, int]:
    """``max_j z_j (A z)_j`` and its first maximizing index (0-based)."""
    w = np.asarray(z) * (np.asarray(A) @ z)
    j = int(np.argmax(w))
    return float(w[j]), j


def h_subgradient(A, z) -> np.ndarray:
    """Gradient of the active piece ``z_j (A z)_j``: ``(e_j e_j^T A + A^T e_j e_j^T) z``."""
    A = np.asarray(A)
    z = np.asarray(z, dtype=np.float64)
    _, j = h_value(A, z)
    g = A.T[:, j] * z[j]
    g[j] += A[j] @ z
    return g


def _project(z, i, sigma):
    z = np.clip(z, -1.0, 1.0)
    z[i] = sigma
    return z


def _min_norm_combination(G):
    """Smallest-norm point of the convex hull of the rows of ``G``."""
    if G.shape[0] == 1:
        return G[0]
    big = 1e3 * max(1.0, np.abs(G).max())
    M = np.vstack([G.T, np.full((1, G.shape[0]), big)])
    rhs = np.zeros(M.shape[0])
    rhs[-1] = big
    lam, _ = nnls(M, rhs)
    lam /= lam.sum()
    return lam @ G


def _direction(A, z, i, h, eps):
    """Steepest feasible descent over the ``eps``-active pieces of ``h``.

    Coordinate ``i`` is held fixed and coordinates at a bound are released only
    when the direction points into the box.
    """
    Az = A @ z
    vals = z * Az
    J = np.flatnonzero(vals >= h - eps)
    G = A[J] * z[J][:, None]
    G[np.arange(len(J)), J] += Az[J]
    free = np.ones(z.shape[0], dtype=bool)
    free[i] = False
    for _ in range(z.shape[0]):
        if not np.any(free):
            break
        d = np.zeros_like(z)
        d[free] = -_min_norm_combination(G[:, free])
        blocked = free & (((z >= 1.0) & (d > 0)) | ((z <= -1.0) & (d < 0)))
        if not np.any(blocked):
            return d
        free &= ~blocked
    return np.zeros_like(z)


def _descend(A, z, i, sigma, opts: CofAOptions):
    """Projected subgradient descent with Armijo backtracking on the face ``z_i = sigma``.

    The subgradient is the smallest-norm element of the hull spanned by the
    pieces within ``eps`` of the max; ``eps`` shrinks when no step is accepted.
    """
    z = _project(z, i, sigma)
    h, _ = h_value(A, z)
    scale = max(np.abs(A).sum(axis=1).max(), 1e-300)
    eps = 1e-2 * max(abs(h), 1e-300)
    t = 1.0 / scale
    history = [h]
    for _ in range(opts.max_iter):
        d = _direction(A, z, i, h, eps)
        dd = float(d @ d)
        dmax = float(np.abs(d).max())
        accepted = False
        if dmax > 1e-10 * scale:
            # never try to move further than the box diameter
            step = min(4.0 * t, 2.0 / dmax)
            for _ in range(opts.max_backtracks):
                z_new = _project(z + step * d, i, sigma)
                h_new, _ = h_value(A, z_new)
                if h_new <= h - opts.armijo * step * dd:
                    accepted = h_new < h
                    break
                step *= opts.shrink
        if accepted:
            z, h, t = z_new, h_new, step
            history.append(h)
            if len(history) > opts.stall_window:
                old = history[-1 - opts.stall_window]
                if old - h <= opts.stall_tol * abs(h):
                    break
            continue
        eps *= 0.1
        if eps < opts.tol * max(abs(h), 1e-300):
            break
    return h, z


def fundamental_quantity(A, opts: CofAOptions | None = None) -> CofAResult:
    """Estimate ``c(A)`` for dense positive definite ``A``.

    Each restart fixes ``z_i = sigma`` for ``i`` in ``0..n-1`` and ``sigma = +-1``
    and starts from the eigenvector of the smallest eigenvalue scaled so that its
    ``i``-th entry equals ``sigma`` and clipped to the box. When that entry is
    zero the restart starts from ``sigma e_i`` instead. The smallest value over
    restarts is returned, ties going to the lexicographically first ``(i, sigma)``.
    Since ``h(-z) = h(z)`` the two signs give mirrored runs and only one is computed.
    """
    opts = CofAOptions() if opts is None else opts
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n) or n == 0:
        raise ValueError("A must be a nonempty square matrix")
    try:
        w, V = np.linalg.eigh(0.5 * (A + A.T))
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"eigendecomposition failed: {exc}") from exc
    lam = float(w[0])
    if not lam > 0:
        raise ValueError("A must be positive definite")
    v = V[:, 0]
    scale = np.abs(v).max()
    best_h, best_z = np.inf, None
    for i in range(n):
        # h is even, so the sigma = -1 restart is the mirror image of this one
        if abs(v[i]) > 1e-14 * scale:
            z0 = v / v[i]
        else:
            z0 = np.zeros(n)
            z0[i] = 1.0
        h, z = _descend(A, z0, i, 1.0, opts)
        if h < best_h:
            best_h, best_z = h, -z
    return CofAResult(best_h, best_z, lam / n, lam, 2 * n)


def lipschitz_bound(c: float, delta: float, b) -> float:
    """Coefficient ``||(-b)_+||_inf / (c - delta)^2`` bounding solution drift.

    Valid for matrices within ``delta`` (in the induced infinity norm) of a
    matrix with fundamental quantity ``c``.
    """
    if not 0 <= delta < c:
        raise ValueError(f"need 0 <= delta < c, got delta={delta}, c={c}")
    neg = np.maximum(-np.asarray(b, dtype=np.float64), 0.0)
    top = float(neg.max()) if neg.size else 0.0
    return top / (c - delta) ** 2


def neighborhood_check(A, A_hat, c: float) -> bool:
    """True when ``A_hat`` lies strictly inside the ``c``-ball around ``A``."""
    A, A_hat = np.asarray(A), np.asarray(A_hat)
    if A.shape != A_hat.shape:
        raise ValueError("dimension mismatch")
    return infnorm_distance(A, A_hat) < c
