"""Projection onto the nonnegative orthant in a diagonal-plus-low-rank metric.

For ``B = D + U U^T - V V^T`` (positive definite, ``D`` diagonal) the weighted
projection

    argmin_{x >= 0} 1/2 ||x - x_tilde||_B^2

is recovered from the root of a small piecewise-linear map in the dual
variables ``(alpha, alpha_tilde)`` of size ``r_U + r_V``. The root is found by
a damped semi-smooth Newton iteration, so no operator applications are needed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .operators import DiagPlusLowRankInverse

log = logging.getLogger(__name__)


class ProxError(RuntimeError):
    """Semi-smooth Newton failed; ``best`` holds the best dual iterate found."""

    def __init__(self, msg, best=None, residual=np.inf):
        super().__init__(msg)
        self.best = best
        self.residual = residual


class IndefiniteMetricError(ProxError):
    pass


def project_nonneg(x) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


@dataclass
class ProxMetric:
    """``B = diag(d) + U U^T - V V^T``. ``U`` and ``V`` may have different ranks."""

    d: np.ndarray
    U: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=np.float64).ravel()
        n = self.d.shape[0]
        self.U = np.asarray(self.U, dtype=np.float64).reshape(n, -1)
        self.V = np.asarray(self.V, dtype=np.float64).reshape(n, -1)

    @classmethod
    def identity_plus(cls, n, U=None, V=None, scale=1.0):
        U = np.zeros((n, 0)) if U is None else U
        V = np.zeros((n, 0)) if V is None else V
        return cls(np.full(n, float(scale)), U, V)

    @property
    def n(self) -> int:
        return self.d.shape[0]

    def apply(self, x):
        return self.d * x + self.U @ (self.U.T @ x) - self.V @ (self.V.T @ x)

    def dense(self) -> np.ndarray:
        return np.diag(self.d) + self.U @ self.U.T - self.V @ self.V.T


@dataclass
class DualPoint:
    alpha: np.ndarray
    alpha_tilde: np.ndarray

    @property
    def stacked(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.alpha_tilde])


class _DualMap:
    """Precomputed pieces shared by the residual and its Jacobian."""

    def __init__(self, metric: ProxMetric, x_tilde):
        self.metric = metric
        self.x_tilde = np.asarray(x_tilde, dtype=np.float64)
        if self.x_tilde.shape != (metric.n,):
            raise ValueError("x_tilde has wrong length")
        cinv = DiagPlusLowRankInverse(metric.d, metric.U)
        self.DinvU = cinv.DinvU
        self.CinvV = cinv.solve(metric.V) if metric.V.shape[1] else np.zeros((metric.n, 0))
        self.rU = metric.U.shape[1]
        self.rV = metric.V.shape[1]

    def split(self, a):
        return a[: self.rU], a[self.rU :]

    def inner(self, a):
        alpha, alpha_t = self.split(a)
        return self.x_tilde + self.CinvV @ alpha_t - self.DinvU @ alpha

    def residual(self, a):
        alpha, alpha_t = self.split(a)
        w = self.inner(a)
        xp = np.maximum(w, 0.0)
        U, V = self.metric.U, self.metric.V
        top = alpha + U.T @ (self.x_tilde + self.CinvV @ alpha_t - xp)
        bot = alpha_t + V.T @ (self.x_tilde - xp)
        return np.concatenate([top, bot])

    def jacobian(self, a):
        w = self.inner(a)
        lam = (w > 0).astype(np.float64)
        U, V = self.metric.U, self.metric.V
        LDU = lam[:, None] * self.DinvU
        LCV = lam[:, None] * self.CinvV
        top = np.hstack([U.T @ LDU, U.T @ (self.CinvV - LCV)])
        bot = np.hstack([V.T @ LDU, -(V.T @ LCV)])
        return np.vstack([top, bot]) + np.eye(self.rU + self.rV)

    def primal(self, a):
        return np.maximum(self.inner(a), 0.0)


def residual_L(metric: ProxMetric, x_tilde, p: DualPoint) -> np.ndarray:
    """Dual root function; its zero yields the weighted projection."""
    dm = _DualMap(metric, x_tilde)
    return dm.residual(np.concatenate([np.asarray(p.alpha, float), np.asarray(p.alpha_tilde, float)]))


def jacobian_L(metric: ProxMetric, x_tilde, p: DualPoint) -> np.ndarray:
    """Generalized Jacobian of :func:`residual_L` (kinks resolved to inactive)."""
    dm = _DualMap(metric, x_tilde)
    return dm.jacobian(np.concatenate([np.asarray(p.alpha, float), np.asarray(p.alpha_tilde, float)]))


def _newton_step(J, L):
    try:
        step = np.linalg.solve(J, L)
        if np.all(np.isfinite(step)):
            return step
    except np.linalg.LinAlgError:
        pass
    reg = 1e-10 * max(np.abs(J).sum(axis=1).max(), 1.0)
    return np.linalg.solve(J + reg * np.eye(J.shape[0]), L)


def weighted_prox(metric: ProxMetric, x_tilde, tol: float | None = None, j_max: int = 100):
    """Weighted projection of ``x_tilde`` onto ``x >= 0`` under ``metric``.

    Returns
    -------
    x_hat : ndarray
    dual : DualPoint
    iters : int
        Number of semi-smooth Newton steps taken.
    """
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    if tol is None:
        tol = 1e-12 * max(1.0, float(np.max(np.abs(x_tilde), initial=0.0)))
    if tol <= 0:
        raise ValueError("tol must be positive")
    dm = _DualMap(metric, x_tilde)
    r = dm.rU + dm.rV
    a = np.zeros(r)
    if r == 0:
        return dm.primal(a), DualPoint(a[:0], a[:0]), 0

    # Roundoff floor of the residual; below it no Newton step can make progress.
    scale = max(1.0, float(np.max(np.abs(x_tilde), initial=0.0)))
    mag = max(1.0, float(np.abs(metric.U).max(initial=0.0)), float(np.abs(metric.V).max(initial=0.0)))
    floor = 64 * np.finfo(float).eps * scale * mag * mag * metric.n

    L = dm.residual(a)
    res = float(np.max(np.abs(L)))
    ascents = 0
    iters = 0
    while res > tol:
        if iters >= j_max:
            raise ProxError(
                f"semi-smooth Newton did not converge in {j_max} iterations (residual {res:.3e})",
                best=DualPoint(*dm.split(a.copy())),
                residual=res,
            )
        iters += 1
        J = dm.jacobian(a)
        step = _newton_step(J, L)
        t = 1.0
        for _ in range(6):
            trial = a - t * step
            L_trial = dm.residual(trial)
            res_trial = float(np.max(np.abs(L_trial)))
            if res_trial < res:
                break
            t *= 0.5
        else:
            # No decrease after 5 halvings: regularized full step.
            reg = 1e-10 * max(np.abs(J).sum(axis=1).max(), 1.0)
            trial = a - np.linalg.solve(J + reg * np.eye(r), L)
            L_trial = dm.residual(trial)
            res_trial = float(np.max(np.abs(L_trial)))
            if res_trial >= res:
                if res <= floor:
                    break
                ascents += 1
                if ascents >= 3:
                    raise IndefiniteMetricError(
                        "semi-smooth Newton cannot decrease the dual residual; "
                        "metric is likely indefinite",
                        best=DualPoint(*dm.split(a.copy())),
                        residual=res,
                    )
        a, L, res = trial, L_trial, res_trial
    alpha, alpha_t = dm.split(a)
    return dm.primal(a), DualPoint(alpha.copy(), alpha_t.copy()), iters
