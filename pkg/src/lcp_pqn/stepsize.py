"""Step lengths for quadratic objectives over the nonnegative orthant."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class StepSizeError(ValueError):
    pass


class StalledStepError(StepSizeError):
    """The feasible step length is zero: a coordinate at its bound points outward."""


def optimal_eta(x, p, Ax_b, Ap) -> float:
    """Exact minimizer of ``f(x + eta p)`` over ``eta >= 0`` with ``x + eta p >= 0``.

    ``Ax_b`` is the gradient ``A x + b`` and ``Ap`` is ``A p``; both are cached by
    the caller so no operator application happens here.
    """
    x = np.asarray(x, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    slope = float(p @ Ax_b)
    curv = float(p @ Ap)
    if not curv > 0.0:
        raise StepSizeError(f"p^T A p = {curv:.3e} is not positive")
    if not slope < 0.0:
        raise StepSizeError(f"p is not a descent direction (p^T grad = {slope:.3e})")
    eta = -slope / curv
    neg = p < 0
    if np.any(neg):
        bounds = -x[neg] / p[neg]
        if np.any(bounds <= 0.0):
            raise StalledStepError("coordinate at its bound with outward direction")
        eta = min(eta, float(bounds.min()))
    return eta


def step_to(x, p, eta) -> np.ndarray:
    """``x + eta p`` with coordinates that reach their bound set to exactly zero."""
    x_new = x + eta * p
    neg = p < 0
    if np.any(neg):
        hit = np.zeros_like(neg)
        hit[neg] = (-x[neg] / p[neg]) <= eta
        x_new[hit] = 0.0
    return np.maximum(x_new, 0.0)


def bb_step(s, As, previous: float | None = None) -> tuple[float, bool]:
    """Spectral step ``||s||^2 / s^T A s``.

    Returns ``(tau, fallback)``; ``fallback`` is set when the denominator is not
    positive and ``previous`` (or 1) was returned instead.
    """
    s = np.asarray(s, dtype=np.float64)
    den = float(s @ As)
    if den > 0.0 and np.isfinite(den):
        return float(s @ s) / den, False
    return (1.0 if previous is None else float(previous)), True


@dataclass
class StepContext:
    """Cached gradient ``A x + b`` advanced by linearity between refreshes."""

    Ax_b: np.ndarray
    Ap: np.ndarray | None = None
    refresh_period: int = 20
    advances: int = 0
    refreshes: int = 0


def advance_cache(ctx: StepContext, eta: float, fresh=None) -> StepContext:
    """Move the cached gradient along ``eta * A p``.

    ``fresh`` is a zero-argument callable returning ``A x_new + b``; it is called
    (one counted product) every ``refresh_period`` advances to bound drift.
    """
    ctx.advances += 1
    if fresh is not None and ctx.refresh_period > 0 and ctx.advances % ctx.refresh_period == 0:
        ctx.Ax_b = fresh()
        ctx.refreshes += 1
    elif eta != 0.0:
        ctx.Ax_b = ctx.Ax_b + eta * ctx.Ap
    return ctx
