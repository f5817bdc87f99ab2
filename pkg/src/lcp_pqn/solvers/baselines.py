"""Comparison methods: projected gradient variants, zero-memory SR1, min-map Newton."""

from __future__ import annotations

import numpy as np

from ..prox import ProxError, ProxMetric, weighted_prox
from ..stepsize import StepSizeError, bb_step, optimal_eta, step_to
from .common import (
    DivergenceError,
    SolveOptions,
    SolverError,
    Termination,
    Tracker,
    make_report,
    prepare,
)


def bb_pgd(A, b, x0=None, opts: SolveOptions | None = None):
    """Projected gradient with the Barzilai-Borwein step.

    The first step uses ``opts.tau``. Over-relaxation is fixed at one unless
    ``opts.pgd_optimal_eta`` is set, in which case the product ``A p`` replaces
    ``A x`` so the per-iteration cost is unchanged.
    """
    opts = SolveOptions() if opts is None else opts
    A, b, x = prepare(A, b, x0, opts)
    hi0 = A.count
    tracker = Tracker(b, opts)
    g = A.apply(x) + b
    tau = opts.tau
    flags = []
    k = 0
    term = None
    while True:
        term = tracker.check(x, g, k=k)
        if term is not None:
            break
        x_new = np.maximum(x - tau * g, 0.0)
        if opts.pgd_optimal_eta:
            p = x_new - x
            if not np.any(p):
                term = Termination.STALLED
                break
            Ap = A.apply(p)
            try:
                eta = optimal_eta(x, p, g, Ap)
            except StepSizeError:
                term = Termination.STALLED
                break
            x_new = step_to(x, p, eta)
            g_new = g + eta * Ap
        else:
            g_new = A.apply(x_new) + b
        s = x_new - x
        tau, fell_back = bb_step(s, g_new - g, previous=tau)
        if fell_back:
            flags.append(f"bb_fallback@{k}")
        x, g = x_new, g_new
        k += 1
    return make_report("bb_pgd", x, k, A, hi0, tracker, term, opts, flags=flags)


def pgd_fixed(A, b, x0=None, tau: float = 1.0, opts: SolveOptions | None = None):
    """Projected gradient with constant step ``tau``.

    Raises :class:`DivergenceError` after ten consecutive objective increases.
    """
    opts = SolveOptions() if opts is None else opts
    A, b, x = prepare(A, b, x0, opts)
    hi0 = A.count
    tracker = Tracker(b, opts)
    g = A.apply(x) + b
    k = 0
    increases = 0
    while True:
        term = tracker.check(x, g, k=k)
        if term is not None:
            break
        if len(tracker.obj_trace) > 1 and tracker.obj_trace[-1] > tracker.obj_trace[-2]:
            increases += 1
            if increases >= 10:
                raise DivergenceError(f"objective increased for 10 consecutive steps (tau={tau})")
        else:
            increases = 0
        x = np.maximum(x - tau * g, 0.0)
        g = A.apply(x) + b
        k += 1
    return make_report("pgd_fixed", x, k, A, hi0, tracker, term, opts)


def a_pgd(A, b, x0=None, L: float = 1.0, mu: float = 1.0, opts: SolveOptions | None = None):
    """Accelerated projected gradient with constant momentum from known ``L`` and ``mu``.

    ``A y`` at the extrapolated point is formed from cached products, so each
    iteration costs one product.
    """
    opts = SolveOptions() if opts is None else opts
    if not (L > 0 and 0 < mu <= L):
        raise ValueError("need 0 < mu <= L")
    A, b, x = prepare(A, b, x0, opts)
    hi0 = A.count
    tracker = Tracker(b, opts)
    kappa = L / mu
    beta = (np.sqrt(kappa) - 1.0) / (np.sqrt(kappa) + 1.0)
    Ax = A.apply(x)
    x_prev, Ax_prev = x, Ax
    k = 0
    while True:
        term = tracker.check(x, Ax + b, k=k)
        if term is not None:
            break
        y = x + beta * (x - x_prev)
        Ay = Ax + beta * (Ax - Ax_prev)
        x_new = np.maximum(y - (Ay + b) / L, 0.0)
        x_prev, Ax_prev = x, Ax
        x, Ax = x_new, A.apply(x_new)
        k += 1
    return make_report("a_pgd", x, k, A, hi0, tracker, term, opts)


def zero_sr1(A, b, x0=None, opts: SolveOptions | None = None):
    """Zero-memory SR1 proximal quasi-Newton method.

    The inverse model is ``H = h0 I + u u^T`` with ``h0 = gamma * s^T y / y^T y``
    and ``u`` the SR1 correction for the latest pair, so ``B = H^{-1}`` is a
    scaled identity minus a rank-one term. Step size and over-relaxation are one.
    """
    opts = SolveOptions() if opts is None else opts
    A, b, x = prepare(A, b, x0, opts)
    hi0 = A.count
    tracker = Tracker(b, opts)
    g = A.apply(x) + b
    n = x.shape[0]
    h0 = opts.tau
    u = np.zeros(n)
    flags = []
    k = 0
    while True:
        term = tracker.check(x, g, k=k)
        if term is not None:
            break
        x_tilde = x - h0 * g - u * (u @ g)
        if np.any(u):
            denom = 1.0 + (u @ u) / h0
            v = (u / h0) / np.sqrt(denom)
            metric = ProxMetric(np.full(n, 1.0 / h0), np.zeros((n, 0)), v[:, None])
            try:
                x_new, _, _ = weighted_prox(metric, x_tilde, tol=opts.prox_tol, j_max=opts.prox_j_max)
            except ProxError:
                flags.append(f"prox_fallback@{k}")
                x_new = np.maximum(x - h0 * g, 0.0)
        else:
            x_new = np.maximum(x_tilde, 0.0)
        g_new = A.apply(x_new) + b
        s, y = x_new - x, g_new - g
        x, g = x_new, g_new
        k += 1
        sy, yy = float(s @ y), float(y @ y)
        if sy <= 0 or yy == 0:
            flags.append(f"bb_fallback@{k}")
            u = np.zeros(n)
            continue
        h0 = opts.sr1_gamma * sy / yy
        w = s - h0 * y
        wy = float(w @ y)
        if wy <= 1e-8 * np.linalg.norm(w) * np.linalg.norm(y):
            u = np.zeros(n)
        else:
            u = w / np.sqrt(wy)
    return make_report("zero_sr1", x, k, A, hi0, tracker, term, opts, flags=flags)


def _cg(apply, rhs, tol, max_iter):
    """Plain conjugate gradients from zero; every ``apply`` is a counted product."""
    x = np.zeros_like(rhs)
    r = rhs.copy()
    p = r.copy()
    rr = float(r @ r)
    if np.sqrt(rr) <= tol:
        return x
    best = np.sqrt(rr)
    stagnant = 0
    for _ in range(max_iter):
        Ap = apply(p)
        pAp = float(p @ Ap)
        if pAp <= 0:
            raise SolverError("CG breakdown: reduced matrix not positive definite")
        a = rr / pAp
        x += a * p
        r -= a * Ap
        rr_new = float(r @ r)
        nr = np.sqrt(rr_new)
        if nr <= tol:
            return x
        if nr < 0.999 * best:
            best, stagnant = nr, 0
        else:
            stagnant += 1
            if stagnant >= 10:
                raise SolverError("inner CG stagnated")
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise SolverError("inner CG did not converge")


def min_map_newton(A, b, x0=None, opts: SolveOptions | None = None):
    """Semi-smooth Newton on ``F(x) = min(x, A x + b)`` with full steps.

    The reduced Newton system is solved by conjugate gradients, each inner
    product being a full (counted) application of ``A`` to a zero-padded vector.
    """
    opts = SolveOptions() if opts is None else opts
    A, b, x = prepare(A, b, x0, opts)
    hi0 = A.count
    tracker = Tracker(b, opts)
    n = x.shape[0]
    g = A.apply(x) + b
    k = 0
    while True:
        term = tracker.check(x, g, k=k)
        if term is not None:
            break
        pinned = x <= g
        free = ~pinned
        dx = np.zeros(n)
        dx[pinned] = -x[pinned]
        rhs = -g[free]
        if np.any(dx):
            rhs = rhs - A.apply(dx)[free]
        if np.any(free):
            def reduced(v, free=free):
                z = np.zeros(n)
                z[free] = v
                return A.apply(z)[free]

            fnorm = tracker.abs_trace[-1]
            tol = max(min(0.1, fnorm) * fnorm, 0.1 * opts.eps_kkt)
            dx[free] = _cg(reduced, rhs, tol, max_iter=max(10, 5 * int(free.sum())))
        x = x + dx
        x[pinned] = 0.0
        g = A.apply(x) + b
        k += 1
    return make_report("min_map_newton", x, k, A, hi0, tracker, term, opts)
