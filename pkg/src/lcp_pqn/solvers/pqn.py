"""Proximal quasi-Newton solvers: monofidelity and bifidelity variants.

Both use a forward step of length one through the current Hessian model, the
weighted projection onto ``x >= 0`` and the exact over-relaxation parameter.
The gradient ``A x + b`` is advanced by linearity, so a monofidelity run costs
one operator product per iteration plus one at start-up.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..operators import counted
from ..prox import ProxError, weighted_prox
from ..quasinewton import (
    BfgsAccumulator,
    SecantCache,
    bfgs_update,
    harvest_low_fi_secant,
    transform_secant_cache,
)
from ..stepsize import StepContext, StepSizeError, advance_cache, optimal_eta, step_to
from .common import SolveOptions, Termination, Tracker, make_report, prepare

log = logging.getLogger(__name__)


@dataclass
class _LoopResult:
    x: np.ndarray
    grad: np.ndarray
    iterations: int
    termination: Termination
    tracker: Tracker
    acc: BfgsAccumulator
    etas: list = field(default_factory=list)
    slopes: list = field(default_factory=list)
    refreshes: int = 0
    flags: list = field(default_factory=list)


def _direction(acc, x, g, opts):
    Hg = acc.apply_H(g)
    if opts.literal_alg1:
        x_tilde = x + opts.tau * (x - Hg)
    else:
        x_tilde = x - opts.tau * Hg
    x_hat, _, _ = weighted_prox(acc.metric(), x_tilde, tol=opts.prox_tol, j_max=opts.prox_j_max)
    return x_hat - x


def _usable(x, p, g):
    """Descent direction whose feasible step length is positive."""
    if not np.any(p):
        return False
    if not float(p @ g) < 0.0:
        return False
    neg = p < 0
    return not np.any(x[neg] <= 0.0)


def _pqn_loop(apply, b, x, opts: SolveOptions, eps, k_max, grad0=None, seed_pairs=()):
    """Core iteration shared by :func:`mono_pqn` and the Bi-PQN subproblem.

    ``apply`` is the (counted) operator application. When ``grad0`` is given the
    start-up product is skipped.
    """
    n = x.shape[0]
    tracker = Tracker(b, opts)
    g = apply(x) + b if grad0 is None else np.array(grad0, dtype=np.float64)
    ctx = StepContext(g, refresh_period=opts.refresh_period)
    acc = BfgsAccumulator.scaled_identity(n, 1.0)
    for s, y in seed_pairs:
        bfgs_update(acc, s, y)
    res = _LoopResult(x, g, 0, Termination.MAX_ITER, tracker, acc)
    k = 0
    while True:
        term = tracker.check(x, ctx.Ax_b, eps=eps, k=k, k_max=k_max)
        if term is not None:
            break
        g = ctx.Ax_b
        try:
            p = _direction(acc, x, g, opts)
            ok = _usable(x, p, g)
        except ProxError as exc:
            log.debug("prox failure: %s", exc)
            ok = False
        if not ok and acc.rank > 0:
            res.flags.append(f"hessian_reset@{k}")
            acc = BfgsAccumulator.scaled_identity(n, 1.0)
            try:
                p = _direction(acc, x, g, opts)
                ok = _usable(x, p, g)
            except ProxError:
                ok = False
        if not ok:
            term = Termination.STALLED
            break
        Ap = apply(p)
        try:
            eta = optimal_eta(x, p, g, Ap)
        except StepSizeError as exc:
            res.flags.append(f"step_error@{k}: {exc}")
            term = Termination.STALLED
            break
        x_new = step_to(x, p, eta)
        res.etas.append(eta)
        res.slopes.append(float(p @ g))
        ctx.Ap = Ap
        advance_cache(ctx, eta, fresh=lambda: apply(x_new) + b)
        bfgs_update(acc, eta * p, eta * Ap)
        if opts.bb_seed_scaling and len(acc.secants) == 1:
            s, y = acc.secants[0]
            acc = acc.rescaled(float(y @ y) / float(s @ y))
        x = x_new
        k += 1
    res.x, res.grad, res.iterations, res.termination = x, ctx.Ax_b, k, term
    res.acc, res.refreshes = acc, ctx.refreshes
    return res


def mono_pqn(A, b, x0=None, opts: SolveOptions | None = None):
    """Monofidelity proximal quasi-Newton method for the LCP ``(A, b)``.

    Parameters
    ----------
    A : CountedOperator, MatVecOperator or ndarray
        Symmetric positive definite LCP matrix. Only products are used.
    b : ndarray
    x0 : ndarray, optional
        Nonnegative starting point; defaults to ``opts.warm_start`` or zero.
    opts : SolveOptions, optional

    Returns
    -------
    SolverReport
        With caching on, ``hi_mvps == iterations + 1`` unless a periodic
        refresh fired (``report.refreshes``).
    """
    opts = SolveOptions() if opts is None else opts
    A, b, x = prepare(A, b, x0, opts)
    hi0 = A.count
    r = _pqn_loop(A.apply, b, x, opts, opts.eps_kkt, opts.k_max)
    return make_report(
        "mono_pqn", r.x, r.iterations, A, hi0, r.tracker, r.termination, opts,
        etas=r.etas, slopes=r.slopes, refreshes=r.refreshes, flags=r.flags,
    )


def bi_pqn(A, A_hat, b, x_init=None, opts: SolveOptions | None = None):
    """Bifidelity proximal quasi-Newton method.

    The Hessian model starts from the low-fidelity operator ``A_hat`` and is
    corrected by BFGS updates built from high-fidelity secants. Each outer step
    solves the model problem with the monofidelity method using only
    low-fidelity products, re-using secant pairs from earlier subproblems.
    """
    opts = SolveOptions() if opts is None else opts
    A, b, x = prepare(A, b, x_init, opts)
    A_hat = counted(A_hat)
    if A_hat.dim != A.dim:
        raise ValueError("operators differ in dimension")
    hi0, lo0 = A.count, A_hat.count
    sub_eps = opts.eps_kkt * opts.subproblem_eps_factor
    flags = []

    if A.dim == 0:
        Ahat_x, cache = np.zeros(0), SecantCache.empty(0)
    else:
        # A_hat 0 = 0, so a zero start needs no product for its first gradient
        grad0 = None if np.any(x) else b.copy()
        init = _pqn_loop(A_hat.apply, b, x, opts, sub_eps, opts.k_max, grad0=grad0)
        if not init.termination.converged:
            flags.append(f"lowfi_init:{init.termination.value}")
        x = init.x
        Ahat_x = init.grad - b
        cache = SecantCache.from_pairs(A.dim, init.acc.secants)
    model = BfgsAccumulator.from_operator(A_hat)

    tracker = Tracker(b, opts)
    g = A.apply(x) + b
    ctx = StepContext(g, refresh_period=opts.refresh_period)
    etas, slopes, inner = [], [], []
    k = 0
    while True:
        term = tracker.check(x, ctx.Ax_b, k=k)
        if term is not None:
            break
        g = ctx.Ax_b
        c = g - (Ahat_x + model.low_rank_apply(x))
        sub = _pqn_loop(
            model.apply_B, c, x, opts, sub_eps, opts.subproblem_k_max,
            grad0=g, seed_pairs=cache.pairs(),
        )
        inner.append(sub.iterations)
        if not sub.termination.converged:
            flags.append(f"subproblem@{k}:{sub.termination.value}")
        x_hat = sub.x
        Ahat_xhat = (sub.grad - c) - model.low_rank_apply(x_hat)
        p = x_hat - x
        if not np.any(p) or not float(p @ g) < 0.0 or np.any(x[p < 0] <= 0.0):
            term = Termination.STALLED
            break
        Ap = A.apply(p)
        try:
            eta = optimal_eta(x, p, g, Ap)
        except StepSizeError as exc:
            flags.append(f"step_error@{k}: {exc}")
            term = Termination.STALLED
            break
        x_new = step_to(x, p, eta)
        etas.append(eta)
        slopes.append(float(p @ g))
        s = eta * p
        Bs = harvest_low_fi_secant(Ahat_xhat, Ahat_x, eta) + model.low_rank_apply(s)
        uv = bfgs_update(model, s, eta * Ap, Bs=Bs)
        cache = SecantCache.from_pairs(A.dim, sub.acc.secants)
        if uv is not None:
            cache = transform_secant_cache(cache, *uv)
        Ahat_x = Ahat_x + eta * (Ahat_xhat - Ahat_x)
        ctx.Ap = Ap
        advance_cache(ctx, eta, fresh=lambda: A.apply(x_new) + b)
        x = x_new
        k += 1
    return make_report(
        "bi_pqn", x, k, A, hi0, tracker, term, opts, lo=A_hat.count - lo0,
        etas=etas, slopes=slopes, refreshes=ctx.refreshes, inner_iterations=inner, flags=flags,
    )
