"""BFGS Hessian models stored by unrolling, plus the cross-subproblem secant cache.

The model is ``B = base + sum_i u_i u_i^T - sum_i v_i v_i^T`` where ``base`` is
either a scaled identity (monofidelity) or a low-fidelity operator
(bifidelity). Full memory is kept; iteration counts here are small.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operators import CountedOperator, MatVecOperator, as_dense
from .prox import ProxMetric


class InverseUnavailableError(RuntimeError):
    pass


@dataclass
class BfgsAccumulator:
    """Unrolled BFGS model.

    Exactly one of ``scale`` (base ``scale * I``) or ``base_op`` is used: when
    ``base_op`` is set, every :meth:`apply_B` costs one application of it.
    """

    n: int
    scale: float = 1.0
    base_op: CountedOperator | MatVecOperator | None = None
    us: list = field(default_factory=list)
    vs: list = field(default_factory=list)
    secants: list = field(default_factory=list)
    skipped: int = 0

    @classmethod
    def scaled_identity(cls, n, scale=1.0):
        return cls(n=n, scale=float(scale))

    @classmethod
    def from_operator(cls, op):
        return cls(n=op.dim, base_op=op)

    @property
    def rank(self) -> int:
        return len(self.us)

    @property
    def U(self) -> np.ndarray:
        return np.column_stack(self.us) if self.us else np.zeros((self.n, 0))

    @property
    def V(self) -> np.ndarray:
        return np.column_stack(self.vs) if self.vs else np.zeros((self.n, 0))

    def low_rank_apply(self, x) -> np.ndarray:
        """``(U U^T - V V^T) x`` without touching the base."""
        out = np.zeros(self.n)
        for u, v in zip(self.us, self.vs):
            out += u * (u @ x) - v * (v @ x)
        return out

    def base_apply(self, x) -> np.ndarray:
        if self.base_op is None:
            return self.scale * x
        return self.base_op.apply(x)

    def apply_B(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise ValueError("dimension mismatch")
        return self.base_apply(x) + self.low_rank_apply(x)

    def apply_H(self, g) -> np.ndarray:
        """Inverse model applied to ``g`` by the two-loop recursion."""
        if self.base_op is not None:
            raise InverseUnavailableError("inverse unavailable for operator base; use a subproblem solve")
        q = np.array(g, dtype=np.float64)
        rhos = [1.0 / (y @ s) for s, y in self.secants]
        alphas = []
        for (s, y), rho in zip(reversed(self.secants), reversed(rhos)):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        q /= self.scale
        for (s, y), rho, a in zip(self.secants, rhos, reversed(alphas)):
            beta = rho * (y @ q)
            q += (a - beta) * s
        return q

    def metric(self) -> ProxMetric:
        if self.base_op is not None:
            raise InverseUnavailableError("prox metric requires a diagonal base")
        return ProxMetric(np.full(self.n, self.scale), self.U, self.V)

    def dense(self) -> np.ndarray:
        if self.base_op is None:
            base = self.scale * np.eye(self.n)
        else:
            base = as_dense(self.base_op)
        return base + self.U @ self.U.T - self.V @ self.V.T

    def copy(self) -> "BfgsAccumulator":
        return BfgsAccumulator(
            n=self.n,
            scale=self.scale,
            base_op=self.base_op,
            us=list(self.us),
            vs=list(self.vs),
            secants=list(self.secants),
            skipped=self.skipped,
        )

    def reset(self) -> None:
        self.us.clear()
        self.vs.clear()
        self.secants.clear()

    def rescaled(self, scale) -> "BfgsAccumulator":
        """Rebuild the model over the stored secants with a new identity scale."""
        fresh = BfgsAccumulator.scaled_identity(self.n, scale)
        for s, y in self.secants:
            bfgs_update(fresh, s, y)
        return fresh


def bfgs_update(acc: BfgsAccumulator, s, y, Bs=None):
    """Append the BFGS correction for the pair ``(s, y)`` in place.

    ``Bs`` may be supplied when ``B s`` is already known, which saves the base
    application. Returns ``(u, v)`` on acceptance and ``None`` when the pair
    fails the curvature test (``acc.skipped`` is incremented).
    """
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if s.shape != (acc.n,) or y.shape != (acc.n,):
        raise ValueError("dimension mismatch")
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite secant pair")
    ys = float(y @ s)
    if ys <= 1e-12 * np.linalg.norm(s) * np.linalg.norm(y) or ys <= 0.0:
        acc.skipped += 1
        return None
    if Bs is None:
        Bs = acc.apply_B(s)
    sBs = float(s @ Bs)
    if sBs <= 0.0:
        acc.skipped += 1
        return None
    u = y / np.sqrt(ys)
    v = Bs / np.sqrt(sBs)
    acc.us.append(u)
    acc.vs.append(v)
    acc.secants.append((s.copy(), y.copy()))
    return u, v


def apply_B(acc: BfgsAccumulator, x) -> np.ndarray:
    return acc.apply_B(x)


def apply_H(acc: BfgsAccumulator, g) -> np.ndarray:
    return acc.apply_H(g)


@dataclass
class SecantCache:
    """Column-stacked secant pairs ``(S, Y)`` satisfying ``B S = Y`` for the current model."""

    S: np.ndarray
    Y: np.ndarray

    @classmethod
    def empty(cls, n):
        return cls(np.zeros((n, 0)), np.zeros((n, 0)))

    @classmethod
    def from_pairs(cls, n, pairs):
        if not pairs:
            return cls.empty(n)
        return cls(np.column_stack([s for s, _ in pairs]), np.column_stack([y for _, y in pairs]))

    @property
    def m(self) -> int:
        return self.S.shape[1]

    def pairs(self):
        return [(self.S[:, j].copy(), self.Y[:, j].copy()) for j in range(self.m)]


def transform_secant_cache(cache: SecantCache, u, v) -> SecantCache:
    """Shift cached pairs to the model updated by ``u u^T - v v^T``.

    Pairs satisfying ``B S = Y`` become pairs of ``B + u u^T - v v^T``.
    """
    if cache.m == 0:
        return SecantCache(cache.S.copy(), cache.Y.copy())
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    Y = cache.Y + np.outer(u, u @ cache.S) - np.outer(v, v @ cache.S)
    return SecantCache(cache.S.copy(), Y)


def harvest_low_fi_secant(Ax_hat_low, Ax_low, eta) -> np.ndarray:
    """Low-fidelity image of the step ``eta * (x_hat - x)`` from two cached products."""
    return eta * (np.asarray(Ax_hat_low, dtype=np.float64) - np.asarray(Ax_low, dtype=np.float64))
