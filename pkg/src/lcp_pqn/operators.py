"""Matrix-free operators with exact matrix-vector product (MVP) accounting.

Every access to an LCP matrix goes through a :class:`MatVecOperator`. Solvers
receive a :class:`CountedOperator` wrapper so the number of applications can be
asserted exactly; oracles talk to the inner operator and bypass the counter.
"""

from __future__ import annotations

import enum
import threading
from typing import Callable

import numpy as np
import scipy.linalg as sla

#: Largest dimension for which a dense realization is built by default.
DENSE_CAP = 2000


class Fidelity(enum.Enum):
    HIGH = "high"
    LOW = "low"


class MatVecOperator:
    """Symmetric positive definite operator known only through ``apply``.

    Parameters
    ----------
    dim : int
        Size of the (square) operator.
    apply : callable
        Maps a float64 vector of length ``dim`` to a vector of the same length.
    fidelity : Fidelity
        Tag used by reports; does not change behaviour.
    dense : ndarray, optional
        Dense matrix, when one is already known. Used by :func:`as_dense` to
        avoid column-by-column extraction.
    """

    def __init__(
        self,
        dim: int,
        apply: Callable[[np.ndarray], np.ndarray],
        fidelity: Fidelity = Fidelity.HIGH,
        dense: np.ndarray | None = None,
        name: str = "",
    ):
        if dim < 0:
            raise ValueError("dim must be nonnegative")
        self._dim = int(dim)
        self._apply = apply
        self._fidelity = fidelity
        self._dense = None if dense is None else np.array(dense, dtype=np.float64)
        if self._dense is not None:
            self._dense.setflags(write=False)
        self.name = name

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def fidelity(self) -> Fidelity:
        return self._fidelity

    @property
    def dense(self) -> np.ndarray | None:
        return self._dense

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self._dim,):
            raise ValueError(f"expected vector of length {self._dim}, got shape {x.shape}")
        return np.asarray(self._apply(x), dtype=np.float64)

    def __matmul__(self, x):
        return self.apply(x)

    @classmethod
    def from_dense(cls, A, fidelity: Fidelity = Fidelity.HIGH, name: str = "") -> "MatVecOperator":
        A = np.array(A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("dense operator must be square")
        A.setflags(write=False)
        return cls(A.shape[0], lambda x: A @ x, fidelity=fidelity, dense=A, name=name)

    @classmethod
    def identity(cls, dim: int, fidelity: Fidelity = Fidelity.HIGH) -> "MatVecOperator":
        return cls(dim, lambda x: x.copy(), fidelity=fidelity, dense=np.eye(dim), name="identity")

    def __repr__(self) -> str:
        return f"MatVecOperator(dim={self._dim}, fidelity={self._fidelity.value}, name={self.name!r})"


class CountedOperator:
    """Counting wrapper around a :class:`MatVecOperator`.

    The counter increment is guarded by a lock so the wrapper can be shared by
    concurrent readers.
    """

    def __init__(self, inner: MatVecOperator):
        self.inner = inner
        self._count = 0
        self._lock = threading.Lock()

    @property
    def dim(self) -> int:
        return self.inner.dim

    @property
    def fidelity(self) -> Fidelity:
        return self.inner.fidelity

    @property
    def count(self) -> int:
        return self._count

    def reset(self) -> None:
        with self._lock:
            self._count = 0

    def apply(self, x: np.ndarray) -> np.ndarray:
        y = self.inner.apply(x)
        with self._lock:
            self._count += 1
        return y

    __matmul__ = apply

    def __repr__(self) -> str:
        return f"CountedOperator({self.inner!r}, count={self._count})"


def counted(op) -> CountedOperator:
    """Wrap ``op`` (operator, counted operator or dense array) in a fresh counter."""
    if isinstance(op, CountedOperator):
        return op
    if isinstance(op, MatVecOperator):
        return CountedOperator(op)
    return CountedOperator(MatVecOperator.from_dense(op))


def apply_counted(op: CountedOperator, x: np.ndarray) -> np.ndarray:
    """Apply ``op`` to ``x`` and bump its counter by one."""
    return op.apply(x)


def as_dense(op, cap: int = DENSE_CAP) -> np.ndarray:
    """Dense realization of an operator, bypassing any counter.

    Raises ``ValueError`` when the dimension exceeds ``cap``.
    """
    if isinstance(op, CountedOperator):
        op = op.inner
    if isinstance(op, np.ndarray):
        return op
    if op.dim > cap:
        raise ValueError(f"dense realization refused: dim {op.dim} > cap {cap}")
    if op.dense is not None:
        return np.array(op.dense)
    n = op.dim
    out = np.empty((n, n))
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        out[:, j] = op.apply(e)
        e[j] = 0.0
    return out


class DiagPlusLowRankInverse:
    """Applies ``(D + U U^T)^{-1}`` via the Woodbury identity.

    The ``r x r`` capacitance matrix ``I + U^T D^{-1} U`` is Cholesky-factored
    once at construction.
    """

    def __init__(self, d: np.ndarray, U: np.ndarray):
        d = np.asarray(d, dtype=np.float64)
        if np.any(~np.isfinite(d)) or np.any(d <= 0):
            raise ValueError("diagonal must be strictly positive")
        U = np.asarray(U, dtype=np.float64).reshape(d.shape[0], -1)
        self.d = d
        self.U = U
        self.DinvU = U / d[:, None]
        r = U.shape[1]
        if r > 0:
            cap = np.eye(r) + U.T @ self.DinvU
            try:
                self._factor = sla.cho_factor(cap, lower=True, check_finite=True)
            except np.linalg.LinAlgError as exc:
                raise np.linalg.LinAlgError("singular Woodbury capacitance matrix") from exc
        else:
            self._factor = None

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=np.float64)
        y = rhs / (self.d if rhs.ndim == 1 else self.d[:, None])
        if self._factor is None:
            return y
        return y - self.DinvU @ sla.cho_solve(self._factor, self.U.T @ y)


def woodbury_apply_inverse(d, U, rhs) -> np.ndarray:
    """Solve ``(diag(d) + U U^T) y = rhs`` in O(n r^2)."""
    d = np.asarray(d, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape[0] != d.shape[0]:
        raise ValueError("rhs length does not match diagonal")
    return DiagPlusLowRankInverse(d, U).solve(rhs)


def infnorm_distance(A, B) -> float:
    """Induced infinity norm (max absolute row sum) of ``A - B``."""
    A = as_dense(A)
    B = as_dense(B)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    if A.size == 0:
        return 0.0
    return float(np.max(np.sum(np.abs(A - B), axis=1)))
