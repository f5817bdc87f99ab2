"""Options, reports and termination shared by every LCP solver."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field

import numpy as np

from ..operators import CountedOperator, counted


class Termination(str, enum.Enum):
    KKT_ABS = "KktAbs"
    KKT_REL = "KktRel"
    MAX_ITER = "MaxIter"
    STALLED = "Stalled"

    @property
    def converged(self) -> bool:
        return self in (Termination.KKT_ABS, Termination.KKT_REL)


class SolverError(RuntimeError):
    pass


class DivergenceError(SolverError):
    pass


@dataclass
class SolveOptions:
    """Knobs shared by all solvers; unused fields are ignored by a given method.

    ``tau`` is the forward step (PQN) or the initial step (BB-PGD, zeroSR1).
    Bi-PQN subproblems stop at ``eps_kkt * subproblem_eps_factor``. The
    relative KKT test (``kkt_rel``) is off by default: it fires whenever two
    consecutive absolute errors coincide, which happens far from the solution
    on methods whose error is not monotone.
    """

    k_max: int = 100
    eps_kkt: float = 1e-8
    tau: float = 1.0
    subproblem_eps_factor: float = 1e-2
    subproblem_k_max: int = 50
    refresh_period: int = 20
    warm_start: np.ndarray | None = None
    kkt_norm: str = "2"
    kkt_rel: bool = False
    literal_alg1: bool = False
    bb_seed_scaling: bool = False
    record_iterates: bool = False
    cost_ratio: float = 10.0
    prox_tol: float | None = None
    prox_j_max: int = 100
    sr1_gamma: float = 0.8
    pgd_optimal_eta: bool = False

    def __post_init__(self):
        if not self.eps_kkt > 0:
            raise ValueError("eps_kkt must be positive")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")
        if self.kkt_norm not in ("2", "inf"):
            raise ValueError("kkt_norm must be '2' or 'inf'")
        if not self.cost_ratio >= 1:
            raise ValueError("cost_ratio must be >= 1")


@dataclass
class SolverReport:
    x_final: np.ndarray
    iterations: int
    hi_mvps: int
    lo_mvps: int
    e_mvps: float
    kkt_abs_trace: list
    kkt_rel_trace: list
    objective_trace: list
    termination: Termination
    solver: str = ""
    iterates: list = field(default_factory=list)
    etas: list = field(default_factory=list)
    slopes: list = field(default_factory=list)
    refreshes: int = 0
    inner_iterations: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.termination.converged

    @property
    def kkt_final(self) -> float:
        return self.kkt_abs_trace[-1] if self.kkt_abs_trace else float("nan")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["x_final"] = self.x_final.tolist()
        d["termination"] = self.termination.value
        d["iterates"] = [np.asarray(v).tolist() for v in self.iterates]
        d["converged"] = self.converged
        return d


def kkt_errors(x, grad, prev_abs=None, norm: str = "2") -> tuple[float, float]:
    """Absolute and relative KKT errors of ``x`` given ``grad = A x + b``."""
    m = np.minimum(x, grad)
    ab = float(np.linalg.norm(m, np.inf if norm == "inf" else 2)) if m.size else 0.0
    if prev_abs is None:
        return ab, float("inf")
    den = max(ab, prev_abs)
    rel = abs(ab - prev_abs) / den if den > 0 else 0.0
    return ab, rel


def objective(x, grad, b) -> float:
    """``1/2 x^T A x + b^T x`` from a cached gradient."""
    return 0.5 * float(x @ (grad + b))


class Tracker:
    """Per-iteration bookkeeping and the shared termination test."""

    def __init__(self, b, opts: SolveOptions):
        self.b = b
        self.opts = opts
        self.abs_trace = []
        self.rel_trace = []
        self.obj_trace = []
        self.iterates = []
        self.prev = None

    def check(self, x, grad, eps=None, k=0, k_max=None):
        """Record the current point; return a termination reason or ``None``."""
        eps = self.opts.eps_kkt if eps is None else eps
        k_max = self.opts.k_max if k_max is None else k_max
        ab, rel = kkt_errors(x, grad, self.prev, self.opts.kkt_norm)
        self.prev = ab
        self.abs_trace.append(ab)
        self.rel_trace.append(rel)
        self.obj_trace.append(objective(x, grad, self.b))
        if self.opts.record_iterates:
            self.iterates.append(np.array(x))
        if not np.isfinite(ab):
            raise SolverError("non-finite iterate")
        if ab <= eps:
            return Termination.KKT_ABS
        if self.opts.kkt_rel and rel <= eps:
            return Termination.KKT_REL
        if k >= k_max:
            return Termination.MAX_ITER
        return None


def prepare(A, b, x0, opts):
    A = counted(A)
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.dim,):
        raise ValueError("b has wrong length")
    if x0 is None:
        x0 = opts.warm_start
    x = np.zeros(A.dim) if x0 is None else np.array(x0, dtype=np.float64)
    if x.shape != (A.dim,):
        raise ValueError("x0 has wrong length")
    if np.any(x < 0):
        raise ValueError("x0 must be feasible (nonnegative)")
    return A, b, x


def make_report(name, x, k, A: CountedOperator, hi0, tracker, term, opts, lo=0, **extra):
    hi = A.count - hi0
    return SolverReport(
        x_final=np.asarray(x),
        iterations=k,
        hi_mvps=hi,
        lo_mvps=lo,
        e_mvps=hi + lo / opts.cost_ratio,
        kkt_abs_trace=tracker.abs_trace,
        kkt_rel_trace=tracker.rel_trace,
        objective_trace=tracker.obj_trace,
        termination=term,
        solver=name,
        iterates=tracker.iterates,
        **extra,
    )
