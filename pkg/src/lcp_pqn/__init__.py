"""Matrix-free solvers for symmetric positive definite linear complementarity problems."""

from .operators import CountedOperator, Fidelity, MatVecOperator, counted
from .solvers import SOLVERS, SolveOptions, SolverReport, Termination, bi_pqn, mono_pqn

__version__ = "0.1.0"

__all__ = [
    "SOLVERS",
    "CountedOperator",
    "Fidelity",
    "MatVecOperator",
    "SolveOptions",
    "SolverReport",
    "Termination",
    "bi_pqn",
    "counted",
    "mono_pqn",
]
