from .baselines import a_pgd, bb_pgd, min_map_newton, pgd_fixed, zero_sr1
from .common import (
    DivergenceError,
    SolveOptions,
    SolverError,
    SolverReport,
    Termination,
    kkt_errors,
    objective,
)
from .oracle import lemke, nnls_lcp
from .pqn import bi_pqn, mono_pqn

SOLVERS = {
    "mono_pqn": mono_pqn,
    "bi_pqn": bi_pqn,
    "bb_pgd": bb_pgd,
    "a_pgd": a_pgd,
    "zero_sr1": zero_sr1,
    "min_map_newton": min_map_newton,
    "pgd_fixed": pgd_fixed,
}

__all__ = [
    "SOLVERS",
    "DivergenceError",
    "SolveOptions",
    "SolverError",
    "SolverReport",
    "Termination",
    "a_pgd",
    "bb_pgd",
    "bi_pqn",
    "kkt_errors",
    "lemke",
    "min_map_newton",
    "mono_pqn",
    "nnls_lcp",
    "objective",
    "pgd_fixed",
    "zero_sr1",
]
