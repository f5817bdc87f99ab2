"""Solver dispatch, benchmark records and suite statistics."""

from __future__ import annotations

import csv
import io
import math
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..fundamental import fundamental_quantity
from ..instances import LcpInstance, Perturb, Precision32, Sparsify, deserialize
from ..instances.io import SUFFIX
from ..solvers import SOLVERS, SolveOptions, SolverError, SolverReport

CSV_COLUMNS = [
    "instance_id", "solver", "iterations", "hi_mvps", "lo_mvps", "e_mvps",
    "kkt_final", "termination", "wall_time_s", "seed", "status",
]
SUMMARY_VERSION = 1
THREADS_ENV = "LCP_PQN_THREADS"


class UsageError(ValueError):
    """Bad flags or inputs; maps to exit code 1."""


def parse_lowfi(text: str | None):
    """Parse ``none``, ``perturb:<delta>``, ``perturb:<f>c``, ``precision32`` or ``sparsify:<cutoff>``.

    A trailing ``c`` on the perturbation size makes it relative to the
    estimated fundamental quantity of the instance. Returns ``None`` or a
    callable mapping an instance to its scheme.
    """
    if text is None or text == "none":
        return None
    kind, _, arg = text.partition(":")
    try:
        if kind == "perturb":
            if arg.endswith("c"):
                frac = float(arg[:-1])
                if frac < 0:
                    raise ValueError
                return lambda inst: Perturb(frac * fundamental_quantity(inst.dense_A).c_est if inst.n else 0.0)
            delta = float(arg)
            if delta < 0:
                raise ValueError
            return lambda inst: Perturb(delta)
        if kind in ("precision32", "fp32") and not arg:
            return lambda inst: Precision32()
        if kind == "sparsify":
            cutoff = float(arg)
            if not cutoff > 0:
                raise ValueError
            return lambda inst: Sparsify(cutoff)
    except ValueError:
        pass
    raise UsageError(f"invalid low-fidelity scheme {text!r}")


def run_solver(name: str, inst: LcpInstance, opts: SolveOptions, x0=None) -> SolverReport:
    if name not in SOLVERS:
        raise UsageError(f"unknown solver {name!r}; choose from {', '.join(SOLVERS)}")
    fn = SOLVERS[name]
    if name == "bi_pqn":
        if inst.A_low is None:
            raise UsageError("bi_pqn needs an instance with a low-fidelity operator")
        return fn(inst.A_high, inst.A_low, inst.b, x0, opts=opts)
    if name == "a_pgd":
        if not (math.isfinite(inst.L) and math.isfinite(inst.mu)) and inst.n:
            raise UsageError("a_pgd needs the spectral bounds L and mu")
        L = inst.L if inst.n else 1.0
        mu = inst.mu if inst.n else 1.0
        return fn(inst.A_high, inst.b, x0, L=L, mu=mu, opts=opts)
    return fn(inst.A_high, inst.b, x0, opts=opts)


def measure_cost_ratio(inst: LcpInstance, warmups: int = 5) -> float:
    """Median wall-clock ratio of a high- to a low-fidelity product (at least 1)."""
    if inst.A_low is None or inst.n == 0:
        return inst.cost_ratio
    x = np.ones(inst.n)

    def timed(op):
        out = []
        for _ in range(warmups):
            t = time.perf_counter()
            op.apply(x)
            out.append(time.perf_counter() - t)
        return statistics.median(out)

    hi, lo = timed(inst.A_high), timed(inst.A_low)
    return max(1.0, hi / lo) if lo > 0 else inst.cost_ratio


@dataclass
class BenchRecord:
    instance_id: str
    solver: str
    iterations: int
    hi_mvps: int
    lo_mvps: int
    e_mvps: float
    kkt_final: float
    termination: str
    wall_time_s: float
    seed: int
    status: str = "ok"

    def row(self, with_time: bool = True) -> list:
        out = []
        for col in CSV_COLUMNS:
            v = getattr(self, col)
            if col == "wall_time_s":
                v = f"{v:.6f}" if with_time else ""
            elif isinstance(v, float):
                v = repr(v)
            out.append(v)
        return out


def _solve_one(inst_id, inst, solvers, opts_kw):
    records = []
    for name in solvers:
        opts = SolveOptions(**opts_kw, cost_ratio=inst.cost_ratio)
        t = time.perf_counter()
        try:
            rep = run_solver(name, inst, opts)
        except (SolverError, UsageError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            records.append(BenchRecord(
                inst_id, name, 0, 0, 0, math.nan, math.nan, type(exc).__name__,
                time.perf_counter() - t, inst.seed, "failed",
            ))
            continue
        records.append(BenchRecord(
            inst_id, name, rep.iterations, rep.hi_mvps, rep.lo_mvps, float(rep.e_mvps),
            float(rep.kkt_final), rep.termination.value, time.perf_counter() - t, inst.seed,
        ))
    return records


def suite_files(suite) -> list[Path]:
    suite = Path(suite)
    if not suite.is_dir():
        raise UsageError(f"suite directory {suite} does not exist")
    files = sorted(p for p in suite.iterdir() if p.name.endswith(SUFFIX))
    if not files:
        raise UsageError(f"no {SUFFIX} files in {suite}")
    return files


def worker_count(default: int = 1) -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return default
    try:
        n = int(raw)
    except ValueError as exc:
        raise UsageError(f"{THREADS_ENV} must be a positive integer") from exc
    if n < 1:
        raise UsageError(f"{THREADS_ENV} must be a positive integer")
    return n


def run_suite(suite, solvers, opts_kw=None, measure_ratio=False, workers=None) -> list[BenchRecord]:
    """Run every solver on every instance; records come back in instance order."""
    opts_kw = {} if opts_kw is None else dict(opts_kw)
    files = suite_files(suite)
    for name in solvers:
        if name not in SOLVERS:
            raise UsageError(f"unknown solver {name!r}; choose from {', '.join(SOLVERS)}")
    workers = worker_count() if workers is None else workers

    def job(path):
        inst = deserialize(path)
        if measure_ratio:
            inst.cost_ratio = measure_cost_ratio(inst)
        return _solve_one(path.name[: -len(SUFFIX)], inst, solvers, opts_kw)

    if workers == 1:
        chunks = [job(p) for p in files]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(job, files))
    return [r for chunk in chunks for r in chunk]


def records_csv(records, with_time: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(r.row(with_time))
    return buf.getvalue()


def _stats(vals):
    if not vals:
        return {"min": None, "median": None, "mean": None, "max": None}
    return {
        "min": float(min(vals)),
        "median": float(statistics.median(vals)),
        "mean": float(statistics.fmean(vals)),
        "max": float(max(vals)),
    }


def summarize(records, baseline: str | None = None) -> dict:
    """Per-solver E-MVP statistics and speedups; a pure function of ``records``.

    Failed records are excluded from the statistics and listed. The speedup is
    the ratio of median E-MVPs (baseline over solver); ``fraction_better`` is
    the share of instances where the solver used strictly fewer E-MVPs than
    the baseline on the same instance.
    """
    solvers = list(dict.fromkeys(r.solver for r in records))
    by = {s: [r for r in records if r.solver == s] for s in solvers}
    out = {"version": SUMMARY_VERSION, "baseline": baseline, "solvers": {}, "excluded": []}
    base = {r.instance_id: r.e_mvps for r in by.get(baseline, []) if r.status == "ok"}
    for s in solvers:
        ok = [r for r in by[s] if r.status == "ok"]
        e = [r.e_mvps for r in ok]
        entry = {
            "count": len(by[s]),
            "failed": len(by[s]) - len(ok),
            "converged": sum(r.termination in ("KktAbs", "KktRel") for r in ok),
            "e_mvps": _stats(e),
            "hi_mvps": _stats([r.hi_mvps for r in ok]),
            "lo_mvps": _stats([r.lo_mvps for r in ok]),
        }
        if baseline is not None and base and e:
            bmed = statistics.median(base.values())
            med = statistics.median(e)
            entry["speedup_vs_baseline"] = float(bmed / med) if med > 0 else None
            paired = [(r.e_mvps, base[r.instance_id]) for r in ok if r.instance_id in base]
            entry["fraction_better"] = (
                float(sum(a < b for a, b in paired) / len(paired)) if paired else None
            )
        out["solvers"][s] = entry
        out["excluded"] += [f"{r.instance_id}:{s}" for r in by[s] if r.status != "ok"]
    return out


def read_records(text: str) -> list[BenchRecord]:
    """Parse a records CSV back into :class:`BenchRecord` objects."""
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for r in rows:
        out.append(BenchRecord(
            r["instance_id"], r["solver"], int(r["iterations"]), int(r["hi_mvps"]),
            int(r["lo_mvps"]), float(r["e_mvps"]), float(r["kkt_final"]), r["termination"],
            float(r["wall_time_s"]) if r["wall_time_s"] else math.nan, int(r["seed"]), r["status"],
        ))
    return out
