"""``lcp-pqn`` command line: generate suites, solve instances, benchmark, estimate c(A).

Exit codes: 0 success, 1 usage or input error, 2 solver did not converge.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from ..fundamental import fundamental_quantity, lipschitz_bound, neighborhood_check
from ..instances import DragDiagonal, InstanceError, RpyLike, generate_instance, serialize
from ..instances.io import SUFFIX, deserialize
from ..operators import infnorm_distance
from ..solvers import SOLVERS, SolveOptions
from .harness import (
    UsageError,
    parse_lowfi,
    records_csv,
    run_solver,
    run_suite,
    summarize,
)

EXIT_OK, EXIT_USAGE, EXIT_NONCONVERGED = 0, 1, 2
MODELS = ("drag", "rpy", "mix")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _model(kind: str, k: int):
    if kind == "mix":
        kind = MODELS[k % 2]
    return DragDiagonal() if kind == "drag" else RpyLike()


def instance_seeds(seed: int, count: int) -> list[int]:
    """Independent 31-bit seeds for ``count`` instances derived from ``seed``."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(c.generate_state(1)[0] >> 1) for c in children]


def cmd_generate(args) -> int:
    if args.count < 0:
        raise UsageError("--count must be nonnegative")
    if args.m < 2:
        raise UsageError("--m must be at least 2")
    lowfi = parse_lowfi(args.lowfi)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create {out}: {exc}") from exc
    for k, s in enumerate(instance_seeds(args.seed, args.count)):
        inst = generate_instance(args.m, s, model=_model(args.model, k), cost_ratio=args.cost_ratio)
        if lowfi is not None:
            inst = inst.with_low_fidelity(lowfi(inst))
        path = out / f"inst_{k:04d}{SUFFIX}"
        try:
            serialize(inst, path)
        except OSError as exc:
            raise UsageError(f"cannot write {path}: {exc}") from exc
        print(f"{path.name} n={inst.n} seed={inst.seed} in_window={inst.generator['in_window']}")
    return EXIT_OK


def _options(args) -> dict:
    return {
        "eps_kkt": args.eps,
        "k_max": args.k_max,
        "tau": args.tau,
        "kkt_norm": args.kkt_norm,
        "kkt_rel": args.kkt_rel,
        "literal_alg1": args.literal_alg1,
        "bb_seed_scaling": args.bb_seed_scaling,
        "pgd_optimal_eta": args.pgd_optimal_eta,
    }


def cmd_solve(args) -> int:
    if args.solver not in SOLVERS:
        raise UsageError(f"unknown solver {args.solver!r}; choose from {', '.join(SOLVERS)}")
    inst = _load(args.instance)
    opts = SolveOptions(**_options(args), cost_ratio=inst.cost_ratio)
    rep = run_solver(args.solver, inst, opts)
    out = {
        "solver": rep.solver,
        "n": inst.n,
        "iterations": rep.iterations,
        "hi_mvps": rep.hi_mvps,
        "lo_mvps": rep.lo_mvps,
        "e_mvps": rep.e_mvps,
        "kkt_final": rep.kkt_final,
        "termination": rep.termination.value,
        "converged": rep.converged,
        "x": rep.x_final.tolist(),
    }
    print(json.dumps(out, allow_nan=True))
    return EXIT_OK if rep.converged else EXIT_NONCONVERGED


def _bench_paths(out: str) -> tuple[Path, Path]:
    p = Path(out)
    if p.suffix in (".csv", ".json"):
        p = p.with_suffix("")
    return p.with_suffix(".csv"), p.with_suffix(".json")


def cmd_bench(args) -> int:
    solvers = [s.strip() for s in args.solvers.split(",") if s.strip()]
    if not solvers:
        raise UsageError("--solvers is empty")
    if args.baseline is not None and args.baseline not in solvers:
        raise UsageError("--baseline must be one of --solvers")
    records = run_suite(args.suite, solvers, _options(args), measure_ratio=args.measure_ratio)
    summary = summarize(records, args.baseline)
    summary["cost_ratio_source"] = "measured" if args.measure_ratio else "instance"
    csv_path, json_path = _bench_paths(args.out)
    try:
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        csv_path.write_text(records_csv(records), encoding="utf-8")
        json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot write results: {exc}") from exc
    for name, entry in summary["solvers"].items():
        med = entry["e_mvps"]["median"]
        print(f"{name:16s} median E-MVPs {med}  failed {entry['failed']}")
    return EXIT_OK


def cmd_cofa(args) -> int:
    inst = _load(args.instance)
    if inst.dense_A is None or inst.n == 0:
        raise UsageError("instance has no dense matrix")
    res = fundamental_quantity(inst.dense_A)
    out = {
        "c_est": res.c_est,
        "bracket": [res.lower, res.upper],
        "neighborhood_ok": None,
        "distance": None,
        "delta": None,
        "lipschitz_coeff": None,
    }
    if inst.dense_A_low is not None:
        out["distance"] = infnorm_distance(inst.dense_A, inst.dense_A_low)
        out["neighborhood_ok"] = neighborhood_check(inst.dense_A, inst.dense_A_low, res.c_est)
    delta = args.delta if args.delta is not None else out["distance"]
    if delta is not None:
        out["delta"] = delta
        if delta < res.c_est:
            out["lipschitz_coeff"] = lipschitz_bound(res.c_est, delta, inst.b)
    print(json.dumps(out))
    return EXIT_OK


def _load(path):
    try:
        return deserialize(path)
    except FileNotFoundError as exc:
        raise UsageError(f"no such instance file: {path}") from exc
    except InstanceError as exc:
        raise UsageError(f"invalid instance {path}: {exc}") from exc


def _solver_flags(p):
    p.add_argument("--eps", type=float, default=1e-8, help="KKT tolerance")
    p.add_argument("--k-max", type=int, default=100, help="iteration cap")
    p.add_argument("--tau", type=float, default=1.0, help="forward / initial step")
    p.add_argument("--kkt-norm", choices=("2", "inf"), default="2")
    p.add_argument("--kkt-rel", action="store_true", help="also stop on the relative KKT error")
    p.add_argument("--literal-alg1", action="store_true", help="literal forward step x + tau (x - H g)")
    p.add_argument("--bb-seed-scaling", action="store_true", help="rescale the initial Hessian after one step")
    p.add_argument("--pgd-optimal-eta", action="store_true", help="exact over-relaxation in BB-PGD")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lcp-pqn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a suite of synthetic contact LCPs")
    g.add_argument("--m", type=int, required=True, help="lattice side (m^3 spheres)")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--model", choices=MODELS, default="drag")
    g.add_argument("--lowfi", default="none",
                   help="none | perturb:<delta> | perturb:<frac>c | precision32 | sparsify:<cutoff>")
    g.add_argument("--cost-ratio", type=float, default=10.0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve one instance and print a JSON report")
    s.add_argument("--instance", required=True)
    s.add_argument("--solver", required=True)
    _solver_flags(s)
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="run solvers over a suite")
    b.add_argument("--suite", required=True)
    b.add_argument("--solvers", default="bb_pgd,mono_pqn")
    b.add_argument("--baseline", default=None)
    b.add_argument("--out", required=True, help="output stem; writes <stem>.csv and <stem>.json")
    b.add_argument("--measure-ratio", action="store_true", help="time products instead of the stored cost ratio")
    _solver_flags(b)
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("cofa", help="estimate the fundamental quantity of an instance")
    c.add_argument("--instance", required=True)
    c.add_argument("--delta", type=float, default=None)
    c.set_defaults(func=cmd_cofa)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, InstanceError, ValueError) as exc:
        print(f"lcp-pqn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
