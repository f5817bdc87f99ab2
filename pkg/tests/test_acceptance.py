"""End-to-end acceptance checks; each prints one PASS/FAIL line."""

import json
import statistics
import time

import numpy as np
import pytest

from acceptance_log import verdict
from conftest import random_spd
from lcp_pqn.bench import cli
from lcp_pqn.bench.cli import instance_seeds
from lcp_pqn.fundamental import fundamental_quantity, lipschitz_bound
from lcp_pqn.instances import (
    DragDiagonal,
    Perturb,
    RpyLike,
    active_set,
    count_contacts,
    generate_instance,
    initialize_configuration,
)
from lcp_pqn.operators import CountedOperator, MatVecOperator, counted, infnorm_distance
from lcp_pqn.prox import ProxMetric, weighted_prox
from lcp_pqn.quasinewton import BfgsAccumulator, bfgs_update
from lcp_pqn.solvers import SOLVERS, SolveOptions, bi_pqn, bb_pgd, mono_pqn
from lcp_pqn.solvers.oracle import dense_prox_oracle, lemke, nnls_lcp
from lcp_pqn.stepsize import optimal_eta, step_to

pytestmark = pytest.mark.acceptance


def _model(k):
    return DragDiagonal() if k % 2 == 0 else RpyLike()


def _run(name, inst, opts):
    if name == "bi_pqn":
        return bi_pqn(counted(inst.A_high), counted(inst.A_low), inst.b, opts=opts)
    fn = SOLVERS[name]
    if name == "a_pgd":
        return fn(counted(inst.A_high), inst.b, L=inst.L, mu=inst.mu, opts=opts)
    if name == "pgd_fixed":
        return fn(counted(inst.A_high), inst.b, tau=1.0 / inst.L, opts=opts)
    return fn(counted(inst.A_high), inst.b, opts=opts)


@pytest.fixture(scope="module")
def small_suite():
    """200 contact LCPs on 2x2x2 and 3x3x3 lattices with a mild surrogate."""
    out = []
    for k in range(200):
        m = 2 + k % 2
        inst = generate_instance(m, 5000 + k, model=_model(k // 2))
        if inst.n:
            inst = inst.with_low_fidelity(Perturb(0.1 * inst.mu))
        out.append(inst)
    return out


@pytest.fixture(scope="module")
def small_suite_runs(small_suite):
    t0 = time.perf_counter()
    runs = []
    for inst in small_suite:
        if inst.n == 0:
            continue
        ref = lemke(inst.dense_A, inst.b)
        for name in SOLVERS:
            try:
                rep = _run(name, inst, SolveOptions(k_max=1000, record_iterates=False))
            except Exception as exc:  # a crash counts as non-convergence
                rep = exc
            runs.append((inst, name, rep, ref))
    return runs, time.perf_counter() - t0


class TestAcceptance:
    def test_01_oracle_agreement(self, small_suite, small_suite_runs):
        runs, elapsed = small_suite_runs
        n_max = max(inst.n for inst in small_suite)
        worst, converged, bad = 0.0, 0, []
        for inst, name, rep, ref in runs:
            if isinstance(rep, Exception) or not rep.converged:
                continue
            converged += 1
            err = float(np.max(np.abs(rep.x_final - ref)))
            worst = max(worst, err)
            if err > 1e-6:
                bad.append((inst.seed, name, err))
        ok = not bad and len(small_suite) == 200 and n_max <= 150 and elapsed < 120
        verdict(1, ok, f"{converged} converged runs, max |x - x_lemke| = {worst:.2e}, "
                       f"n_max = {n_max}, {elapsed:.1f}s, mismatches = {bad[:3]}")

    def test_02_weighted_prox(self, monkeypatch):
        rng = np.random.default_rng(2)
        calls = {"n": 0}
        for cls in (CountedOperator, MatVecOperator):
            orig = cls.apply

            def spy(self, x, _orig=orig):
                calls["n"] += 1
                return _orig(self, x)

            monkeypatch.setattr(cls, "apply", spy)
        errs, iters, extra_calls = [], [], 0
        for case in range(500):
            n = int(rng.integers(1, 31))
            r = int(rng.integers(0, 6))
            if case % 2 == 0:
                A = counted(random_spd(rng, n, cond=float(rng.uniform(2, 1e3))))
                acc = BfgsAccumulator.scaled_identity(n, float(rng.uniform(0.5, 2.0)))
                for _ in range(r):
                    s = rng.standard_normal(n)
                    bfgs_update(acc, s, A.apply(s))
                metric = acc.metric()
            else:
                d = rng.uniform(0.2, 3.0, n)
                U, V = rng.standard_normal((2, n, r))
                while np.linalg.eigvalsh(np.diag(d) + U @ U.T - V @ V.T)[0] <= 1e-2:
                    V *= 0.5
                metric = ProxMetric(d, U, V)
            xt = 3.0 * rng.standard_normal(n)
            before = calls["n"]
            x, _, k = weighted_prox(metric, xt)
            extra_calls += calls["n"] - before
            ref = dense_prox_oracle(metric.dense(), xt)
            errs.append(float(np.max(np.abs(x - ref))))
            iters.append(k)
        med = statistics.median(iters)
        ok = max(errs) <= 1e-8 and med <= 10 and extra_calls == 0
        verdict(2, ok, f"500 cases, max err = {max(errs):.2e}, median Newton iters = {med}, "
                       f"max iters = {max(iters)}, operator calls during prox = {extra_calls}")

    def test_03_mvp_accounting(self, small_suite):
        mismatches, checked = [], 0
        # caching only: no periodic refresh products
        opts = SolveOptions(k_max=1000, refresh_period=0)
        for inst in small_suite:
            if inst.n == 0:
                continue
            for name in ("mono_pqn", "bi_pqn"):
                A = counted(inst.A_high)
                if name == "mono_pqn":
                    rep = mono_pqn(A, inst.b, opts=opts)
                else:
                    rep = bi_pqn(A, counted(inst.A_low), inst.b, opts=opts)
                checked += 1
                if not (rep.hi_mvps == A.count == rep.iterations + 1):
                    mismatches.append((inst.seed, name, rep.hi_mvps, rep.iterations))
        # with the default refresh the extra products are exactly the refreshes
        for inst in small_suite[:50]:
            if inst.n == 0:
                continue
            rep = mono_pqn(inst.A_high, inst.b, opts=SolveOptions(k_max=1000))
            if rep.hi_mvps != rep.iterations + 1 + rep.refreshes:
                mismatches.append((inst.seed, "mono_pqn/refresh", rep.hi_mvps, rep.iterations))
        verdict(3, not mismatches, f"{checked} runs, hi_mvps == iterations + 1 violations: {mismatches[:3]}")

    def test_04_exact_over_relaxation(self, small_suite):
        rng = np.random.default_rng(4)
        worst_gap, failures, cases = -np.inf, 0, 0
        while cases < 1000:
            n = int(rng.integers(1, 11))
            A = random_spd(rng, n, cond=float(rng.uniform(1, 100)))
            b = 2.0 * rng.standard_normal(n)
            x = np.where(rng.uniform(size=n) < 0.3, 0.0, rng.uniform(0, 3, n))
            g = A @ x + b
            p = -g + rng.standard_normal(n)
            p[(x == 0) & (p < 0)] = 0.0
            if not p @ g < 0:
                p = np.where((x == 0) & (g > 0), 0.0, -g)
                if not p @ g < 0:
                    continue
            cases += 1
            eta = optimal_eta(x, p, g, A @ p)
            x_new = step_to(x, p, eta)

            def f(X):
                return 0.5 * np.einsum("ki,ij,kj->k", X, A, X) + X @ b

            neg = p < 0
            hi = float(np.min(-x[neg] / p[neg])) if np.any(neg) else 4.0 * eta
            etas = np.linspace(0.0, hi, 10_000)
            grid = float(f(x[None, :] + etas[:, None] * p[None, :]).min())
            val = float(f(x_new[None, :])[0])
            gap = (val - grid) / max(1.0, abs(grid))
            worst_gap = max(worst_gap, gap)
            failures += gap > 1e-10 or np.any(x_new < 0)
        sd_fail, steps = 0, 0
        for inst in small_suite:
            if inst.n == 0:
                continue
            for rep in (mono_pqn(inst.A_high, inst.b), bi_pqn(inst.A_high, inst.A_low, inst.b)):
                obj = rep.objective_trace
                for k, (eta, slope) in enumerate(zip(rep.etas, rep.slopes)):
                    steps += 1
                    if obj[k + 1] > obj[k] + 0.25 * eta * slope + 1e-12 * max(1.0, abs(obj[k])):
                        sd_fail += 1
        ok = failures == 0 and sd_fail == 0
        verdict(4, ok, f"{cases} cases, worst relative gap to grid = {worst_gap:.2e}, grid failures = {failures}; "
                       f"sufficient decrease violations = {sd_fail} of {steps} steps")

    def test_05_cg_equivalence(self):
        worst, compared, short = 0.0, 0, []
        made = 0
        for k in range(200):
            if made == 50:
                break
            inst = generate_instance(2 + k % 2, 7000 + k, model=_model(k // 2))
            if inst.n == 0:
                continue
            made += 1
            A, n = inst.dense_A, inst.n
            rng = np.random.default_rng(k)
            x_star = rng.uniform(1.0, 2.0, n)
            b = -A @ x_star
            w = np.linalg.eigvalsh(A)
            # CG's A-norm error bound keeps every iterate within sqrt(cond) |e0| of x_star
            e = rng.standard_normal(n)
            e *= 0.5 * x_star.min() / np.sqrt(w[-1] / w[0]) / np.linalg.norm(e)
            x0 = x_star + e
            rep = mono_pqn(A, b, x0, SolveOptions(record_iterates=True, eps_kkt=1e-14, k_max=50))
            x, r = x0.copy(), -b - A @ x0
            d = r.copy()
            K = min(n, 15)
            for it in range(1, K + 1):
                if it >= len(rep.iterates):
                    if not rep.converged:
                        short.append(inst.seed)
                    break
                a = (r @ r) / (d @ A @ d)
                x = x + a * d
                r_new = r - a * (A @ d)
                d = r_new + (r_new @ r_new) / (r @ r) * d
                r = r_new
                worst = max(worst, float(np.max(np.abs(rep.iterates[it] - x))))
                compared += 1
        ok = made == 50 and worst <= 1e-8 and not short
        verdict(5, ok, f"{made} interior instances, {compared} iterates compared, max |x_pqn - x_cg| = {worst:.2e}")

    def test_06_solver_ordering(self):
        t0 = time.perf_counter()
        mono, bb, bi_hi, bi_e, failed = [], [], [], [], 0
        for k, s in enumerate(instance_seeds(2024, 50)):
            inst = generate_instance(3, s, model=_model(k))
            c = fundamental_quantity(inst.dense_A).c_est
            inst = inst.with_low_fidelity(Perturb(0.05 * c))
            opts = SolveOptions(cost_ratio=inst.cost_ratio)
            r_mono = mono_pqn(inst.A_high, inst.b, opts=opts)
            r_bb = bb_pgd(inst.A_high, inst.b, opts=opts)
            r_bi = bi_pqn(inst.A_high, inst.A_low, inst.b, opts=opts)
            failed += not (r_mono.converged and r_bb.converged and r_bi.converged)
            mono.append(r_mono.e_mvps)
            bb.append(r_bb.e_mvps)
            bi_hi.append(r_bi.hi_mvps)
            bi_e.append(r_bi.e_mvps)
        elapsed = time.perf_counter() - t0
        m_mono, m_bb, m_bi = statistics.median(mono), statistics.median(bb), statistics.median(bi_hi)
        ok = m_mono < m_bb and m_bi <= 5 and m_bi < m_mono and elapsed < 300 and failed == 0
        verdict(6, ok, f"median E-MVPs BB-PGD {m_bb}, Mono-PQN {m_mono}, Bi-PQN hi-fi {m_bi} "
                       f"(E-MVPs {statistics.median(bi_e)}), nonconverged = {failed}, {elapsed:.1f}s")

    def test_07_fundamental_quantity(self):
        rng = np.random.default_rng(7)
        out_of_bracket = 0
        for _ in range(100):
            n = int(rng.integers(1, 21))
            A = random_spd(rng, n, cond=float(rng.uniform(1, 100)))
            lam = np.linalg.eigvalsh(A)[0]
            c = fundamental_quantity(A).c_est
            out_of_bracket += not (lam / n - 1e-8 <= c <= lam + 1e-8)
        diag_err = 0.0
        for _ in range(100):
            d = rng.uniform(0.01, 10.0, int(rng.integers(1, 21)))
            diag_err = max(diag_err, abs(fundamental_quantity(np.diag(d)).c_est - d.min()))
        dominated = 0
        t = np.linspace(-1.0, 1.0, 101)
        for k in range(100):
            n = 2 + k % 2
            A = random_spd(rng, n, cond=float(rng.uniform(1, 50)))
            if rng.uniform() < 0.5:
                A += rng.uniform(-0.5, 0.5) * (np.ones((n, n)) - np.eye(n)) * np.min(np.diag(A))
                A = 0.5 * (A + A.T)
                if np.linalg.eigvalsh(A)[0] <= 0:
                    A = random_spd(rng, n)
            grid = np.inf
            for i in range(n):
                for sigma in (-1.0, 1.0):
                    rest = np.meshgrid(*([t] * (n - 1)), indexing="ij")
                    Z = np.empty((rest[0].size, n))
                    Z[:, i] = sigma
                    for col, vals in zip([j for j in range(n) if j != i], rest):
                        Z[:, col] = vals.ravel()
                    grid = min(grid, float(np.max(Z * (Z @ A.T), axis=1).min()))
            dominated += fundamental_quantity(A).c_est <= grid + 1e-10
        ok = out_of_bracket == 0 and diag_err <= 1e-12 and dominated == 100
        verdict(7, ok, f"bracket violations {out_of_bracket}/100, diagonal max err {diag_err:.1e}, "
                       f"grid domination {dominated}/100")

    def test_08_lipschitz_bound(self):
        rng = np.random.default_rng(8)
        violations, worst_ratio, pairs = 0, 0.0, 0
        k = 0
        while pairs < 100:
            if k % 2 == 0:
                inst = generate_instance(2 + (k // 2) % 2, 9000 + k, model=_model(k // 2))
                if inst.n == 0:
                    k += 1
                    continue
                A, b = inst.dense_A, inst.b
            else:
                n = int(rng.integers(2, 9))
                A = random_spd(rng, n, cond=float(rng.uniform(1, 20)))
                b = 3.0 * rng.standard_normal(n)
            k += 1
            c = fundamental_quantity(A).c_est
            delta = float(rng.uniform(0.05, 0.5)) * c
            perturbed = []
            for _ in range(2):
                S = rng.standard_normal(A.shape)
                S = 0.5 * (S + S.T)
                perturbed.append(A + float(rng.uniform(0.2, 1.0)) * delta * S / np.abs(S).sum(axis=1).max())
            A1, A2 = perturbed
            x1, x2 = lemke(A1, b), lemke(A2, b)
            # second oracle route guards against a pivoting failure
            assert np.max(np.abs(x1 - nnls_lcp(A1, b))) <= 1e-8 * max(1.0, np.max(np.abs(x1)))
            lhs = float(np.max(np.abs(x1 - x2)))
            rhs = lipschitz_bound(c, delta, b) * infnorm_distance(A1, A2)
            pairs += 1
            if rhs > 0:
                worst_ratio = max(worst_ratio, lhs / rhs)
            violations += lhs > rhs * (1 + 1e-9) + 1e-12
        verdict(8, violations == 0, f"{pairs} pairs, violations = {violations}, max lhs/rhs = {worst_ratio:.3f}")

    def test_09_initializer(self):
        outside, nonmonotone = [], 0
        for m in (3, 4, 5):
            lo, hi = m**3 / 2 - m**3 / 10, m**3 / 2 + m**3 / 10
            for seed in range(10):
                gamma, cfg = initialize_configuration(m, seed=seed)
                n = len(active_set(cfg, cfg.lattice_meta["delta_t"]))
                if not (lo <= n <= hi and cfg.lattice_meta["in_window"]):
                    outside.append((m, seed, n))
                base = cfg.scaled(1.0 / gamma)
                counts = [count_contacts(base, cfg.lattice_meta["delta_t"], g)
                          for g in np.linspace(0.5 * gamma, 1.5 * gamma, 20)]
                nonmonotone += any(a < b for a, b in zip(counts, counts[1:]))
        verdict(9, not outside and nonmonotone == 0,
                f"30 configurations, out of window: {outside}, non-monotone sweeps: {nonmonotone}")

    def test_10_determinism(self, tmp_path, monkeypatch, capsys):
        def generate(d):
            assert cli.main(["generate", "--m", "3", "--count", "6", "--seed", "7", "--model", "mix",
                             "--lowfi", "perturb:0.05c", "--out", str(d)]) == 0

        def bench(d, out):
            assert cli.main(["bench", "--suite", str(d), "--solvers", "bb_pgd,mono_pqn,bi_pqn",
                             "--baseline", "bb_pgd", "--out", str(out)]) == 0

        def strip_time(text):
            rows = [r.split(",") for r in text.splitlines()]
            col = rows[0].index("wall_time_s")
            return [r[:col] + r[col + 1:] for r in rows]

        generate(tmp_path / "a")
        generate(tmp_path / "b")
        files = sorted(p.name for p in (tmp_path / "a").iterdir())
        same_files = files == sorted(p.name for p in (tmp_path / "b").iterdir()) and all(
            (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files
        )
        bench(tmp_path / "a", tmp_path / "r1")
        monkeypatch.setenv("LCP_PQN_THREADS", "3")
        bench(tmp_path / "a", tmp_path / "r2")
        capsys.readouterr()
        same_csv = strip_time((tmp_path / "r1.csv").read_text()) == strip_time((tmp_path / "r2.csv").read_text())
        same_json = (tmp_path / "r1.json").read_bytes() == (tmp_path / "r2.json").read_bytes()
        json.loads((tmp_path / "r1.json").read_text())
        verdict(10, same_files and same_csv and same_json,
                f"{len(files)} instance files identical = {same_files}, CSV identical = {same_csv}, "
                f"summary identical = {same_json}")
