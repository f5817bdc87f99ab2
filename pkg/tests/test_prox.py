import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lcp_pqn.prox import (
    DualPoint,
    IndefiniteMetricError,
    ProxError,
    ProxMetric,
    jacobian_L,
    project_nonneg,
    residual_L,
    weighted_prox,
)
from lcp_pqn.solvers.oracle import dense_prox_oracle, lemke


def random_metric(rng, n, r):
    """PD metric with V shrunk until ``B`` keeps its smallest eigenvalue above 0.05."""
    d = rng.uniform(0.5, 2.0, n)
    U = rng.standard_normal((n, r))
    V = rng.standard_normal((n, r))
    while True:
        m = ProxMetric(d, U, V)
        if np.linalg.eigvalsh(m.dense())[0] > 0.05:
            return m
        V *= 0.5


def dense_residual(metric, x_tilde, alpha, alpha_t):
    # written out with explicit inverses, independent of the Woodbury path
    D, U, V = np.diag(metric.d), metric.U, metric.V
    C_inv = np.linalg.inv(D + U @ U.T)
    w = x_tilde + C_inv @ V @ alpha_t - np.linalg.inv(D) @ U @ alpha
    xp = np.maximum(w, 0.0)
    return np.concatenate([alpha + U.T @ (x_tilde + C_inv @ V @ alpha_t - xp), alpha_t + V.T @ (x_tilde - xp)])


class TestProjectNonneg:
    @pytest.mark.parametrize(
        "x, expected",
        [((-1.0, 2.0), (0.0, 2.0)), ((0.0, 0.0), (0.0, 0.0)), ((3.0, -0.5, 0.0), (3.0, 0.0, 0.0))],
    )
    def test_examples(self, x, expected):
        np.testing.assert_array_equal(project_nonneg(np.array(x)), expected)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20))
    def test_idempotent(self, xs):
        p = project_nonneg(np.array(xs))
        assert np.all(p >= 0)
        np.testing.assert_array_equal(project_nonneg(p), p)


class TestResidual:
    def test_rank_zero(self):
        m = ProxMetric(np.ones(3), np.zeros((3, 0)), np.zeros((3, 0)))
        assert residual_L(m, np.ones(3), DualPoint(np.zeros(0), np.zeros(0))).shape == (0,)

    def test_feasible_point_zero_dual(self, rng):
        m = random_metric(rng, 4, 1)
        L = residual_L(m, np.abs(rng.standard_normal(4)), DualPoint(np.zeros(1), np.zeros(1)))
        np.testing.assert_allclose(L, 0.0, atol=1e-14)

    def test_matches_dense_formula(self, rng):
        m = random_metric(rng, 10, 2)
        xt = rng.standard_normal(10)
        a, at = rng.standard_normal(2), rng.standard_normal(2)
        np.testing.assert_allclose(residual_L(m, xt, DualPoint(a, at)), dense_residual(m, xt, a, at), atol=1e-12)


class TestJacobian:
    def test_rank_zero(self):
        m = ProxMetric(np.ones(2), np.zeros((2, 0)), np.zeros((2, 0)))
        assert jacobian_L(m, np.ones(2), DualPoint(np.zeros(0), np.zeros(0))).shape == (0, 0)

    def test_all_active_block_form(self, rng):
        m = random_metric(rng, 5, 2)
        xt = 10.0 + rng.uniform(size=5)  # clipped expression stays positive
        p = DualPoint(np.zeros(2), np.zeros(2))
        Dinv = np.diag(1.0 / m.d)
        CinvV = np.linalg.solve(np.diag(m.d) + m.U @ m.U.T, m.V)
        expected = np.block([[m.U.T @ Dinv @ m.U, np.zeros((2, 2))], [m.V.T @ Dinv @ m.U, -m.V.T @ CinvV]]) + np.eye(4)
        np.testing.assert_allclose(jacobian_L(m, xt, p), expected, atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        m = random_metric(rng, 8, 2)
        xt = rng.standard_normal(8)
        a = 0.3 * rng.standard_normal(4)
        h = 1e-7
        fd = np.empty((4, 4))
        for k in range(4):
            e = np.zeros(4)
            e[k] = h
            ap, am = a + e, a - e
            fd[:, k] = (residual_L(m, xt, DualPoint(ap[:2], ap[2:])) - residual_L(m, xt, DualPoint(am[:2], am[2:]))) / (2 * h)
        J = jacobian_L(m, xt, DualPoint(a[:2], a[2:]))
        assert np.max(np.abs(J - fd)) <= 1e-5


class TestWeightedProx:
    def test_identity_metric_is_projection(self):
        m = ProxMetric(np.ones(2), np.zeros((2, 0)), np.zeros((2, 0)))
        x, _, iters = weighted_prox(m, np.array([-1.0, 2.0]))
        np.testing.assert_array_equal(x, [0.0, 2.0])
        assert iters == 0

    def test_feasible_point_fixed(self, rng):
        m = random_metric(rng, 6, 2)
        xt = np.abs(rng.standard_normal(6))
        x, _, _ = weighted_prox(m, xt)
        np.testing.assert_allclose(x, xt, atol=1e-12)

    def test_coupled_example(self):
        m = ProxMetric(np.ones(2), np.zeros((2, 0)), np.array([[0.5], [0.5]]))
        np.testing.assert_allclose(m.dense(), [[0.75, -0.25], [-0.25, 0.75]])
        x, dual, _ = weighted_prox(m, np.array([1.0, -1.0]))
        np.testing.assert_allclose(x, [4.0 / 3.0, 0.0], atol=1e-12)
        # dense oracle on the same metric
        np.testing.assert_allclose(dense_prox_oracle(m.dense(), np.array([1.0, -1.0])), [4.0 / 3.0, 0.0], atol=1e-12)
        assert np.max(np.abs(residual_L(m, np.array([1.0, -1.0]), dual))) <= 1e-10

    def test_indefinite_metric_raises(self):
        m = ProxMetric(np.ones(2), np.zeros((2, 0)), np.array([[2.0], [0.0]]))
        with pytest.raises(ProxError):
            weighted_prox(m, np.array([-1.0, 1.0]), j_max=50)

    def test_error_types(self):
        assert issubclass(IndefiniteMetricError, ProxError)

    @given(n=st.integers(1, 15), r=st.integers(0, 3), seed=st.integers(0, 2**31 - 1))
    def test_matches_two_oracles(self, n, r, seed):
        rng = np.random.default_rng(seed)
        m = random_metric(rng, n, r)
        xt = 2.0 * rng.standard_normal(n)
        x, dual, _ = weighted_prox(m, xt)
        B = m.dense()
        ref_nnls = dense_prox_oracle(B, xt)
        ref_lemke = lemke(B, -B @ xt)
        assert np.max(np.abs(x - ref_nnls)) <= 1e-8
        assert np.max(np.abs(x - ref_lemke)) <= 1e-8
        assert np.all(x >= 0)
