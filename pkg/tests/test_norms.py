import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import rbsdej as rb
from rbsdej.verify import make_synthetic_solution


def constant_solution(bundle, y=0.0, z=0.0, u=(), k=0.0):
    """Solution shell with constant fields, for closed-form norm checks."""
    n, nodes = bundle.n_paths, bundle.grid.nodes.size
    m = len(u)
    shell = make_synthetic_solution(bundle, np.zeros((n, nodes, m)), np.ones(max(m, 1))[:m])
    return rb.BackwardSolution(
        y=np.full((n, nodes), y),
        z=np.full((n, nodes), z),
        u=np.broadcast_to(np.asarray(u, dtype=float), (n, nodes, m)).copy(),
        gamma=np.zeros((n, nodes)),
        k_cum=np.linspace(0.0, k, nodes)[None, :].repeat(n, axis=0),
        k_jump_T=np.zeros(n),
        run=shell.run,
        mark_weights=shell.mark_weights,
    )


@pytest.fixture(scope="module")
def zero_beta_exponents():
    return rb.Exponents.from_p(1.5, beta=0.0, eps=0.01)


@pytest.fixture(scope="module")
def counter_bundle():
    spec = rb.build_problem("pure_jump_counter", intensity=2.0)
    return rb.sample_paths(spec, rb.build_grid(1.0, 20), 20000, seed=13)


class TestEstimateNorms:
    def test_constant_y(self, counter_bundle, zero_beta_exponents):
        sol = constant_solution(counter_bundle, y=-2.0)
        rep = rb.estimate_norms(sol, counter_bundle, zero_beta_exponents, mark_weights=np.zeros(0))
        assert rep.s_p_beta == pytest.approx(2.0**1.5, abs=1e-12)
        assert rep.s_p_beta_se < 1e-15

    def test_constant_z_unit_horizon(self, counter_bundle, zero_beta_exponents):
        sol = constant_solution(counter_bundle, z=1.0)
        rep = rb.estimate_norms(sol, counter_bundle, zero_beta_exponents, mark_weights=np.zeros(0))
        assert rep.h_p_beta == pytest.approx(1.0, abs=1e-12)

    def test_constant_u_jensen(self, counter_bundle, zero_beta_exponents):
        # lambda T u0^2 compensator energy; realized energy via E[N^{p/2}]
        u0, lam, T, p = 0.7, 2.0, 1.0, 1.5
        sol = constant_solution(counter_bundle, u=(u0,))
        rep = rb.estimate_norms(sol, counter_bundle, zero_beta_exponents,
                                mark_weights=np.array([lam]))
        assert rep.l_p_lambda_beta == pytest.approx((lam * T * u0**2) ** (p / 2.0), rel=1e-12)
        # oracle: E[N_T^{p/2}] by direct summation of the Poisson pmf
        mean_pow = sum(
            (k ** (p / 2.0)) * math.exp(-lam * T) * (lam * T) ** k / math.factorial(k)
            for k in range(80)
        )
        expected_mu = (u0**2) ** (p / 2.0) * mean_pow
        assert rep.l_p_mu_beta == pytest.approx(expected_mu, rel=4.0 * rep.l_p_mu_beta_se / expected_mu)
        # Jensen: realized side is dominated by the compensator side
        assert rep.l_p_mu_beta <= 2.0 * rep.l_p_lambda_beta + 3.0 * rep.l_p_mu_beta_se

    def test_k_norm(self, counter_bundle, zero_beta_exponents):
        sol = constant_solution(counter_bundle, k=3.0)
        rep = rb.estimate_norms(sol, counter_bundle, zero_beta_exponents, mark_weights=np.zeros(0))
        assert rep.k_p == pytest.approx(3.0**1.5, abs=1e-12)

    def test_weight_monotonic_in_beta(self, put_spec, put_bundle_small, basis3):
        sol = rb.solve_penalized(put_spec, put_bundle_small, basis3, 16.0)
        lo = rb.estimate_norms(sol, put_bundle_small, put_spec.exponents.with_beta(0.5))
        hi = rb.estimate_norms(sol, put_bundle_small, put_spec.exponents.with_beta(1.5))
        for name in ("s_p_beta", "s_pA_beta", "h_p_beta", "l_p_lambda_beta", "l_p_mu_beta", "k_p"):
            assert getattr(hi, name) >= getattr(lo, name) - 1e-15

    def test_homogeneity_exact(self, put_spec, put_bundle_small, basis3):
        sol = rb.solve_penalized(put_spec, put_bundle_small, basis3, 16.0)
        e = put_spec.exponents
        base = rb.estimate_norms(sol, put_bundle_small, e)
        for s in (2.0, 4.0):
            scaled = rb.estimate_norms(rb.scale_solution(sol, s), put_bundle_small, e)
            for name in ("s_p_beta", "s_pA_beta", "h_p_beta", "l_p_lambda_beta", "l_p_mu_beta", "k_p"):
                b = getattr(base, name)
                assert getattr(scaled, name) == pytest.approx(s**e.p * b, rel=1e-12, abs=1e-300)


class TestLenglartCheck:
    def test_zero_field(self, counter_bundle, zero_beta_exponents):
        sol = constant_solution(counter_bundle, u=(0.0,))
        lhs, rhs, ok = rb.lenglart_check(sol, counter_bundle, zero_beta_exponents,
                                         mark_weights=np.array([2.0]))
        assert (lhs, rhs, ok) == (0.0, 0.0, True)

    def test_constant_field(self, counter_bundle, zero_beta_exponents):
        sol = constant_solution(counter_bundle, u=(0.7,))
        lhs, rhs, ok = rb.lenglart_check(sol, counter_bundle, zero_beta_exponents,
                                         mark_weights=np.array([2.0]))
        assert ok and lhs > 0.0

    def test_randomized_sweep(self):
        res = rb.lenglart_sweep(n_configs=30, n_paths=4000, seed=21)
        assert res.passed, res


class TestPowerSumBound:
    def test_examples(self):
        lhs, rhs = rb.power_sum_bound([1.0, 1.0], 2.0)
        assert (lhs, rhs) == (4.0, 4.0)
        lhs, rhs = rb.power_sum_bound([3.0], 1.5)
        assert lhs == pytest.approx(3.0**1.5) and rhs == pytest.approx(3.0**1.5)
        lhs, rhs = rb.power_sum_bound([1.0, 2.0, 3.0], 1.5)
        assert lhs == pytest.approx(6.0**1.5)
        assert rhs == pytest.approx(3.0**0.5 * (1.0 + 2.0**1.5 + 3.0**1.5))
        assert lhs <= rhs

    def test_rejects_small_p(self):
        with pytest.raises(ValueError):
            rb.power_sum_bound([1.0], 0.5)

    @given(st.lists(st.floats(min_value=-100.0, max_value=100.0), min_size=1, max_size=20),
           st.floats(min_value=1.0, max_value=4.0))
    @settings(max_examples=300)
    def test_inequality_property(self, xs, p):
        lhs, rhs = rb.power_sum_bound(xs, p)
        assert lhs <= rhs * (1.0 + 1e-12) + 1e-12
