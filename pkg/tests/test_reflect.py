import math
import numpy as np
import pytest

import rbsdej as rb


class TestSchedule:
    def test_geometric(self):
        s = rb.PenalizationSchedule.geometric(1.0, 5, 1e-3)
        assert s.n_values == (1.0, 2.0, 4.0, 8.0, 16.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            rb.PenalizationSchedule(n_values=(2.0, 1.0), stop_tol=1e-3)
        with pytest.raises(ValueError):
            rb.PenalizationSchedule(n_values=(1.0,), stop_tol=0.0)
        with pytest.raises(ValueError):
            rb.PenalizationSchedule(n_values=(), stop_tol=1e-3)


class TestReflectedPenalization:
    def test_flat_obstacle_limit(self, flat_spec, flat_bundle, basis0):
        run = rb.solve_reflected_penalization(
            flat_spec, flat_bundle, basis0,
            rb.PenalizationSchedule.geometric(1.0, 11, 1e-3),
        )
        sol = run.solution
        assert abs(sol.y0_mean() - 1.0) <= 5e-3
        assert abs(float(np.mean(sol.k_T())) - 1.0) <= 5e-3
        assert float(np.mean(sol.k_jump_T)) >= 0.99
        assert not run.reached_tol  # sup error is O(1) for the jumping barrier
        assert any("schedule exhausted" in w for w in sol.run.warnings)
        # closed form: K^n_T = 1 - e^{-n T} along the schedule
        for row in run.table[:6]:
            assert row.k_T_mean == pytest.approx(1.0 - math.exp(-row.n), abs=2e-2)

    def test_closed_form_k_at_top_level(self, flat_spec, flat_bundle, basis0):
        run = rb.solve_reflected_penalization(
            flat_spec, flat_bundle, basis0,
            rb.PenalizationSchedule.geometric(1.0, 11, 1e-12),
        )
        assert abs(run.table[-1].k_T_mean - 1.0) <= 1e-3

    def test_never_binding_stops_early(self, basis3):
        spec = rb.build_problem("brownian_terminal")
        bundle = rb.sample_paths(spec, rb.build_grid(1.0, 10), 2000, seed=3)
        run = rb.solve_reflected_penalization(
            spec, bundle, basis3, rb.PenalizationSchedule.geometric(1.0, 8, 1e-6),
        )
        assert run.reached_tol
        assert len(run.table) == 1  # first level already below tolerance
        assert np.all(run.solution.k_T() == 0.0)
        assert run.skorokhod.terminal_jump_mass == 0.0

    def test_errors_nonincreasing_on_binding_problem(self, put_spec, put_bundle_small, basis3):
        run = rb.solve_reflected_penalization(
            put_spec, put_bundle_small, basis3,
            rb.PenalizationSchedule.geometric(1.0, 9, 1e-12),
        )
        errs = [r.penalty_error for r in run.table]
        ses = [r.penalty_error_se for r in run.table]
        for k in range(len(errs) - 1):
            assert errs[k + 1] <= errs[k] + 2.0 * math.hypot(ses[k], ses[k + 1])

    def test_zu_driver_routes_through_picard(self, basis3):
        spec = rb.build_problem("linear_z")
        bundle = rb.sample_paths(spec, rb.build_grid(1.0, 10), 1000, seed=5)
        run = rb.solve_reflected_penalization(
            spec, bundle, basis3, rb.PenalizationSchedule.geometric(4.0, 2, 1e-8),
        )
        assert run.solution.run.picard_iters >= 1
        assert len(run.solution.run.residual_history) >= 1


class TestDPOracle:
    def test_flat_obstacle_hand_dp(self, flat_spec, flat_bundle, basis0):
        # hand recursion: y_i = max(1, y_{i+1}) = 1 for i < N, jump mass 1 at T
        dp = rb.solve_reflected_dp_oracle(flat_spec, flat_bundle, basis0)
        assert dp.y0_mean() == pytest.approx(1.0, abs=1e-12)
        assert float(np.mean(dp.k_T())) == pytest.approx(1.0, abs=1e-12)
        assert float(np.mean(dp.k_jump_T)) == pytest.approx(1.0, abs=1e-12)
        assert float(np.mean(dp.k_cum[:, -1])) == pytest.approx(0.0, abs=1e-12)
        # terminal-jump consistency: proxy node sits on the barrier
        assert np.all(np.abs(dp.y[:, -2] - 1.0) < 1e-12)

    def test_never_binding_equals_unreflected(self, basis3):
        spec = rb.build_problem("brownian_terminal")
        bundle = rb.sample_paths(spec, rb.build_grid(1.0, 12), 3000, seed=6)
        dp = rb.solve_reflected_dp_oracle(spec, bundle, basis3)
        plain = rb.solve_penalized(spec, bundle, basis3, 1.0)
        assert np.max(np.abs(dp.y - plain.y)) < 1e-12
        assert np.all(dp.k_T() == 0.0)

    def test_obstacle_domination_exact(self, put_spec, put_bundle_small, basis3):
        dp = rb.solve_reflected_dp_oracle(put_spec, put_bundle_small, basis3)
        L = rb.backward.obstacle_on_grid(put_spec, put_bundle_small)
        assert np.all(dp.y[:, :-1] >= L[:, :-1] - 1e-12)

    def test_comparison_in_obstacle(self, basis0):
        # raising the barrier raises the value, deterministically
        lo = rb.build_problem("flat_obstacle", level=0.5)
        hi = rb.build_problem("flat_obstacle", level=0.8)
        grid = rb.build_grid(1.0, 50)
        b_lo = rb.sample_paths(lo, grid, 4, seed=8)
        b_hi = rb.sample_paths(hi, grid, 4, seed=8)
        y_lo = rb.solve_reflected_dp_oracle(lo, b_lo, basis0).y0_mean()
        y_hi = rb.solve_reflected_dp_oracle(hi, b_hi, basis0).y0_mean()
        assert y_hi >= y_lo

    def test_oracle_equivalence_small(self, put_spec, put_bundle_small, basis3):
        dp = rb.solve_reflected_dp_oracle(put_spec, put_bundle_small, basis3)
        run = rb.solve_reflected_penalization(
            put_spec, put_bundle_small, basis3,
            rb.PenalizationSchedule.geometric(1.0, 11, 1e-12),
        )
        rel = abs(run.solution.y0_mean() - dp.y0_mean()) / abs(dp.y0_mean())
        assert rel <= 0.01


class TestSkorokhodReport:
    def test_dp_complementarity_exact(self, put_spec, put_bundle_small, basis3):
        dp = rb.solve_reflected_dp_oracle(put_spec, put_bundle_small, basis3)
        rep = rb.skorokhod_report(dp, put_spec, put_bundle_small)
        assert rep.complementarity_violation_fraction == 0.0

    def test_zero_k_all_zero(self, basis3):
        spec = rb.build_problem("brownian_terminal")
        bundle = rb.sample_paths(spec, rb.build_grid(1.0, 10), 500, seed=9)
        sol = rb.solve_penalized(spec, bundle, basis3, 4.0)
        rep = rb.skorokhod_report(sol, spec, bundle)
        assert rep.flat_integral == 0.0
        assert rep.jump_condition_residual == 0.0
        assert rep.complementarity_violation_fraction == 0.0
        assert rep.terminal_jump_mass == 0.0

    def test_dp_jump_condition_zero_residual(self, flat_spec, flat_bundle, basis0):
        dp = rb.solve_reflected_dp_oracle(flat_spec, flat_bundle, basis0)
        rep = rb.skorokhod_report(dp, flat_spec, flat_bundle)
        assert rep.jump_condition_residual == pytest.approx(0.0, abs=1e-12)
        assert rep.flat_integral == pytest.approx(0.0, abs=1e-12)

    def test_penalized_flat_integral_decays(self, put_spec, put_bundle_small, basis3):
        flats = []
        for n in (4.0, 64.0, 1024.0):
            sol = rb.solve_penalized(put_spec, put_bundle_small, basis3, n)
            flats.append(rb.skorokhod_report(sol, put_spec, put_bundle_small).flat_integral)
        assert flats[2] < flats[0]

    def test_bermudan_flat_integral_small(self, put_spec, put_bundle_small, basis3):
        run = rb.solve_reflected_penalization(
            put_spec, put_bundle_small, basis3,
            rb.PenalizationSchedule.geometric(1.0, 11, 1e-12),
        )
        scale = abs(run.solution.y0_mean())
        assert run.skorokhod.flat_integral <= 5e-3 * scale


class TestConvergenceCSV:
    def test_columns_and_roundtrip(self, tmp_path, flat_spec, flat_bundle_coarse, basis0):
        import csv as csvmod

        run = rb.solve_reflected_penalization(
            flat_spec, flat_bundle_coarse, basis0,
            rb.PenalizationSchedule.geometric(1.0, 4, 1e-9),
        )
        f = tmp_path / "conv.csv"
        with open(f, "w", newline="") as fh:
            rb.reflect.write_convergence_csv(run.table, fh)
        rows = list(csvmod.reader(f.read_text().splitlines()))
        assert rows[0] == ["n", "penalty_error", "Y0_mean", "Y0_stderr",
                           "K_T_mean", "flat_integral", "wall_time"]
        assert len(rows) == 1 + len(run.table)
        assert float(rows[1][0]) == 1.0
