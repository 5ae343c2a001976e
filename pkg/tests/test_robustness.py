import numpy as np
import pytest

from deepc import (
    AssembledProblem,
    RobustnessReport,
    min_robust_cost_oracle,
    radius_sweep,
    random_instance,
    robust_objective,
    sample_disturbances,
    solve_qp,
    verify_augmented_equivalence,
    verify_equivalence,
    worst_case_disturbance,
)


def _identity_instance():
    return AssembledProblem.from_arrays(np.eye(2), [1.0, 0.0])


class TestWorstCaseDisturbance:
    def test_zero_solution_gives_zero_disturbance(self):
        A, b = np.eye(2), np.array([1.0, 0.0])
        delta = worst_case_disturbance(np.zeros(2), A, b, 3.0)
        assert not delta.any()
        assert np.linalg.norm((A + delta) @ np.zeros(2) - b) == pytest.approx(1.0)

    def test_attains_worked_example(self):
        A, b, g = np.eye(2), np.array([1.0, 0.0]), np.array([0.5, 0.0])
        delta = worst_case_disturbance(g, A, b, 1.0)
        assert np.linalg.norm(delta) == pytest.approx(1.0)  # Frobenius norm = radius
        attained = np.linalg.norm((A + delta) @ g - b)
        assert attained == pytest.approx(robust_objective(g, A, b, 1.0))
        assert attained == pytest.approx(1.0)

    def test_zero_residual_branch_attains(self):
        A, b = np.eye(2), np.array([1.0, 0.0])
        g = np.array([1.0, 0.0])  # A g = b exactly
        radius = 0.7
        delta = worst_case_disturbance(g, A, b, radius)
        assert np.linalg.norm(delta) == pytest.approx(radius)
        assert np.linalg.norm((A + delta) @ g - b) == pytest.approx(radius * np.linalg.norm(g))

    @pytest.mark.parametrize("seed", range(5))
    def test_monte_carlo_dominance(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((7, 5))
        b = rng.standard_normal(7)
        g = rng.standard_normal(5)
        radius = 0.8
        attained = np.linalg.norm((A + worst_case_disturbance(g, A, b, radius)) @ g - b)
        worst_sampled = max(
            np.linalg.norm((A + d) @ g - b)
            for d in sample_disturbances(A.shape, radius, 1000, rng)
        )
        assert worst_sampled <= attained + 1e-9


class TestOracle:
    def test_zero_radius_square_system(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((4, 4)) + 4 * np.eye(4)
        b = rng.standard_normal(4)
        g, value = min_robust_cost_oracle(A, b, 0.0)
        assert np.abs(g - np.linalg.solve(A, b)).max() < 1e-10
        assert value < 1e-10

    def test_identity_instance_value(self):
        prob = _identity_instance()
        _, value = min_robust_cost_oracle(prob.A_mat, prob.b_vec, 1.0, prob.constraints)
        assert value == pytest.approx(1.0, abs=1e-7)

    @pytest.mark.parametrize("seed", range(5))
    def test_oracle_never_beaten_by_solver(self, seed):
        prob = random_instance(800 + seed, H=15, with_boxes=(seed % 2 == 0))
        sol = solve_qp(prob, 1.0)
        _, oracle_value = min_robust_cost_oracle(
            prob.A_mat, prob.b_vec, sol.radius, prob.constraints
        )
        at_solution = robust_objective(sol.g_star, prob.A_mat, prob.b_vec, sol.radius)
        assert oracle_value <= at_solution + 1e-6


class TestEquivalence:
    def test_identity_instance(self):
        report = verify_equivalence(_identity_instance(), 1.0)
        assert report.passed
        assert report.radius == pytest.approx(1.0)
        assert report.value_at_solution == pytest.approx(1.0)
        assert report.oracle_value == pytest.approx(1.0, abs=1e-7)

    def test_zero_target_trivial(self):
        prob = AssembledProblem.from_arrays(np.eye(3), np.zeros(3))
        report = verify_equivalence(prob, 1.0)
        assert report.passed
        assert report.radius == 0.0
        assert report.value_at_solution == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(8))
    def test_random_instances(self, seed):
        prob = random_instance(900 + seed, H=18, with_boxes=(seed % 2 == 1))
        for lam in (0.1, 10.0):
            report = verify_equivalence(prob, lam, seed=seed)
            assert report.passed, report.details


class TestAugmented:
    def test_zero_minimizer_example(self):
        # A'b = 0 forces g* = 0; the augmented radius reduces to lam / ||b||
        A = np.array([[0.0, 0.0], [1.0, 0.0]])
        b = np.array([1.0, 0.0])
        prob = AssembledProblem.from_arrays(A, b)
        sol = solve_qp(prob, 1.0)
        assert np.abs(sol.g_star).max() < 1e-12
        report = verify_augmented_equivalence(prob, 1.0)
        assert report.passed
        assert report.radius == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", range(8))
    def test_identity_on_random_instances(self, seed):
        prob = random_instance(950 + seed, H=12, with_boxes=(seed % 2 == 0))
        report = verify_augmented_equivalence(prob, float(10.0 ** (seed % 3 - 1)), seed=seed)
        assert report.passed
        assert report.details["identity_gap"] <= 1e-12 * max(1.0, report.radius)
        assert report.radius >= report.details["plain_radius"]


class TestRadiusSweep:
    def test_radius_increases_and_norm_shrinks(self):
        prob = random_instance(42, H=15)
        table = radius_sweep(prob, [1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0])
        assert table.ok
        radii = [row[1] for row in table.rows]
        norms = [row[2] for row in table.rows]
        assert all(b > a for a, b in zip(radii, radii[1:]))
        assert all(b <= a for a, b in zip(norms, norms[1:]))

    def test_zero_target_rows_skipped(self):
        prob = AssembledProblem.from_arrays(np.eye(3), np.zeros(3))
        table = radius_sweep(prob, [0.1, 1.0, 10.0])
        assert table.ok  # zero minimizers exempt the monotonicity claim
        assert all(row[1] == 0.0 for row in table.rows)

    def test_unsorted_grid_rejected(self):
        with pytest.raises(ValueError, match="increasing"):
            radius_sweep(random_instance(0), [1.0, 0.5])


class TestReportSerialization:
    def test_round_trip_lossless(self, tmp_path):
        report = verify_equivalence(random_instance(77, H=10), 1.0, seed=1)
        path = tmp_path / "report.txt"
        report.to_text(path)
        back = RobustnessReport.from_text(path)
        assert back == report

    def test_summary_line_flags(self):
        report = verify_equivalence(_identity_instance(), 1.0)
        assert report.summary_line().startswith("PASS min-max-equivalence")
