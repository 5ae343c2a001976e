"""Numerical certification of the robustness induced by regularization.

The ridge-regularized solve promises that its minimizer is also optimal
for the worst-case problem over a Frobenius-norm disturbance ball of the
a-posteriori radius. This module checks that promise from the outside:
it constructs the worst-case disturbance and verifies attainment, solves
the robust reformulation with an independent conic solver, compares
objective values, and sweeps the regularization weight to confirm the
radius grows monotonically.
"""

from dataclasses import dataclass, field

import numpy as np

from .solver import (
    AssembledProblem,
    ConstraintSet,
    Solution,
    augmented_robustness_radius,
    robust_objective,
    robustness_radius,
    solve_qp,
)

DOMINANCE_TOL = 1e-9


class OracleError(RuntimeError):
    """Independent minimization did not converge; carries the best value."""

    def __init__(self, message: str, best_value: float):
        super().__init__(message)
        self.best_value = best_value


@dataclass
class RobustnessReport:
    """Outcome of one verification run.

    `value_at_solution` is the robust (worst-case) cost evaluated at the
    regularized minimizer; `oracle_value` is the independently computed
    minimum of the same cost. `minimizer_gap` is informative only: the
    robust cost need not have a unique minimizer. For the augmented
    (joint data/target disturbance) check, `value_at_solution` is the
    certified worst-case bound and `oracle_value` the largest sampled
    disturbed cost, which must stay below it.
    """

    check: str
    lambda_g: float
    radius: float
    value_at_solution: float
    oracle_value: float
    minimizer_gap: float
    attainment_gap: float
    passed: bool
    details: dict = field(default_factory=dict)
    monotonicity_table: list = field(default_factory=list)

    def summary_line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (
            f"{flag} {self.check} lambda_g={self.lambda_g!r} radius={self.radius!r} "
            f"value={self.value_at_solution!r} oracle={self.oracle_value!r}"
        )

    def to_text(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"check {self.check}\n")
            fh.write(f"passed {int(self.passed)}\n")
            for name in (
                "lambda_g",
                "radius",
                "value_at_solution",
                "oracle_value",
                "minimizer_gap",
                "attainment_gap",
            ):
                fh.write(f"{name} {float(getattr(self, name))!r}\n")
            for key in sorted(self.details):
                fh.write(f"detail.{key} {float(self.details[key])!r}\n")
            fh.write(f"table.rows {len(self.monotonicity_table)}\n")
            for row in self.monotonicity_table:
                fh.write("row " + " ".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def from_text(cls, path) -> "RobustnessReport":
        scalars: dict[str, str] = {}
        details: dict[str, float] = {}
        rows: list[tuple[float, float, float]] = []
        with open(path) as fh:
            for line in fh:
                key, _, rest = line.strip().partition(" ")
                if key == "row":
                    rows.append(tuple(float(v) for v in rest.split()))
                elif key.startswith("detail."):
                    details[key[len("detail."):]] = float(rest)
                elif key:
                    scalars[key] = rest
        return cls(
            check=scalars["check"],
            lambda_g=float(scalars["lambda_g"]),
            radius=float(scalars["radius"]),
            value_at_solution=float(scalars["value_at_solution"]),
            oracle_value=float(scalars["oracle_value"]),
            minimizer_gap=float(scalars["minimizer_gap"]),
            attainment_gap=float(scalars["attainment_gap"]),
            passed=bool(int(scalars["passed"])),
            details=details,
            monotonicity_table=rows,
        )


@dataclass(frozen=True)
class MonotonicityTable:
    """Rows of (lambda_g, radius, solution_norm) along a sweep."""

    rows: list
    ok: bool
    violations: list


def worst_case_disturbance(g, A, b, radius: float) -> np.ndarray:
    """Disturbance of Frobenius norm `radius` attaining the worst case
    ||A g - b|| + radius ||g||.

    Rank-one construction aligned with the residual; at zero residual a
    fixed first-basis-vector direction is used, and g = 0 returns zero
    (the objective is then independent of the disturbance).
    """
    g = np.asarray(g, dtype=float).reshape(-1)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    norm_g = np.linalg.norm(g)
    if norm_g == 0.0:
        return np.zeros_like(A)
    res = A @ g - b
    norm_res = np.linalg.norm(res)
    if norm_res > 0.0:
        direction = res / norm_res
    else:
        direction = np.zeros(A.shape[0])
        direction[0] = 1.0
    return radius * np.outer(direction, g) / norm_g


def sample_disturbances(
    shape: tuple[int, int], radius: float, count: int, rng: np.random.Generator
) -> np.ndarray:
    """`count` matrices with Frobenius norm uniformly in (0, radius]."""
    out = rng.standard_normal((count, *shape))
    norms = np.linalg.norm(out.reshape(count, -1), axis=1)
    norms[norms == 0.0] = 1.0
    scales = radius * rng.uniform(0.0, 1.0, count) / norms
    return out * scales[:, None, None]


def min_robust_cost_oracle(
    A,
    b,
    radius: float,
    constraints: ConstraintSet | None = None,
    tol: float = 1e-9,
) -> tuple[np.ndarray, float]:
    """Independently minimize ||A g - b|| + radius ||g|| over the
    constraint set with a conic interior-point solver.

    Deliberately does not share any code path with solve_qp so the two
    can cross-check each other.

    Raises:
        OracleError: solver failed or returned a non-optimal status.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    H = A.shape[1]
    unconstrained = constraints is None or (
        constraints.G_ineq.shape[0] == 0 and constraints.E_eq.shape[0] == 0
    )
    if radius == 0.0 and unconstrained:
        g, *_ = np.linalg.lstsq(A, b, rcond=None)
        return g, float(np.linalg.norm(A @ g - b))

    import cvxpy as cp  # deferred: heavyweight import used only here

    g = cp.Variable(H)
    objective = cp.norm(A @ g - b, 2) + radius * cp.norm(g, 2)
    cons = []
    if constraints is not None:
        if constraints.E_eq.shape[0]:
            cons.append(constraints.E_eq @ g == constraints.f_eq)
        if constraints.G_ineq.shape[0]:
            cons.append(constraints.G_ineq @ g <= constraints.q_ineq)
    prob = cp.Problem(cp.Minimize(objective), cons)
    installed = cp.installed_solvers()
    solver = "CLARABEL" if "CLARABEL" in installed else "ECOS"
    try:
        prob.solve(solver=solver)
    except cp.SolverError as exc:
        raise OracleError(f"conic solve failed: {exc}", float("nan")) from exc
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise OracleError(
            f"conic solve ended with status {prob.status}",
            float(prob.value) if prob.value is not None else float("nan"),
        )
    g_val = np.asarray(g.value, dtype=float).reshape(-1)
    # evaluate the objective from the returned point, not the solver's
    # reported value, so the comparison is in exact arithmetic terms
    value = float(np.linalg.norm(A @ g_val - b) + radius * np.linalg.norm(g_val))
    return g_val, value


def verify_equivalence(
    problem: AssembledProblem,
    lambda_g: float,
    tol: float = 1e-6,
    samples: int = 1000,
    seed: int = 0,
    solution: Solution | None = None,
) -> RobustnessReport:
    """Check that the ridge minimizer also minimizes the worst-case cost
    at its certified radius, and that the constructed disturbance attains
    the inner maximum.
    """
    sol = solve_qp(problem, lambda_g) if solution is None else solution
    if not sol.solved:
        raise RuntimeError(f"verification needs a solved instance, got {sol.status}")
    A, b = problem.A_mat, problem.b_vec
    g_star = sol.g_star
    radius = sol.radius
    value_at = robust_objective(g_star, A, b, radius)
    g_oracle, oracle_value = min_robust_cost_oracle(
        A, b, radius, problem.constraints
    )
    value_gap = value_at - oracle_value
    rel_gap = abs(value_gap) / max(abs(oracle_value), 1e-12)

    delta = worst_case_disturbance(g_star, A, b, radius)
    attained = float(np.linalg.norm((A + delta) @ g_star - b))
    attainment_gap = abs(attained - value_at)

    rng = np.random.default_rng(seed)
    dominance_margin = 0.0
    if samples > 0 and radius > 0:
        worst = max(
            float(np.linalg.norm((A + d) @ g_star - b))
            for d in sample_disturbances(A.shape, radius, samples, rng)
        )
        dominance_margin = worst - attained

    passed = (
        rel_gap <= tol
        and attainment_gap <= DOMINANCE_TOL * max(1.0, value_at)
        and dominance_margin <= DOMINANCE_TOL
    )
    return RobustnessReport(
        check="min-max-equivalence",
        lambda_g=lambda_g,
        radius=radius,
        value_at_solution=value_at,
        oracle_value=oracle_value,
        minimizer_gap=float(np.linalg.norm(g_star - g_oracle)),
        attainment_gap=attainment_gap,
        passed=passed,
        details={
            "value_gap": value_gap,
            "relative_value_gap": rel_gap,
            "dominance_margin": dominance_margin,
            "solution_norm": float(np.linalg.norm(g_star)),
        },
        monotonicity_table=[(lambda_g, radius, float(np.linalg.norm(g_star)))],
    )


def verify_augmented_equivalence(
    problem: AssembledProblem,
    lambda_g: float,
    tol: float = 1e-12,
    samples: int = 1000,
    seed: int = 0,
) -> RobustnessReport:
    """Check the joint data/target disturbance certificate.

    The augmented radius must equal the plain radius evaluated on the
    stacked system [A b] with the extended solution (g*, -1), and no
    sampled joint disturbance within the ball may push the cost above
    ||A g* - b|| + radius' * sqrt(||g*||^2 + 1).
    """
    sol = solve_qp(problem, lambda_g)
    if not sol.solved:
        raise RuntimeError(f"verification needs a solved instance, got {sol.status}")
    A, b = problem.A_mat, problem.b_vec
    g_star = sol.g_star
    radius_aug = sol.augmented_radius

    A_ext = np.hstack([A, b[:, None]])
    g_ext = np.concatenate([g_star, [-1.0]])
    radius_from_stacked = robustness_radius(
        g_ext, A_ext, np.zeros(A.shape[0]), lambda_g
    )
    identity_gap = abs(radius_aug - radius_from_stacked)

    residual = float(np.linalg.norm(A @ g_star - b))
    bound = residual + radius_aug * float(np.sqrt(np.linalg.norm(g_star) ** 2 + 1.0))
    rng = np.random.default_rng(seed)
    worst = residual  # the zero disturbance is always admissible
    if samples > 0 and radius_aug > 0:
        for joint in sample_disturbances(
            (A.shape[0], A.shape[1] + 1), radius_aug, samples, rng
        ):
            delta, xi = joint[:, :-1], joint[:, -1]
            worst = max(worst, float(np.linalg.norm((A + delta) @ g_star - (b + xi))))
    dominance_margin = worst - bound

    plain_radius = sol.radius
    passed = (
        identity_gap <= tol * max(1.0, radius_aug)
        and dominance_margin <= DOMINANCE_TOL
        and radius_aug >= plain_radius
    )
    return RobustnessReport(
        check="augmented-disturbance",
        lambda_g=lambda_g,
        radius=radius_aug,
        value_at_solution=bound,
        oracle_value=worst,
        minimizer_gap=0.0,
        attainment_gap=identity_gap,
        passed=passed,
        details={
            "identity_gap": identity_gap,
            "dominance_margin": dominance_margin,
            "plain_radius": plain_radius,
        },
    )


def radius_sweep(problem: AssembledProblem, lambda_grid) -> MonotonicityTable:
    """Solve across a grid of regularization weights and tabulate
    (lambda_g, radius, ||g*||); flags any non-increase of the radius or
    increase of the solution norm between adjacent solved points with
    nonzero minimizers."""
    grid = [float(v) for v in lambda_grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("lambda_grid must be strictly increasing")
    rows = []
    for lam in grid:
        sol = solve_qp(problem, lam)
        if not sol.solved:
            raise RuntimeError(f"sweep point lambda_g={lam} ended {sol.status}")
        rows.append((lam, sol.radius, float(np.linalg.norm(sol.g_star))))
    violations = []
    for i in range(1, len(rows)):
        (_, r0, n0), (_, r1, n1) = rows[i - 1], rows[i]
        if n0 == 0.0 or n1 == 0.0:
            continue  # monotonicity is only promised for nonzero minimizers
        if r1 <= r0:
            violations.append(i)
        if n1 > n0 * (1.0 + 1e-12):
            violations.append(i)
    return MonotonicityTable(rows=rows, ok=not violations, violations=violations)


def random_instance(
    seed: int,
    H: int = 20,
    rows: int | None = None,
    with_eq: bool = True,
    with_boxes: bool = False,
) -> AssembledProblem:
    """Random dense instance with feasible-by-construction constraints."""
    rng = np.random.default_rng(seed)
    rows = rows if rows is not None else max(4, H - 5)
    A = rng.standard_normal((rows, H))
    b = rng.standard_normal(rows)
    g0 = rng.standard_normal(H)
    blocks_G, blocks_q = [], []
    E = np.zeros((0, H))
    f = np.zeros(0)
    if with_eq:
        n_eq = rng.integers(1, 3)
        E = rng.standard_normal((n_eq, H))
        f = E @ g0
    if with_boxes:
        idx = rng.choice(H, size=max(2, H // 3), replace=False)
        slack = rng.uniform(0.5, 2.0, idx.size)
        G_up = np.zeros((idx.size, H))
        G_up[np.arange(idx.size), idx] = 1.0
        blocks_G += [G_up, -G_up]
        blocks_q += [g0[idx] + slack, -(g0[idx] - slack)]
    if blocks_G:
        G = np.vstack(blocks_G)
        q = np.concatenate(blocks_q)
    else:
        G, q = np.zeros((0, H)), np.zeros(0)
    cons = ConstraintSet(G_ineq=G, q_ineq=q, E_eq=E, f_eq=f)
    return AssembledProblem.from_arrays(A, b, cons)
