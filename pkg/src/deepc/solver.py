"""Reduced DeePC problem assembly and solution.

The optimal-control problem over (u, y, g) collapses to a regularized
least-squares problem in g alone: past-output consistency is softened by
lambda_y, input/output costs act through U_f g and Y_f g, and the past
inputs remain an exact equality constraint. This module builds that
stacked (A, b) system, solves it under box constraints, evaluates the
closed-form unconstrained solution, and computes the a-posteriori
robustness radii certified by the regularization weight.
"""

from dataclasses import dataclass

import numpy as np

from .hankel import HankelPartition
from .qp import (
    STATUS_SOLVED,
    EqualitySolver,
    KKTResidual,
    QPResult,
    kkt_residual,
    solve_regularized_lsq,
)
from .validation import as_matrix, as_vector

EIG_TOL = 1e-10


def psd_sqrt(M: np.ndarray, name: str = "matrix", require_pd: bool = False) -> np.ndarray:
    """Symmetric PSD square root via an eigendecomposition.

    Any factor F with F'F = M yields the same quadratic form; the
    symmetric root is used so the result is deterministic.
    """
    M = as_matrix(M, name)
    if M.shape[0] != M.shape[1] or not np.allclose(M, M.T, atol=1e-10):
        raise ValueError(f"{name} must be symmetric")
    vals, vecs = np.linalg.eigh(M)
    top = max(vals.max(), 1.0)
    if vals.min() < -EIG_TOL * top:
        raise ValueError(f"{name} is not positive semidefinite (min eig {vals.min():.3e})")
    if require_pd and vals.min() <= EIG_TOL * top:
        raise ValueError(f"{name} must be positive definite (min eig {vals.min():.3e})")
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


@dataclass(frozen=True)
class DeePCWeights:
    """Cost weights and reference for one solve.

    Attributes:
        R: input cost, (m*N, m*N), positive definite.
        Q: output tracking cost, (p*N, p*N), positive semidefinite.
        lambda_y: penalty softening past-output consistency, > 0.
        lambda_g: ridge weight on g, >= 0 (0 disables the robustness
            certificate).
        reference: output reference over the horizon, length p*N.
    """

    R: np.ndarray
    Q: np.ndarray
    lambda_y: float
    lambda_g: float
    reference: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", as_matrix(self.R, "R"))
        object.__setattr__(self, "Q", as_matrix(self.Q, "Q"))
        object.__setattr__(self, "reference", as_vector(self.reference, "reference"))
        if self.lambda_y <= 0:
            raise ValueError(f"lambda_y must be positive, got {self.lambda_y}")
        if self.lambda_g < 0:
            raise ValueError(f"lambda_g must be nonnegative, got {self.lambda_g}")

    @classmethod
    def from_scalars(
        cls,
        m: int,
        p: int,
        N: int,
        r_weight: float = 1.0,
        q_weight: float = 400.0,
        lambda_y: float = 1e4,
        lambda_g: float = 10.0,
        reference=None,
    ) -> "DeePCWeights":
        """Diagonal weights r_weight*I and q_weight*I of matching sizes."""
        ref = np.zeros(p * N) if reference is None else reference
        return cls(
            R=r_weight * np.eye(m * N),
            Q=q_weight * np.eye(p * N),
            lambda_y=lambda_y,
            lambda_g=lambda_g,
            reference=ref,
        )


@dataclass(frozen=True)
class ConstraintSet:
    """Polytope constraints on g: G_ineq g <= q_ineq and E_eq g = f_eq."""

    G_ineq: np.ndarray
    q_ineq: np.ndarray
    E_eq: np.ndarray
    f_eq: np.ndarray

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G_ineq, dtype=float))
        E = np.atleast_2d(np.asarray(self.E_eq, dtype=float))
        q = as_vector(self.q_ineq, "q_ineq")
        f = as_vector(self.f_eq, "f_eq")
        if G.shape[0] != q.size:
            raise ValueError("G_ineq rows and q_ineq length disagree")
        if E.shape[0] != f.size:
            raise ValueError("E_eq rows and f_eq length disagree")
        if G.size and E.size and G.shape[1] != E.shape[1]:
            raise ValueError("constraint blocks have different column counts")
        object.__setattr__(self, "G_ineq", G)
        object.__setattr__(self, "q_ineq", q)
        object.__setattr__(self, "E_eq", E)
        object.__setattr__(self, "f_eq", f)

    @classmethod
    def empty(cls, H: int) -> "ConstraintSet":
        return cls(np.zeros((0, H)), np.zeros(0), np.zeros((0, H)), np.zeros(0))

    @property
    def H(self) -> int:
        return self.E_eq.shape[1] if self.E_eq.size else self.G_ineq.shape[1]


@dataclass(frozen=True)
class AssembledProblem:
    """Stacked least-squares data ||A_mat g - b_vec|| plus constraints."""

    A_mat: np.ndarray
    b_vec: np.ndarray
    constraints: ConstraintSet
    partition: HankelPartition | None = None
    weights: DeePCWeights | None = None

    @property
    def H(self) -> int:
        return self.A_mat.shape[1]

    @classmethod
    def from_arrays(cls, A, b, constraints: ConstraintSet | None = None) -> "AssembledProblem":
        A = as_matrix(A, "A")
        b = as_vector(b, "b", size=A.shape[0])
        cons = ConstraintSet.empty(A.shape[1]) if constraints is None else constraints
        return cls(A_mat=A, b_vec=b, constraints=cons)


@dataclass
class Solution:
    """Solved problem: minimizer, induced plans, duals, and certificates."""

    status: str
    g_star: np.ndarray | None
    u_plan: np.ndarray | None
    y_plan: np.ndarray | None
    objective: float | None
    residual_norm: float | None
    radius: float | None
    augmented_radius: float | None
    eq_duals: np.ndarray
    ineq_duals: np.ndarray
    kkt: KKTResidual | None
    lambda_g: float
    iterations: int = 0

    @property
    def solved(self) -> bool:
        return self.status == STATUS_SOLVED


def _box_rows(block: np.ndarray, d: int, N: int, bounds) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel, per-step box rows lo <= (block g) <= hi.

    `bounds` is (d, 2) array-like of (lo, hi); infinite entries drop the
    corresponding row.
    """
    bounds = np.asarray(bounds, dtype=float)
    if bounds.shape != (d, 2):
        raise ValueError(f"bounds must have shape ({d}, 2), got {bounds.shape}")
    rows, rhs = [], []
    for s in range(N):
        for c in range(d):
            lo, hi = bounds[c]
            row = block[s * d + c]
            if np.isfinite(hi):
                rows.append(row)
                rhs.append(hi)
            if np.isfinite(lo):
                rows.append(-row)
                rhs.append(-lo)
    if not rows:
        return np.zeros((0, block.shape[1])), np.zeros(0)
    return np.array(rows), np.array(rhs)


def assemble(
    part: HankelPartition,
    weights: DeePCWeights,
    u_ini,
    y_ini,
    box_u=None,
    box_y=None,
    extra_ineq: tuple | None = None,
) -> AssembledProblem:
    """Stack the reduced least-squares system for one solve.

    A_mat rows: sqrt(lambda_y) * Y_p, then R^(1/2) U_f, then Q^(1/2) Y_f;
    b_vec aligns sqrt(lambda_y) * y_ini, zeros, Q^(1/2) * reference.
    Equalities pin U_p g = u_ini; inequalities are per-channel boxes on
    the planned inputs/outputs plus an optional raw (G, q) block.
    """
    m, p, N, T_ini = part.m, part.p, part.N, part.T_ini
    u_ini = as_vector(u_ini, "u_ini", size=m * T_ini)
    y_ini = as_vector(y_ini, "y_ini", size=p * T_ini)
    if weights.R.shape != (m * N, m * N):
        raise ValueError(f"R must be ({m * N}, {m * N}), got {weights.R.shape}")
    if weights.Q.shape != (p * N, p * N):
        raise ValueError(f"Q must be ({p * N}, {p * N}), got {weights.Q.shape}")
    if weights.reference.size != p * N:
        raise ValueError(
            f"reference must have length {p * N}, got {weights.reference.size}"
        )
    F_r = psd_sqrt(weights.R, "R", require_pd=True)
    F_q = psd_sqrt(weights.Q, "Q")
    sy = np.sqrt(weights.lambda_y)
    A_mat = np.vstack([sy * part.Y_p, F_r @ part.U_f, F_q @ part.Y_f])
    b_vec = np.concatenate([sy * y_ini, np.zeros(m * N), F_q @ weights.reference])

    G_blocks, q_blocks = [], []
    if box_u is not None:
        Gb, qb = _box_rows(part.U_f, m, N, box_u)
        G_blocks.append(Gb)
        q_blocks.append(qb)
    if box_y is not None:
        Gb, qb = _box_rows(part.Y_f, p, N, box_y)
        G_blocks.append(Gb)
        q_blocks.append(qb)
    if extra_ineq is not None:
        Gb, qb = extra_ineq
        G_blocks.append(as_matrix(Gb, "extra_ineq G", cols=part.H))
        q_blocks.append(as_vector(qb, "extra_ineq q"))
    if G_blocks:
        G = np.vstack(G_blocks)
        q = np.concatenate(q_blocks)
    else:
        G, q = np.zeros((0, part.H)), np.zeros(0)

    cons = ConstraintSet(G_ineq=G, q_ineq=q, E_eq=part.U_p, f_eq=u_ini)
    return AssembledProblem(
        A_mat=A_mat, b_vec=b_vec, constraints=cons, partition=part, weights=weights
    )


def robustness_radius(g_star, A, b, lambda_g: float, tol: float = 1e-12) -> float:
    """A-posteriori radius of the data-matrix disturbance ball against
    which the regularized minimizer is worst-case optimal:
    lambda_g ||g|| / ||A g - b||, or lambda_g ||g|| at zero residual."""
    g_star = np.asarray(g_star, dtype=float).reshape(-1)
    res = float(np.linalg.norm(np.asarray(A) @ g_star - np.asarray(b).reshape(-1)))
    norm_g = float(np.linalg.norm(g_star))
    if res > tol:
        return lambda_g * norm_g / res
    return lambda_g * norm_g


def augmented_robustness_radius(
    g_star, A, b, lambda_g: float, tol: float = 1e-12
) -> float:
    """Radius covering joint disturbances on the data matrix and the
    target vector: lambda_g sqrt(||g||^2 + 1) / ||A g - b|| (same
    zero-residual fallback as robustness_radius)."""
    g_star = np.asarray(g_star, dtype=float).reshape(-1)
    res = float(np.linalg.norm(np.asarray(A) @ g_star - np.asarray(b).reshape(-1)))
    norm_aug = float(np.sqrt(np.linalg.norm(g_star) ** 2 + 1.0))
    if res > tol:
        return lambda_g * norm_aug / res
    return lambda_g * norm_aug


def robust_objective(g, A, b, radius: float) -> float:
    """Worst-case cost ||A g - b|| + radius * ||g|| over the Frobenius
    disturbance ball of the given radius."""
    g = np.asarray(g, dtype=float).reshape(-1)
    res = float(np.linalg.norm(np.asarray(A) @ g - np.asarray(b).reshape(-1)))
    return res + radius * float(np.linalg.norm(g))


def solution_from_result(problem: AssembledProblem, lambda_g: float, res: QPResult) -> Solution:
    g = res.g
    u_plan = y_plan = objective = residual = radius = radius_aug = None
    if g is not None:
        Ag_b = problem.A_mat @ g - problem.b_vec
        residual = float(np.linalg.norm(Ag_b))
        objective = residual**2 + lambda_g * float(g @ g)
        radius = robustness_radius(g, problem.A_mat, problem.b_vec, lambda_g)
        radius_aug = augmented_robustness_radius(
            g, problem.A_mat, problem.b_vec, lambda_g
        )
        if problem.partition is not None:
            u_plan = problem.partition.U_f @ g
            y_plan = problem.partition.Y_f @ g
    return Solution(
        status=res.status,
        g_star=g,
        u_plan=u_plan,
        y_plan=y_plan,
        objective=objective,
        residual_norm=residual,
        radius=radius,
        augmented_radius=radius_aug,
        eq_duals=res.eq_duals,
        ineq_duals=res.ineq_duals,
        kkt=res.kkt,
        lambda_g=lambda_g,
        iterations=res.iterations,
    )


def solve_qp(problem: AssembledProblem, lambda_g: float, tol: float = 1e-8) -> Solution:
    """Minimize ||A g - b||^2 + lambda_g ||g||^2 over the constraint set.

    Returns a Solution with KKT residuals; status is "infeasible" when
    the constraints admit no point and "max-iterations" when the
    certificate tolerance was not met within the iteration budget.

    lambda_g = 0 is accepted but carries no robustness certificate (the
    radius is 0) and the minimizer may be non-unique; ties are broken
    toward the minimum-norm solution.
    """
    cons = problem.constraints
    res = solve_regularized_lsq(
        problem.A_mat,
        problem.b_vec,
        lambda_g,
        E=cons.E_eq,
        f=cons.f_eq,
        G=cons.G_ineq,
        q=cons.q_ineq,
        tol=tol,
    )
    return solution_from_result(problem, lambda_g, res)


def closed_form(problem: AssembledProblem, lambda_g: float, tol: float = 1e-8) -> Solution:
    """One-shot saddle-point solution for the inequality-free case.

    Valid when the problem has no inequality rows or they are inactive at
    the result; a violated row raises, since the formula then no longer
    returns the constrained minimizer.

    Raises:
        SingularSystemError: saddle-point matrix numerically singular.
        ValueError: an inequality row is violated by the unconstrained
            minimizer.
    """
    cons = problem.constraints
    solver = EqualitySolver(
        problem.A_mat, cons.E_eq if cons.E_eq.shape[0] else None, lambda_g
    )
    g, nu = solver.solve(problem.b_vec, cons.f_eq if cons.E_eq.shape[0] else None)
    if cons.G_ineq.shape[0]:
        slack = cons.G_ineq @ g - cons.q_ineq
        if slack.max() > tol * (1.0 + np.linalg.norm(cons.q_ineq, np.inf)):
            raise ValueError(
                "closed form invalid: inequality constraints active "
                f"(max violation {slack.max():.3e}); use solve_qp"
            )
    kkt = kkt_residual(
        problem.A_mat,
        problem.b_vec,
        lambda_g,
        cons.E_eq,
        cons.f_eq,
        np.zeros((0, problem.H)),
        np.zeros(0),
        g,
        nu,
        np.zeros(0),
    )
    res = QPResult(
        g=g,
        eq_duals=nu,
        ineq_duals=np.zeros(cons.G_ineq.shape[0]),
        status=STATUS_SOLVED,
        kkt=kkt,
        iterations=0,
    )
    return solution_from_result(problem, lambda_g, res)


def problem_to_text(problem: AssembledProblem, path) -> None:
    """Write the stacked system and constraints as key/value text with
    row-major matrix entries."""
    cons = problem.constraints
    with open(path, "w") as fh:
        for name, mat in (
            ("A", problem.A_mat),
            ("G", cons.G_ineq),
            ("E", cons.E_eq),
        ):
            fh.write(f"{name}.shape {mat.shape[0]} {mat.shape[1]}\n")
            fh.write(f"{name} " + " ".join(repr(float(v)) for v in mat.reshape(-1)) + "\n")
        for name, vec in (("b", problem.b_vec), ("q", cons.q_ineq), ("f", cons.f_eq)):
            fh.write(f"{name} " + " ".join(repr(float(v)) for v in vec) + "\n")


def problem_from_text(path) -> AssembledProblem:
    fields: dict[str, list[float]] = {}
    shapes: dict[str, tuple[int, int]] = {}
    with open(path) as fh:
        for line in fh:
            key, _, rest = line.strip().partition(" ")
            if key.endswith(".shape"):
                r, c = rest.split()
                shapes[key[: -len(".shape")]] = (int(r), int(c))
            elif key:
                fields[key] = [float(v) for v in rest.split()] if rest else []
    mats = {k: np.array(fields[k]).reshape(shapes[k]) for k in ("A", "G", "E")}
    vecs = {k: np.array(fields[k]) for k in ("b", "q", "f")}
    cons = ConstraintSet(
        G_ineq=mats["G"], q_ineq=vecs["q"], E_eq=mats["E"], f_eq=vecs["f"]
    )
    return AssembledProblem.from_arrays(mats["A"], vecs["b"], cons)


def solution_to_text(sol: Solution, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"status {sol.status}\n")
        fh.write(f"lambda_g {sol.lambda_g!r}\n")
        for name, val in (
            ("objective", sol.objective),
            ("residual_norm", sol.residual_norm),
            ("radius", sol.radius),
            ("augmented_radius", sol.augmented_radius),
        ):
            fh.write(f"{name} {'' if val is None else repr(float(val))}\n")
        for name, vec in (
            ("g", sol.g_star),
            ("u_plan", sol.u_plan),
            ("y_plan", sol.y_plan),
            ("eq_duals", sol.eq_duals),
            ("ineq_duals", sol.ineq_duals),
        ):
            vals = "" if vec is None else " ".join(repr(float(v)) for v in np.asarray(vec))
            fh.write(f"{name} {vals}\n")
