"""Dense solvers for regularized least squares under polytope constraints.

Solves min ||A g - b||^2 + lam ||g||^2 subject to E g = f and G g <= q.
An active-set method handles the inequality case; pure equality problems
reduce to one saddle-point solve. Problems here are small and dense
(a few hundred variables), so direct factorizations win over iterative
methods and make the results bit-reproducible.
"""

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg
from scipy.optimize import linprog

STATUS_SOLVED = "solved"
STATUS_INFEASIBLE = "infeasible"
STATUS_MAX_ITERATIONS = "max-iterations"


class SingularSystemError(np.linalg.LinAlgError):
    """Saddle-point matrix is numerically singular."""

    def __init__(self, message: str, cond_estimate: float):
        super().__init__(f"{message} (condition estimate {cond_estimate:.3e})")
        self.cond_estimate = cond_estimate


class KKTResidual(NamedTuple):
    """First-order optimality residuals (inf norms)."""

    stationarity: float
    primal: float
    complementarity: float
    dual: float

    def max(self) -> float:
        return max(self)


@dataclass
class QPResult:
    g: np.ndarray | None
    eq_duals: np.ndarray
    ineq_duals: np.ndarray
    status: str
    kkt: KKTResidual | None
    iterations: int


def _empty(rows: int, cols: int) -> np.ndarray:
    return np.zeros((rows, cols))


def _nullspace(C: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Orthonormal basis of the null space of C (columns)."""
    n = C.shape[1]
    if C.shape[0] == 0:
        return np.eye(n)
    _, s, Vt = np.linalg.svd(C)
    rank = int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0
    return Vt[rank:].T


def _lu_with_pivot_check(K: np.ndarray, context: str):
    with warnings.catch_warnings():
        # singularity is detected from the pivots below and raised as an error
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(K, check_finite=False)
    diag = np.abs(np.diag(lu))
    dmax = diag.max() if diag.size else 0.0
    if dmax == 0.0 or diag.min() < np.finfo(float).eps * dmax * K.shape[0]:
        cond = np.inf if diag.min() == 0.0 else dmax / diag.min()
        raise SingularSystemError(f"singular {context} system", cond)
    return lu, piv


def _solve_refined(K, lu_piv, rhs):
    """LU solve with one step of iterative refinement."""
    x = scipy.linalg.lu_solve(lu_piv, rhs, check_finite=False)
    r = rhs - K @ x
    return x + scipy.linalg.lu_solve(lu_piv, r, check_finite=False)


class EqualitySolver:
    """Factorized saddle-point solver for min ||A g - b||^2 + lam ||g||^2
    subject to E g = f, reusable across right-hand sides.

    The coefficient matrix [[2(A'A + lam I), E'], [E, 0]] depends only on
    (A, E, lam), so receding-horizon loops factor once and back-solve per
    step.
    """

    def __init__(self, A: np.ndarray, E: np.ndarray | None, lam: float):
        self.A = A
        H = A.shape[1]
        self.E = _empty(0, H) if E is None or E.size == 0 else np.atleast_2d(E)
        self.lam = float(lam)
        n_eq = self.E.shape[0]
        P2 = 2.0 * (A.T @ A + lam * np.eye(H))
        self.K = np.block(
            [[P2, self.E.T], [self.E, _empty(n_eq, n_eq)]]
        ) if n_eq else P2
        self.H = H
        self.n_eq = n_eq
        self._lu = _lu_with_pivot_check(self.K, "saddle-point")

    def solve(self, b: np.ndarray, f: np.ndarray | None = None):
        """Return (g, eq_duals) for the given right-hand side."""
        rhs = 2.0 * (self.A.T @ b)
        if self.n_eq:
            rhs = np.concatenate([rhs, np.zeros(self.n_eq) if f is None else f])
        x = _solve_refined(self.K, self._lu, rhs)
        return x[: self.H], x[self.H :]


class ReducedRidgeSolver:
    """Null-space solver for min ||A g - b||^2 + lam ||g||^2 subject to
    E g = f, reusable across right-hand sides.

    Splits g into a minimum-norm particular solution of the equalities
    plus an orthonormal null-space component and solves the reduced ridge
    normal equations; the reduction (null basis, pseudoinverse, Cholesky
    factor) is computed once. Deliberately a different algorithm from
    EqualitySolver's saddle-point factorization so the two routes can
    cross-check each other.
    """

    def __init__(self, A: np.ndarray, E: np.ndarray | None, lam: float):
        self.A = A
        H = A.shape[1]
        self.E = _empty(0, H) if E is None or E.size == 0 else np.atleast_2d(E)
        self.lam = float(lam)
        self._E_pinv = np.linalg.pinv(self.E) if self.E.shape[0] else None
        self.Z = _nullspace(self.E)
        self.AZ = A @ self.Z
        M = self.AZ.T @ self.AZ + self.lam * np.eye(self.Z.shape[1])
        try:
            self._chol = scipy.linalg.cho_factor(M, check_finite=False)
        except np.linalg.LinAlgError:
            self._chol = None  # singular reduced system (lam = 0): lstsq path
            self._M = M

    def solve(self, b: np.ndarray, f: np.ndarray | None = None):
        """Return (g, eq_duals) for the given right-hand side."""
        if self._E_pinv is not None:
            g_part = self._E_pinv @ (np.zeros(self.E.shape[0]) if f is None else f)
        else:
            g_part = np.zeros(self.A.shape[1])
        rhs = self.AZ.T @ (b - self.A @ g_part) - self.lam * (self.Z.T @ g_part)
        if self._chol is not None:
            w = scipy.linalg.cho_solve(self._chol, rhs, check_finite=False)
        else:
            w, *_ = np.linalg.lstsq(self._M, rhs, rcond=None)
        g = g_part + self.Z @ w
        nu, _ = _dual_estimate(self.A, b, self.lam, self.E, _empty(0, g.size), g)
        return g, nu


def _minnorm_equality_ls(A, b, C, d):
    """Minimum-norm minimizer of ||A g - b||^2 over {g : C g = d}.

    Splits g into a minimum-norm particular solution of C g = d plus an
    orthonormal null-space component; the least-squares solve over the
    null-space coordinates then yields the minimum-norm minimizer overall.
    Returns (g, feasible) where `feasible` reports whether C g = d is
    attainable at all.
    """
    H = A.shape[1]
    if C.shape[0] == 0:
        g, *_ = np.linalg.lstsq(A, b, rcond=None)
        return g, True
    g_part, *_ = np.linalg.lstsq(C, d, rcond=None)
    feas_res = np.linalg.norm(C @ g_part - d, np.inf)
    feasible = feas_res <= 1e-9 * (1.0 + np.linalg.norm(d, np.inf))
    Z = _nullspace(C)
    if Z.shape[1] == 0:
        return g_part, feasible
    w, *_ = np.linalg.lstsq(A @ Z, b - A @ g_part, rcond=None)
    return g_part + Z @ w, feasible


def kkt_residual(A, b, lam, E, f, G, q, g, nu, mu) -> KKTResidual:
    grad = 2.0 * (A.T @ (A @ g - b)) + 2.0 * lam * g
    if E.shape[0]:
        grad = grad + E.T @ nu
    if G.shape[0]:
        grad = grad + G.T @ mu
    stat = float(np.linalg.norm(grad, np.inf))
    prim = 0.0
    comp = 0.0
    dual = 0.0
    if E.shape[0]:
        prim = max(prim, float(np.linalg.norm(E @ g - f, np.inf)))
    if G.shape[0]:
        slack = G @ g - q
        prim = max(prim, float(max(slack.max(), 0.0)))
        comp = float(np.abs(mu * slack).max())
        dual = float(max(0.0, -mu.min()))
    return KKTResidual(stat, prim, comp, dual)


def _dual_estimate(A, b, lam, E, G_active, g):
    """Least-squares multipliers from stationarity on the active rows."""
    grad = 2.0 * (A.T @ (A @ g - b)) + 2.0 * lam * g
    n_eq, n_act = E.shape[0], G_active.shape[0]
    if n_eq + n_act == 0:
        return np.zeros(0), np.zeros(0)
    M = np.hstack([E.T, G_active.T]) if n_eq and n_act else (
        E.T if n_eq else G_active.T
    )
    lam_all, *_ = np.linalg.lstsq(M, -grad, rcond=None)
    return lam_all[:n_eq], lam_all[n_eq:]


def _phase1_point(E, f, G, q, tol):
    """Feasible point via an infeasibility-minimizing LP; None if infeasible."""
    H = G.shape[1]
    c = np.zeros(H + 1)
    c[-1] = 1.0
    A_ub = np.hstack([G, -np.ones((G.shape[0], 1))])
    A_eq = np.hstack([E, np.zeros((E.shape[0], 1))]) if E.shape[0] else None
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=q,
        A_eq=A_eq,
        b_eq=f if E.shape[0] else None,
        bounds=[(None, None)] * H + [(0, None)],
        method="highs",
    )
    if not res.success or res.x[-1] > tol:
        return None
    return res.x[:H]


def solve_regularized_lsq(
    A: np.ndarray,
    b: np.ndarray,
    lam: float,
    E: np.ndarray | None = None,
    f: np.ndarray | None = None,
    G: np.ndarray | None = None,
    q: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iter: int | None = None,
) -> QPResult:
    """Minimize ||A g - b||^2 + lam ||g||^2 over {E g = f, G g <= q}.

    Strictly convex for lam > 0; for lam = 0 ties are broken toward the
    minimum-norm minimizer (guaranteed when no inequality row is active
    at the optimum). Deterministic for identical inputs.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    H = A.shape[1]
    E = _empty(0, H) if E is None else np.atleast_2d(np.asarray(E, dtype=float))
    f = np.zeros(0) if f is None else np.asarray(f, dtype=float).reshape(-1)
    G = _empty(0, H) if G is None else np.atleast_2d(np.asarray(G, dtype=float))
    q = np.zeros(0) if q is None else np.asarray(q, dtype=float).reshape(-1)
    if E.shape[0] != f.size or G.shape[0] != q.size:
        raise ValueError("constraint matrix/vector row counts disagree")
    lam = float(lam)
    if lam < 0:
        raise ValueError(f"lam must be nonnegative, got {lam}")

    scale = 1.0 + float(np.linalg.norm(2.0 * (A.T @ b), np.inf)) if b.size else 1.0
    feas_scale = 1.0 + max(
        float(np.linalg.norm(f, np.inf)) if f.size else 0.0,
        float(np.linalg.norm(q, np.inf)) if q.size else 0.0,
    )

    def finish(g, nu, mu, status, iters):
        if g is None:
            return QPResult(None, nu, mu, status, None, iters)
        kkt = kkt_residual(A, b, lam, E, f, G, q, g, nu, mu)
        if status == STATUS_SOLVED:
            certified = (
                kkt.stationarity <= tol * scale
                and kkt.primal <= tol * feas_scale
                and kkt.complementarity <= tol * scale
                and kkt.dual <= tol * scale
            )
            if not certified:
                status = STATUS_MAX_ITERATIONS
        return QPResult(g, nu, mu, status, kkt, iters)

    if G.shape[0] == 0:
        return finish(*_solve_equality_case(A, b, lam, E, f, tol, feas_scale))

    return _active_set(
        A, b, lam, E, f, G, q, tol, feas_scale, finish,
        max_iter=max_iter if max_iter is not None else 50 + 10 * G.shape[0],
    )


def _solve_equality_case(A, b, lam, E, f, tol, feas_scale):
    """Null-space route: minimum-norm particular solution plus reduced
    ridge least squares. Yields the minimum-norm minimizer when lam = 0
    leaves ties."""
    H = A.shape[1]
    if lam > 0:
        A_s = np.vstack([A, np.sqrt(lam) * np.eye(H)])
        b_s = np.concatenate([b, np.zeros(H)])
    else:
        A_s, b_s = A, b
    g, feasible = _minnorm_equality_ls(A_s, b_s, E, f)
    if E.shape[0] and not feasible:
        return None, np.zeros(E.shape[0]), np.zeros(0), STATUS_INFEASIBLE, 0
    nu, _ = _dual_estimate(A, b, lam, E, _empty(0, H), g)
    return g, nu, np.zeros(0), STATUS_SOLVED, 0


def _active_set(A, b, lam, E, f, G, q, tol, feas_scale, finish, max_iter):
    H = A.shape[1]
    P = A.T @ A + lam * np.eye(H)
    c = A.T @ b
    n_ineq = G.shape[0]

    # feasible start: equality-consistent point, else phase-1 LP
    g, eq_feasible = (
        _minnorm_equality_ls(_empty(0, H), np.zeros(0), E, f)
        if E.shape[0]
        else (np.zeros(H), True)
    )
    if not eq_feasible:
        return QPResult(None, np.zeros(E.shape[0]), np.zeros(n_ineq),
                        STATUS_INFEASIBLE, None, 0)
    if n_ineq and np.any(G @ g - q > tol * feas_scale):
        g = _phase1_point(E, f, G, q, tol * feas_scale)
        if g is None:
            return QPResult(None, np.zeros(E.shape[0]), np.zeros(n_ineq),
                            STATUS_INFEASIBLE, None, 0)

    working = []  # indices of inequality rows treated as equalities
    nu = np.zeros(E.shape[0])
    mu_full = np.zeros(n_ineq)
    step_tol = 1e-12

    for it in range(1, max_iter + 1):
        C = np.vstack([E, G[working]]) if (E.shape[0] or working) else _empty(0, H)
        Z = _nullspace(C)
        grad = 2.0 * (P @ g - c)
        if Z.shape[1]:
            red_H = Z.T @ (2.0 * P) @ Z
            red_g = Z.T @ grad
            w, *_ = np.linalg.lstsq(red_H, -red_g, rcond=None)
            d = Z @ w
        else:
            d = np.zeros(H)

        if np.linalg.norm(d, np.inf) <= step_tol * (1.0 + np.linalg.norm(g, np.inf)):
            nu, mu_w = _dual_estimate(A, b, lam, E, G[working], g)
            if mu_w.size == 0 or mu_w.min() >= -tol:
                mu_full = np.zeros(n_ineq)
                mu_full[working] = np.clip(mu_w, 0.0, None)
                if lam == 0.0:
                    g = _polish_minnorm(A, b, E, f, G, q, working, g, tol, feas_scale)
                return finish(g, nu, mu_full, STATUS_SOLVED, it)
            working.pop(int(np.argmin(mu_w)))
            continue

        # step length: full step or first blocking inactive constraint
        alpha = 1.0
        blocking = -1
        for i in range(n_ineq):
            if i in working:
                continue
            gi_d = G[i] @ d
            if gi_d > step_tol:
                ratio = (q[i] - G[i] @ g) / gi_d
                if ratio < alpha:
                    alpha = max(ratio, 0.0)
                    blocking = i
        g = g + alpha * d
        if blocking >= 0:
            working.append(blocking)

    nu, mu_w = _dual_estimate(A, b, lam, E, G[working], g)
    mu_full = np.zeros(n_ineq)
    mu_full[working] = mu_w
    return finish(g, nu, mu_full, STATUS_MAX_ITERATIONS, max_iter)


def _polish_minnorm(A, b, E, f, G, q, working, g, tol, feas_scale):
    """Minimum-norm representative on the optimal active face (lam = 0).

    Keeps the active-set iterate when the polished point would leave the
    feasible set (the optimal face may touch other constraints).
    """
    C = np.vstack([E, G[working]]) if (E.shape[0] or working) else _empty(0, A.shape[1])
    d = np.concatenate([f, q[working]])
    g_mn, feasible = _minnorm_equality_ls(A, b, C, d)
    if not feasible:
        return g
    same_value = abs(
        np.linalg.norm(A @ g_mn - b) - np.linalg.norm(A @ g - b)
    ) <= 1e-9 * (1.0 + np.linalg.norm(b))
    inactive_ok = G.shape[0] == 0 or np.all(G @ g_mn - q <= tol * feas_scale)
    return g_mn if (same_value and inactive_ok) else g
