"""Receding-horizon control loop over the data-driven predictor.

The controller keeps the most recent T_ini input/output pairs in ring
buffers, re-solves the regularized problem every k plant steps, applies
the first k planned inputs, and logs every step. It never sees a model;
plant objects appear only in `run_closed_loop`, which drives a simulated
plant against the controller.
"""

import csv
import time
import warnings
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .hankel import TrajectoryData, partition, rank_condition
from .plant import _STREAM_MEASUREMENT, NoiseSpec, StateSpaceModel
from .qp import EqualitySolver, QPResult, ReducedRidgeSolver, STATUS_SOLVED, kkt_residual
from .solver import (
    AssembledProblem,
    DeePCWeights,
    assemble,
    psd_sqrt,
    solution_from_result,
    solve_qp,
)
from .validation import as_signal, as_vector

SOLVER_MODES = ("qp", "closed_form")


class DataInsufficiencyError(ValueError):
    """Recorded data cannot span the required trajectory space."""


class AmbiguousInitializationError(ValueError):
    """T_ini below the lag bound: the initial window does not pin the state."""


def behavioral_predict(
    part,
    u_ini,
    y_ini,
    u_future,
    rank_tol: float = 1e-9,
    inconsistency_tol: float = 1e-6,
    return_residual: bool = False,
):
    """Predict the output response to `u_future` after the initial window.

    Finds the minimum-norm combination of recorded trajectory windows
    matching (u_ini, y_ini, u_future) and reads off the future outputs.
    Exact for noise-free data when the rank condition holds and T_ini is
    at least the system lag.

    An initial window that is not a trajectory of the data-generating
    system leaves a nonzero fit residual; a warning reports it and the
    least-squares prediction is returned anyway.
    """
    m, p = part.m, part.p
    u_ini = as_vector(u_ini, "u_ini", size=m * part.T_ini)
    y_ini = as_vector(y_ini, "y_ini", size=p * part.T_ini)
    u_future = as_vector(u_future, "u_future", size=m * part.N)
    M = np.vstack([part.U_p, part.Y_p, part.U_f])
    rhs = np.concatenate([u_ini, y_ini, u_future])
    g, *_ = np.linalg.lstsq(M, rhs, rcond=rank_tol)
    residual = float(np.linalg.norm(M @ g - rhs))
    if residual > inconsistency_tol * (1.0 + np.linalg.norm(rhs)):
        warnings.warn(
            f"initial window is not consistent with the data (residual {residual:.3e}); "
            "returning the least-squares prediction",
            stacklevel=2,
        )
    y_future = (part.Y_f @ g).reshape(part.N, p)
    return (y_future, residual) if return_residual else y_future


class DeePCController:
    """Stateful receding-horizon controller built from recorded data.

    Args:
        data: offline trajectory used to build the Hankel blocks.
        T_ini: initial-window length (must cover the plant lag).
        N: prediction horizon.
        weights: cost weights and default reference.
        n_bound: plant order used in the spanning rank check.
        ell_bound: lag bound checked against T_ini; defaults to n_bound.
        box_u / box_y: per-channel (lo, hi) bounds on planned inputs and
            outputs, or None.
        k: control horizon, 1 <= k <= N; the first k planned inputs are
            applied before re-solving.
        solver_mode: "qp" (handles constraints) or "closed_form"
            (unconstrained fast path with a cached factorization).
    """

    def __init__(
        self,
        data: TrajectoryData,
        T_ini: int,
        N: int,
        weights: DeePCWeights,
        n_bound: int,
        ell_bound: int | None = None,
        box_u=None,
        box_y=None,
        k: int = 1,
        solver_mode: str = "qp",
        rank_tol: float = 1e-9,
        solver_tol: float = 1e-8,
    ):
        if solver_mode not in SOLVER_MODES:
            raise ValueError(f"solver_mode must be one of {SOLVER_MODES}")
        if not 1 <= k <= N:
            raise ValueError(f"control horizon k={k} outside 1..{N}")
        ell_bound = n_bound if ell_bound is None else ell_bound
        if T_ini < ell_bound:
            raise AmbiguousInitializationError(
                f"T_ini={T_ini} is below the lag bound {ell_bound}; the initial "
                "window cannot determine the state"
            )
        check = rank_condition(data, T_ini + N, n_bound, rank_tol)
        # noisy measurements push the numerical rank above the noise-free
        # target; only a rank below target means the data cannot span the
        # trajectory space
        if check.rank < check.target:
            raise DataInsufficiencyError(
                f"data Hankel matrix rank {check.rank} < required {check.target} "
                f"({check.detail}); collect richer data"
            )
        self.partition = partition(data, T_ini, N)
        self.weights = weights
        self.k = k
        self.solver_mode = solver_mode
        self.rank_tol = rank_tol
        self.solver_tol = solver_tol
        self.box_u = box_u
        self.box_y = box_y
        self.step_count = 0

        m, p = self.partition.m, self.partition.p
        self._reference = np.asarray(weights.reference, dtype=float).copy()
        self._template = assemble(
            self.partition,
            weights,
            np.zeros(m * T_ini),
            np.zeros(p * T_ini),
            box_u=box_u,
            box_y=box_y,
        )
        self._b_head = np.sqrt(weights.lambda_y)
        self._F_q = psd_sqrt(weights.Q, "Q")
        # cache a factorized solver: the stacked matrix is fixed across
        # steps, only the right-hand side moves
        self._cached_solver = None
        has_ineq = bool(self._template.constraints.G_ineq.shape[0])
        if solver_mode == "closed_form":
            if has_ineq:
                raise ValueError(
                    "closed_form mode cannot enforce box constraints; use qp"
                )
            self._cached_solver = EqualitySolver(
                self._template.A_mat, self.partition.U_p, weights.lambda_g
            )
        elif not has_ineq:
            self._cached_solver = ReducedRidgeSolver(
                self._template.A_mat, self.partition.U_p, weights.lambda_g
            )

        self._u_buf: deque = deque(maxlen=T_ini)
        self._y_buf: deque = deque(maxlen=T_ini)
        self._warm = False
        self._pending: list[np.ndarray] = []
        self._last_applied: np.ndarray | None = None
        self._last_diag: dict = {}

    @property
    def T_ini(self) -> int:
        return self.partition.T_ini

    @property
    def N(self) -> int:
        return self.partition.N

    @property
    def m(self) -> int:
        return self.partition.m

    @property
    def p(self) -> int:
        return self.partition.p

    @property
    def u_buffer(self) -> np.ndarray:
        return np.array(self._u_buf)

    @property
    def y_buffer(self) -> np.ndarray:
        return np.array(self._y_buf)

    def warm_start(self, recent_u, recent_y) -> "DeePCController":
        """Fill the buffers with the most recent T_ini input/output pairs."""
        u = as_signal(recent_u, "recent_u", width=self.m)
        y = as_signal(recent_y, "recent_y", width=self.p)
        if u.shape[0] != self.T_ini or y.shape[0] != self.T_ini:
            raise ValueError(
                f"warm start needs exactly T_ini={self.T_ini} samples, got "
                f"{u.shape[0]} inputs and {y.shape[0]} outputs"
            )
        self._u_buf.clear()
        self._y_buf.clear()
        for t in range(self.T_ini):
            self._u_buf.append(u[t].copy())
            self._y_buf.append(y[t].copy())
        self._warm = True
        self._pending = []
        self._last_applied = None
        return self

    def set_reference(self, r) -> None:
        """Replace the output reference: either one p-vector held over the
        horizon or a full stacked p*N vector."""
        r = np.asarray(r, dtype=float).reshape(-1)
        if r.size == self.p:
            r = np.tile(r, self.N)
        if r.size != self.p * self.N:
            raise ValueError(
                f"reference must have length {self.p} or {self.p * self.N}, got {r.size}"
            )
        self._reference = r

    def _current_problem(self) -> AssembledProblem:
        u_ini = np.concatenate(list(self._u_buf))
        y_ini = np.concatenate(list(self._y_buf))
        m, p, N, T_ini = self.m, self.p, self.N, self.T_ini
        b = np.concatenate(
            [self._b_head * y_ini, np.zeros(m * N), self._F_q @ self._reference]
        )
        cons = replace(self._template.constraints, f_eq=u_ini)
        return replace(self._template, b_vec=b, constraints=cons)

    def _solve(self):
        problem = self._current_problem()
        if self._cached_solver is None:
            return solve_qp(problem, self.weights.lambda_g, self.solver_tol)
        g, nu = self._cached_solver.solve(problem.b_vec, problem.constraints.f_eq)
        kkt = kkt_residual(
            problem.A_mat,
            problem.b_vec,
            self.weights.lambda_g,
            problem.constraints.E_eq,
            problem.constraints.f_eq,
            np.zeros((0, problem.H)),
            np.zeros(0),
            g,
            nu,
            np.zeros(0),
        )
        res = QPResult(g, nu, np.zeros(0), STATUS_SOLVED, kkt, 0)
        return solution_from_result(problem, self.weights.lambda_g, res)

    def control_step(self, new_y=None, new_r=None):
        """Advance the controller by one plant step.

        `new_y` is the measured response to the previously returned input
        and completes its buffer pair; it must be omitted on the first
        call after a warm start. Re-solves every k steps, otherwise
        consumes the pending plan. On solver failure the last applied
        input is held and flagged in the diagnostics.

        Returns:
            (u_now, diagnostics): the input to apply this step and a dict
            with the latest solve status, plans, radius, objective,
            KKT residual, solve time, and fallback flag.
        """
        if not self._warm:
            raise RuntimeError("controller is cold: call warm_start first")
        if self._last_applied is not None:
            if new_y is None:
                raise ValueError(
                    "measurement for the previously applied input is required"
                )
            y = as_vector(new_y, "new_y", size=self.p)
            self._u_buf.append(self._last_applied)
            self._y_buf.append(y)
            self._last_applied = None
        elif new_y is not None:
            raise ValueError("no outstanding applied input to pair with new_y")
        if new_r is not None:
            self.set_reference(new_r)

        if not self._pending:
            start = time.perf_counter()
            sol = self._solve()
            elapsed_ms = (time.perf_counter() - start) * 1e3
            diag = {
                "status": sol.status,
                "solved": sol.solved,
                "resolved": True,
                "fallback": False,
                "objective": sol.objective,
                "radius": sol.radius,
                "kkt_residual": sol.kkt.max() if sol.kkt is not None else None,
                "solve_ms": elapsed_ms,
                "plan_u": None,
                "plan_y": None,
            }
            if sol.solved:
                plan_u = sol.u_plan.reshape(self.N, self.m)
                diag["plan_u"] = plan_u
                diag["plan_y"] = sol.y_plan.reshape(self.N, self.p)
                self._pending = [plan_u[i].copy() for i in range(self.k)]
            else:
                # fail-safe: hold the most recent applied input
                diag["fallback"] = True
                hold = self._u_buf[-1].copy() if self._u_buf else np.zeros(self.m)
                self._pending = [hold]
            self._last_diag = diag
        else:
            diag = dict(self._last_diag)
            diag["resolved"] = False
            diag["solve_ms"] = 0.0

        u_now = self._pending.pop(0)
        self._last_applied = u_now
        self.step_count += 1
        return u_now, diag

    def predict(self, u_ini, y_ini, u_future, return_residual: bool = False):
        """Behavioral prediction from an explicit initial window."""
        return behavioral_predict(
            self.partition,
            u_ini,
            y_ini,
            u_future,
            rank_tol=self.rank_tol,
            return_residual=return_residual,
        )


def init_controller(
    data: TrajectoryData,
    T_ini: int,
    N: int,
    weights: DeePCWeights,
    n_bound: int,
    **kwargs,
) -> DeePCController:
    """Build a controller; see DeePCController for arguments."""
    return DeePCController(data, T_ini, N, weights, n_bound, **kwargs)


@dataclass
class ClosedLoopLog:
    """Per-step record of one closed-loop run."""

    u: np.ndarray
    y: np.ndarray
    r: np.ndarray
    radius: np.ndarray
    objective: np.ndarray
    status: list
    solve_ms: np.ndarray

    @property
    def steps(self) -> int:
        return self.u.shape[0]

    def to_csv(self, path, timing: str = "zero") -> None:
        """Write the run as CSV.

        `timing="zero"` blanks the solve_ms column to 0.0 so identical
        seeds yield byte-identical files; `timing="wall"` writes the
        measured per-step solve times.
        """
        if timing not in ("zero", "wall"):
            raise ValueError("timing must be 'zero' or 'wall'")
        m, p = self.u.shape[1], self.y.shape[1]
        header = (
            ["step"]
            + [f"u{i + 1}" for i in range(m)]
            + [f"y{i + 1}" for i in range(p)]
            + [f"r{i + 1}" for i in range(p)]
            + ["beta", "objective", "status", "solve_ms"]
        )
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for t in range(self.steps):
                ms = self.solve_ms[t] if timing == "wall" else 0.0
                writer.writerow(
                    [t]
                    + [repr(float(v)) for v in self.u[t]]
                    + [repr(float(v)) for v in self.y[t]]
                    + [repr(float(v)) for v in self.r[t]]
                    + [repr(float(self.radius[t])), repr(float(self.objective[t])),
                       self.status[t], repr(float(ms))]
                )


def _reference_at(reference_schedule, t: int, p: int) -> np.ndarray:
    if callable(reference_schedule):
        return as_vector(reference_schedule(t), "reference", size=p)
    arr = np.asarray(reference_schedule, dtype=float)
    if arr.ndim == 1:
        return as_vector(arr, "reference", size=p)
    return as_vector(arr[t], "reference", size=p)


def run_closed_loop(
    model: StateSpaceModel,
    controller: DeePCController,
    reference_schedule,
    steps: int,
    noise: NoiseSpec | None = None,
    x0=None,
) -> tuple[ClosedLoopLog, np.ndarray]:
    """Drive a simulated plant with the controller for `steps` steps.

    `reference_schedule` is a constant p-vector, an array of shape
    (steps, p), or a callable t -> p-vector. Measurement noise is drawn
    once from the seeded spec, so runs are deterministic. Returns the log
    and the final plant state.
    """
    if model.m != controller.m or model.p != controller.p:
        raise ValueError(
            f"plant dims ({model.m} in / {model.p} out) do not match controller "
            f"({controller.m} in / {controller.p} out)"
        )
    x = np.zeros(model.n) if x0 is None else as_vector(x0, "x0", size=model.n)
    p, m = model.p, model.m
    meas_noise = np.zeros((steps, p))
    if noise is not None and noise.output_noise_power > 0:
        rng = noise.rng(_STREAM_MEASUREMENT)
        meas_noise = np.sqrt(noise.output_noise_power) * rng.standard_normal(
            (steps, p)
        )

    u_log = np.zeros((steps, m))
    y_log = np.zeros((steps, p))
    r_log = np.zeros((steps, p))
    radius_log = np.full(steps, np.nan)
    objective_log = np.full(steps, np.nan)
    status_log = []
    ms_log = np.zeros(steps)

    y_prev = None
    for t in range(steps):
        r_t = _reference_at(reference_schedule, t, p)
        u_t, diag = controller.control_step(new_y=y_prev, new_r=r_t)
        y_t = model.C @ x + model.D @ u_t + meas_noise[t]
        x = model.A @ x + model.B @ u_t

        u_log[t] = u_t
        y_log[t] = y_t
        r_log[t] = r_t
        radius_log[t] = diag["radius"] if diag["radius"] is not None else np.nan
        objective_log[t] = (
            diag["objective"] if diag["objective"] is not None else np.nan
        )
        status_log.append(diag["status"] + ("/held" if diag["fallback"] else ""))
        ms_log[t] = diag["solve_ms"]
        y_prev = y_t

    log = ClosedLoopLog(
        u=u_log,
        y=y_log,
        r=r_log,
        radius=radius_log,
        objective=objective_log,
        status=status_log,
        solve_ms=ms_log,
    )
    return log, x
