"""Estimator-style front end so the predictor composes with scikit-learn
tooling (get_params/set_params, clone, pipelines that pass array data).

Fit consumes one recorded input/output trajectory; afterwards the model
predicts future outputs from an initial window, plans optimal inputs, or
spawns a receding-horizon controller.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .controller import DeePCController, behavioral_predict
from .hankel import (
    TrajectoryData,
    build_hankel,
    numerical_rank,
    partition,
    pe_order,
    rank_condition,
)
from .solver import DeePCWeights, Solution, assemble, closed_form, solve_qp


class DeePC(BaseEstimator):
    """Data-enabled predictive controller with ridge regularization.

    Parameters:
        T_ini: initial-window length fixing the latent state.
        horizon: prediction horizon N.
        r_weight / q_weight: diagonal input and output-tracking costs.
        lambda_y: penalty softening past-output consistency.
        lambda_g: ridge weight on the trajectory combination; also sets
            the robustness certificate.
        control_horizon: inputs applied per re-solve in closed loop.
        solver: "qp" or "closed_form".
        n_bound: plant order for the spanning rank check; None infers the
            order from the data rank instead of enforcing it.
        u_bounds / y_bounds: per-channel (lo, hi) box constraints or None.
        rank_tol: relative singular-value threshold for rank decisions.
        solver_tol: KKT certificate tolerance.

    Attributes (after fit):
        partition_: past/future Hankel blocks of the training trajectory.
        rank_: numerical rank of the stacked data Hankel matrix.
        order_: plant order backing the rank condition (given or inferred).
        n_features_in_: number of input channels m.
        n_outputs_: number of output channels p.
    """

    def __init__(
        self,
        T_ini: int = 6,
        horizon: int = 12,
        r_weight: float = 1.0,
        q_weight: float = 400.0,
        lambda_y: float = 1e4,
        lambda_g: float = 10.0,
        control_horizon: int = 1,
        solver: str = "qp",
        n_bound: int | None = None,
        u_bounds=None,
        y_bounds=None,
        rank_tol: float = 1e-9,
        solver_tol: float = 1e-8,
    ):
        self.T_ini = T_ini
        self.horizon = horizon
        self.r_weight = r_weight
        self.q_weight = q_weight
        self.lambda_y = lambda_y
        self.lambda_g = lambda_g
        self.control_horizon = control_horizon
        self.solver = solver
        self.n_bound = n_bound
        self.u_bounds = u_bounds
        self.y_bounds = y_bounds
        self.rank_tol = rank_tol
        self.solver_tol = solver_tol

    def fit(self, U, Y) -> "DeePC":
        """Learn the trajectory space from one recorded run.

        Args:
            U: inputs, shape (T, m).
            Y: outputs, shape (T, p).

        Raises:
            ValueError: data shorter than one window, input not
                persistently exciting, or rank condition violated for the
                given n_bound.
        """
        U = check_array(U, ensure_2d=True, dtype=float)
        Y = check_array(Y, ensure_2d=True, dtype=float)
        data = TrajectoryData(u=U, y=Y)
        depth = self.T_ini + self.horizon
        if self.n_bound is not None:
            check = rank_condition(data, depth, self.n_bound, self.rank_tol)
            # measurement noise can push the rank above the noise-free
            # target; only a deficit means the data cannot span
            if check.rank < check.target:
                raise ValueError(
                    f"data does not span the trajectory space: {check.detail}"
                )
            rank, order = check.rank, self.n_bound
        else:
            if not pe_order(data.u, depth, self.rank_tol):
                raise ValueError(
                    f"input is not persistently exciting of order {depth}"
                )
            stacked = np.vstack(
                [build_hankel(data.u, depth), build_hankel(data.y, depth)]
            )
            rank = numerical_rank(stacked, self.rank_tol)
            order = rank - data.m * depth
            if order < 0:
                raise ValueError(
                    f"data rank {rank} is below the input share {data.m * depth}"
                )
        self.data_ = data
        self.partition_ = partition(data, self.T_ini, self.horizon)
        self.rank_ = rank
        self.order_ = order
        self.n_features_in_ = data.m
        self.n_outputs_ = data.p
        return self

    def predict(self, u_ini, y_ini, u_future) -> np.ndarray:
        """Outputs over the horizon given an initial window and a future
        input plan; shape (horizon, p)."""
        check_is_fitted(self, "partition_")
        return behavioral_predict(
            self.partition_, u_ini, y_ini, u_future, rank_tol=self.rank_tol
        )

    def plan(self, u_ini, y_ini, reference=None) -> Solution:
        """Solve for the optimal input/output plan from an initial window.

        `reference` is a p-vector held over the horizon or a stacked
        p*horizon vector; default zero.
        """
        check_is_fitted(self, "partition_")
        problem = assemble(
            self.partition_,
            self._weights(reference),
            np.asarray(u_ini, dtype=float).reshape(-1),
            np.asarray(y_ini, dtype=float).reshape(-1),
            box_u=self.u_bounds,
            box_y=self.y_bounds,
        )
        if self.solver == "closed_form":
            return closed_form(problem, self.lambda_g, self.solver_tol)
        return solve_qp(problem, self.lambda_g, self.solver_tol)

    def make_controller(self, warm_u=None, warm_y=None) -> DeePCController:
        """Receding-horizon controller over the fitted data; optionally
        warm-started with the most recent T_ini pairs."""
        check_is_fitted(self, "partition_")
        ctrl = DeePCController(
            self.data_,
            self.T_ini,
            self.horizon,
            self._weights(None),
            n_bound=self.order_,
            box_u=self.u_bounds,
            box_y=self.y_bounds,
            k=self.control_horizon,
            solver_mode=self.solver,
            rank_tol=self.rank_tol,
            solver_tol=self.solver_tol,
        )
        if warm_u is not None or warm_y is not None:
            ctrl.warm_start(warm_u, warm_y)
        return ctrl

    def _weights(self, reference) -> DeePCWeights:
        p, N = self.n_outputs_, self.horizon
        if reference is None:
            ref = np.zeros(p * N)
        else:
            ref = np.asarray(reference, dtype=float).reshape(-1)
            if ref.size == p:
                ref = np.tile(ref, N)
        return DeePCWeights.from_scalars(
            m=self.n_features_in_,
            p=p,
            N=N,
            r_weight=self.r_weight,
            q_weight=self.q_weight,
            lambda_y=self.lambda_y,
            lambda_g=self.lambda_g,
            reference=ref,
        )
