"""Hankel matrices from recorded trajectories, past/future partitioning, and
the rank / persistency-of-excitation checks that license data-driven
trajectory prediction."""

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .validation import as_signal, require_positive_int

DEFAULT_RANK_TOL = 1e-9


@dataclass(frozen=True)
class TrajectoryData:
    """A recorded input/output trajectory of length T.

    Attributes:
        u: inputs, shape (T, m), one row per time step.
        y: outputs, shape (T, p).
    """

    u: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        u = as_signal(self.u, "u")
        y = as_signal(self.y, "y")
        if u.shape[0] != y.shape[0]:
            raise ValueError(
                f"u and y must cover the same steps, got {u.shape[0]} vs {y.shape[0]}"
            )
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)

    @property
    def T(self) -> int:
        return self.u.shape[0]

    @property
    def m(self) -> int:
        return self.u.shape[1]

    @property
    def p(self) -> int:
        return self.y.shape[1]

    def to_csv(self, path) -> None:
        """Write as CSV with header t,u1..um,y1..yp, one row per step."""
        header = (
            ["t"]
            + [f"u{i + 1}" for i in range(self.m)]
            + [f"y{i + 1}" for i in range(self.p)]
        )
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for t in range(self.T):
                writer.writerow(
                    [t] + [repr(float(v)) for v in self.u[t]] + [repr(float(v)) for v in self.y[t]]
                )

    @classmethod
    def from_csv(cls, path) -> "TrajectoryData":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            m = sum(1 for name in header if name.startswith("u"))
            p = sum(1 for name in header if name.startswith("y"))
            if header[: 1 + m + p] != ["t"] + [f"u{i + 1}" for i in range(m)] + [
                f"y{i + 1}" for i in range(p)
            ]:
                raise ValueError(f"unrecognized trajectory header {header!r}")
            rows = [list(map(float, row[1 : 1 + m + p])) for row in reader]
        data = np.asarray(rows, dtype=float)
        return cls(u=data[:, :m], y=data[:, m : m + p])


@dataclass(frozen=True)
class HankelPartition:
    """Past/future blocks of the depth-(T_ini + N) data Hankel matrices.

    U_p/Y_p hold the first T_ini block rows (used to pin the initial
    condition), U_f/Y_f the remaining N block rows (used for prediction).
    All four blocks share the column count H = T - T_ini - N + 1.
    """

    U_p: np.ndarray
    Y_p: np.ndarray
    U_f: np.ndarray
    Y_f: np.ndarray
    T_ini: int
    N: int

    @property
    def H(self) -> int:
        return self.U_p.shape[1]

    @property
    def m(self) -> int:
        return self.U_p.shape[0] // self.T_ini

    @property
    def p(self) -> int:
        return self.Y_p.shape[0] // self.T_ini


class RankCheck(NamedTuple):
    """Outcome of a numerical rank test on a data Hankel matrix."""

    ok: bool
    rank: int
    target: int
    detail: str


def build_hankel(w, depth: int) -> np.ndarray:
    """Build the depth-L Hankel matrix of a vector-valued signal.

    Column j stacks the window (w_j, ..., w_{j+L-1}); channels are
    interleaved within each step, so row i*d + r carries channel r at
    window offset i.

    Args:
        w: signal of shape (T, d), or 1-D of length T for d = 1.
        depth: window length L, 1 <= L <= T.

    Returns:
        Array of shape (d*L, T - L + 1).
    """
    w = as_signal(w, "w")
    L = require_positive_int(depth, "depth")
    T, d = w.shape
    if L > T:
        raise ValueError(f"window depth {L} exceeds signal length {T}")
    cols = T - L + 1
    out = np.empty((d * L, cols))
    for j in range(cols):
        out[:, j] = w[j : j + L].reshape(-1)
    return out


def partition(data: TrajectoryData, T_ini: int, N: int) -> HankelPartition:
    """Split the depth-(T_ini + N) input/output Hankel matrices into
    past and future blocks.

    Raises:
        ValueError: if T < T_ini + N (fewer than one complete window).
    """
    T_ini = require_positive_int(T_ini, "T_ini")
    N = require_positive_int(N, "N")
    depth = T_ini + N
    if data.T < depth:
        raise ValueError(
            f"insufficient data: T={data.T} but T_ini + N = {depth} samples "
            "are needed per window"
        )
    Hu = build_hankel(data.u, depth)
    Hy = build_hankel(data.y, depth)
    m, p = data.m, data.p
    return HankelPartition(
        U_p=Hu[: m * T_ini],
        U_f=Hu[m * T_ini :],
        Y_p=Hy[: p * T_ini],
        Y_f=Hy[p * T_ini :],
        T_ini=T_ini,
        N=N,
    )


def numerical_rank(mat: np.ndarray, tol: float = DEFAULT_RANK_TOL) -> int:
    """Rank as the number of singular values above tol * sigma_max."""
    if mat.size == 0:
        return 0
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv[0] == 0.0:
        return 0
    return int(np.sum(sv > tol * sv[0]))


def rank_condition(
    data: TrajectoryData, L: int, n: int, tol: float = DEFAULT_RANK_TOL
) -> RankCheck:
    """Check whether the stacked depth-L input/output Hankel matrix has
    rank m*L + n, the condition for its columns to span every length-L
    trajectory of an order-n system.

    Returns a RankCheck; `ok` is False with a "too few columns" detail
    when the column count T - L + 1 cannot reach the target rank.
    """
    L = require_positive_int(L, "L")
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    target = data.m * L + n
    cols = data.T - L + 1
    if cols < target:
        return RankCheck(
            False, 0, target, f"too few columns: {cols} < target rank {target}"
        )
    stacked = np.vstack([build_hankel(data.u, L), build_hankel(data.y, L)])
    rank = numerical_rank(stacked, tol)
    ok = rank == target
    detail = "ok" if ok else f"rank {rank} != target {target}"
    return RankCheck(ok, rank, target, detail)


def pe_order(u_data, L: int, tol: float = DEFAULT_RANK_TOL) -> bool:
    """True iff the input signal is persistently exciting of order L,
    i.e. its depth-L Hankel matrix has full row rank m*L."""
    u = as_signal(u_data, "u_data")
    L = require_positive_int(L, "L")
    if L > u.shape[0]:
        raise ValueError(f"order {L} exceeds signal length {u.shape[0]}")
    H = build_hankel(u, L)
    return numerical_rank(H, tol) == u.shape[1] * L
