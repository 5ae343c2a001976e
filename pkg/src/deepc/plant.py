"""Discrete-time LTI simulation used for data generation and ground truth.

The controller never sees these models; they exist so tests and scenarios
can generate data, verify predictions against the true response, and run
seeded closed loops.
"""

from dataclasses import dataclass

import numpy as np

from .hankel import DEFAULT_RANK_TOL, numerical_rank, pe_order
from .validation import as_matrix, as_vector, as_signal, require_positive_int

# rng stream labels so one seed drives independent noise sources
_STREAM_MEASUREMENT = 0
_STREAM_EXCITATION = 1


class UnobservableModelError(ValueError):
    """The output map never reveals the full state."""


class ExcitationError(RuntimeError):
    """Could not generate a persistently exciting input within the retry budget."""


@dataclass(frozen=True)
class StateSpaceModel:
    """State-space quadruple x+ = A x + B u, y = C x + D u."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape[1] != n:
            raise ValueError(f"A must be square, got {A.shape}")
        B = as_matrix(self.B, "B", rows=n)
        C = as_matrix(self.C, "C", cols=n)
        D = as_matrix(self.D, "D", rows=C.shape[0], cols=B.shape[1])
        for name, val in (("A", A), ("B", B), ("C", C), ("D", D)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def spectral_radius(self) -> float:
        return float(np.abs(np.linalg.eigvals(self.A)).max())

    @property
    def is_stable(self) -> bool:
        return self.spectral_radius < 1.0

    def dc_gain(self) -> np.ndarray:
        """Steady-state gain C (I - A)^-1 B + D (stable models only)."""
        return self.C @ np.linalg.solve(np.eye(self.n) - self.A, self.B) + self.D

    def to_text(self, path) -> None:
        """Write as key/value text: dims on `n m p` lines, matrices row-major."""
        with open(path, "w") as fh:
            fh.write(f"n {self.n}\nm {self.m}\np {self.p}\n")
            for name, mat in (("A", self.A), ("B", self.B), ("C", self.C), ("D", self.D)):
                fh.write(name + " " + " ".join(repr(float(v)) for v in mat.reshape(-1)) + "\n")

    @classmethod
    def from_text(cls, path) -> "StateSpaceModel":
        fields = {}
        with open(path) as fh:
            for line in fh:
                key, _, rest = line.strip().partition(" ")
                if key:
                    fields[key] = rest
        n, m, p = (int(fields[k]) for k in ("n", "m", "p"))
        shapes = {"A": (n, n), "B": (n, m), "C": (p, n), "D": (p, m)}
        mats = {
            k: np.array(list(map(float, fields[k].split()))).reshape(shape)
            for k, shape in shapes.items()
        }
        return cls(**mats)


@dataclass(frozen=True)
class NoiseSpec:
    """Seeded noise magnitudes; identical seed implies identical realization.

    Powers are per-channel, per-step variances of i.i.d. Gaussian noise.
    """

    seed: int = 0
    output_noise_power: float = 0.0
    input_dither_power: float = 0.0

    def __post_init__(self):
        if self.output_noise_power < 0 or self.input_dither_power < 0:
            raise ValueError("noise powers must be nonnegative")

    def rng(self, stream: int, offset: int = 0) -> np.random.Generator:
        """Independent deterministic generator for a named stream."""
        return np.random.default_rng([int(self.seed), int(stream), int(offset)])

    def child(self, tag: int) -> "NoiseSpec":
        """Same powers under an independent seed derived from (seed, tag);
        lets one configured seed drive several non-overlapping phases."""
        derived = np.random.SeedSequence([int(self.seed), int(tag)]).generate_state(1)[0]
        return NoiseSpec(
            seed=int(derived),
            output_noise_power=self.output_noise_power,
            input_dither_power=self.input_dither_power,
        )


def simulate(
    model: StateSpaceModel,
    x0,
    u,
    noise: NoiseSpec | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Run the state recursion over an input sequence.

    Args:
        model: plant to simulate.
        x0: initial state, length n.
        u: inputs, shape (K, m).
        noise: optional measurement noise added to every output sample.

    Returns:
        (y, x_final): outputs of shape (K, p) and the state after step K.
    """
    x = as_vector(x0, "x0", size=model.n)
    u = as_signal(u, "u", width=model.m)
    K = u.shape[0]
    y = np.empty((K, model.p))
    for t in range(K):
        y[t] = model.C @ x + model.D @ u[t]
        x = model.A @ x + model.B @ u[t]
    if noise is not None and noise.output_noise_power > 0:
        rng = noise.rng(_STREAM_MEASUREMENT)
        y = y + np.sqrt(noise.output_noise_power) * rng.standard_normal((K, model.p))
    return y, x


def lag(model: StateSpaceModel, tol: float = DEFAULT_RANK_TOL) -> int:
    """Smallest window length from which the state can be reconstructed:
    the first ell with rank col(C, CA, ..., CA^(ell-1)) = n.

    Raises:
        UnobservableModelError: if the rank never reaches n for ell <= n.
    """
    blocks = []
    Ck = model.C
    for ell in range(1, model.n + 1):
        blocks.append(Ck)
        if numerical_rank(np.vstack(blocks), tol) == model.n:
            return ell
        Ck = Ck @ model.A
    raise UnobservableModelError(
        f"observability matrix rank stalls below n={model.n}"
    )


def generate_excitation(
    spec: NoiseSpec,
    m: int,
    T: int,
    base=None,
    pe_depth: int | None = None,
    max_retries: int = 10,
) -> np.ndarray:
    """Base input plus seeded white noise of the configured dither power.

    When `pe_depth` is given the result is checked for persistency of
    excitation of that order and regenerated from a fresh sub-seed on
    failure, at most `max_retries` times.

    Raises:
        ExcitationError: if no persistently exciting draw is found.
    """
    m = require_positive_int(m, "m")
    T = require_positive_int(T, "T")
    if base is None:
        base = np.zeros((T, m))
    base = as_signal(base, "base", width=m)
    if base.shape[0] != T:
        raise ValueError(f"base must have T={T} steps, got {base.shape[0]}")
    sigma = np.sqrt(spec.input_dither_power)
    for attempt in range(max_retries + 1):
        u = base + sigma * spec.rng(_STREAM_EXCITATION, attempt).standard_normal((T, m))
        if pe_depth is None or pe_order(u, pe_depth):
            return u
        if sigma == 0.0:
            break  # retries cannot help without dither
    raise ExcitationError(
        f"input not persistently exciting of order {pe_depth} after "
        f"{max_retries} retries (dither power {spec.input_dither_power})"
    )


def converter_surrogate() -> StateSpaceModel:
    """Fixed stable 3-input/3-output benchmark plant.

    Stands in for a grid-connected converter: inputs are a frequency
    nudge and d/q current setpoints, outputs are q-axis voltage and
    active/reactive power, all in normalized units. Two damped
    oscillatory modes plus two first-order lags, weakly cross-coupled;
    no direct feedthrough, so outputs respond one step after inputs.
    The constants below are frozen; tests pin spectral radius < 1,
    lag <= 6, and a positive DC gain from input 2 to output 2.
    """
    A = np.array(
        [
            [0.872021, -0.222664, 0.05, 0.0, 0.0, 0.0],
            [0.222664, 0.872021, 0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.69907, -0.428604, 0.08, 0.0],
            [0.0, 0.0, 0.428604, 0.69907, 0.0, 0.0],
            [0.04, 0.0, 0.0, 0.0, 0.7, 0.0],
            [0.0, 0.06, 0.0, 0.0, 0.0, 0.55],
        ]
    )
    B = np.array(
        [
            [0.25, 0.79, 0.55],
            [-0.55, -0.4, 0.75],
            [-0.99, 0.64, 0.59],
            [-0.06, -0.39, -0.44],
            [-0.49, -0.11, 0.01],
            [0.11, 0.99, 0.59],
        ]
    )
    C = np.array(
        [
            [-0.0684, 0.23, -0.3185, -0.5963, -0.4736, -0.0004],
            [0.5563, -0.1328, 0.1745, 0.2647, 0.198, 0.168],
            [-0.2112, 0.3798, 0.0405, -0.1023, -0.1231, 0.1384],
        ]
    )
    D = np.zeros((3, 3))
    return StateSpaceModel(A=A, B=B, C=C, D=D)
