"""Shared test helpers: random minimal systems and a naive simulation oracle."""

import numpy as np
import pytest

from deepc import NoiseSpec, StateSpaceModel, TrajectoryData, converter_surrogate, generate_excitation, simulate


def random_system(
    rng: np.random.Generator,
    n: int | None = None,
    m: int | None = None,
    p: int | None = None,
    rho_max: float = 0.9,
    with_feedthrough: bool = False,
) -> StateSpaceModel:
    """Random stable minimal (controllable and observable) model.

    Eigenvalues are real in (-rho_max, rho_max) under a random orthogonal
    similarity; draws with weak controllability or observability margins
    are rejected so downstream rank checks are well-posed.
    """
    n = int(n if n is not None else rng.integers(1, 7))
    m = int(m if m is not None else rng.integers(1, 4))
    p = int(p if p is not None else rng.integers(1, 4))
    for _ in range(100):
        vals = rng.uniform(0.2, rho_max, n) * rng.choice([-1.0, 1.0], n)
        Qmat, _ = np.linalg.qr(rng.standard_normal((n, n)))
        A = Qmat @ np.diag(vals) @ Qmat.T
        B = rng.standard_normal((n, m))
        C = rng.standard_normal((p, n))
        D = rng.standard_normal((p, m)) if with_feedthrough else np.zeros((p, m))
        ctrb = np.hstack([np.linalg.matrix_power(A, k) @ B for k in range(n)])
        obsv = np.vstack([C @ np.linalg.matrix_power(A, k) for k in range(n)])
        sc = np.linalg.svd(ctrb, compute_uv=False)
        so = np.linalg.svd(obsv, compute_uv=False)
        if sc[-1] > 1e-4 * sc[0] and so[-1] > 1e-4 * so[0]:
            return StateSpaceModel(A=A, B=B, C=C, D=D)
    raise RuntimeError("could not draw a well-conditioned minimal system")


def naive_simulate(A, B, C, D, x0, u):
    """Step-by-step recursion written independently of plant.simulate."""
    x = np.array(x0, dtype=float)
    outputs = []
    for u_t in u:
        outputs.append(C @ x + D @ u_t)
        x = A @ x + B @ u_t
    return np.array(outputs), x


def excited_trajectory(
    model: StateSpaceModel, T: int, seed: int, power: float = 1e-2, pe_depth: int | None = None
) -> TrajectoryData:
    """White-noise-driven trajectory from rest, noise-free outputs."""
    spec = NoiseSpec(seed=seed, input_dither_power=power)
    u = generate_excitation(spec, model.m, T, pe_depth=pe_depth)
    y, _ = simulate(model, np.zeros(model.n), u)
    return TrajectoryData(u=u, y=y)


@pytest.fixture(scope="session")
def surrogate_data() -> TrajectoryData:
    """One shared excitation run on the benchmark plant (T=500)."""
    return excited_trajectory(converter_surrogate(), 500, seed=3, pe_depth=24)
