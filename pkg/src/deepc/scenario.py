"""Converter-style benchmark storyline on the shipped surrogate plant.

Timeline (sample-indexed): idle, excite and collect data, settle, switch
the controller on at a zero reference, then step the active-power
reference. Metrics summarize tracking quality and response speed so
sweeps over the regularization weight can be compared.
"""

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .controller import ClosedLoopLog, DeePCController, run_closed_loop
from .hankel import RankCheck, TrajectoryData, rank_condition
from .plant import NoiseSpec, StateSpaceModel, converter_surrogate, generate_excitation, simulate
from .solver import DeePCWeights

# noise sub-seed tags so collection and closed loop never share draws
_PHASE_OPEN_LOOP = 1
_PHASE_CLOSED_LOOP = 2

OUTPUT_LABELS = ("V_q", "P_E", "Q_E")
INPUT_LABELS = ("freq_nudge", "i_d_ref", "i_q_ref")


class ConfigError(ValueError):
    """Malformed or incomplete scenario/CLI configuration."""


@dataclass(frozen=True)
class DeePCParams:
    """Controller hyperparameters; defaults follow the benchmark setup
    (T_ini 6, horizon 12, 500 data samples, lambda_y 1e4, unit input
    cost, 400x output cost, control horizon 1, constraints ignored)."""

    t_ini: int = 6
    horizon: int = 12
    data_length: int = 500
    lambda_y: float = 1e4
    r_weight: float = 1.0
    q_weight: float = 400.0
    lambda_g: float = 10.0
    control_horizon: int = 1


def default_params() -> DeePCParams:
    return DeePCParams()


def build_reference(p0: float, q0: float, N: int) -> np.ndarray:
    """Per-step reference (0, p0, q0) repeated over the horizon: zero
    q-axis voltage plus active/reactive power targets."""
    return np.tile(np.array([0.0, float(p0), float(q0)]), N)


@dataclass(frozen=True)
class ScenarioConfig:
    """Benchmark storyline configuration.

    Schedule fields are sample indices and must be strictly increasing;
    the collect window must cover at least `params.data_length` samples
    (the most recent ones are used). `excitation_base` is the constant
    setpoint added to the d-axis current reference during collection,
    with seeded white noise on all inputs providing excitation.
    """

    plant: StateSpaceModel = field(default_factory=converter_surrogate)
    params: DeePCParams = field(default_factory=default_params)
    noise: NoiseSpec = field(
        default_factory=lambda: NoiseSpec(seed=0, input_dither_power=1e-2)
    )
    collect_start: int = 50
    collect_end: int = 550
    activate: int = 600
    ref_step_at: int = 650
    run_end: int = 950
    p0: float = 0.3
    q0: float = 0.0
    excitation_base: float = 0.2
    n_bound: int = 6
    solver_mode: str = "closed_form"

    def __post_init__(self):
        times = (self.collect_start, self.collect_end, self.activate,
                 self.ref_step_at, self.run_end)
        if any(b <= a for a, b in zip(times, times[1:])) or self.collect_start < 0:
            raise ConfigError(
                "schedule must satisfy 0 <= collect_start < collect_end < "
                f"activate < ref_step_at < run_end, got {times}"
            )
        if self.collect_end - self.collect_start < self.params.data_length:
            raise ConfigError(
                f"collect window {self.collect_end - self.collect_start} is "
                f"shorter than data_length {self.params.data_length}"
            )


@dataclass
class ScenarioMetrics:
    """Summary of one run: per-output steady-state tracking error (mean
    absolute error over the final fifth of the closed loop), 10->90%
    rise time of the active power after the reference step (in samples,
    inf when 90% is never reached), and the final robustness radius."""

    steady_state_error: np.ndarray
    rise_time: float
    radius_final: float


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    data: TrajectoryData
    rank_check: RankCheck
    log: ClosedLoopLog
    metrics: ScenarioMetrics
    u_full: np.ndarray
    y_full: np.ndarray
    r_full: np.ndarray


def _rise_time(y_pe: np.ndarray, step_index: int, magnitude: float) -> float:
    """10->90% rise time of a step response starting near zero."""
    if magnitude == 0.0:
        return float("nan")
    seg = y_pe[step_index:] * np.sign(magnitude)
    target = abs(magnitude)
    above10 = np.nonzero(seg >= 0.1 * target)[0]
    above90 = np.nonzero(seg >= 0.9 * target)[0]
    if above10.size == 0 or above90.size == 0:
        return float("inf")
    return float(above90[0] - above10[0])


def run_scenario(config: ScenarioConfig) -> ScenarioResult:
    """Execute collect -> activate -> reference-step and summarize.

    Raises:
        RuntimeError: collected data fails the spanning rank check (the
            run aborts rather than proceeding with unusable data).
    """
    plant = config.plant
    prm = config.params
    m, p = plant.m, plant.p
    open_noise = config.noise.child(_PHASE_OPEN_LOOP)
    loop_noise = config.noise.child(_PHASE_CLOSED_LOOP)

    # open-loop segment: idle, excitation window, settle
    n_open = config.activate
    u_open = np.zeros((n_open, m))
    collect_len = config.collect_end - config.collect_start
    base = np.zeros((collect_len, m))
    base[:, 1] = config.excitation_base
    pe_depth = prm.t_ini + prm.horizon + config.n_bound
    u_open[config.collect_start : config.collect_end] = generate_excitation(
        open_noise, m, collect_len, base=base, pe_depth=pe_depth
    )
    y_open, x = simulate(plant, np.zeros(plant.n), u_open, noise=open_noise)

    lo = config.collect_end - prm.data_length
    data = TrajectoryData(
        u=u_open[lo : config.collect_end], y=y_open[lo : config.collect_end]
    )
    check = rank_condition(data, prm.t_ini + prm.horizon, config.n_bound)
    if check.rank < check.target:
        # abort rather than proceed: the data cannot span the trajectories
        raise RuntimeError(f"scenario aborted: collected data unusable ({check.detail})")

    weights = DeePCWeights.from_scalars(
        m=m,
        p=p,
        N=prm.horizon,
        r_weight=prm.r_weight,
        q_weight=prm.q_weight,
        lambda_y=prm.lambda_y,
        lambda_g=prm.lambda_g,
        reference=build_reference(0.0, 0.0, prm.horizon),
    )
    controller = DeePCController(
        data,
        prm.t_ini,
        prm.horizon,
        weights,
        n_bound=config.n_bound,
        k=prm.control_horizon,
        solver_mode=config.solver_mode,
    )
    controller.warm_start(
        u_open[config.activate - prm.t_ini : config.activate],
        y_open[config.activate - prm.t_ini : config.activate],
    )

    steps_cl = config.run_end - config.activate
    step_local = config.ref_step_at - config.activate
    r_before = np.zeros(p)
    r_after = np.array([0.0, config.p0, config.q0])

    def schedule(t: int) -> np.ndarray:
        return r_after if t >= step_local else r_before

    log, _ = run_closed_loop(
        plant, controller, schedule, steps_cl, noise=loop_noise, x0=x
    )

    tail = max(1, int(0.2 * steps_cl))
    sse = np.mean(np.abs(log.y[-tail:] - log.r[-tail:]), axis=0)
    metrics = ScenarioMetrics(
        steady_state_error=sse,
        rise_time=_rise_time(log.y[:, 1], step_local, config.p0),
        radius_final=float(log.radius[-1]),
    )
    r_full = np.vstack([np.zeros((n_open, p)), log.r])
    return ScenarioResult(
        config=config,
        data=data,
        rank_check=check,
        log=log,
        metrics=metrics,
        u_full=np.vstack([u_open, log.u]),
        y_full=np.vstack([y_open, log.y]),
        r_full=r_full,
    )


def sweep(config: ScenarioConfig, lambda_grid) -> list[tuple[float, ScenarioMetrics]]:
    """Run the scenario once per regularization weight with identical
    seeds, returning (lambda_g, metrics) pairs in grid order."""
    out = []
    for lam in lambda_grid:
        cfg = replace(config, params=replace(config.params, lambda_g=float(lam)))
        out.append((float(lam), run_scenario(cfg).metrics))
    return out


def _check_keys(section: dict, allowed: set, context: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key '{sorted(unknown)[0]}' in {context}")


def config_from_dict(raw: dict, seed: int | None = None) -> ScenarioConfig:
    """Build a ScenarioConfig from parsed JSON; `seed` overrides the
    configured one. Unknown keys raise a ConfigError naming the key."""
    allowed = {
        "plant", "params", "noise", "schedule", "reference",
        "excitation_base", "n_bound", "solver_mode", "seed",
    }
    _check_keys(raw, allowed, "scenario config")

    plant_spec = raw.get("plant", "surrogate")
    if plant_spec == "surrogate":
        plant = converter_surrogate()
    elif isinstance(plant_spec, dict) and "file" in plant_spec:
        plant = StateSpaceModel.from_text(plant_spec["file"])
    else:
        raise ConfigError("plant must be 'surrogate' or {'file': path}")

    prm_raw = dict(raw.get("params", {}))
    _check_keys(prm_raw, set(DeePCParams.__dataclass_fields__), "params")
    params = replace(default_params(), **prm_raw)

    noise_raw = dict(raw.get("noise", {}))
    _check_keys(noise_raw, {"seed", "output_noise_power", "input_dither_power"}, "noise")
    noise_raw.setdefault("input_dither_power", 1e-2)
    if seed is not None:
        noise_raw["seed"] = seed
    elif "seed" not in noise_raw:
        noise_raw["seed"] = int(raw.get("seed", 0))
    noise = NoiseSpec(**noise_raw)

    sched_raw = dict(raw.get("schedule", {}))
    sched_keys = {"collect_start", "collect_end", "activate", "ref_step_at", "run_end"}
    _check_keys(sched_raw, sched_keys, "schedule")

    ref_raw = dict(raw.get("reference", {}))
    _check_keys(ref_raw, {"p0", "q0"}, "reference")

    kwargs = dict(
        plant=plant,
        params=params,
        noise=noise,
        excitation_base=float(raw.get("excitation_base", 0.2)),
        n_bound=int(raw.get("n_bound", 6)),
        solver_mode=str(raw.get("solver_mode", "closed_form")),
        p0=float(ref_raw.get("p0", 0.3)),
        q0=float(ref_raw.get("q0", 0.0)),
    )
    kwargs.update({k: int(v) for k, v in sched_raw.items()})
    return ScenarioConfig(**kwargs)


def config_to_dict(config: ScenarioConfig) -> dict:
    """Inverse of config_from_dict for the surrogate-plant case."""
    return {
        "plant": "surrogate",
        "params": asdict(config.params),
        "noise": {
            "seed": config.noise.seed,
            "output_noise_power": config.noise.output_noise_power,
            "input_dither_power": config.noise.input_dither_power,
        },
        "schedule": {
            "collect_start": config.collect_start,
            "collect_end": config.collect_end,
            "activate": config.activate,
            "ref_step_at": config.ref_step_at,
            "run_end": config.run_end,
        },
        "reference": {"p0": config.p0, "q0": config.q0},
        "excitation_base": config.excitation_base,
        "n_bound": config.n_bound,
        "solver_mode": config.solver_mode,
    }


def load_config(path, seed: int | None = None) -> ScenarioConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh), seed=seed)
