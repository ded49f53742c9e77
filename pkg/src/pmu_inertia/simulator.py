"""Synthetic PMU frequency records with known inertia.

Two models are provided.  ``simulate_aggregate`` integrates a single
equivalent machine carrying the whole surviving fleet's inertia.
``simulate_multimachine`` integrates classical machines that feed one
common load bus through their own reactance, so every generator sees its
own frequency and the system swings internally after a trip.

Both run fixed-step RK4, switch topology and set-points only on step
boundaries, and sample the state at ``output_dt`` by picking the nearest
integration step.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .core import DisturbanceScenario, FrequencyTrace, GeneratorSpec, SystemSpec, per_unit_imbalance
from .errors import InvalidParameter, NetworkSolveDiverged
from .estimator import ground_truth_inertia
from .integrate import rk4_step

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50

_STEP_EPS = 1e-9


@dataclass(frozen=True)
class GovernorModel:
    """First-order droop governor: gain ``1/droop_r``, lag ``time_constant``.

    The governor stays idle until ``activation_delay`` seconds after the event.
    """

    enabled: bool = False
    droop_r: float = 0.1
    time_constant: float = 15.0
    activation_delay: float = 2.0

    def __post_init__(self):
        if self.activation_delay < 0:
            raise InvalidParameter("activation_delay must be >= 0", field="activation_delay")
        if self.enabled and not (self.droop_r > 0 and self.time_constant > 0):
            raise InvalidParameter(
                "droop_r and time_constant must be > 0 for an enabled governor", field="governor"
            )


@dataclass(frozen=True)
class ArtifactModel:
    """Post-event measurement contamination plus white noise.

    During the first second after the event the record gets a decaying
    uptick and a decaying oscillation (back swing, stator transients).
    Gaussian noise is added everywhere.
    """

    backswing_amplitude: float = 0.0
    backswing_decay_tau: float = 0.3
    backswing_osc_freq: float = 0.0
    initial_uptick_hz: float = 0.0
    noise_sigma: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if not self.backswing_decay_tau > 0:
            raise InvalidParameter("backswing_decay_tau must be > 0", field="backswing_decay_tau")
        if not self.noise_sigma >= 0:
            raise InvalidParameter("noise_sigma must be >= 0", field="noise_sigma")

    @property
    def is_identity(self) -> bool:
        return (
            self.backswing_amplitude == 0
            and self.initial_uptick_hz == 0
            and self.noise_sigma == 0
        )


# Contamination strong enough that a fit over the first post-event second is
# off by roughly half; used by the shipped scenarios and the window tests.
TYPICAL_CONTAMINATION = ArtifactModel(
    backswing_amplitude=0.05,
    backswing_decay_tau=0.4,
    backswing_osc_freq=1.5,
    initial_uptick_hz=0.25,
    noise_sigma=0.002,
)


@dataclass(frozen=True)
class SimConfig:
    duration: float
    integration_step: float = 0.001
    output_dt: float = 0.040
    governor: GovernorModel = field(default_factory=GovernorModel)
    artifacts: ArtifactModel = field(default_factory=ArtifactModel)

    def __post_init__(self):
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise InvalidParameter("duration must be > 0", field="duration")
        if not 0 < self.integration_step <= self.output_dt:
            raise InvalidParameter(
                "need 0 < integration_step <= output_dt", field="integration_step"
            )


def channel_seed(rng_seed: int, channel_id: str) -> np.random.Generator:
    """Per-channel generator; stable across processes (no ``hash()``)."""
    return np.random.default_rng([int(rng_seed) & 0xFFFFFFFF, zlib.crc32(channel_id.encode())])


def inject_artifacts(
    trace: FrequencyTrace, artifacts: ArtifactModel, event_time: float
) -> FrequencyTrace:
    if artifacts.is_identity:
        return trace
    t = trace.times
    f = trace.samples.copy()
    since = t - event_time
    eps = _STEP_EPS * trace.dt
    m = (since >= -eps) & (since < 1.0 - eps)
    if m.any() and (artifacts.initial_uptick_hz or artifacts.backswing_amplitude):
        s = np.clip(since[m], 0.0, None)
        decay = np.exp(-s / artifacts.backswing_decay_tau)
        f[m] += artifacts.initial_uptick_hz * decay
        f[m] += artifacts.backswing_amplitude * decay * np.sin(
            2 * np.pi * artifacts.backswing_osc_freq * s
        )
    if artifacts.noise_sigma > 0:
        rng = channel_seed(artifacts.rng_seed, trace.channel_id)
        f += rng.normal(0.0, artifacts.noise_sigma, size=f.size)
    return trace.replace(samples=f)


def _check_run(system: SystemSpec, scenario: DisturbanceScenario, config: SimConfig) -> list[GeneratorSpec]:
    if config.duration <= scenario.event_time:
        raise InvalidParameter(
            f"duration {config.duration} s does not reach event_time {scenario.event_time} s",
            field="duration",
        )
    if scenario.event_time < 0:
        raise InvalidParameter("event_time must be >= 0 (runs start at t = 0)", field="event_time")
    survivors = list(system.generators)
    if scenario.tripped_generator is not None:
        system.generator(scenario.tripped_generator)
        survivors = [g for g in survivors if g.id != scenario.tripped_generator]
    if not survivors:
        raise InvalidParameter("no generator survives the event", field="tripped_generator")
    return survivors


class _Grid:
    """Integration and output grids for one run."""

    def __init__(self, config: SimConfig, event_time: float):
        h = config.integration_step
        self.h = h
        self.n_steps = int(round(config.duration / h))
        self.k_event = math.ceil(event_time / h - _STEP_EPS)
        self.k_governor = math.ceil((event_time + config.governor.activation_delay) / h - _STEP_EPS)
        n_out = int(math.floor(config.duration / config.output_dt + _STEP_EPS)) + 1
        self.out_dt = config.output_dt
        self.out_steps = np.minimum(
            np.rint(np.arange(n_out) * config.output_dt / h).astype(int), self.n_steps
        )


def _run(fun, y0: np.ndarray, grid: _Grid, on_sample=None) -> np.ndarray:
    """Integrate and return states at the output steps (rows)."""
    out = np.empty((grid.out_steps.size, y0.size))
    wanted = grid.out_steps
    j = 0
    y = y0
    for k in range(grid.n_steps + 1):
        while j < wanted.size and wanted[j] == k:
            out[j] = y
            if on_sample is not None:
                on_sample(k * grid.h, y)
            j += 1
        if k == grid.n_steps:
            break
        fun_k = fun(k)
        y = rk4_step(fun_k, k * grid.h, y, grid.h)
    return out


def simulate_aggregate(
    system: SystemSpec, scenario: DisturbanceScenario, config: SimConfig
) -> FrequencyTrace:
    """Single-mass frequency response of the surviving fleet.

    State is ``[f, p_gov]``; after the event the accelerating power in
    per unit is ``-dP + p_gov + D * (f_n - f) / f_n`` where ``dP`` is the
    scenario's per-unit imbalance.
    """
    survivors = _check_run(system, scenario, config)
    h_total = ground_truth_inertia(survivors)
    dp = per_unit_imbalance(scenario, system.power_factor)
    fn = system.f_nominal
    d = system.load_damping
    gov = config.governor
    grid = _Grid(config, scenario.event_time)
    zero = np.zeros(2)

    def fun(k: int):
        if k < grid.k_event:
            return lambda t, y: zero
        gov_on = gov.enabled and k >= grid.k_governor

        def rhs(t, y):
            dev = (fn - y[0]) / fn
            p = -dp + y[1] + d * dev
            dpg = (dev / gov.droop_r - y[1]) / gov.time_constant if gov_on else 0.0
            return np.array([fn * p / (2.0 * h_total), dpg])

        return rhs

    states = _run(fun, np.array([fn, 0.0]), grid)
    trace = FrequencyTrace(
        "coi",
        0.0,
        grid.out_dt,
        states[:, 0],
        metadata={"model": "aggregate", "h_total": h_total},
    )
    return inject_artifacts(trace, config.artifacts, scenario.event_time)


def simulate_pmu_channels(
    system: SystemSpec,
    scenario: DisturbanceScenario,
    config: SimConfig,
    n_channels: int,
    prefix: str = "pmu",
) -> list[FrequencyTrace]:
    """Aggregate response observed by ``n_channels`` PMUs with independent noise."""
    if n_channels < 1:
        raise InvalidParameter("need at least one channel", field="channels")
    clean_cfg = SimConfig(
        duration=config.duration,
        integration_step=config.integration_step,
        output_dt=config.output_dt,
        governor=config.governor,
    )
    clean = simulate_aggregate(system, scenario, clean_cfg)
    return [
        inject_artifacts(clean.replace(channel_id=f"{prefix}{i + 1}"), config.artifacts, scenario.event_time)
        for i in range(n_channels)
    ]


# --- star network -----------------------------------------------------------


def solve_bus(
    e: np.ndarray,
    x: np.ndarray,
    delta: np.ndarray,
    p_load: float,
    q_load: float,
    v0: float = 1.0,
    theta0: float = 0.0,
) -> tuple[float, float, int]:
    """Common-bus voltage ``(V, theta)`` balancing a constant-power load.

    Machines behind reactance ``x`` with internal voltage ``e`` at angle
    ``delta`` (all per unit).  Newton on the active and reactive mismatch.
    Returns ``(V, theta, iterations)``.
    """
    v, th = v0, theta0
    b = e / x
    inv_x = float(np.sum(1.0 / x))
    for it in range(NEWTON_MAX_ITER + 1):
        ang = delta - th
        s = np.sin(ang)
        c = np.cos(ang)
        bs = float(b @ s)
        bc = float(b @ c)
        mp = v * bs - p_load
        mq = v * bc - v * v * inv_x - q_load
        if abs(mp) < NEWTON_TOL and abs(mq) < NEWTON_TOL:
            return v, th, it
        if it == NEWTON_MAX_ITER:
            break
        # d/dV and d/dtheta of each mismatch
        j11, j12 = bs, -v * bc
        j21, j22 = bc - 2.0 * v * inv_x, v * bs
        det = j11 * j22 - j12 * j21
        if det == 0.0 or not math.isfinite(det):
            break
        dv = (mp * j22 - mq * j12) / det
        dth = (j11 * mq - j21 * mp) / det
        v -= dv
        th -= dth
        if not (math.isfinite(v) and math.isfinite(th)) or v <= 0:
            break
    raise NetworkSolveDiverged(
        f"load-bus solve did not converge (P={p_load:.6g} pu, Q={q_load:.6g} pu)"
    )


def _equilibrium_angles(
    e: np.ndarray, x: np.ndarray, p: np.ndarray, q_load: float
) -> tuple[np.ndarray, float]:
    """Rotor angles and bus voltage with every machine at P_e = P_m, bus angle 0."""

    v_floor = float(np.max(p * x / e))

    def angles(v):
        return np.arcsin(np.clip(p * x / (e * v), -1.0, 1.0))

    def q_mismatch(v):
        return float(np.sum((e * v * np.cos(angles(v)) - v * v) / x)) - q_load

    v_top = float(np.max(e))
    lo = max(v_floor, 1e-6) * (1 + 1e-12)
    peak = optimize.minimize_scalar(
        lambda v: -q_mismatch(v), bounds=(lo, v_top), method="bounded", options={"xatol": 1e-12}
    ).x
    if q_mismatch(peak) < 0:
        raise NetworkSolveDiverged("no pre-event operating point: load exceeds network capability")
    if q_mismatch(v_top) >= 0:
        v = v_top
    else:
        v = optimize.brentq(q_mismatch, peak, v_top, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return angles(v), v


def _load_q_pu(load_mw: float, power_factor: float, s_base: float) -> float:
    return load_mw * math.tan(math.acos(power_factor)) / s_base


def simulate_multimachine(
    system: SystemSpec, scenario: DisturbanceScenario, config: SimConfig
) -> list[FrequencyTrace]:
    """Classical machines on a star network; one trace per surviving machine.

    With a ``tripped_generator`` the machine leaves the network at the
    event.  Without one, ``loss_mw`` is applied as a step increase of load.
    Load reactive demand follows the system power factor and stays fixed;
    active load scales with ``1 + D * (f_coi - f_n) / f_n``.

    ``metadata['loss_of_synchronism']`` on each trace flags any sample at
    which a machine drifted more than pi from the centre-of-inertia angle.
    """
    survivors = _check_run(system, scenario, config)
    gens = list(system.generators)
    n = len(gens)
    fn = system.f_nominal
    sb = system.s_base
    e = np.array([g.e_internal for g in gens])
    x = np.array([g.x_reactance for g in gens])
    h = np.array([g.h_const for g in gens])
    s = np.array([g.s_rated for g in gens])
    pm = np.array([g.p_mech for g in gens])
    m = 2.0 * h * s / fn  # MW s / Hz
    hs = h * s

    load = system.load_mw
    if abs(pm.sum() - load) > 1e-9 * max(load, 1.0):
        raise InvalidParameter(
            f"pre-event generation {pm.sum():g} MW does not match load {load:g} MW",
            field="load_mw",
        )
    q_load = _load_q_pu(load, system.power_factor, sb)

    given = [g.delta0 for g in gens]
    if all(d is not None for d in given):
        delta_init = np.array(given, dtype=float)
        v0, th0, _ = solve_bus(e, x, delta_init, load / sb, q_load)
    elif all(d is None for d in given):
        delta_init, v0 = _equilibrium_angles(e, x, pm / sb, q_load)
        th0 = 0.0
    else:
        raise InvalidParameter("set delta0 for every generator or for none", field="delta0")

    alive_post = np.array([g in survivors for g in gens])
    extra_load = scenario.loss_mw if scenario.tripped_generator is None else 0.0
    gov = config.governor
    grid = _Grid(config, scenario.event_time)
    d_load = system.load_damping
    bus = {"v": v0, "th": th0}

    def make_rhs(alive: np.ndarray, p_load_mw: float, gov_on: bool):
        e_a, x_a, m_a, pm_a, hs_a, s_a = e[alive], x[alive], m[alive], pm[alive], hs[alive], s[alive]
        w = hs_a / hs_a.sum()

        def rhs(t, y):
            delta = y[:n][alive]
            f = y[n : 2 * n][alive]
            pg = y[2 * n :][alive]
            fc = float(w @ f)
            p_l = p_load_mw * (1.0 + d_load * (fc - fn) / fn)
            v, th, _ = solve_bus(e_a, x_a, delta, p_l / sb, q_load, bus["v"], bus["th"])
            bus["v"], bus["th"] = v, th
            pe = sb * e_a * v / x_a * np.sin(delta - th)
            dy = np.zeros(3 * n)
            dy[:n][alive] = 2.0 * np.pi * (f - fn)
            dy[n : 2 * n][alive] = (pm_a + pg - pe) / m_a
            if gov_on:
                dy[2 * n :][alive] = (s_a / gov.droop_r * (fn - f) / fn - pg) / gov.time_constant
            return dy

        return rhs

    all_alive = np.ones(n, dtype=bool)
    rhs_pre = make_rhs(all_alive, load, False)
    rhs_post = make_rhs(alive_post, load + extra_load, False)
    rhs_post_gov = make_rhs(alive_post, load + extra_load, True) if gov.enabled else rhs_post

    def fun(k: int):
        if k < grid.k_event:
            return rhs_pre
        if gov.enabled and k >= grid.k_governor:
            return rhs_post_gov
        return rhs_post

    lost_sync = {"flag": False, "t": None}
    w_post = hs[alive_post] / hs[alive_post].sum()

    def on_sample(t, y):
        delta = y[:n][alive_post]
        if np.any(np.abs(delta - w_post @ delta) > np.pi) and not lost_sync["flag"]:
            lost_sync["flag"] = True
            lost_sync["t"] = t

    y0 = np.concatenate([delta_init, np.full(n, fn), np.zeros(n)])
    states = _run(fun, y0, grid, on_sample)
    meta = {
        "model": "multimachine",
        "loss_of_synchronism": lost_sync["flag"],
        "loss_of_synchronism_time": lost_sync["t"],
    }
    traces = []
    for i, g in enumerate(gens):
        if not alive_post[i]:
            continue
        tr = FrequencyTrace(g.id, 0.0, grid.out_dt, states[:, n + i], metadata=meta)
        traces.append(inject_artifacts(tr, config.artifacts, scenario.event_time))
    return traces


def system_h_total(system: SystemSpec, scenario: DisturbanceScenario) -> float:
    """Inertia of the fleet that survives the scenario (MVA-weighted, by rating)."""
    excluded = [scenario.tripped_generator] if scenario.tripped_generator else None
    return ground_truth_inertia(system.generators, excluded)
