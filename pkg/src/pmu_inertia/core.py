"""Domain types and the physical definitions shared by simulator and estimator.

Sign convention: the power imbalance of a machine is ``P_mech - P_elec``.
A loss of generation therefore makes the imbalance negative and the
frequency slope negative; estimators report inertia as a positive number.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateBase, InvalidParameter


def _require(cond: bool, message: str, field_name: str) -> None:
    if not cond:
        raise InvalidParameter(message, field=field_name)


def _finite(x: float) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


class BaseConvention(enum.Enum):
    """Which MW total the per-unit imbalance is referred to."""

    PRE_EVENT_TOTAL = "PreEventTotal"
    POST_EVENT_TOTAL = "PostEventTotal"


@dataclass(frozen=True)
class GeneratorSpec:
    """One classical machine.

    ``x_reactance`` is on the system base; ``h_const`` is on the machine's
    own rating ``s_rated``.  ``delta0`` is optional: when omitted the
    simulator solves for the pre-event equilibrium angle.
    """

    id: str
    h_const: float
    s_rated: float
    p_mech: float
    e_internal: float = 1.05
    x_reactance: float = 0.2
    delta0: float | None = None

    def __post_init__(self):
        _require(bool(self.id), "generator id must be non-empty", "id")
        _require(_finite(self.h_const) and self.h_const > 0, "h_const must be > 0", "h_const")
        _require(_finite(self.s_rated) and self.s_rated > 0, "s_rated must be > 0", "s_rated")
        _require(_finite(self.p_mech) and self.p_mech >= 0, "p_mech must be >= 0", "p_mech")
        _require(
            _finite(self.e_internal) and self.e_internal > 0, "e_internal must be > 0", "e_internal"
        )
        _require(
            _finite(self.x_reactance) and self.x_reactance > 0,
            "x_reactance must be > 0",
            "x_reactance",
        )
        _require(self.delta0 is None or _finite(self.delta0), "delta0 must be finite", "delta0")


@dataclass(frozen=True)
class SystemSpec:
    f_nominal: float
    s_base: float
    power_factor: float
    generators: tuple[GeneratorSpec, ...]
    load_mw: float = 0.0
    load_damping: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        _require(_finite(self.f_nominal) and self.f_nominal > 0, "f_nominal must be > 0", "f_nominal")
        _require(_finite(self.s_base) and self.s_base > 0, "s_base must be > 0", "s_base")
        _require(
            _finite(self.power_factor) and 0 < self.power_factor <= 1,
            "power_factor must be in (0, 1]",
            "power_factor",
        )
        _require(len(self.generators) > 0, "at least one generator is required", "generators")
        ids = [g.id for g in self.generators]
        _require(len(set(ids)) == len(ids), "generator ids must be unique", "generators")
        _require(_finite(self.load_mw) and self.load_mw >= 0, "load_mw must be >= 0", "load_mw")
        _require(
            _finite(self.load_damping) and self.load_damping >= 0,
            "load_damping must be >= 0",
            "load_damping",
        )

    def generator(self, gen_id: str) -> GeneratorSpec:
        for g in self.generators:
            if g.id == gen_id:
                return g
        raise InvalidParameter(f"no generator named {gen_id!r}", field="generators")


class FrequencyTrace:
    """Uniformly sampled frequency record for one channel.

    Samples are held in a read-only float64 array; sample ``k`` sits at
    ``t_start + k * dt``.
    """

    __slots__ = ("channel_id", "t_start", "dt", "samples", "metadata")

    def __init__(
        self,
        channel_id: str,
        t_start: float,
        dt: float,
        samples: Sequence[float] | np.ndarray,
        metadata: Mapping[str, object] | None = None,
    ):
        arr = np.array(samples, dtype=float, copy=True).reshape(-1)
        _require(_finite(t_start), "t_start must be finite", "t_start")
        _require(_finite(dt) and dt > 0, "dt must be > 0", "dt")
        _require(arr.size >= 1, "trace needs at least one sample", "samples")
        _require(bool(np.all(np.isfinite(arr))), "samples must be finite", "samples")
        arr.flags.writeable = False
        object.__setattr__(self, "channel_id", str(channel_id))
        object.__setattr__(self, "t_start", float(t_start))
        object.__setattr__(self, "dt", float(dt))
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "metadata", dict(metadata or {}))

    def __setattr__(self, name, value):
        raise AttributeError("FrequencyTrace is immutable")

    def __len__(self) -> int:
        return self.samples.size

    def __repr__(self) -> str:
        return (
            f"FrequencyTrace({self.channel_id!r}, t_start={self.t_start}, dt={self.dt}, "
            f"n={len(self)})"
        )

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.samples.size)

    @property
    def t_end(self) -> float:
        return self.t_start + self.dt * (self.samples.size - 1)

    def same_grid(self, other: "FrequencyTrace") -> bool:
        return (
            self.t_start == other.t_start and self.dt == other.dt and len(self) == len(other)
        )

    def replace(self, **changes) -> "FrequencyTrace":
        kw = dict(
            channel_id=self.channel_id,
            t_start=self.t_start,
            dt=self.dt,
            samples=self.samples,
            metadata=self.metadata,
        )
        kw.update(changes)
        return FrequencyTrace(**kw)


@dataclass(frozen=True)
class DisturbanceScenario:
    event_time: float
    loss_mw: float
    pre_event_load_mw: float
    base_convention: BaseConvention = BaseConvention.PRE_EVENT_TOTAL
    tripped_generator: str | None = None

    def __post_init__(self):
        if isinstance(self.base_convention, str):
            object.__setattr__(self, "base_convention", BaseConvention(self.base_convention))
        _require(_finite(self.event_time), "event_time must be finite", "event_time")
        _require(_finite(self.loss_mw) and self.loss_mw >= 0, "loss_mw must be >= 0", "loss_mw")
        _require(
            _finite(self.pre_event_load_mw) and self.pre_event_load_mw > 0,
            "pre_event_load_mw must be > 0",
            "pre_event_load_mw",
        )
        if self.base_convention is BaseConvention.POST_EVENT_TOTAL:
            _require(
                self.loss_mw < self.pre_event_load_mw,
                "loss_mw must be below pre_event_load_mw for PostEventTotal",
                "loss_mw",
            )

    @property
    def base_mw(self) -> float:
        if self.base_convention is BaseConvention.PRE_EVENT_TOTAL:
            return self.pre_event_load_mw
        return self.pre_event_load_mw - self.loss_mw


@dataclass(frozen=True)
class EstimateResult:
    rocof: float
    h_estimate: float
    window: tuple[float, float]
    n_samples_used: int
    r_squared: float
    rmse: float

    def __post_init__(self):
        _require(self.h_estimate > 0, "h_estimate must be > 0", "h_estimate")
        _require(self.window[0] < self.window[1], "window start must precede end", "window")
        _require(self.n_samples_used >= 2, "at least two samples are needed", "n_samples_used")


def inertia_constant_from_physical(j_moment: float, omega_rated: float, s_rated: float) -> float:
    """Inertia constant in seconds: stored kinetic energy at rated speed over rating.

    ``j_moment`` in kg m^2, ``omega_rated`` in rad/s (mechanical), ``s_rated`` in VA.
    """
    if not (_finite(j_moment) and j_moment >= 0):
        raise InvalidParameter("j_moment must be >= 0", field="j_moment")
    if not (_finite(omega_rated) and omega_rated > 0):
        raise InvalidParameter("omega_rated must be > 0", field="omega_rated")
    if not (_finite(s_rated) and s_rated > 0):
        raise InvalidParameter("s_rated must be > 0", field="s_rated")
    return 0.5 * j_moment * omega_rated**2 / s_rated


def per_unit_imbalance(scenario: DisturbanceScenario, power_factor: float) -> float:
    """Lost MW expressed on the MVA base selected by the scenario's convention."""
    if not (_finite(power_factor) and 0 < power_factor <= 1):
        raise InvalidParameter("power_factor must be in (0, 1]", field="power_factor")
    base_mw = scenario.base_mw
    if base_mw <= 0:
        raise DegenerateBase(f"per-unit base is {base_mw} MW")
    return scenario.loss_mw / (base_mw / power_factor)


def machine_mva(gen: GeneratorSpec, power_factor: float | None = None) -> float:
    """Machine MVA: the MW output over ``power_factor`` when given, else ``s_rated``."""
    if power_factor is None:
        return gen.s_rated
    return gen.p_mech / power_factor
