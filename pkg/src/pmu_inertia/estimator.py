"""Inertia estimation from frequency records.

The pipeline is: centre-of-inertia (COI) aggregation, window extraction
relative to the event, a least-squares straight line through the window,
then the swing equation solved for H.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    DisturbanceScenario,
    EstimateResult,
    FrequencyTrace,
    GeneratorSpec,
    SystemSpec,
    machine_mva,
    per_unit_imbalance,
)
from .errors import (
    DegenerateSlope,
    InertiaError,
    InvalidParameter,
    QualityWarning,
    TraceGridMismatch,
    WeightMissing,
    WindowOutOfRange,
    WindowTooSparse,
)

ROCOF_FLOOR = 1e-6  # Hz/s

# Window edges are matched against the sample grid with this fraction of dt.
_GRID_EPS = 1e-9


@dataclass(frozen=True)
class WindowSpec:
    """Fit window as offsets in seconds after the event."""

    offset_start: float = 1.0
    offset_end: float = 4.0

    def __post_init__(self):
        if not (math.isfinite(self.offset_start) and math.isfinite(self.offset_end)):
            raise InvalidParameter("window offsets must be finite", field="window")
        if not 0 <= self.offset_start < self.offset_end:
            raise InvalidParameter(
                f"need 0 <= offset_start < offset_end, got ({self.offset_start}, {self.offset_end})",
                field="window",
            )


@dataclass(frozen=True)
class CoiMethod:
    """How channels are combined into one system frequency.

    ``weights`` is ``None`` for a plain average, otherwise a mapping of
    channel id to a positive weight (H_i * S_i when known).
    """

    weights: Mapping[str, float] | None = None

    def __post_init__(self):
        if self.weights is not None:
            w = dict(self.weights)
            for k, v in w.items():
                if not (math.isfinite(v) and v > 0):
                    raise InvalidParameter(f"weight for {k!r} must be > 0", field="weights")
            object.__setattr__(self, "weights", w)

    @classmethod
    def plain_average(cls) -> "CoiMethod":
        return cls(None)

    @classmethod
    def inertia_weighted(cls, weights: Mapping[str, float]) -> "CoiMethod":
        return cls(weights)

    @classmethod
    def from_generators(
        cls, generators: Iterable[GeneratorSpec], power_factor: float | None = None
    ) -> "CoiMethod":
        return cls({g.id: g.h_const * machine_mva(g, power_factor) for g in generators})

    @property
    def is_weighted(self) -> bool:
        return self.weights is not None


def _normalized(weights: Sequence[float]) -> np.ndarray:
    # Exact rational normalisation: weights that are exact multiples of each
    # other give bit-identical normalised weights.
    fr = [Fraction(w) for w in weights]
    total = sum(fr)
    return np.array([float(w / total) for w in fr])


def coi_frequency(traces: Sequence[FrequencyTrace], method: CoiMethod | None = None) -> FrequencyTrace:
    """Sample-wise weighted mean of several channels on a shared grid."""
    method = method or CoiMethod.plain_average()
    if not traces:
        raise InvalidParameter("no traces given", field="traces")
    first = traces[0]
    ids = [tr.channel_id for tr in traces]
    if len(set(ids)) != len(ids):
        raise InvalidParameter("channel ids must be distinct", field="traces")
    for tr in traces[1:]:
        if not tr.same_grid(first):
            raise TraceGridMismatch(
                f"channel {tr.channel_id!r} grid ({tr.t_start}, {tr.dt}, {len(tr)}) differs from "
                f"{first.channel_id!r} ({first.t_start}, {first.dt}, {len(first)})"
            )
    if len(traces) == 1:
        return first.replace(channel_id="coi", metadata={})

    if method.is_weighted:
        missing = [c for c in ids if c not in method.weights]
        if missing:
            raise WeightMissing(f"no COI weight for channel(s) {missing}")
        w = _normalized([method.weights[c] for c in ids])
    else:
        w = _normalized([1.0] * len(traces))

    stack = np.vstack([tr.samples for tr in traces])
    fc = w @ stack
    # Rounding in the weighted sum can leave the hull by an ulp.
    fc = np.clip(fc, stack.min(axis=0), stack.max(axis=0))
    return FrequencyTrace("coi", first.t_start, first.dt, fc)


def extract_window(trace: FrequencyTrace, event_time: float, window: WindowSpec) -> FrequencyTrace:
    """Samples with ``event + offset_start <= t <= event + offset_end`` (edges inclusive)."""
    lo = event_time + window.offset_start
    hi = event_time + window.offset_end
    eps = _GRID_EPS * trace.dt
    if lo < trace.t_start - eps or hi > trace.t_end + eps:
        raise WindowOutOfRange(
            f"window [{lo:g}, {hi:g}] s is outside the trace span [{trace.t_start:g}, {trace.t_end:g}] s"
        )
    k_lo = max(0, math.ceil((lo - trace.t_start) / trace.dt - _GRID_EPS))
    k_hi = min(len(trace) - 1, math.floor((hi - trace.t_start) / trace.dt + _GRID_EPS))
    n = k_hi - k_lo + 1
    if n < 2:
        raise WindowTooSparse(f"window [{lo:g}, {hi:g}] s holds {max(n, 0)} sample(s), need 2")
    return FrequencyTrace(
        trace.channel_id,
        trace.t_start + k_lo * trace.dt,
        trace.dt,
        trace.samples[k_lo : k_hi + 1],
    )


def fit_rocof(trace: FrequencyTrace) -> tuple[float, float, float]:
    """Ordinary least-squares line through the trace.

    Returns ``(slope, r_squared, rmse)``; slope in Hz/s, signed.
    """
    n = len(trace)
    if n < 2:
        raise WindowTooSparse(f"need at least 2 samples to fit a line, got {n}")
    t = trace.times
    f = trace.samples
    tc = t - t.mean()
    fc = f - f.mean()
    sxx = float(tc @ tc)
    slope = float(tc @ fc) / sxx
    resid = fc - slope * tc
    ss_res = float(resid @ resid)
    ss_tot = float(fc @ fc)
    r2 = 1.0 if ss_tot == 0.0 else min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return slope, r2, math.sqrt(ss_res / n)


def estimate_system_inertia(
    rocof: float, dp_pu: float, f_nominal: float, rocof_floor: float = ROCOF_FLOOR
) -> float:
    """System H from the aggregate swing equation, using the ROCOF magnitude."""
    if not (math.isfinite(dp_pu) and dp_pu > 0):
        raise InvalidParameter(f"dp_pu must be > 0, got {dp_pu}", field="dp_pu")
    if not (math.isfinite(f_nominal) and f_nominal > 0):
        raise InvalidParameter("f_nominal must be > 0", field="f_nominal")
    if not abs(rocof) > rocof_floor:
        raise DegenerateSlope(f"|rocof| = {abs(rocof):.3g} Hz/s is not above {rocof_floor:g}")
    return f_nominal * dp_pu / (2.0 * abs(rocof))


def estimate_generator_inertia(
    freq: FrequencyTrace,
    dp_pu_series: Sequence[float] | np.ndarray,
    f_nominal: float,
    window: WindowSpec,
    event_time: float,
    rocof_floor: float = ROCOF_FLOOR,
) -> float:
    """Single-machine H from adjacent-sample ROCOF, median over the window.

    ``dp_pu_series`` is the machine's imbalance on its own MVA base, one
    value per frequency sample.  Magnitudes are used on both sides so the
    caller may pass the imbalance signed or unsigned.
    """
    dp = np.asarray(dp_pu_series, dtype=float).reshape(-1)
    if dp.size != len(freq):
        raise TraceGridMismatch(
            f"imbalance series has {dp.size} values, frequency trace has {len(freq)}"
        )
    win = extract_window(freq, event_time, window)
    k0 = round((win.t_start - freq.t_start) / freq.dt)
    f = win.samples
    rocof = np.diff(f) / freq.dt
    dp_w = dp[k0 : k0 + f.size - 1]
    ok = np.abs(rocof) > rocof_floor
    if not ok.any():
        raise WindowTooSparse("no adjacent sample pair has a usable ROCOF")
    h_k = f_nominal * np.abs(dp_w[ok]) / (2.0 * np.abs(rocof[ok]))
    h = float(np.median(h_k))
    if h == 0.0:
        warnings.warn("power imbalance is zero over the window; H is meaningless", QualityWarning)
    return h


def ground_truth_inertia(
    generators: Iterable[GeneratorSpec],
    excluded: Iterable[str] | None = None,
    power_factor: float | None = None,
) -> float:
    """MVA-weighted mean H of the generators not excluded.

    With ``power_factor`` the MVA of each machine is its MW output divided
    by it; otherwise ``s_rated`` is used.
    """
    skip = set(excluded or ())
    kept = [g for g in generators if g.id not in skip]
    if not kept:
        raise InvalidParameter("no generators left after exclusion", field="generators")
    mva = np.array([machine_mva(g, power_factor) for g in kept])
    h = np.array([g.h_const for g in kept])
    total = mva.sum()
    if not total > 0:
        raise InvalidParameter("total MVA of remaining generators is zero", field="generators")
    value = float((h * mva).sum() / total)
    # Keep the mean inside [min H, max H] despite rounding.
    return min(max(value, float(h.min())), float(h.max()))


def estimate_from_traces(
    traces: Sequence[FrequencyTrace],
    scenario: DisturbanceScenario,
    system: SystemSpec,
    window: WindowSpec | None = None,
    coi_method: CoiMethod | None = None,
    rocof_floor: float = ROCOF_FLOOR,
) -> EstimateResult:
    window = window or WindowSpec()
    coi = coi_frequency(traces, coi_method)
    win = extract_window(coi, scenario.event_time, window)
    slope, r2, rmse = fit_rocof(win)
    dp = per_unit_imbalance(scenario, system.power_factor)
    h = estimate_system_inertia(slope, dp, system.f_nominal, rocof_floor)
    return EstimateResult(
        rocof=slope,
        h_estimate=h,
        window=(win.t_start, win.t_end),
        n_samples_used=len(win),
        r_squared=r2,
        rmse=rmse,
    )


@dataclass(frozen=True)
class SweepRow:
    offset_start: float
    offset_end: float
    result: EstimateResult | None
    relative_error: float | None
    error: str | None = None

    @property
    def h_estimate(self) -> float | None:
        return None if self.result is None else self.result.h_estimate


def sweep_windows(
    traces: Sequence[FrequencyTrace],
    scenario: DisturbanceScenario,
    system: SystemSpec,
    start_grid: Sequence[float],
    end_grid: Sequence[float],
    reference_h: float | None = None,
    coi_method: CoiMethod | None = None,
) -> list[SweepRow]:
    """Estimate H for every (start, end) pair with start < end.

    Per-window failures are recorded in the row's ``error`` field as the
    exception class name.  Rows are ordered by (start, end).
    """
    if not start_grid or not end_grid:
        raise InvalidParameter("start and end grids must be non-empty", field="grid")
    rows = []
    for s in sorted(set(start_grid)):
        for e in sorted(set(end_grid)):
            if not s < e:
                continue
            try:
                res = estimate_from_traces(
                    traces, scenario, system, WindowSpec(s, e), coi_method
                )
            except InertiaError as exc:
                rows.append(SweepRow(s, e, None, None, type(exc).__name__))
                continue
            rel = None
            if reference_h is not None:
                rel = abs(res.h_estimate - reference_h) / reference_h
            rows.append(SweepRow(s, e, res, rel))
    return rows


def best_window(rows: Sequence[SweepRow]) -> SweepRow | None:
    scored = [r for r in rows if r.relative_error is not None]
    if not scored:
        return None
    return min(scored, key=lambda r: r.relative_error)
