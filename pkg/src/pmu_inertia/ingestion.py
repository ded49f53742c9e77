"""File formats: PMU frequency CSV, scenario JSON, results CSV.

PMU CSV::

    t_s,ch_<id>[,ch_<id>...]
    0,50
    0.04,49.999

UTF-8, ``\\n`` line endings, time in absolute seconds on a uniform grid.
Floats are written with 9 significant digits.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .core import BaseConvention, DisturbanceScenario, EstimateResult, FrequencyTrace, GeneratorSpec, SystemSpec
from .errors import (
    GridError,
    InvalidParameter,
    IoError,
    NonFiniteValue,
    ParseError,
    SchemaError,
    TraceGridMismatch,
    ValidationError,
)
from .estimator import SweepRow, WindowSpec
from .simulator import ArtifactModel, GovernorModel, SimConfig

GRID_RTOL = 1e-9
TIME_QUANTUM = 1e-8
FLOAT_FMT = "{:.9g}"

RESULT_COLUMNS = ("window_start", "window_end", "rocof", "h_estimate", "r_squared", "rmse", "n_samples")
SWEEP_COLUMNS = ("offset_start", "offset_end") + RESULT_COLUMNS + ("relative_error", "error")


def fmt(x: float) -> str:
    return FLOAT_FMT.format(x)


@dataclass(frozen=True)
class PmuDataset:
    traces: tuple[FrequencyTrace, ...]
    source_path: str = ""
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "traces", tuple(self.traces))
        if not self.traces:
            raise InvalidParameter("dataset has no channels", field="traces")
        ids = [t.channel_id for t in self.traces]
        if len(set(ids)) != len(ids):
            raise InvalidParameter("channel ids must be unique", field="traces")
        first = self.traces[0]
        for tr in self.traces[1:]:
            if not tr.same_grid(first):
                raise TraceGridMismatch(f"channel {tr.channel_id!r} is on a different grid")

    @property
    def channel_ids(self) -> list[str]:
        return [t.channel_id for t in self.traces]


# --- PMU CSV ----------------------------------------------------------------


def _read_text(path) -> str:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8 ({exc.reason})") from exc


def _parse_float(raw: str, line: int, column: int) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ParseError(f"column {column}: cannot parse {raw!r} as a number", line) from None
    if not math.isfinite(value):
        raise NonFiniteValue(line, column, raw)
    return value


def parse_pmu_csv(text: str, source_path: str = "<string>") -> PmuDataset:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    lines = [ln[:-1] if ln.endswith("\r") else ln for ln in lines]
    if not lines or not lines[0].strip():
        raise ParseError("empty file", 1)

    header = lines[0].split(",")
    if header[0].strip() != "t_s":
        raise ParseError(f"first column must be 't_s', got {header[0]!r}", 1)
    if len(header) < 2:
        raise ParseError("no frequency channels in header", 1)
    ids = []
    for col, name in enumerate(header[1:], start=2):
        name = name.strip()
        if not name.startswith("ch_") or len(name) == 3:
            raise ParseError(f"column {col}: expected 'ch_<id>', got {name!r}", 1)
        ids.append(name[3:])
    if len(set(ids)) != len(ids):
        raise ParseError("duplicate channel ids in header", 1)

    width = len(header)
    times: list[float] = []
    cols: list[list[float]] = [[] for _ in ids]
    for lineno, ln in enumerate(lines[1:], start=2):
        fields = ln.split(",")
        if len(fields) != width:
            raise ParseError(f"expected {width} fields, found {len(fields)}", lineno)
        times.append(_parse_float(fields[0].strip(), lineno, 1))
        for j, raw in enumerate(fields[1:]):
            cols[j].append(_parse_float(raw.strip(), lineno, j + 2))

    if not times:
        raise ParseError("header but no data rows", 2)
    if len(times) < 2:
        raise GridError("a single row does not define a sample period")
    n = len(times)
    dt = (times[-1] - times[0]) / (n - 1)
    if not dt > 0:
        raise GridError("time column must be increasing")
    for k in range(1, n):
        step = times[k] - times[k - 1]
        # times written at 9 significant digits carry up to 5e-9*|t| of rounding
        if abs(step - dt) > GRID_RTOL * dt + TIME_QUANTUM * abs(times[k]):
            raise GridError(
                f"line {k + 2}: step {step:.9g} s departs from the uniform period {dt:.9g} s"
            )
    traces = [FrequencyTrace(cid, times[0], dt, col) for cid, col in zip(ids, cols)]
    return PmuDataset(tuple(traces), source_path)


def load_pmu_csv(path) -> PmuDataset:
    return parse_pmu_csv(_read_text(path), str(path))


def format_pmu_csv(traces: Sequence[FrequencyTrace]) -> str:
    ds = PmuDataset(tuple(traces))
    first = ds.traces[0]
    buf = io.StringIO()
    buf.write(",".join(["t_s"] + [f"ch_{c}" for c in ds.channel_ids]) + "\n")
    times = first.times
    for k in range(len(first)):
        row = [fmt(times[k])] + [fmt(tr.samples[k]) for tr in ds.traces]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def write_pmu_csv(traces: Sequence[FrequencyTrace], path) -> None:
    _write_text(path, format_pmu_csv(traces))


def _write_text(path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from exc


# --- scenario JSON ----------------------------------------------------------

_REQUIRED = object()

# key -> (json type, default)
_GENERATOR = {
    "id": (str, _REQUIRED),
    "h_const": (float, _REQUIRED),
    "p_mech": (float, _REQUIRED),
    "s_rated": (float, None),
    "e_internal": (float, 1.05),
    "x_reactance": (float, 0.2),
    "delta0": (float, None),
}
_SYSTEM = {
    "f_nominal": (float, _REQUIRED),
    "power_factor": (float, _REQUIRED),
    "generators": (list, _REQUIRED),
    "s_base": (float, None),
    "load_mw": (float, None),
    "load_damping": (float, 0.0),
}
_SCENARIO = {
    "event_time": (float, _REQUIRED),
    "loss_mw": (float, _REQUIRED),
    "pre_event_load_mw": (float, _REQUIRED),
    "base_convention": (str, BaseConvention.PRE_EVENT_TOTAL.value),
    "tripped_generator": (str, None),
}
_GOVERNOR = {
    "enabled": (bool, False),
    "droop_r": (float, GovernorModel.droop_r),
    "time_constant": (float, GovernorModel.time_constant),
    "activation_delay": (float, GovernorModel.activation_delay),
}
_ARTIFACTS = {
    "backswing_amplitude": (float, 0.0),
    "backswing_decay_tau": (float, ArtifactModel.backswing_decay_tau),
    "backswing_osc_freq": (float, 0.0),
    "initial_uptick_hz": (float, 0.0),
    "noise_sigma": (float, 0.0),
    "rng_seed": (int, 0),
}
_SIM = {
    "duration": (float, _REQUIRED),
    "integration_step": (float, 0.001),
    "output_dt": (float, 0.040),
    "governor": (dict, None),
    "artifacts": (dict, None),
}
_WINDOW = {"offset_start": (float, 1.0), "offset_end": (float, 4.0)}
_TOP = {
    "description": (str, None),
    "system": (dict, _REQUIRED),
    "scenario": (dict, _REQUIRED),
    "sim": (dict, _REQUIRED),
    "window": (dict, None),
}


def _type_ok(kind: type, value: Any) -> bool:
    if kind is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind is int:
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, kind)


def _fields(data: Any, path: str, schema: dict) -> dict:
    if not isinstance(data, dict):
        raise SchemaError(path, "expected an object")
    for key in data:
        if key not in schema:
            raise SchemaError(f"{path}.{key}", "unknown key")
    out = {}
    for key, (kind, default) in schema.items():
        where = f"{path}.{key}"
        if key not in data or data[key] is None:
            if default is _REQUIRED:
                raise SchemaError(where)
            out[key] = default
            continue
        value = data[key]
        if not _type_ok(kind, value):
            raise SchemaError(where, f"expected {kind.__name__}, got {type(value).__name__}")
        out[key] = float(value) if kind is float else value
    return out


def _build(cls, kwargs: dict, path: str):
    try:
        return cls(**kwargs)
    except InvalidParameter as exc:
        name = f"{path}.{exc.field}" if exc.field else path
        raise ValidationError(name, str(exc)) from None
    except ValueError as exc:
        raise ValidationError(path, str(exc)) from None


def parse_scenario(doc: Any) -> tuple[SystemSpec, DisturbanceScenario, SimConfig, WindowSpec]:
    top = _fields(doc, "$", _TOP)
    sysd = _fields(top["system"], "system", _SYSTEM)

    pf = sysd["power_factor"]
    if not 0 < pf <= 1:
        raise ValidationError("system.power_factor", f"must be in (0, 1], got {pf}")
    gens = []
    for i, g in enumerate(sysd["generators"]):
        path = f"system.generators[{i}]"
        gd = _fields(g, path, _GENERATOR)
        if gd["s_rated"] is None:
            gd["s_rated"] = gd["p_mech"] / pf
        gens.append(_build(GeneratorSpec, gd, path))
    if sysd["s_base"] is None:
        sysd["s_base"] = sum(g.s_rated for g in gens)
    if sysd["load_mw"] is None:
        sysd["load_mw"] = sum(g.p_mech for g in gens)
    sysd["generators"] = tuple(gens)
    system = _build(SystemSpec, sysd, "system")

    scd = _fields(top["scenario"], "scenario", _SCENARIO)
    try:
        scd["base_convention"] = BaseConvention(scd["base_convention"])
    except ValueError:
        allowed = ", ".join(b.value for b in BaseConvention)
        raise ValidationError("scenario.base_convention", f"must be one of {allowed}") from None
    scenario = _build(DisturbanceScenario, scd, "scenario")
    if scenario.tripped_generator is not None and scenario.tripped_generator not in {
        g.id for g in system.generators
    }:
        raise ValidationError(
            "scenario.tripped_generator", f"{scenario.tripped_generator!r} is not a generator id"
        )

    simd = _fields(top["sim"], "sim", _SIM)
    simd["governor"] = _build(GovernorModel, _fields(simd["governor"] or {}, "sim.governor", _GOVERNOR), "sim.governor")
    simd["artifacts"] = _build(
        ArtifactModel, _fields(simd["artifacts"] or {}, "sim.artifacts", _ARTIFACTS), "sim.artifacts"
    )
    config = _build(SimConfig, simd, "sim")
    if config.duration <= scenario.event_time:
        raise ValidationError(
            "sim.duration", f"{config.duration} s does not reach event_time {scenario.event_time} s"
        )

    window = _build(WindowSpec, _fields(top["window"] or {}, "window", _WINDOW), "window")
    return system, scenario, config, window


def load_scenario(path) -> tuple[SystemSpec, DisturbanceScenario, SimConfig, WindowSpec]:
    text = _read_text(path)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    return parse_scenario(doc)


def scenario_to_dict(
    system: SystemSpec,
    scenario: DisturbanceScenario,
    config: SimConfig,
    window: WindowSpec | None = None,
    description: str | None = None,
) -> dict:
    window = window or WindowSpec()
    doc: dict[str, Any] = {}
    if description:
        doc["description"] = description
    doc["system"] = {
        "f_nominal": system.f_nominal,
        "s_base": system.s_base,
        "power_factor": system.power_factor,
        "load_mw": system.load_mw,
        "load_damping": system.load_damping,
        "generators": [
            {
                "id": g.id,
                "h_const": g.h_const,
                "p_mech": g.p_mech,
                "s_rated": g.s_rated,
                "e_internal": g.e_internal,
                "x_reactance": g.x_reactance,
                **({"delta0": g.delta0} if g.delta0 is not None else {}),
            }
            for g in system.generators
        ],
    }
    doc["scenario"] = {
        "event_time": scenario.event_time,
        "loss_mw": scenario.loss_mw,
        "pre_event_load_mw": scenario.pre_event_load_mw,
        "base_convention": scenario.base_convention.value,
        "tripped_generator": scenario.tripped_generator,
    }
    gov, art = config.governor, config.artifacts
    doc["sim"] = {
        "duration": config.duration,
        "integration_step": config.integration_step,
        "output_dt": config.output_dt,
        "governor": {
            "enabled": gov.enabled,
            "droop_r": gov.droop_r,
            "time_constant": gov.time_constant,
            "activation_delay": gov.activation_delay,
        },
        "artifacts": {
            "backswing_amplitude": art.backswing_amplitude,
            "backswing_decay_tau": art.backswing_decay_tau,
            "backswing_osc_freq": art.backswing_osc_freq,
            "initial_uptick_hz": art.initial_uptick_hz,
            "noise_sigma": art.noise_sigma,
            "rng_seed": art.rng_seed,
        },
    }
    doc["window"] = {"offset_start": window.offset_start, "offset_end": window.offset_end}
    return doc


def write_scenario(path, system, scenario, config, window=None, description=None) -> None:
    doc = scenario_to_dict(system, scenario, config, window, description)
    _write_text(path, json.dumps(doc, indent=2) + "\n")


# --- results CSV ------------------------------------------------------------


def _result_cells(r: EstimateResult | None) -> list[str]:
    if r is None:
        return [""] * len(RESULT_COLUMNS)
    return [
        fmt(r.window[0]),
        fmt(r.window[1]),
        fmt(r.rocof),
        fmt(r.h_estimate),
        fmt(r.r_squared),
        fmt(r.rmse),
        str(r.n_samples_used),
    ]


def format_results_csv(results: EstimateResult | Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if isinstance(results, EstimateResult):
        w.writerow(RESULT_COLUMNS)
        w.writerow(_result_cells(results))
        return buf.getvalue()
    w.writerow(SWEEP_COLUMNS)
    for row in sorted(results, key=lambda r: (r.offset_start, r.offset_end)):
        rel = "" if row.relative_error is None else fmt(row.relative_error)
        w.writerow(
            [fmt(row.offset_start), fmt(row.offset_end)]
            + _result_cells(row.result)
            + [rel, row.error or ""]
        )
    return buf.getvalue()


def write_results_csv(results: EstimateResult | Sequence[SweepRow], path) -> None:
    _write_text(path, format_results_csv(results))


def read_results_csv(path) -> list[dict[str, float | int | str | None]]:
    """Rows of a results or sweep CSV; empty cells come back as ``None``."""
    text = _read_text(path)
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        out: dict[str, float | int | str | None] = {}
        for k, v in rec.items():
            if v == "":
                out[k] = None
            elif k == "n_samples":
                out[k] = int(v)
            elif k == "error":
                out[k] = v
            else:
                out[k] = float(v)
        rows.append(out)
    return rows


def shipped_path(name: str) -> Path:
    """Path of a file shipped in the package's ``data`` directory."""
    return Path(__file__).resolve().parent / "data" / name
