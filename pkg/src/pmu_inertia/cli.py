"""Command-line front end.

Usage::

    pmu-inertia simulate SCENARIO -o OUT.csv [--model aggregate|multimachine]
    pmu-inertia estimate TRACE.csv SCENARIO [-o RESULT.csv] [--emit-plot PLOT.csv]
    pmu-inertia sweep TRACE.csv SCENARIO --starts 0,0.5,1,2 --ends 3,4,6,8 -o SWEEP.csv
    pmu-inertia truth SCENARIO [--include-tripped]

Exit codes: 0 success, 2 bad input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .core import BaseConvention, FrequencyTrace
from .errors import InertiaError, InvalidParameter, ValidationError
from .estimator import (
    CoiMethod,
    WindowSpec,
    best_window,
    coi_frequency,
    estimate_from_traces,
    extract_window,
    fit_rocof,
    ground_truth_inertia,
    sweep_windows,
)
from .ingestion import load_pmu_csv, load_scenario, write_pmu_csv, write_results_csv
from .simulator import simulate_multimachine, simulate_pmu_channels

logger = logging.getLogger(__name__)


def _float_list(text: str) -> list[float]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise argparse.ArgumentTypeError("empty list")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(out_path, command: str, argv: Sequence[str], inputs: Sequence[str], params: dict, seeds) -> None:
    manifest = {
        "command": command,
        "argv": list(argv),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "parameters": params,
        "tool_version": __version__,
        "rng_seeds": list(seeds),
    }
    Path(f"{out_path}.manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _load(scenario_path, args):
    system, scenario, config, window = load_scenario(scenario_path)
    changes = {}
    if getattr(args, "fn", None) is not None:
        changes["f_nominal"] = args.fn
    if getattr(args, "pf", None) is not None:
        changes["power_factor"] = args.pf
    if changes:
        try:
            system = dataclasses.replace(system, **changes)
        except InvalidParameter as exc:
            raise ValidationError(f"--{exc.field}", str(exc)) from None
    if getattr(args, "base", None) is not None:
        conv = BaseConvention.PRE_EVENT_TOTAL if args.base == "pre" else BaseConvention.POST_EVENT_TOTAL
        try:
            scenario = dataclasses.replace(scenario, base_convention=conv)
        except InvalidParameter as exc:
            raise ValidationError("--base", str(exc)) from None
    return system, scenario, config, window


def _coi(args, system) -> CoiMethod:
    if args.coi == "weighted":
        return CoiMethod.from_generators(system.generators)
    return CoiMethod.plain_average()


def _window(args, default: WindowSpec) -> WindowSpec:
    start = default.offset_start if args.window_start is None else args.window_start
    end = default.offset_end if args.window_end is None else args.window_end
    try:
        return WindowSpec(start, end)
    except InvalidParameter as exc:
        raise ValidationError("--window-start/--window-end", str(exc)) from None


def cmd_simulate(args, argv) -> int:
    system, scenario, config, _ = _load(args.scenario, args)
    changes = {}
    if args.duration is not None:
        changes["duration"] = args.duration
    if args.governor is not None:
        changes["governor"] = dataclasses.replace(config.governor, enabled=args.governor == "on")
    if args.seed is not None:
        changes["artifacts"] = dataclasses.replace(config.artifacts, rng_seed=args.seed)
    if args.clean:
        changes["artifacts"] = dataclasses.replace(
            changes.get("artifacts", config.artifacts),
            backswing_amplitude=0.0,
            initial_uptick_hz=0.0,
            noise_sigma=0.0,
        )
    try:
        config = dataclasses.replace(config, **changes)
    except InvalidParameter as exc:
        raise ValidationError(f"sim.{exc.field}", str(exc)) from None
    if config.duration <= scenario.event_time:
        raise ValidationError(
            "sim.duration",
            f"{config.duration} s ends before the event at {scenario.event_time} s",
        )

    if args.model == "multimachine":
        traces = simulate_multimachine(system, scenario, config)
        lost = traces[0].metadata.get("loss_of_synchronism")
        if lost:
            print(
                f"warning: loss of synchronism at t = {traces[0].metadata['loss_of_synchronism_time']:.3f} s",
                file=sys.stderr,
            )
    else:
        traces = simulate_pmu_channels(system, scenario, config, args.channels)
    write_pmu_csv(traces, args.output)
    _write_manifest(
        args.output,
        "simulate",
        argv,
        [args.scenario],
        {
            "model": args.model,
            "channels": args.channels,
            "duration": config.duration,
            "integration_step": config.integration_step,
            "output_dt": config.output_dt,
            "governor": dataclasses.asdict(config.governor),
            "artifacts": dataclasses.asdict(config.artifacts),
        },
        [config.artifacts.rng_seed],
    )
    print(f"wrote {len(traces)} channel(s), {len(traces[0])} samples each, to {args.output}")
    return 0


def _emit_plot(path, coi: FrequencyTrace, win: FrequencyTrace, slope: float) -> None:
    # Full precision so the plot data equals what the estimator saw.
    t0 = win.times.mean()
    f0 = win.samples.mean()
    lines = ["t_s,f_hz,in_window,fit_hz"]
    k0 = round((win.t_start - coi.t_start) / coi.dt)
    k1 = k0 + len(win) - 1
    for k, (t, f) in enumerate(zip(coi.times, coi.samples)):
        inside = k0 <= k <= k1
        fit = repr(float(f0 + slope * (t - t0))) if inside else ""
        lines.append(f"{float(t)!r},{float(f)!r},{int(inside)},{fit}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_estimate(args, argv) -> int:
    system, scenario, _, default_window = _load(args.scenario, args)
    window = _window(args, default_window)
    dataset = load_pmu_csv(args.trace)
    method = _coi(args, system)
    result = estimate_from_traces(dataset.traces, scenario, system, window, method)
    print(f"h_estimate {result.h_estimate:.6g} s")
    print(f"rocof {result.rocof:.6g} Hz/s")
    print(f"r_squared {result.r_squared:.6g}")
    print(f"window {result.window[0]:.6g} {result.window[1]:.6g} s ({result.n_samples_used} samples)")
    params = {
        "window": [window.offset_start, window.offset_end],
        "coi": args.coi,
        "f_nominal": system.f_nominal,
        "power_factor": system.power_factor,
        "base_convention": scenario.base_convention.value,
    }
    if args.emit_plot:
        coi = coi_frequency(dataset.traces, method)
        win = extract_window(coi, scenario.event_time, window)
        _emit_plot(args.emit_plot, coi, win, fit_rocof(win)[0])
        _write_manifest(args.emit_plot, "estimate", argv, [args.trace, args.scenario], params, [])
    if args.output:
        write_results_csv(result, args.output)
        _write_manifest(args.output, "estimate", argv, [args.trace, args.scenario], params, [])
    return 0


def cmd_sweep(args, argv) -> int:
    system, scenario, _, _ = _load(args.scenario, args)
    dataset = load_pmu_csv(args.trace)
    rows = sweep_windows(
        dataset.traces,
        scenario,
        system,
        args.starts,
        args.ends,
        reference_h=args.reference_h,
        coi_method=_coi(args, system),
    )
    if not rows:
        raise ValidationError("--starts/--ends", "no pair with start < end")
    write_results_csv(rows, args.output)
    _write_manifest(
        args.output,
        "sweep",
        argv,
        [args.trace, args.scenario],
        {"starts": args.starts, "ends": args.ends, "reference_h": args.reference_h, "coi": args.coi},
        [],
    )
    ok = [r for r in rows if r.result is not None]
    print(f"{len(rows)} window(s), {len(ok)} estimated, written to {args.output}")
    best = best_window(rows)
    if best is not None:
        print(
            f"best window {best.offset_start:g}-{best.offset_end:g} s: "
            f"h_estimate {best.h_estimate:.6g} s, relative error {best.relative_error:.4g}"
        )
    return 0


def cmd_truth(args, argv) -> int:
    system, scenario, _, _ = _load(args.scenario, args)
    excluded = None
    if scenario.tripped_generator and not args.include_tripped:
        excluded = [scenario.tripped_generator]
    h = ground_truth_inertia(system.generators, excluded)
    print(f"h_total {h:.6g} s")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmu-inertia", description="Estimate power-system inertia from PMU frequency data."
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_overrides(p):
        p.add_argument("--fn", type=float, help="nominal frequency, Hz")
        p.add_argument("--pf", type=float, help="system power factor")
        p.add_argument("--base", choices=("pre", "post"), help="per-unit base: pre- or post-event MW")

    p = sub.add_parser("simulate", help="write synthetic PMU traces for a scenario")
    p.add_argument("scenario")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--model", choices=("aggregate", "multimachine"), default="aggregate")
    p.add_argument("--channels", type=int, default=1, help="PMU channels (aggregate model)")
    p.add_argument("--duration", type=float)
    p.add_argument("--seed", type=int, help="noise seed")
    p.add_argument("--governor", choices=("on", "off"))
    p.add_argument("--clean", action="store_true", help="disable all measurement artifacts")
    scenario_overrides(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate H from a PMU trace file")
    p.add_argument("trace")
    p.add_argument("scenario")
    p.add_argument("-o", "--output")
    p.add_argument("--window-start", type=float)
    p.add_argument("--window-end", type=float)
    p.add_argument("--coi", choices=("average", "weighted"), default="average")
    p.add_argument("--emit-plot", metavar="PATH", help="write the COI series and fitted line")
    scenario_overrides(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sweep", help="estimate H over a grid of windows")
    p.add_argument("trace")
    p.add_argument("scenario")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--starts", type=_float_list, default=[0.0, 0.5, 1.0, 2.0])
    p.add_argument("--ends", type=_float_list, default=[3.0, 4.0, 6.0, 8.0])
    p.add_argument("--reference-h", type=float)
    p.add_argument("--coi", choices=("average", "weighted"), default="average")
    scenario_overrides(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("truth", help="MVA-weighted inertia of the fleet")
    p.add_argument("scenario")
    p.add_argument("--include-tripped", action="store_true")
    p.set_defaults(func=cmd_truth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args, argv)
    except InertiaError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
