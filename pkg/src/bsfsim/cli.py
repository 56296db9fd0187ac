"""Command-line front end: analytical curves, single engine runs, sweeps.

Exit codes: 0 success, 2 input or validation error, 3 runtime/engine error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path
from typing import Optional

from .cost import (
    BsfParams,
    ParameterError,
    efficiency_approx,
    efficiency_exact,
    scalability_bound,
    scale_params,
    speedup,
)
from .harness import (
    DEFAULT_EVALUATE_TIME,
    DEFAULT_LATENCY,
    DEFAULT_RECEIVE_TIME,
    DEFAULT_SEND_TIME,
    DEFAULT_TOTAL_WORK,
    EngineChoice,
    ExperimentConfig,
    HarnessError,
    SendRealization,
    SweepKind,
    error_summary,
    live_spec_for_params,
    run_experiment,
    write_bundle,
    write_csv,
)
from .live import EngineError, fit_order_cost, run_live
from .simulate import EngineKind, LatencyMode, RunSpec, SimulationResult, run_virtual

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_ENGINE = 3

_PARAM_KEYS = ("slaves", "latency", "send_time", "receive_time", "evaluate_time", "total_work")
_RUN_KEYS = (
    "engine",
    "latency_mode",
    "iterations",
    "seed",
    "time_scale",
    "init_cost",
    "final_cost",
    "order_length",
    "result_length",
    "send_realization",
)
_SWEEP_KEYS = ("kind", "control_values", "k_values", "trials")

_PARAM_DEFAULTS = {
    "latency": DEFAULT_LATENCY,
    "send_time": DEFAULT_SEND_TIME,
    "receive_time": DEFAULT_RECEIVE_TIME,
    "evaluate_time": DEFAULT_EVALUATE_TIME,
    "total_work": DEFAULT_TOTAL_WORK,
}


class ConfigError(ValueError):
    """A config document or flag combination is invalid."""


def _bundled_config(name: str) -> Optional[str]:
    if "/" in name or "\\" in name or name.endswith(".json"):
        return None
    candidate = resources.files("bsfsim").joinpath("configs", f"{name}.json")
    if candidate.is_file():
        return candidate.read_text(encoding="utf-8")
    return None


def bundled_config_names() -> list[str]:
    entries = resources.files("bsfsim").joinpath("configs")
    return sorted(path.name[: -len(".json")] for path in entries.iterdir() if path.name.endswith(".json"))


def load_config_document(ref: str) -> dict:
    """Load a config by bundled name or filesystem path and validate its keys."""
    text = _bundled_config(ref)
    if text is None:
        path = Path(ref)
        if not path.is_file():
            raise ConfigError(
                f"config not found: {ref} (bundled configs: {', '.join(bundled_config_names())})"
            )
        text = path.read_text(encoding="utf-8")
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {ref} is not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise ConfigError(f"config {ref} must be a JSON object")
    _validate_document(document)
    return document


def _validate_document(document: dict) -> None:
    sections = {"params": _PARAM_KEYS, "run": _RUN_KEYS, "sweep": _SWEEP_KEYS}
    for key in document:
        if key not in sections:
            raise ConfigError(f"unknown section '{key}' (expected params, run, sweep)")
    for section, allowed in sections.items():
        body = document.get(section)
        if body is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"section '{section}' must be an object")
        for key in body:
            if key not in allowed:
                raise ConfigError(
                    f"unknown key '{section}.{key}' (allowed: {', '.join(allowed)})"
                )


def _number(document: dict, section: str, key: str, default):
    value = document.get(section, {}).get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{section}.{key}' must be a number, got {value!r}")
    return value


def _integer(document: dict, section: str, key: str, default):
    value = document.get(section, {}).get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"'{section}.{key}' must be an integer, got {value!r}")
    return value


def _params_from_document(document: dict, *, slaves_override: Optional[int] = None) -> BsfParams:
    slaves = slaves_override if slaves_override is not None else _integer(document, "params", "slaves", None)
    if slaves is None:
        raise ConfigError("'params.slaves' is required for this command")
    fields = {key: _number(document, "params", key, _PARAM_DEFAULTS[key]) for key in _PARAM_DEFAULTS}
    try:
        return BsfParams(slaves=slaves, **fields)
    except ParameterError as exc:
        raise ConfigError(f"params section: {exc}") from exc


def _engine_kind(document: dict, args) -> EngineKind:
    raw = getattr(args, "engine", None) or document.get("run", {}).get("engine", "virtual")
    try:
        return EngineKind(raw)
    except ValueError:
        raise ConfigError(f"'run.engine' must be one of virtual, live; got {raw!r}") from None


def _latency_mode(document: dict, args, engine: EngineKind) -> Optional[LatencyMode]:
    raw = getattr(args, "mode", None) or document.get("run", {}).get("latency_mode")
    if engine is EngineKind.LIVE:
        if raw is not None:
            raise ConfigError("'run.latency_mode' only applies to the virtual engine")
        return None
    if raw is None:
        return LatencyMode.SERIALIZED
    try:
        return LatencyMode(raw)
    except ValueError:
        raise ConfigError(
            f"'run.latency_mode' must be one of serialized, pipelined; got {raw!r}"
        ) from None


def _positive_scale(value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
        raise ConfigError(f"'run.time_scale' must be a number > 0, got {value!r}")
    return float(value)


def _result_to_dict(result: SimulationResult) -> dict:
    return {
        "engine": result.engine.value,
        "latency_mode": result.latency_mode.value if result.latency_mode else None,
        "params": {
            "slaves": result.params.slaves,
            "latency": result.params.latency,
            "send_time": result.params.send_time,
            "receive_time": result.params.receive_time,
            "evaluate_time": result.params.evaluate_time,
            "total_work": result.params.total_work,
        },
        "iterations": result.iterations,
        "mean_iteration": result.mean_iteration,
        "total_elapsed": result.total_elapsed,
        "per_iteration": [
            {
                "send_total": t.send_total,
                "latency_total": t.latency_total,
                "work_span": t.work_span,
                "receive_total": t.receive_total,
                "evaluate_total": t.evaluate_total,
                "iteration_elapsed": t.iteration_elapsed,
            }
            for t in result.per_iteration
        ],
    }


def _parse_k_list(raw: str) -> tuple[int, ...]:
    try:
        values = tuple(int(part) for part in raw.split(",") if part.strip() != "")
    except ValueError:
        raise ConfigError(f"--k-list must be comma-separated integers, got {raw!r}") from None
    if not values:
        raise ConfigError("--k-list must name at least one slave count")
    if any(v < 1 for v in values):
        raise ConfigError(f"--k-list entries must be >= 1, got {raw!r}")
    return tuple(sorted(set(values)))


def _default_k_list(latency: float, send_time: float, total_work: float) -> tuple[int, ...]:
    bound = scalability_bound(latency, send_time, total_work)
    top = max(2, 2 * math.floor(bound))
    ks = {1, math.floor(bound), math.ceil(bound)}
    k = 2
    while k <= top:
        ks.add(k)
        k *= 2
    return tuple(sorted(k for k in ks if k >= 1))


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def cmd_analyze(args) -> int:
    document = load_config_document(args.config) if args.config else {}
    fields = {}
    for key in _PARAM_DEFAULTS:
        flag = getattr(args, key)
        fields[key] = flag if flag is not None else _number(document, "params", key, _PARAM_DEFAULTS[key])
    if args.k_list:
        k_values = _parse_k_list(args.k_list)
    else:
        swept = document.get("sweep", {}).get("k_values")
        k_values = tuple(swept) if swept else _default_k_list(
            fields["latency"], fields["send_time"], fields["total_work"]
        )

    try:
        bound = scalability_bound(fields["latency"], fields["send_time"], fields["total_work"])
    except ParameterError:
        bound = math.inf  # zero-communication machine: speedup has no maximum
    header = ("K", "speedup", "efficiency_exact", "efficiency_approx", "bound")
    lines = [",".join(header)] if args.out else None
    table = [header]
    for k in k_values:
        params = BsfParams(slaves=int(k), **fields)
        cells = (
            str(k),
            _fmt(speedup(params)),
            _fmt(efficiency_exact(params)),
            _fmt(efficiency_approx(params)),
            _fmt(bound),
        )
        table.append(cells)
        if lines is not None:
            lines.append(",".join(cells))

    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        widths = [max(len(row[col]) for row in table) for col in range(len(header))]
        for row in table:
            print("  ".join(cell.ljust(width) for cell, width in zip(row, widths)))
    return EXIT_OK


def cmd_simulate(args) -> int:
    document = load_config_document(args.config)
    engine = _engine_kind(document, args)
    mode = _latency_mode(document, args, engine)
    iterations = args.iterations if args.iterations is not None else _integer(document, "run", "iterations", 10)
    seed = args.seed if args.seed is not None else _integer(document, "run", "seed", 0)
    time_scale = _positive_scale(
        args.time_scale if args.time_scale is not None else _number(document, "run", "time_scale", 1.0)
    )

    params = _params_from_document(document)
    if time_scale != 1.0:
        params = scale_params(params, time_scale)

    try:
        if engine is EngineKind.VIRTUAL:
            spec = RunSpec(
                params=params,
                iterations=iterations,
                init_cost=_number(document, "run", "init_cost", 0.0),
                final_cost=_number(document, "run", "final_cost", 0.0),
                latency_mode=mode,
                seed=seed,
            )
            result = run_virtual(spec)
        else:
            raw = document.get("run", {}).get("send_realization", "suspension")
            try:
                realization = SendRealization(raw)
            except ValueError:
                raise ConfigError(
                    f"'run.send_realization' must be one of payload, suspension; got {raw!r}"
                ) from None
            fit = fit_order_cost(seed=seed) if realization is SendRealization.PAYLOAD else None
            spec = live_spec_for_params(params, iterations, seed, realization, fit)
            order_length = _integer(document, "run", "order_length", None)
            result_length = _integer(document, "run", "result_length", None)
            if order_length is not None or result_length is not None:
                spec = replace(
                    spec,
                    order_length=order_length or spec.order_length,
                    result_length=result_length or spec.result_length,
                )
            result = run_live(spec, params=params)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc

    payload = json.dumps(_result_to_dict(result), indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(payload)
    return EXIT_OK


def _experiment_config(document: dict, args, ref: str) -> ExperimentConfig:
    sweep_section = document.get("sweep")
    if not sweep_section:
        raise ConfigError(f"config {ref} has no 'sweep' section")
    kind_raw = sweep_section.get("kind")
    try:
        kind = SweepKind(kind_raw)
    except ValueError:
        raise ConfigError(
            f"'sweep.kind' must be one of v_sweep, q_sweep, custom; got {kind_raw!r}"
        ) from None

    controls = sweep_section.get("control_values")
    if not isinstance(controls, list) or not controls:
        raise ConfigError("'sweep.control_values' must be a non-empty list of numbers")
    k_values = sweep_section.get("k_values")
    if not isinstance(k_values, list) or not k_values:
        raise ConfigError("'sweep.k_values' must be a non-empty list of integers")

    engine_kind = _engine_kind(document, args)
    mode = _latency_mode(document, args, engine_kind)
    if engine_kind is EngineKind.LIVE:
        engine = EngineChoice.LIVE
    elif mode is LatencyMode.PIPELINED:
        engine = EngineChoice.VIRTUAL_PIPELINED
    else:
        engine = EngineChoice.VIRTUAL_SERIALIZED

    raw_realization = document.get("run", {}).get("send_realization", SendRealization.PAYLOAD.value)
    try:
        realization = SendRealization(raw_realization)
    except ValueError:
        raise ConfigError(
            f"'run.send_realization' must be one of payload, suspension; got {raw_realization!r}"
        ) from None

    fields = {key: _number(document, "params", key, _PARAM_DEFAULTS[key]) for key in _PARAM_DEFAULTS}
    try:
        return ExperimentConfig(
            sweep=kind,
            control_values=tuple(float(c) for c in controls),
            k_values=tuple(k_values),
            engine=engine,
            iterations=args.iterations
            if args.iterations is not None
            else _integer(document, "run", "iterations", 10),
            time_scale=_positive_scale(
                args.time_scale
                if args.time_scale is not None
                else _number(document, "run", "time_scale", 1.0)
            ),
            trials=_integer(document, "sweep", "trials", 1),
            seed=args.seed if args.seed is not None else _integer(document, "run", "seed", 0),
            send_realization=realization,
            **fields,
        )
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_experiment(args) -> int:
    document = load_config_document(args.config)
    config = _experiment_config(document, args, args.config)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.config).stem

    execution: dict = {}
    rows = run_experiment(config, metadata_out=execution)
    csv_path = out_dir / f"{stem}.csv"
    json_path = out_dir / f"{stem}.json"
    write_csv(rows, config, csv_path)
    write_bundle(rows, config, json_path, execution)

    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    for control, stats in error_summary(rows).items():
        print(
            f"control={_fmt(control)}: max_rel_error={_fmt(stats.max_relative_error)} "
            f"mean_rel_error={_fmt(stats.mean_relative_error)}"
        )
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bsfsim",
        description="Cost model and dual-engine simulator for bulk-synchronous farm programs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser("analyze", help="print the analytical curves for a parameter set")
    analyze.add_argument("--config", help="config file path or bundled config name")
    analyze.add_argument("--k-list", help="comma-separated slave counts (default: powers of two up to twice the bound)")
    for key, default in _PARAM_DEFAULTS.items():
        analyze.add_argument(
            f"--{key.replace('_', '-')}",
            dest=key,
            type=float,
            default=None,
            help=f"override {key} (default {default})",
        )
    analyze.add_argument("--out", help="write CSV here instead of printing a table")
    analyze.set_defaults(handler=cmd_analyze)

    simulate = sub.add_parser("simulate", help="run one engine configuration, emit the result as JSON")
    simulate.add_argument("--config", required=True, help="config file path or bundled config name")
    simulate.add_argument("--engine", choices=[e.value for e in EngineKind], default=None)
    simulate.add_argument("--mode", choices=[m.value for m in LatencyMode], default=None)
    simulate.add_argument("--iterations", type=int, default=None)
    simulate.add_argument("--time-scale", dest="time_scale", type=float, default=None)
    simulate.add_argument("--seed", type=int, default=None)
    simulate.add_argument("--out", help="write the JSON here instead of stdout")
    simulate.set_defaults(handler=cmd_simulate)

    experiment = sub.add_parser("experiment", help="run a sweep, emit CSV and JSON bundles")
    experiment.add_argument("--config", required=True, help="config file path or bundled config name")
    experiment.add_argument("--out", required=True, help="output directory")
    experiment.add_argument("--engine", choices=[e.value for e in EngineKind], default=None)
    experiment.add_argument("--mode", choices=[m.value for m in LatencyMode], default=None)
    experiment.add_argument("--iterations", type=int, default=None)
    experiment.add_argument("--time-scale", dest="time_scale", type=float, default=None)
    experiment.add_argument("--seed", type=int, default=None)
    experiment.set_defaults(handler=cmd_experiment)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EngineError, HarnessError) as exc:
        print(f"engine error: {exc}", file=sys.stderr)
        return EXIT_ENGINE


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
