"""Experiment runner for the verification sweeps.

Sweeps slave counts against control values (work/send ratio or master
overhead), computes the analytical prediction for every grid point, runs
the chosen engine at that point and at the single-slave baseline, and
emits one comparison row per point, plus CSV and JSON bundles ready for
external plotting.
"""

from __future__ import annotations

import json
import math
import os
import platform
import statistics
import sys
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Optional

from . import live as live_engine
from .cost import (
    BsfParams,
    ParameterError,
    efficiency_approx,
    params_from_overhead,
    params_from_ratio,
    scale_params,
    speedup,
)
from .live import EngineError, LiveRunSpec, OrderCostFit
from .simulate import (
    LatencyMode,
    RunSpec,
    SimulationResult,
    measured_efficiency,
    measured_speedup,
    run_virtual,
)

# Fixed workload costs shared by the standard sweeps (seconds).
DEFAULT_LATENCY = 2e-5
DEFAULT_TOTAL_WORK = 500.0
DEFAULT_RECEIVE_TIME = 0.01
DEFAULT_EVALUATE_TIME = 4.99
DEFAULT_SEND_TIME = 0.005

RATIO_CONTROLS = (4.0, 4.5, 6.0)
OVERHEAD_CONTROLS = (0.02, 2.0, 20.0)

# K grids: the virtual grid brackets the analytical optimum (about 315 for
# the default workload); the live grid stays desk-sized.
VIRTUAL_K_SWEEP = tuple(range(1, 351, 10))
LIVE_K_SWEEP = (1, 2, 4, 8)

LIVE_TIME_SCALE = 0.01
SUSPENSION_FLOOR_S = 50e-6  # keep timed suspensions above sleep-granularity noise

# Independently measured send-time calibrations recorded for the standard
# ratio sweep; emitted as metadata next to the formula-derived values. The
# ratio-4 measurement disagrees with the formula and is kept for
# traceability only.
REFERENCE_SEND_TIMES = {4.0: 0.0206978, 4.5: 0.0158160, 6.0: 0.00048}

CSV_HEADER = (
    "sweep",
    "control",
    "K",
    "analytical",
    "simulated",
    "rel_error",
    "engine",
    "iterations",
    "time_scale",
)


class HarnessError(RuntimeError):
    """The harness detected an internal inconsistency while running."""


class ExperimentEngineError(EngineError):
    """An engine failed inside a sweep; carries the grid coordinate."""

    def __init__(self, control: float, slaves: int, cause: BaseException):
        super().__init__(f"engine failure at control={control}, K={slaves}: {cause}")
        self.control = control
        self.slaves = slaves
        self.cause = cause


class SweepKind(str, Enum):
    RATIO = "v_sweep"
    OVERHEAD = "q_sweep"
    CUSTOM = "custom"


class EngineChoice(str, Enum):
    VIRTUAL_SERIALIZED = "virtual_serialized"
    VIRTUAL_PIPELINED = "virtual_pipelined"
    LIVE = "live"


class SendRealization(str, Enum):
    """How a live run realizes the per-order send cost: by sizing the order
    payload against a calibrated cost model, or by a master-side timed
    suspension per send."""

    PAYLOAD = "payload"
    SUSPENSION = "suspension"


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative sweep: which control values and slave counts to run,
    on which engine, with which fixed workload costs.

    The control values are work/send ratios for a RATIO sweep, master
    overheads (receive + evaluate) for an OVERHEAD sweep, and explicit
    send times for a CUSTOM sweep. Fields not derived from the control
    keep their configured fixed value; the field the control replaces
    (send_time for RATIO, evaluate_time for OVERHEAD) is ignored.
    time_scale multiplies every time parameter before running, which
    leaves the analytical curves unchanged and makes long workloads
    runnable on a desk. trials repeats each live measurement and reports
    the median; the single-slave baseline is cached per parameter set.
    """

    sweep: SweepKind
    control_values: tuple[float, ...]
    k_values: tuple[int, ...]
    engine: EngineChoice
    iterations: int = 10
    time_scale: float = 1.0
    trials: int = 1
    latency: float = DEFAULT_LATENCY
    total_work: float = DEFAULT_TOTAL_WORK
    receive_time: float = DEFAULT_RECEIVE_TIME
    evaluate_time: float = DEFAULT_EVALUATE_TIME
    send_time: float = DEFAULT_SEND_TIME
    seed: int = 0
    send_realization: SendRealization = SendRealization.PAYLOAD

    def __post_init__(self) -> None:
        if not isinstance(self.sweep, SweepKind):
            raise ParameterError(f"sweep must be a SweepKind, got {self.sweep!r}")
        if not isinstance(self.engine, EngineChoice):
            raise ParameterError(f"engine must be an EngineChoice, got {self.engine!r}")
        if not self.k_values:
            raise ParameterError("k_values must not be empty")
        for k in self.k_values:
            if isinstance(k, bool) or not isinstance(k, int) or k < 1:
                raise ParameterError(f"k_values entries must be ints >= 1, got {k!r}")
        if any(b <= a for a, b in zip(self.k_values, self.k_values[1:])):
            raise ParameterError(f"k_values must be strictly increasing, got {self.k_values}")
        if not self.control_values:
            raise ParameterError("control_values must not be empty")
        for value in self.control_values:
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ParameterError(f"control_values entries must be finite, got {value!r}")
        if len(set(self.control_values)) != len(self.control_values):
            raise ParameterError(f"control_values must be unique, got {self.control_values}")
        if not isinstance(self.time_scale, (int, float)) or not self.time_scale > 0:
            raise ParameterError(f"time_scale must be > 0, got {self.time_scale!r}")
        for name in ("iterations", "trials"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ParameterError(f"{name} must be an int >= 1, got {value!r}")


@dataclass(frozen=True)
class ComparisonRow:
    """One grid point: analytical prediction against engine measurement.

    ``params`` is the exact parameter set both sides were computed from,
    so the analytical column can always be recomputed from the row.
    """

    sweep: SweepKind
    control: float
    slaves: int
    analytical: float
    simulated: float
    relative_error: float
    params: BsfParams


def ratio_sweep_config(engine: EngineChoice = EngineChoice.VIRTUAL_SERIALIZED, **overrides) -> ExperimentConfig:
    """Standard speedup-verification sweep over work/send ratios."""
    live = engine is EngineChoice.LIVE
    defaults = dict(
        sweep=SweepKind.RATIO,
        control_values=RATIO_CONTROLS,
        k_values=LIVE_K_SWEEP if live else VIRTUAL_K_SWEEP,
        engine=engine,
        time_scale=LIVE_TIME_SCALE if live else 1.0,
        trials=3 if live else 1,
    )
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


def overhead_sweep_config(engine: EngineChoice = EngineChoice.VIRTUAL_SERIALIZED, **overrides) -> ExperimentConfig:
    """Standard efficiency-verification sweep over master overheads."""
    live = engine is EngineChoice.LIVE
    defaults = dict(
        sweep=SweepKind.OVERHEAD,
        control_values=OVERHEAD_CONTROLS,
        k_values=LIVE_K_SWEEP if live else VIRTUAL_K_SWEEP,
        engine=engine,
        time_scale=LIVE_TIME_SCALE if live else 1.0,
    )
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


def base_params(config: ExperimentConfig, control: float, slaves: int) -> BsfParams:
    """Unscaled parameter set for one grid point."""
    if config.sweep is SweepKind.RATIO:
        return params_from_ratio(
            control,
            total_work=config.total_work,
            latency=config.latency,
            receive_time=config.receive_time,
            evaluate_time=config.evaluate_time,
            slaves=slaves,
        )
    if config.sweep is SweepKind.OVERHEAD:
        return params_from_overhead(
            control,
            receive_time=config.receive_time,
            send_time=config.send_time,
            latency=config.latency,
            total_work=config.total_work,
            slaves=slaves,
        )
    return BsfParams(
        slaves=slaves,
        latency=config.latency,
        send_time=float(control),
        receive_time=config.receive_time,
        evaluate_time=config.evaluate_time,
        total_work=config.total_work,
    )


def _floor_suspension(seconds: float) -> float:
    if 0.0 < seconds < SUSPENSION_FLOOR_S:
        return SUSPENSION_FLOOR_S
    return seconds


def effective_params(config: ExperimentConfig, control: float, slaves: int) -> BsfParams:
    """Scaled parameter set a grid point actually runs with.

    For live runs, suspension-realized costs below the sleep floor are
    raised to it so the engine is not asked for sub-resolution sleeps;
    payload-realized send cost is left exact.
    """
    params = base_params(config, control, slaves)
    if config.time_scale != 1.0:
        params = scale_params(params, config.time_scale)
    if config.engine is EngineChoice.LIVE:
        floored = {
            "receive_time": _floor_suspension(params.receive_time),
            "evaluate_time": _floor_suspension(params.evaluate_time),
        }
        if config.send_realization is SendRealization.SUSPENSION:
            floored["send_time"] = _floor_suspension(params.send_time)
        params = replace(params, **floored)
    return params


def analytical_value(config: ExperimentConfig, params: BsfParams) -> float:
    """Model prediction for one grid point: speedup for RATIO and CUSTOM
    sweeps, approximate efficiency for OVERHEAD sweeps."""
    if config.sweep is SweepKind.OVERHEAD:
        return efficiency_approx(params)
    return speedup(params)


def _check_scale_invariance(config: ExperimentConfig, control: float, slaves: int) -> None:
    unscaled = analytical_value(config, base_params(config, control, slaves))
    scaled = analytical_value(config, scale_params(base_params(config, control, slaves), config.time_scale))
    if not math.isclose(unscaled, scaled, rel_tol=1e-12):
        raise HarnessError(
            f"time_scale={config.time_scale} changed the analytical value at "
            f"control={control}, K={slaves}: {unscaled!r} vs {scaled!r}"
        )


def _microseconds(seconds: float) -> int:
    return round(seconds * 1e6)


def live_spec_for_params(
    params: BsfParams,
    iterations: int,
    seed: int,
    realization: SendRealization = SendRealization.SUSPENSION,
    fit: Optional[OrderCostFit] = None,
) -> LiveRunSpec:
    """Translate a model-space parameter set into a live run.

    Work, evaluation and receive costs become timed suspensions (quantized
    to whole microseconds). The send cost always becomes the engine's
    per-order budget; PAYLOAD realization additionally sizes the order so
    that producing and transferring it consumes the budget as real work
    rather than sleep.
    """
    if realization is SendRealization.PAYLOAD:
        if fit is None:
            raise ParameterError("payload realization needs an order-cost fit")
        order_length = live_engine.order_length_for_cost(fit, params.send_time)
    else:
        order_length = 64
    return LiveRunSpec(
        slaves=params.slaves,
        iterations=iterations,
        order_length=order_length,
        result_length=64,
        work_suspension_us=_microseconds(params.work_per_slave),
        evaluate_suspension_us=_microseconds(params.evaluate_time),
        send_suspension_us=_microseconds(params.send_time),
        receive_suspension_us=_microseconds(params.receive_time),
        seed=seed,
    )


def _run_point(
    config: ExperimentConfig,
    params: BsfParams,
    control: float,
    trial: int,
    fit: Optional[OrderCostFit],
) -> SimulationResult:
    seed = config.seed * 1_000_003 + params.slaves * 101 + trial
    try:
        if config.engine is EngineChoice.LIVE:
            spec = live_spec_for_params(
                params, config.iterations, seed, config.send_realization, fit
            )
            return live_engine.run_live(spec, params=params)
        mode = (
            LatencyMode.PIPELINED
            if config.engine is EngineChoice.VIRTUAL_PIPELINED
            else LatencyMode.SERIALIZED
        )
        return run_virtual(
            RunSpec(params=params, iterations=config.iterations, latency_mode=mode, seed=seed)
        )
    except (EngineError, OSError, RuntimeError) as exc:
        if isinstance(exc, HarnessError):
            raise
        raise ExperimentEngineError(control, params.slaves, exc) from exc


def _comparison_row(config: ExperimentConfig, control: float, params: BsfParams, simulated: float) -> ComparisonRow:
    analytical = analytical_value(config, params)
    return ComparisonRow(
        sweep=config.sweep,
        control=float(control),
        slaves=params.slaves,
        analytical=analytical,
        simulated=simulated,
        relative_error=abs(simulated - analytical) / analytical,
        params=params,
    )


def _virtual_rows(config: ExperimentConfig) -> list[ComparisonRow]:
    measure = measured_efficiency if config.sweep is SweepKind.OVERHEAD else measured_speedup
    rows: list[ComparisonRow] = []
    for control in sorted(config.control_values):
        baseline = _run_point(config, effective_params(config, control, 1), control, 0, None)
        for slaves in config.k_values:
            params = effective_params(config, control, slaves)
            if slaves == 1:
                run = baseline
            else:
                run = _run_point(config, params, control, 0, None)
            rows.append(_comparison_row(config, control, params, measure(baseline, run)))
    return rows


def _live_rows(config: ExperimentConfig, fit: Optional[OrderCostFit]) -> list[ComparisonRow]:
    # Trial blocks interleave the control values so every control samples
    # the same stretch of wall clock, and each trial's measurement is taken
    # against the baseline from its own block: ambient load then shifts
    # numerator and denominator together instead of biasing one control.
    measure = measured_efficiency if config.sweep is SweepKind.OVERHEAD else measured_speedup
    controls = sorted(config.control_values)
    swept = [k for k in config.k_values if k != 1]
    values: dict[tuple[float, int], list[float]] = {
        (control, slaves): [] for control in controls for slaves in swept
    }
    for trial in range(config.trials):
        for control in controls:
            baseline = _run_point(config, effective_params(config, control, 1), control, trial, fit)
            for slaves in swept:
                params = effective_params(config, control, slaves)
                run = _run_point(config, params, control, trial, fit)
                values[(control, slaves)].append(measure(baseline, run))

    rows: list[ComparisonRow] = []
    for control in controls:
        for slaves in config.k_values:
            params = effective_params(config, control, slaves)
            if slaves == 1:
                # the cached baseline measured against itself
                simulated = 1.0
            else:
                simulated = statistics.median(values[(control, slaves)])
            rows.append(_comparison_row(config, control, params, simulated))
    return rows


def run_experiment(
    config: ExperimentConfig,
    metadata_out: Optional[dict] = None,
) -> list[ComparisonRow]:
    """Run the full sweep and return one comparison row per grid point,
    ordered by control then slave count.

    One single-slave baseline per control value serves both as the K=1 row
    and as the reference side of every measurement; live sweeps run
    ``trials`` interleaved trial blocks and report the per-point median.
    When ``metadata_out`` is given, execution details (calibration fit)
    are recorded into it for the JSON bundle.
    """
    cap = live_engine.worker_cap()
    if config.engine is EngineChoice.LIVE and cap is not None:
        over = [k for k in config.k_values if k > cap]
        if over:
            raise live_engine.WorkerCapExceeded(
                f"sweep needs K={max(over)} slave workers but {live_engine.WORKER_CAP_ENV}={cap}"
            )

    for control in sorted(config.control_values):
        if config.time_scale != 1.0:
            _check_scale_invariance(config, control, config.k_values[-1])

    if config.engine is not EngineChoice.LIVE:
        return _virtual_rows(config)

    fit: Optional[OrderCostFit] = None
    if config.send_realization is SendRealization.PAYLOAD:
        fit = live_engine.fit_order_cost(seed=config.seed)
        if metadata_out is not None:
            metadata_out["order_cost_fit"] = {
                "slope_per_byte": fit.slope_per_byte,
                "intercept": fit.intercept,
                "samples": [list(sample) for sample in fit.samples],
            }
    return _live_rows(config, fit)


@dataclass(frozen=True)
class ErrorStats:
    max_relative_error: float
    mean_relative_error: float


def error_summary(rows: list[ComparisonRow]) -> dict[float, ErrorStats]:
    """Per-control-value max and mean of the relative error."""
    if not rows:
        raise ParameterError("error_summary needs at least one row")
    grouped: dict[float, list[float]] = {}
    for row in rows:
        grouped.setdefault(row.control, []).append(row.relative_error)
    return {
        control: ErrorStats(
            max_relative_error=max(errors),
            mean_relative_error=sum(errors) / len(errors),
        )
        for control, errors in sorted(grouped.items())
    }


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def write_csv(rows: list[ComparisonRow], config: ExperimentConfig, path: Path | str) -> None:
    """Emit one line per row: control ascending, then K ascending."""
    ordered = sorted(rows, key=lambda row: (row.control, row.slaves))
    lines = [",".join(CSV_HEADER)]
    for row in ordered:
        lines.append(
            ",".join(
                (
                    row.sweep.value,
                    _fmt(row.control),
                    str(row.slaves),
                    _fmt(row.analytical),
                    _fmt(row.simulated),
                    _fmt(row.relative_error),
                    config.engine.value,
                    str(config.iterations),
                    _fmt(config.time_scale),
                )
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _params_dict(params: BsfParams) -> dict:
    return {
        "slaves": params.slaves,
        "latency": params.latency,
        "send_time": params.send_time,
        "receive_time": params.receive_time,
        "evaluate_time": params.evaluate_time,
        "total_work": params.total_work,
    }


def _config_dict(config: ExperimentConfig) -> dict:
    return {
        "sweep": config.sweep.value,
        "control_values": list(config.control_values),
        "k_values": list(config.k_values),
        "engine": config.engine.value,
        "iterations": config.iterations,
        "time_scale": config.time_scale,
        "trials": config.trials,
        "latency": config.latency,
        "total_work": config.total_work,
        "receive_time": config.receive_time,
        "evaluate_time": config.evaluate_time,
        "send_time": config.send_time,
        "seed": config.seed,
        "send_realization": config.send_realization.value,
    }


def write_bundle(
    rows: list[ComparisonRow],
    config: ExperimentConfig,
    path: Path | str,
    execution: Optional[dict] = None,
) -> None:
    """Emit the JSON counterpart of the CSV: rows plus run metadata."""
    ordered = sorted(rows, key=lambda row: (row.control, row.slaves))
    bundle = {
        "config": _config_dict(config),
        "seed": config.seed,
        "host": {
            "node": platform.node(),
            "platform": platform.platform(),
            "python": sys.version.split()[0],
            "cpu_count": os.cpu_count(),
        },
        "rows": [
            {
                "sweep": row.sweep.value,
                "control": row.control,
                "K": row.slaves,
                "analytical": row.analytical,
                "simulated": row.simulated,
                "rel_error": row.relative_error,
                "params": _params_dict(row.params),
            }
            for row in ordered
        ],
        "error_summary": {
            _fmt(control): {
                "max_relative_error": stats.max_relative_error,
                "mean_relative_error": stats.mean_relative_error,
            }
            for control, stats in error_summary(ordered).items()
        },
        "execution": execution or {},
    }
    if config.sweep is SweepKind.RATIO:
        bundle["reference_send_times"] = {
            _fmt(control): REFERENCE_SEND_TIMES[control]
            for control in config.control_values
            if control in REFERENCE_SEND_TIMES
        }
    Path(path).write_text(json.dumps(bundle, indent=2, sort_keys=True) + "\n", encoding="utf-8")
