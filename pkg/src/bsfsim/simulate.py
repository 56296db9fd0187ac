"""Deterministic virtual-clock engine for farm iterations.

Executes the program lifecycle (initialization, iterative process,
finalization) on a simulated timeline: per iteration the master sends K
orders, all slaves compute their share in parallel, results travel back,
the master receives and evaluates them behind a barrier. No wall clock is
involved, so identical run specifications produce bit-identical results.

Also defines the timeline and result value types shared with the live
engine in :mod:`bsfsim.live`.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

from .cost import BsfParams, ParameterError


class EngineKind(str, Enum):
    VIRTUAL = "virtual"
    LIVE = "live"


class LatencyMode(str, Enum):
    """How message latency is charged on the master's critical path.

    SERIALIZED charges the full round trip (2L) once per slave, matching
    the analytical iteration cost. PIPELINED overlaps the legs so only one
    round trip is on the critical path regardless of K; per iteration it is
    exactly (K-1)*2L faster.
    """

    SERIALIZED = "serialized"
    PIPELINED = "pipelined"


@dataclass(frozen=True)
class IterationTimeline:
    """Where one iteration's time went, in seconds."""

    send_total: float
    latency_total: float
    work_span: float
    receive_total: float
    evaluate_total: float
    iteration_elapsed: float


@dataclass(frozen=True)
class SimulationResult:
    """Measured outcome of one engine run."""

    engine: EngineKind
    latency_mode: Optional[LatencyMode]
    params: BsfParams
    iterations: int
    per_iteration: tuple[IterationTimeline, ...]
    mean_iteration: float
    total_elapsed: float


@dataclass(frozen=True)
class RunSpec:
    """What to run on the virtual engine.

    init_cost and final_cost default to zero: the model's metrics cover
    only the iterative process. seed is unused here; it is reserved for
    engines that generate payload content.
    """

    params: BsfParams
    iterations: int
    init_cost: float = 0.0
    final_cost: float = 0.0
    latency_mode: LatencyMode = LatencyMode.SERIALIZED
    seed: int = 0

    def __post_init__(self) -> None:
        if isinstance(self.iterations, bool) or not isinstance(self.iterations, int):
            raise ParameterError(f"iterations must be an int, got {self.iterations!r}")
        if self.iterations < 1:
            raise ParameterError(f"iterations must be >= 1, got {self.iterations}")
        for name in ("init_cost", "final_cost"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or value < 0:
                raise ParameterError(f"{name} must be a number >= 0, got {value!r}")
        if not isinstance(self.latency_mode, LatencyMode):
            raise ParameterError(f"latency_mode must be a LatencyMode, got {self.latency_mode!r}")


@dataclass(frozen=True)
class IterationEvents:
    """Virtual-clock offsets of one iteration's protocol events, measured
    from the start of the iteration."""

    send_done: float
    orders_delivered: float
    work_done: float
    results_delivered: float
    receive_done: float
    evaluate_start: float
    evaluate_done: float


def iteration_events(params: BsfParams, latency_mode: LatencyMode) -> IterationEvents:
    """Event offsets for one iteration under the given latency mode."""
    k = params.slaves
    one_leg = k * params.latency if latency_mode is LatencyMode.SERIALIZED else params.latency
    send_done = k * params.send_time
    orders_delivered = send_done + one_leg
    work_done = orders_delivered + params.work_per_slave
    results_delivered = work_done + one_leg
    receive_done = results_delivered + params.receive_time
    # Barrier: evaluation may not begin before every result is in hand.
    evaluate_start = receive_done
    evaluate_done = evaluate_start + params.evaluate_time
    return IterationEvents(
        send_done=send_done,
        orders_delivered=orders_delivered,
        work_done=work_done,
        results_delivered=results_delivered,
        receive_done=receive_done,
        evaluate_start=evaluate_start,
        evaluate_done=evaluate_done,
    )


def _timeline(params: BsfParams, events: IterationEvents) -> IterationTimeline:
    latency_total = (events.orders_delivered - events.send_done) + (
        events.results_delivered - events.work_done
    )
    return IterationTimeline(
        send_total=events.send_done,
        latency_total=latency_total,
        work_span=params.work_per_slave,
        receive_total=params.receive_time,
        evaluate_total=params.evaluate_time,
        iteration_elapsed=events.evaluate_done,
    )


def run_virtual(
    spec: RunSpec,
    stop_when: Callable[[int, float], bool] | None = None,
) -> SimulationResult:
    """Run the iterative process on the virtual clock.

    Per iteration, in order: the master sends K orders (send and latency
    charges per the latency mode), all slaves compute total_work/K in one
    parallel span, results travel back, the master receives them all,
    then evaluates. The default exit condition is the iteration counter;
    ``stop_when(completed, clock)`` may end the run earlier, after any
    completed iteration.
    """
    events = iteration_events(spec.params, spec.latency_mode)
    ordered = (
        0.0,
        events.send_done,
        events.orders_delivered,
        events.work_done,
        events.results_delivered,
        events.receive_done,
        events.evaluate_start,
        events.evaluate_done,
    )
    if any(later < earlier for earlier, later in zip(ordered, ordered[1:])):
        raise RuntimeError(f"virtual event order violated: {events}")

    timeline = _timeline(spec.params, events)
    clock = spec.init_cost
    per_iteration: list[IterationTimeline] = []
    for completed in range(1, spec.iterations + 1):
        clock += timeline.iteration_elapsed
        per_iteration.append(timeline)
        if stop_when is not None and stop_when(completed, clock):
            break
    clock += spec.final_cost

    executed = len(per_iteration)
    mean = sum(t.iteration_elapsed for t in per_iteration) / executed
    return SimulationResult(
        engine=EngineKind.VIRTUAL,
        latency_mode=spec.latency_mode,
        params=spec.params,
        iterations=executed,
        per_iteration=tuple(per_iteration),
        mean_iteration=mean,
        total_elapsed=clock,
    )


def _times_match(a: float, b: float) -> bool:
    # Half a microsecond of absolute slack covers live-engine quantization;
    # anything larger must agree to 1e-6 relative.
    return abs(a - b) <= max(5e-7, 1e-6 * max(abs(a), abs(b)))


def measured_speedup(base: SimulationResult, run: SimulationResult) -> float:
    """Observed speedup: baseline mean iteration over run mean iteration.

    ``base`` must be a single-slave run of the same workload on the same
    engine and latency mode; anything else is a mismatch error.
    """
    if base.engine is not run.engine:
        raise ParameterError(
            f"engine mismatch: baseline ran on {base.engine.value}, run on {run.engine.value}"
        )
    if base.latency_mode is not run.latency_mode:
        raise ParameterError(
            f"latency mode mismatch: {base.latency_mode} vs {run.latency_mode}"
        )
    if base.params.slaves != 1:
        raise ParameterError(f"baseline must have slaves=1, got {base.params.slaves}")
    for name in ("latency", "send_time", "receive_time", "evaluate_time", "total_work"):
        if not _times_match(getattr(base.params, name), getattr(run.params, name)):
            raise ParameterError(
                f"parameter mismatch on {name}: baseline {getattr(base.params, name)!r} "
                f"vs run {getattr(run.params, name)!r}"
            )
    return base.mean_iteration / run.mean_iteration


def measured_efficiency(base: SimulationResult, run: SimulationResult) -> float:
    """Observed parallel efficiency: measured speedup over the slave count."""
    return measured_speedup(base, run) / run.params.slaves
