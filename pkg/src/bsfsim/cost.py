"""Analytical cost model for bulk-synchronous farm (BSF) programs.

A BSF machine is one master node plus K homogeneous slave nodes. Each
iteration the master sends one order per slave, the slaves compute in
parallel with no cross-traffic, the master collects every result and
evaluates it. Six numbers describe a workload/machine pair:

    slaves          K, the number of slave nodes
    latency         L, one-byte message delay bound (seconds)
    send_time       master busy time sending one order to one slave
    receive_time    master busy time receiving all K results
    evaluate_time   master busy time evaluating all K results
    total_work      slave computation per iteration summed over slaves

``total_work`` is held fixed while K varies, so per-slave work is
``total_work / K``. All times are double-precision seconds. Everything in
this module is a pure function over immutable values and is safe to call
from any number of threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


class ParameterError(ValueError):
    """A cost-model parameter or derived quantity violates its constraints."""


@dataclass(frozen=True)
class BsfParams:
    """Cost description of one workload/machine pair."""

    slaves: int
    latency: float
    send_time: float
    receive_time: float
    evaluate_time: float
    total_work: float

    def __post_init__(self) -> None:
        if isinstance(self.slaves, bool) or not isinstance(self.slaves, int):
            raise ParameterError(f"slaves must be an int, got {self.slaves!r}")
        if self.slaves < 1:
            raise ParameterError(f"slaves must be >= 1, got {self.slaves}")
        for name in ("latency", "send_time", "receive_time", "evaluate_time"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value < 0:
                raise ParameterError(f"{name} must be a finite number >= 0, got {value!r}")
        if (
            not isinstance(self.total_work, (int, float))
            or not math.isfinite(self.total_work)
            or self.total_work <= 0
        ):
            raise ParameterError(f"total_work must be a finite number > 0, got {self.total_work!r}")

    @property
    def work_per_slave(self) -> float:
        """Computation time of one slave. Derived, never stored, so the
        identity total_work == slaves * work_per_slave cannot drift."""
        return self.total_work / self.slaves

    def with_slaves(self, slaves: int) -> "BsfParams":
        """Same machine and workload, different slave count."""
        return replace(self, slaves=slaves)


@dataclass(frozen=True)
class DerivedControls:
    """Aggregate knobs used by the verification sweeps.

    work_send_ratio: log10(total_work / send_time) -- how much heavier the
        computation is than a single order transfer.
    master_overhead: receive_time + evaluate_time -- the master's combined
        per-iteration cost after the work phase.
    """

    work_send_ratio: float
    master_overhead: float


def derived_controls(params: BsfParams) -> DerivedControls:
    """Extract the sweep control values from a parameter set."""
    if params.send_time <= 0:
        raise ParameterError("work/send ratio is undefined for send_time = 0")
    return DerivedControls(
        work_send_ratio=math.log10(params.total_work / params.send_time),
        master_overhead=params.receive_time + params.evaluate_time,
    )


def params_from_ratio(
    ratio: float,
    *,
    total_work: float,
    latency: float,
    receive_time: float,
    evaluate_time: float,
    slaves: int,
) -> BsfParams:
    """Build a parameter set with send_time = 10**(-ratio) * total_work.

    Inverse of ``derived_controls().work_send_ratio`` up to float rounding.
    """
    if not isinstance(ratio, (int, float)) or not math.isfinite(ratio):
        raise ParameterError(f"ratio must be a finite number, got {ratio!r}")
    return BsfParams(
        slaves=slaves,
        latency=latency,
        send_time=10.0 ** (-ratio) * total_work,
        receive_time=receive_time,
        evaluate_time=evaluate_time,
        total_work=total_work,
    )


def params_from_overhead(
    overhead: float,
    *,
    receive_time: float,
    send_time: float,
    latency: float,
    total_work: float,
    slaves: int,
) -> BsfParams:
    """Build a parameter set with evaluate_time = overhead - receive_time.

    Rejects overhead < receive_time, which would need a negative
    evaluation cost.
    """
    if not isinstance(overhead, (int, float)) or not math.isfinite(overhead):
        raise ParameterError(f"overhead must be a finite number, got {overhead!r}")
    if overhead < receive_time:
        raise ParameterError(
            f"overhead ({overhead}) must be >= receive_time ({receive_time})"
        )
    return BsfParams(
        slaves=slaves,
        latency=latency,
        send_time=send_time,
        receive_time=receive_time,
        evaluate_time=overhead - receive_time,
        total_work=total_work,
    )


def scale_params(params: BsfParams, factor: float) -> BsfParams:
    """Multiply every time field by ``factor``.

    Speedup, efficiency and the scalability bound are invariant under this
    (every term of their formulas is degree one in time), which is what
    justifies shrinking long cluster workloads to desk scale.
    """
    if not isinstance(factor, (int, float)) or not math.isfinite(factor) or factor <= 0:
        raise ParameterError(f"scale factor must be a finite number > 0, got {factor!r}")
    return BsfParams(
        slaves=params.slaves,
        latency=params.latency * factor,
        send_time=params.send_time * factor,
        receive_time=params.receive_time * factor,
        evaluate_time=params.evaluate_time * factor,
        total_work=params.total_work * factor,
    )


def _check_bound_inputs(latency: float, send_time: float, total_work: float) -> float:
    for name, value in (("latency", latency), ("send_time", send_time)):
        if not isinstance(value, (int, float)) or not math.isfinite(value) or value < 0:
            raise ParameterError(f"{name} must be a finite number >= 0, got {value!r}")
    if not isinstance(total_work, (int, float)) or not math.isfinite(total_work) or total_work <= 0:
        raise ParameterError(f"total_work must be a finite number > 0, got {total_work!r}")
    per_slave_comm = 2.0 * latency + send_time
    if per_slave_comm <= 0.0:
        raise ParameterError(
            "scalability bound is undefined when 2*latency + send_time = 0; "
            "a zero-communication-cost machine scales without bound"
        )
    return per_slave_comm


def scalability_bound(latency: float, send_time: float, total_work: float) -> float:
    """Slave count beyond which adding slaves slows the program down.

    Returns sqrt(total_work / (2*latency + send_time)) as a real number;
    callers that need a node count take the floor.
    """
    per_slave_comm = _check_bound_inputs(latency, send_time, total_work)
    return math.sqrt(total_work / per_slave_comm)


def optimal_slaves(latency: float, send_time: float, total_work: float) -> float:
    """Continuous slave count maximising speedup.

    Coincides with ``scalability_bound``: the per-iteration cost
    K*(2L + send) + receive + evaluate + total_work/K is minimised where
    its derivative in K vanishes, at K = sqrt(total_work/(2L + send)).
    """
    return scalability_bound(latency, send_time, total_work)


def speedup(params: BsfParams) -> float:
    """Predicted ratio of one-slave iteration time to K-slave iteration time.

        K*(2L + ts + tr + tp + tw) / (K^2*(2L + ts) + K*(tr + tp) + tw)

    Equals 1 at K = 1 and equals K when all communication and master
    costs vanish.
    """
    k = params.slaves
    comm = 2.0 * params.latency + params.send_time
    overhead = params.receive_time + params.evaluate_time
    numerator = k * (comm + overhead + params.total_work)
    denominator = k * k * comm + k * overhead + params.total_work
    return numerator / denominator


def efficiency_exact(params: BsfParams) -> float:
    """Parallel efficiency, speedup divided by the slave count."""
    return speedup(params) / params.slaves


def efficiency_approx(params: BsfParams) -> float:
    """Closed-form approximation of parallel efficiency:

        1 / (1 + (K^2*(2L + ts) + K*(tr + tp)) / tw)

    Slightly below ``efficiency_exact``: it drops the master-side costs
    from the single-slave reference time, so the gap is positive and at
    most (2L + ts + tr + tp) / tw.
    """
    k = params.slaves
    comm = 2.0 * params.latency + params.send_time
    overhead = params.receive_time + params.evaluate_time
    scaled_overhead = k * k * comm + k * overhead
    return 1.0 / (1.0 + scaled_overhead / params.total_work)
