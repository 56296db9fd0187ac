"""Concurrent farm engine: one master thread plus K slave threads.

Workers exchange checksummed byte payloads over per-slave point-to-point
queues; computation is simulated by suspending the worker for a requested
number of microseconds, and phases are measured with the monotonic wall
clock. The protocol per iteration: the master dispatches K orders, each
slave receives its order, verifies it and suspends for the work time, all
K+1 workers meet at a global barrier, the slaves send their results, the
master collects and verifies all K (collection is completion for in-process
queues), optionally suspends for the receive cost, then suspends for the
evaluation cost and advances the iteration counter.

Wall-clock numbers carry OS scheduling jitter; callers compare them against
predictions with a tolerance rather than exactly.
"""

from __future__ import annotations

import os
import queue
import random
import statistics
import sys
import threading
import time
import zlib
from dataclasses import dataclass
from typing import Callable, Optional

from .cost import BsfParams, ParameterError
from .simulate import EngineKind, IterationTimeline, SimulationResult

WORKER_CAP_ENV = "BSF_MAX_WORKERS"

_ABORT = object()  # order-queue sentinel telling a slave to exit

# Below this, sleeping a send-budget shortfall overshoots (timer slack) by
# more than it fixes; such slivers are left unpaced.
_PACING_SLACK_S = 50e-6


class EngineError(RuntimeError):
    """A live run failed at runtime (spawn, channel, or protocol trouble)."""


class WorkerCapExceeded(EngineError):
    """The requested slave count exceeds the host's configured worker cap."""


class SlaveFailure(EngineError):
    """A slave worker died; the run was aborted."""

    def __init__(self, slave_id: int, iteration: int, cause: BaseException):
        super().__init__(
            f"slave {slave_id} failed at iteration {iteration}: {cause!r}"
        )
        self.slave_id = slave_id
        self.iteration = iteration
        self.cause = cause


@dataclass(frozen=True)
class Order:
    """Master-to-slave message for one iteration."""

    payload: bytes
    iteration_index: int
    checksum: int


@dataclass(frozen=True)
class ResultMsg:
    """Slave-to-master message for one iteration."""

    payload: bytes
    slave_id: int
    iteration_index: int
    checksum: int


@dataclass(frozen=True)
class LiveRunSpec:
    """What to run on the live engine.

    Suspensions are integer microseconds, mirroring usleep-style timed
    suspension; zero means the phase is skipped. send_suspension_us is the
    master's per-order send budget: producing and enqueuing the order
    payload counts toward it and any remainder is slept, so the realized
    send cost is never below the budget (costs in this engine are floors,
    the same contract a timed suspension gives). receive_suspension_us is
    the master's total per-iteration receive charge, applied after all
    results are collected.
    """

    slaves: int
    iterations: int
    order_length: int = 64
    result_length: int = 64
    work_suspension_us: int = 0
    evaluate_suspension_us: int = 0
    send_suspension_us: int = 0
    receive_suspension_us: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("slaves", "iterations"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ParameterError(f"{name} must be an int >= 1, got {value!r}")
        for name in ("order_length", "result_length"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ParameterError(f"{name} must be an int >= 1, got {value!r}")
        for name in (
            "work_suspension_us",
            "evaluate_suspension_us",
            "send_suspension_us",
            "receive_suspension_us",
        ):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 0:
                raise ParameterError(f"{name} must be an int >= 0, got {value!r}")


def worker_cap() -> Optional[int]:
    """Slave-count cap from the environment, or None when unset."""
    raw = os.environ.get(WORKER_CAP_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        cap = int(raw)
    except ValueError:
        raise EngineError(f"{WORKER_CAP_ENV} must be an integer, got {raw!r}") from None
    if cap < 1:
        raise EngineError(f"{WORKER_CAP_ENV} must be >= 1, got {cap}")
    return cap


def _suspend(microseconds: int) -> None:
    if microseconds > 0:
        time.sleep(microseconds * 1e-6)


def _slave_loop(
    spec: LiveRunSpec,
    slave_id: int,
    order_q: "queue.SimpleQueue",
    result_q: "queue.SimpleQueue",
    barrier: threading.Barrier,
    failures: dict,
    timeout: float,
    fault_hook: Optional[Callable[[int, int], None]],
) -> None:
    rng = random.Random(spec.seed * 1_000_003 + slave_id)
    iteration = 0
    try:
        for iteration in range(spec.iterations):
            order = order_q.get(timeout=timeout)
            if order is _ABORT:
                return
            if order.iteration_index != iteration:
                raise EngineError(
                    f"slave {slave_id} expected an order for iteration {iteration}, "
                    f"got iteration {order.iteration_index}"
                )
            if len(order.payload) != spec.order_length:
                raise EngineError(
                    f"slave {slave_id} received a {len(order.payload)}-byte order, "
                    f"expected {spec.order_length}"
                )
            if zlib.crc32(order.payload) != order.checksum:
                raise EngineError(
                    f"slave {slave_id} order checksum mismatch at iteration {iteration}"
                )
            if fault_hook is not None:
                fault_hook(slave_id, iteration)
            _suspend(spec.work_suspension_us)
            barrier.wait(timeout)
            payload = rng.randbytes(spec.result_length)
            result_q.put(ResultMsg(payload, slave_id, iteration, zlib.crc32(payload)))
    except threading.BrokenBarrierError:
        return
    except BaseException as exc:  # noqa: BLE001 - reported to the master
        failures[slave_id] = (iteration, exc)
        barrier.abort()


def _raise_slave_failure(failures: dict, iteration: int) -> None:
    if failures:
        slave_id = min(failures)
        failed_iteration, cause = failures[slave_id]
        raise SlaveFailure(slave_id, failed_iteration, cause)
    raise EngineError(f"a worker stalled or died near iteration {iteration}")


def run_live(
    spec: LiveRunSpec,
    *,
    params: Optional[BsfParams] = None,
    fault_hook: Optional[Callable[[int, int], None]] = None,
) -> SimulationResult:
    """Execute the iterative protocol with real workers and channels.

    The calling thread acts as the master; K slave threads are spawned for
    the run and joined before returning. ``params`` attaches the
    model-space description of the run to the result for bookkeeping; when
    omitted it is reconstructed from the suspensions (zero work is clamped
    to a nanosecond because the model requires positive work, and
    payload-realized send cost is not reflected). ``fault_hook`` is test
    instrumentation, invoked by each slave per iteration before the work
    phase; an exception raised there simulates that worker dying.

    Raises WorkerCapExceeded when the slave count exceeds BSF_MAX_WORKERS,
    SlaveFailure with the slave and iteration when a worker dies, and
    EngineError on spawn failures or protocol violations (out-of-sequence
    or corrupted messages).
    """
    cap = worker_cap()
    if cap is not None and spec.slaves > cap:
        raise WorkerCapExceeded(
            f"run needs {spec.slaves} slave workers but {WORKER_CAP_ENV}={cap}"
        )

    per_iteration_cost = (
        spec.slaves * spec.send_suspension_us
        + spec.work_suspension_us
        + spec.receive_suspension_us
        + spec.evaluate_suspension_us
    ) * 1e-6
    timeout = 30.0 + 5.0 * per_iteration_cost

    orders = [queue.SimpleQueue() for _ in range(spec.slaves)]
    results = [queue.SimpleQueue() for _ in range(spec.slaves)]
    barrier = threading.Barrier(spec.slaves + 1)
    failures: dict = {}

    threads = []
    try:
        for slave_id in range(1, spec.slaves + 1):
            thread = threading.Thread(
                target=_slave_loop,
                args=(
                    spec,
                    slave_id,
                    orders[slave_id - 1],
                    results[slave_id - 1],
                    barrier,
                    failures,
                    timeout,
                    fault_hook,
                ),
                name=f"bsf-slave-{slave_id}",
                daemon=True,
            )
            threads.append(thread)
        for thread in threads:
            thread.start()
    except RuntimeError as exc:
        barrier.abort()
        for order_q in orders:
            order_q.put(_ABORT)
        raise EngineError(f"could not spawn {spec.slaves} slave workers: {exc}") from exc

    master_rng = random.Random(spec.seed)
    switch_interval = sys.getswitchinterval()
    sys.setswitchinterval(0.001)  # hand freshly woken workers the interpreter promptly
    per_iteration: list[IterationTimeline] = []
    run_start = time.perf_counter()
    try:
        send_budget = spec.send_suspension_us * 1e-6
        for iteration in range(spec.iterations):
            iter_start = time.perf_counter()
            for order_q in orders:
                order_start = time.perf_counter()
                payload = master_rng.randbytes(spec.order_length)
                order_q.put(Order(payload, iteration, zlib.crc32(payload)))
                if send_budget > 0.0:
                    shortfall = send_budget - (time.perf_counter() - order_start)
                    if shortfall > min(_PACING_SLACK_S, 0.5 * send_budget):
                        time.sleep(shortfall)
            send_done = time.perf_counter()

            try:
                barrier.wait(timeout)
            except threading.BrokenBarrierError:
                _raise_slave_failure(failures, iteration)
            work_done = time.perf_counter()

            for slave_id in range(1, spec.slaves + 1):
                try:
                    msg = results[slave_id - 1].get(timeout=timeout)
                except queue.Empty:
                    _raise_slave_failure(failures, iteration)
                if msg.slave_id != slave_id:
                    raise EngineError(
                        f"result channel {slave_id} delivered a message from slave "
                        f"{msg.slave_id} at iteration {iteration}"
                    )
                if msg.iteration_index != iteration:
                    raise EngineError(
                        f"barrier ordering violated: slave {slave_id} result for "
                        f"iteration {msg.iteration_index} arrived during {iteration}"
                    )
                if len(msg.payload) != spec.result_length or zlib.crc32(msg.payload) != msg.checksum:
                    raise EngineError(
                        f"result checksum mismatch from slave {slave_id} "
                        f"at iteration {iteration}"
                    )
            _suspend(spec.receive_suspension_us)
            receive_done = time.perf_counter()

            _suspend(spec.evaluate_suspension_us)
            iter_end = time.perf_counter()

            per_iteration.append(
                IterationTimeline(
                    send_total=send_done - iter_start,
                    latency_total=0.0,
                    work_span=work_done - send_done,
                    receive_total=receive_done - work_done,
                    evaluate_total=iter_end - receive_done,
                    iteration_elapsed=iter_end - iter_start,
                )
            )
    except BaseException:
        barrier.abort()
        for order_q in orders:
            order_q.put(_ABORT)
        raise
    finally:
        sys.setswitchinterval(switch_interval)
        for thread in threads:
            thread.join(timeout=timeout)

    stuck = [t.name for t in threads if t.is_alive()]
    if stuck:
        raise EngineError(f"slave workers did not exit: {', '.join(stuck)}")
    if failures:
        _raise_slave_failure(failures, spec.iterations)
    total_elapsed = time.perf_counter() - run_start

    if params is None:
        params = BsfParams(
            slaves=spec.slaves,
            latency=0.0,
            send_time=spec.send_suspension_us * 1e-6,
            receive_time=spec.receive_suspension_us * 1e-6,
            evaluate_time=spec.evaluate_suspension_us * 1e-6,
            total_work=max(spec.slaves * spec.work_suspension_us * 1e-6, 1e-9),
        )
    mean = sum(t.iteration_elapsed for t in per_iteration) / len(per_iteration)
    return SimulationResult(
        engine=EngineKind.LIVE,
        latency_mode=None,
        params=params,
        iterations=spec.iterations,
        per_iteration=tuple(per_iteration),
        mean_iteration=mean,
        total_elapsed=total_elapsed,
    )


@dataclass(frozen=True)
class ChannelCalibration:
    """One-way channel transfer estimate for a given message length."""

    message_length: int
    trials: int
    one_way_seconds: float


def _echo_loop(ping: "queue.SimpleQueue", pong: "queue.SimpleQueue", trials: int) -> None:
    for _ in range(trials):
        msg = ping.get()
        if zlib.crc32(msg.payload) != msg.checksum:
            pong.put(None)
            return
        pong.put(ResultMsg(msg.payload, 1, msg.iteration_index, zlib.crc32(msg.payload)))


def calibrate_send_cost(message_length: int, trials: int = 32) -> ChannelCalibration:
    """Measure the one-way transfer time of one message over the engine's
    channel, as half the median round trip against an echo worker.

    The transfer includes integrity verification on each leg, the same
    per-message work a live run performs. A one-byte message estimates the
    channel's latency floor on this host.
    """
    if isinstance(message_length, bool) or not isinstance(message_length, int) or message_length < 1:
        raise ParameterError(f"message_length must be an int >= 1, got {message_length!r}")
    if isinstance(trials, bool) or not isinstance(trials, int) or trials < 1:
        raise ParameterError(f"trials must be an int >= 1, got {trials!r}")

    ping: "queue.SimpleQueue" = queue.SimpleQueue()
    pong: "queue.SimpleQueue" = queue.SimpleQueue()
    echo = threading.Thread(target=_echo_loop, args=(ping, pong, trials), daemon=True)
    echo.start()

    payload = random.Random(message_length).randbytes(message_length)
    round_trips = []
    for trial in range(trials):
        start = time.perf_counter()
        ping.put(Order(payload, trial, zlib.crc32(payload)))
        reply = pong.get()
        elapsed = time.perf_counter() - start
        if reply is None or zlib.crc32(reply.payload) != reply.checksum:
            raise EngineError("calibration echo reported a corrupted message")
        round_trips.append(elapsed)
    echo.join(timeout=10.0)

    return ChannelCalibration(
        message_length=message_length,
        trials=trials,
        one_way_seconds=statistics.median(round_trips) / 2.0,
    )


@dataclass(frozen=True)
class OrderCostFit:
    """Linear model of the master's per-order cost versus order length.

    cost(length) = intercept + slope_per_byte * length, fitted over the
    sampled lengths. Samples hold (length, seconds per order).
    """

    slope_per_byte: float
    intercept: float
    samples: tuple[tuple[int, float], ...]

    def cost_at(self, length: int) -> float:
        return self.intercept + self.slope_per_byte * length


_FIT_LENGTHS = (1024, 8192, 32768, 131072)


def fit_order_cost(
    lengths: tuple[int, ...] = _FIT_LENGTHS,
    repeats: int = 128,
    passes: int = 9,
    seed: int = 0,
) -> OrderCostFit:
    """Time the per-order work a live master performs (payload generation,
    checksum, enqueue, plus the matching dequeue and verification) at a
    ladder of order lengths, and fit cost = intercept + slope * length.

    The minimum over ``passes`` timing passes is used per length, the usual
    microbenchmark floor estimate: live runs cannot beat it, so payloads
    sized against the fit realize at least their target cost. The fit lets
    the sweep harness size order payloads to a target send cost.
    """
    if len(lengths) < 2 or any(l < 1 for l in lengths):
        raise ParameterError(f"need at least two lengths >= 1, got {lengths!r}")
    if repeats < 1 or passes < 1:
        raise ParameterError("repeats and passes must be >= 1")

    rng = random.Random(seed)
    channel: "queue.SimpleQueue" = queue.SimpleQueue()
    samples = []
    for length in lengths:
        best = None
        for _ in range(passes):
            start = time.perf_counter()
            for i in range(repeats):
                payload = rng.randbytes(length)
                channel.put(Order(payload, i, zlib.crc32(payload)))
                msg = channel.get()
                if zlib.crc32(msg.payload) != msg.checksum:
                    raise EngineError("calibration channel corrupted a message")
            elapsed = (time.perf_counter() - start) / repeats
            best = elapsed if best is None else min(best, elapsed)
        samples.append((length, best))

    n = len(samples)
    mean_x = sum(l for l, _ in samples) / n
    mean_y = sum(c for _, c in samples) / n
    var_x = sum((l - mean_x) ** 2 for l, _ in samples)
    cov_xy = sum((l - mean_x) * (c - mean_y) for l, c in samples)
    slope = cov_xy / var_x
    intercept = mean_y - slope * mean_x
    if slope <= 0:
        raise EngineError(
            f"order-cost calibration produced a non-positive slope ({slope!r}); "
            "the host's timer resolution is too coarse for payload sizing"
        )
    return OrderCostFit(slope_per_byte=slope, intercept=intercept, samples=tuple(samples))


def order_length_for_cost(fit: OrderCostFit, target_seconds: float) -> int:
    """Order length whose per-order cost best matches the target, at least 1."""
    if target_seconds < 0:
        raise ParameterError(f"target_seconds must be >= 0, got {target_seconds!r}")
    spendable = target_seconds - max(fit.intercept, 0.0)
    if spendable <= 0:
        return 1
    return max(1, round(spendable / fit.slope_per_byte))
