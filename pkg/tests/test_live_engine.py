from __future__ import annotations

import time

import pytest

from bsfsim import (
    BsfParams,
    EngineKind,
    LatencyMode,
    LiveRunSpec,
    OrderCostFit,
    ParameterError,
    RunSpec,
    SlaveFailure,
    WorkerCapExceeded,
    calibrate_send_cost,
    fit_order_cost,
    measured_speedup,
    order_length_for_cost,
    run_live,
    run_virtual,
    worker_cap,
)
from bsfsim.live import EngineError


class TestSpecValidation:
    def test_rejects_zero_slaves(self):
        with pytest.raises(ParameterError):
            LiveRunSpec(slaves=0, iterations=1)

    def test_rejects_zero_length_payloads(self):
        with pytest.raises(ParameterError):
            LiveRunSpec(slaves=1, iterations=1, order_length=0)
        with pytest.raises(ParameterError):
            LiveRunSpec(slaves=1, iterations=1, result_length=0)

    def test_rejects_negative_suspension(self):
        with pytest.raises(ParameterError):
            LiveRunSpec(slaves=1, iterations=1, work_suspension_us=-1)


def test_suspension_is_a_lower_bound():
    spec = LiveRunSpec(slaves=1, iterations=1, work_suspension_us=1000, evaluate_suspension_us=500)
    result = run_live(spec)
    assert result.iterations == 1
    assert result.per_iteration[0].iteration_elapsed >= 0.001
    assert result.mean_iteration >= 0.0015


def test_engine_tag_and_timeline_shape():
    result = run_live(LiveRunSpec(slaves=2, iterations=3, work_suspension_us=200, seed=5))
    assert result.engine is EngineKind.LIVE
    assert result.latency_mode is None
    assert len(result.per_iteration) == 3
    for timeline in result.per_iteration:
        assert timeline.send_total >= 0
        assert timeline.work_span >= 0
        assert timeline.receive_total >= 0
        assert timeline.evaluate_total >= 0
        assert timeline.iteration_elapsed >= timeline.work_span
    assert result.total_elapsed >= 3 * min(t.iteration_elapsed for t in result.per_iteration)


def test_speedup_stays_within_slave_count():
    # Fixed total work of 0.2 s split across slaves; master evaluation keeps
    # the speedup strictly below the slave count.
    base = run_live(LiveRunSpec(slaves=1, iterations=3, work_suspension_us=200_000,
                                evaluate_suspension_us=50_000, seed=11))
    quad = run_live(LiveRunSpec(slaves=4, iterations=3, work_suspension_us=50_000,
                                evaluate_suspension_us=50_000, seed=11))
    observed = measured_speedup(base, quad)
    assert 1.0 < observed <= 4.0 * 1.05


def test_protocol_run_with_many_iterations():
    # Sequence numbers and checksums are verified on every message; a
    # violation raises, so completion means the protocol held throughout.
    result = run_live(LiveRunSpec(slaves=3, iterations=400, order_length=32,
                                  result_length=32, work_suspension_us=10, seed=2))
    assert result.iterations == 400


def test_cross_engine_consistency_smoke():
    # Live timing should track the pipelined virtual prediction loosely even
    # at tiny scale; the tight comparison lives in the acceptance suite.
    params = BsfParams(slaves=2, latency=0.0, send_time=0.0005, receive_time=0.001,
                       evaluate_time=0.02, total_work=0.4)
    spec = LiveRunSpec(slaves=2, iterations=3, work_suspension_us=200_000,
                       evaluate_suspension_us=20_000, send_suspension_us=500,
                       receive_suspension_us=1000, seed=4)
    base_spec = LiveRunSpec(slaves=1, iterations=3, work_suspension_us=400_000,
                            evaluate_suspension_us=20_000, send_suspension_us=500,
                            receive_suspension_us=1000, seed=4)
    live_speedup = measured_speedup(
        run_live(base_spec, params=params.with_slaves(1)),
        run_live(spec, params=params),
    )
    virtual_speedup = measured_speedup(
        run_virtual(RunSpec(params=params.with_slaves(1), iterations=1,
                            latency_mode=LatencyMode.PIPELINED)),
        run_virtual(RunSpec(params=params, iterations=1,
                            latency_mode=LatencyMode.PIPELINED)),
    )
    assert live_speedup == pytest.approx(virtual_speedup, rel=0.2)


class TestWorkerCap:
    def test_unset_cap_is_none(self, monkeypatch):
        monkeypatch.delenv("BSF_MAX_WORKERS", raising=False)
        assert worker_cap() is None

    def test_cap_rejects_large_runs(self, monkeypatch):
        monkeypatch.setenv("BSF_MAX_WORKERS", "2")
        with pytest.raises(WorkerCapExceeded, match="BSF_MAX_WORKERS=2"):
            run_live(LiveRunSpec(slaves=3, iterations=1))

    def test_cap_allows_small_runs(self, monkeypatch):
        monkeypatch.setenv("BSF_MAX_WORKERS", "2")
        result = run_live(LiveRunSpec(slaves=2, iterations=1, work_suspension_us=10))
        assert result.iterations == 1

    def test_invalid_cap_value(self, monkeypatch):
        monkeypatch.setenv("BSF_MAX_WORKERS", "many")
        with pytest.raises(EngineError, match="BSF_MAX_WORKERS"):
            worker_cap()


def test_slave_failure_is_diagnosed():
    def fault_hook(slave_id: int, iteration: int) -> None:
        if slave_id == 2 and iteration == 3:
            raise RuntimeError("injected fault")

    start = time.perf_counter()
    with pytest.raises(SlaveFailure) as failure:
        run_live(LiveRunSpec(slaves=4, iterations=10, work_suspension_us=100, seed=9),
                 fault_hook=fault_hook)
    assert failure.value.slave_id == 2
    assert failure.value.iteration == 3
    assert "slave 2" in str(failure.value)
    assert time.perf_counter() - start < 10.0  # aborts, does not hang


class TestCalibration:
    def test_rejects_zero_length(self):
        with pytest.raises(ParameterError):
            calibrate_send_cost(0)

    def test_rejects_zero_trials(self):
        with pytest.raises(ParameterError):
            calibrate_send_cost(1, trials=0)

    def test_records_inputs(self):
        calibration = calibrate_send_cost(1, trials=5)
        assert calibration.message_length == 1
        assert calibration.trials == 5
        assert calibration.one_way_seconds > 0

    def test_larger_messages_cost_at_least_as_much(self):
        small = calibrate_send_cost(1024, trials=16)
        large = calibrate_send_cost(1_000_000, trials=16)
        assert large.one_way_seconds >= small.one_way_seconds


class TestOrderCostFit:
    def test_fit_has_positive_slope(self):
        fit = fit_order_cost(repeats=16, passes=2)
        assert fit.slope_per_byte > 0
        assert len(fit.samples) >= 2

    def test_sizing_inverts_a_known_model(self):
        fit = OrderCostFit(slope_per_byte=1e-6, intercept=1e-5, samples=((1, 0.0),))
        assert order_length_for_cost(fit, 1.01e-3) == 1000
        assert order_length_for_cost(fit, 1e-5) == 1  # nothing left after the intercept
        assert order_length_for_cost(fit, 0.0) == 1

    def test_sizing_is_monotone(self):
        fit = OrderCostFit(slope_per_byte=3e-9, intercept=5e-6, samples=((1, 0.0),))
        sizes = [order_length_for_cost(fit, t) for t in (1e-5, 1e-4, 1e-3, 1e-2)]
        assert sizes == sorted(sizes)

    def test_fit_rejects_bad_inputs(self):
        with pytest.raises(ParameterError):
            fit_order_cost(lengths=(1024,))
        with pytest.raises(ParameterError):
            fit_order_cost(repeats=0)
