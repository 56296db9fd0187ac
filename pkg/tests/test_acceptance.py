"""Acceptance suite: one test per release criterion, in order.

Each test prints a single PASS line (visible with ``pytest -s``) after its
assertions hold; a failing criterion fails its test. Criteria 4 and 5 run
the live engine at desk scale and together take on the order of fifteen
minutes on an otherwise idle host.
"""

from __future__ import annotations

import math
import random
import time

import pytest

from bsfsim import (
    BsfParams,
    EngineChoice,
    LiveRunSpec,
    RunSpec,
    efficiency_approx,
    efficiency_exact,
    error_summary,
    measured_speedup,
    overhead_sweep_config,
    ratio_sweep_config,
    run_experiment,
    run_live,
    run_virtual,
    scalability_bound,
    scale_params,
    speedup,
)

from conftest import reference_params
from test_cost_model import random_params


def _report(criterion: int, message: str) -> None:
    print(f"[acceptance] criterion {criterion}: PASS - {message}")


def test_criterion_1_virtual_speedup_matches_formula_exactly():
    # Over 1000 random parameter sets, serialized virtual measurements must
    # reproduce the analytical speedup to better than 1e-9 relative.
    rng = random.Random(20260808)
    worst = 0.0
    for _ in range(1000):
        params = random_params(rng)
        base = run_virtual(RunSpec(params=params.with_slaves(1), iterations=1))
        run = run_virtual(RunSpec(params=params, iterations=1))
        measured = measured_speedup(base, run)
        predicted = speedup(params)
        error = abs(measured - predicted) / predicted
        worst = max(worst, error)
        assert error < 1e-9
    _report(1, f"1000 parameter sets, worst relative error {worst:.2e}")


def test_criterion_2_bound_is_the_speedup_argmax():
    # For 100 random parameter sets, a brute-force integer scan of the
    # speedup formula over [1, 4*K*] peaks at floor(K*) or ceil(K*).
    rng = random.Random(9173)
    for _ in range(100):
        k_star_target = rng.uniform(1.2, 250.0)
        total_work = 10.0 ** rng.uniform(0, 3)
        comm = total_work / k_star_target**2
        latency = rng.uniform(0.0, 0.25) * comm / 2.0
        send_time = comm - 2 * latency
        receive_time = 10.0 ** rng.uniform(-4, 0)
        evaluate_time = 10.0 ** rng.uniform(-4, 0)

        k_star = scalability_bound(latency, send_time, total_work)
        scan = range(1, max(4, math.ceil(4 * k_star)) + 1)
        best_k = max(
            scan,
            key=lambda k: speedup(
                BsfParams(slaves=k, latency=latency, send_time=send_time,
                          receive_time=receive_time, evaluate_time=evaluate_time,
                          total_work=total_work)
            ),
        )
        assert best_k in {max(1, math.floor(k_star)), max(1, math.ceil(k_star))}, (
            f"argmax {best_k} is not adjacent to the bound {k_star}"
        )
    _report(2, "100 parameter sets, integer argmax always at the bound")


def test_criterion_3_efficiency_approximation_quality():
    # Exhaustively over K in [1, 350] with the reference workload, the gap
    # between exact and approximate efficiency stays positive and under
    # (2L + ts + tr + tp) / tw (about 0.01001).
    template = reference_params(1)
    bound = (
        2 * template.latency + template.send_time
        + template.receive_time + template.evaluate_time
    ) / template.total_work
    assert bound == pytest.approx(0.01001008, rel=1e-12)
    worst = 0.0
    for slaves in range(1, 351):
        params = reference_params(slaves)
        gap = efficiency_exact(params) - efficiency_approx(params)
        worst = max(worst, gap)
        assert 0.0 < gap < bound
    _report(3, f"K in [1, 350], largest gap {worst:.6f} < {bound:.6f}")


def test_criterion_4_live_speedup_curves_track_the_formula():
    # Desk-scale substitute for the speedup verification: live engine,
    # time_scale 0.01, K in {1, 2, 4, 8}, ratios {4, 4.5, 6}, median of 3
    # trials per point. (a) every point within 10% of the formula;
    # (b) accuracy does not degrade as the ratio grows.
    config = ratio_sweep_config(EngineChoice.LIVE)
    assert config.time_scale == 0.01
    assert config.k_values == (1, 2, 4, 8)
    assert config.control_values == (4.0, 4.5, 6.0)
    assert config.iterations == 10
    assert config.trials == 3

    rows = run_experiment(config)
    for row in rows:
        assert row.relative_error < 0.10, (
            f"ratio={row.control} K={row.slaves}: measured {row.simulated:.4f} "
            f"vs predicted {row.analytical:.4f} "
            f"(rel error {row.relative_error:.4f})"
        )
    summary = error_summary(rows)
    mean_low = summary[4.0].mean_relative_error
    mean_high = summary[6.0].mean_relative_error
    assert mean_high <= mean_low, (
        f"accuracy should not degrade with the ratio: mean error {mean_high:.5f} "
        f"at ratio 6 vs {mean_low:.5f} at ratio 4"
    )
    _report(
        4,
        "live speedup within 10% per point; mean rel errors "
        + ", ".join(f"ratio {c}: {s.mean_relative_error:.5f}" for c, s in summary.items()),
    )


def test_criterion_5_live_efficiency_curves_track_the_formula():
    # Desk-scale substitute for the efficiency verification: live engine,
    # overheads {0.02, 2, 20} with the standard send/receive costs.
    # (a) within 10% of the approximate-efficiency formula for the two
    # overheads it models well; (b) curves stay ordered by overhead at
    # every K, in both columns (at K=1 every measured column is exactly 1,
    # the shared-baseline tie).
    config = overhead_sweep_config(EngineChoice.LIVE)
    assert config.time_scale == 0.01
    assert config.k_values == (1, 2, 4, 8)
    assert config.control_values == (0.02, 2.0, 20.0)
    assert config.send_time == 0.005
    assert config.receive_time == 0.01

    rows = run_experiment(config)
    for row in rows:
        if row.control in (2.0, 20.0):
            assert row.relative_error < 0.10, (
                f"overhead={row.control} K={row.slaves}: measured {row.simulated:.4f} "
                f"vs predicted {row.analytical:.4f} "
                f"(rel error {row.relative_error:.4f})"
            )

    by_k: dict[int, dict[float, tuple[float, float]]] = {}
    for row in rows:
        by_k.setdefault(row.slaves, {})[row.control] = (row.analytical, row.simulated)
    for slaves, controls in sorted(by_k.items()):
        analytical = [controls[q][0] for q in (0.02, 2.0, 20.0)]
        measured = [controls[q][1] for q in (0.02, 2.0, 20.0)]
        assert analytical[0] > analytical[1] > analytical[2], (
            f"analytical efficiency ordering broken at K={slaves}: {analytical}"
        )
        if slaves == 1:
            assert measured == [1.0, 1.0, 1.0]
        else:
            assert measured[0] > measured[1] > measured[2], (
                f"measured efficiency ordering broken at K={slaves}: {measured}"
            )
    summary = error_summary(rows)
    _report(
        5,
        "live efficiency within 10% for overheads 2 and 20, curves ordered; "
        + ", ".join(f"q {c}: {s.mean_relative_error:.5f}" for c, s in summary.items()),
    )


def test_criterion_6_protocol_invariants_over_ten_thousand_iterations():
    # Every message carries a sequence number and checksum and the engine
    # raises on any violation, so a completed run certifies zero
    # barrier-ordering violations and zero checksum failures.
    spec = LiveRunSpec(slaves=4, iterations=10_000, order_length=32, result_length=32,
                       work_suspension_us=10, evaluate_suspension_us=0, seed=123)
    start = time.perf_counter()
    result = run_live(spec)
    elapsed = time.perf_counter() - start
    assert result.iterations == 10_000
    assert len(result.per_iteration) == 10_000
    assert result.mean_iteration >= 10e-6
    _report(6, f"10000 iterations at K=4 completed cleanly in {elapsed:.1f}s")


def test_criterion_7_analytical_metrics_are_scale_invariant():
    # Scaling every time parameter together must leave speedup and both
    # efficiencies unchanged to 1e-12 relative; this justifies running the
    # 500-second workload at desk scale.
    rng = random.Random(555)
    cases = [reference_params(k) for k in (1, 2, 8, 100, 314)]
    cases += [random_params(rng) for _ in range(50)]
    for params in cases:
        reference = (speedup(params), efficiency_exact(params), efficiency_approx(params))
        for factor in (0.001, 0.01, 1.0):
            scaled = scale_params(params, factor)
            values = (speedup(scaled), efficiency_exact(scaled), efficiency_approx(scaled))
            for got, expected in zip(values, reference):
                assert got == pytest.approx(expected, rel=1e-12)
    _report(7, "55 parameter sets invariant under time scales 0.001, 0.01, 1")
