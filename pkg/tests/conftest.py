from __future__ import annotations

import pytest

from bsfsim import BsfParams

# Standard workload used across the sweeps: four fixed costs plus the
# mid-range send time, in seconds.
REFERENCE_LATENCY = 2e-5
REFERENCE_SEND_TIME = 0.005
REFERENCE_RECEIVE_TIME = 0.01
REFERENCE_EVALUATE_TIME = 4.99
REFERENCE_TOTAL_WORK = 500.0


def reference_params(slaves: int) -> BsfParams:
    return BsfParams(
        slaves=slaves,
        latency=REFERENCE_LATENCY,
        send_time=REFERENCE_SEND_TIME,
        receive_time=REFERENCE_RECEIVE_TIME,
        evaluate_time=REFERENCE_EVALUATE_TIME,
        total_work=REFERENCE_TOTAL_WORK,
    )


@pytest.fixture
def params_k100() -> BsfParams:
    return reference_params(100)
