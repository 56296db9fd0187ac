"""Cost model and dual-engine simulator for bulk-synchronous farm programs."""

from .cost import (
    BsfParams,
    DerivedControls,
    ParameterError,
    derived_controls,
    efficiency_approx,
    efficiency_exact,
    optimal_slaves,
    params_from_overhead,
    params_from_ratio,
    scalability_bound,
    scale_params,
    speedup,
)
from .harness import (
    ComparisonRow,
    EngineChoice,
    ErrorStats,
    ExperimentConfig,
    ExperimentEngineError,
    HarnessError,
    SendRealization,
    SweepKind,
    error_summary,
    overhead_sweep_config,
    ratio_sweep_config,
    run_experiment,
    write_bundle,
    write_csv,
)
from .live import (
    ChannelCalibration,
    EngineError,
    LiveRunSpec,
    Order,
    OrderCostFit,
    ResultMsg,
    SlaveFailure,
    WorkerCapExceeded,
    calibrate_send_cost,
    fit_order_cost,
    order_length_for_cost,
    run_live,
    worker_cap,
)
from .simulate import (
    EngineKind,
    IterationEvents,
    IterationTimeline,
    LatencyMode,
    RunSpec,
    SimulationResult,
    iteration_events,
    measured_efficiency,
    measured_speedup,
    run_virtual,
)

__version__ = "0.1.0"

__all__ = [
    "BsfParams",
    "ChannelCalibration",
    "ComparisonRow",
    "DerivedControls",
    "EngineChoice",
    "EngineError",
    "EngineKind",
    "ErrorStats",
    "ExperimentConfig",
    "ExperimentEngineError",
    "HarnessError",
    "IterationEvents",
    "IterationTimeline",
    "LatencyMode",
    "LiveRunSpec",
    "Order",
    "OrderCostFit",
    "ParameterError",
    "ResultMsg",
    "RunSpec",
    "SendRealization",
    "SimulationResult",
    "SlaveFailure",
    "SweepKind",
    "WorkerCapExceeded",
    "calibrate_send_cost",
    "derived_controls",
    "efficiency_approx",
    "efficiency_exact",
    "error_summary",
    "fit_order_cost",
    "iteration_events",
    "measured_efficiency",
    "measured_speedup",
    "optimal_slaves",
    "order_length_for_cost",
    "overhead_sweep_config",
    "params_from_overhead",
    "params_from_ratio",
    "ratio_sweep_config",
    "run_experiment",
    "run_live",
    "run_virtual",
    "scalability_bound",
    "scale_params",
    "speedup",
    "worker_cap",
    "write_bundle",
    "write_csv",
]
