"""Simulator and bandwidth analyzer for prefill/decode-disaggregated
inference clusters."""

from ._core import (
    ClusterConfig,
    ConfigError,
    ModelSpec,
    Round,
    SimulationError,
    Trajectory,
    cache_compute_ratio,
    feasible_pd_range,
    link_loads,
    load_trace,
    save_trace,
    simulate,
    synthesize,
)

__all__ = [
    "ClusterConfig",
    "ConfigError",
    "ModelSpec",
    "Round",
    "SimulationError",
    "Trajectory",
    "cache_compute_ratio",
    "feasible_pd_range",
    "link_loads",
    "load_trace",
    "save_trace",
    "simulate",
    "synthesize",
]
