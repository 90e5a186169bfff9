"""Gradient-based Bayesian sampling engine: NUTS with dual-averaging warmup,
reproducible multi-chain execution, and direct conjugate Dirichlet draws."""

from .nuts import (
    DIVERGENCE_THRESHOLD,
    DualAveraging,
    TreeStats,
    dual_average_adapt,
    find_reasonable_step_size,
    leapfrog,
    nuts_draw,
)
from .sampler import (
    SamplerConfig,
    Trace,
    chain_rng,
    dirichlet_direct_sample,
    load_trace_csv,
    run_chains,
    save_divergence_report,
    save_trace_csv,
    substream_rng,
)
from .targets import FunctionTarget, GaussianTarget, LogDensityTarget, TransformedTarget
from .transforms import Identity, Interval, Positive, Simplex, Transform

__all__ = [
    "DIVERGENCE_THRESHOLD",
    "DualAveraging",
    "FunctionTarget",
    "GaussianTarget",
    "Identity",
    "Interval",
    "LogDensityTarget",
    "Positive",
    "SamplerConfig",
    "Simplex",
    "Trace",
    "TransformedTarget",
    "Transform",
    "TreeStats",
    "chain_rng",
    "dirichlet_direct_sample",
    "dual_average_adapt",
    "find_reasonable_step_size",
    "leapfrog",
    "load_trace_csv",
    "nuts_draw",
    "run_chains",
    "save_divergence_report",
    "save_trace_csv",
    "substream_rng",
]
