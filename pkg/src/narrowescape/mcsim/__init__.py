"""Brownian-dynamics Monte Carlo for escape times, survival decay and leakage."""

from .engine import (
    EscapeStats,
    Extrapolated,
    FixedPoint,
    LeakageResult,
    SimConfig,
    SourceSurface,
    UniformVolume,
    estimate_net,
    estimate_survival_rate,
    extrapolate_fraction,
    extrapolate_rate,
    fit_survival_rate,
    halved,
    leakage_experiment,
    predicted_net,
    richardson_extrapolate,
    sample_first_passage,
    simulate,
)

__all__ = [
    "EscapeStats", "Extrapolated", "FixedPoint", "LeakageResult", "SimConfig", "SourceSurface",
    "UniformVolume", "estimate_net", "estimate_survival_rate", "extrapolate_fraction", "extrapolate_rate",
    "fit_survival_rate", "halved", "leakage_experiment", "predicted_net", "richardson_extrapolate",
    "sample_first_passage", "simulate",
]
