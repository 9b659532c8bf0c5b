"""Capacity limits and asymptotic ensemble analysis."""
from .capacity import (InterferencePattern, outage_capacity, outage_capacity_single, qpsk_capacity,
                       region_random, shannon_interference_limit)
from .pexit import (ProtoNoiseVector, ThresholdCache, ThresholdResult, awgn_threshold, gain,
                    interfered_types, pexit_converges, pexit_interference_threshold,
                    pexit_noise_threshold, pexit_run, region_ldpc)
from .qde import MODELS as QDE_MODELS, Grid, GridSaturationError, qde_converges, qde_threshold

__all__ = [
    "InterferencePattern", "outage_capacity", "outage_capacity_single", "qpsk_capacity",
    "region_random", "shannon_interference_limit", "ProtoNoiseVector", "ThresholdCache",
    "ThresholdResult", "awgn_threshold", "gain", "interfered_types", "pexit_converges",
    "pexit_interference_threshold", "pexit_noise_threshold", "pexit_run", "region_ldpc",
    "QDE_MODELS", "Grid", "GridSaturationError", "qde_converges", "qde_threshold",
]
