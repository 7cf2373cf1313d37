"""Robust cepstral discriminant analysis for replicated stationary time series."""

from .cepstral import (ArmaSpec, CepstraSet, CepstralVector,
                       cepstra_decay_check, cepstra_from_json,
                       cepstra_from_replicates, cepstra_to_csv,
                       cepstra_to_json, decay_envelope, estimate_cepstra,
                       read_cepstra_csv, theoretical_cepstra,
                       theoretical_log_spectrum, write_cepstra_csv)
from .clda import (ConfusionMatrix, DiscriminantModel, MomentSummary,
                   classify, compute_moments, confusion_from_csv,
                   confusion_from_json, confusion_to_csv, confusion_to_json,
                   evaluate, fit, loo_rate, model_from_json, model_to_json,
                   predict_labels, project, select_L)
from .core import (ContaminationConfig, Replicate, ReplicateSet, contaminate,
                   detrend, median_sd_filter, read_series, read_series_long,
                   read_series_wide, sample_autocovariance, write_series_long,
                   write_series_wide)
from .errors import (CepdiscError, ConditioningError, ConfigurationError,
                     ConvergenceError, DomainError, InsufficientDataError,
                     NumericalError, ParseError)
from .sim import (McResult, McScenario, PopulationLaw, benchmark_laws,
                  draw_population_params, mc_result_rows, mc_result_to_json,
                  run_mc, scenario_from_file, scenario_from_mapping,
                  simulate_arma)
from .spectral import (EstimatorSpec, FrequencyGrid, HuberConfig,
                       SpectralEstimate, TaperBank, estimate_spectrum,
                       huber_psi, m_harmonic_regression, m_periodogram,
                       multitaper_m_periodogram, multitaper_periodogram,
                       periodogram, sine_tapers)

__version__ = "0.1.0"

__all__ = [
    "ArmaSpec", "CepdiscError", "CepstraSet", "CepstralVector",
    "ConditioningError", "ConfigurationError", "ConfusionMatrix",
    "ContaminationConfig", "ConvergenceError", "DiscriminantModel",
    "DomainError", "EstimatorSpec", "FrequencyGrid", "HuberConfig",
    "InsufficientDataError", "McResult", "McScenario", "MomentSummary",
    "NumericalError", "ParseError", "PopulationLaw", "Replicate",
    "ReplicateSet", "SpectralEstimate", "TaperBank", "benchmark_laws",
    "cepstra_decay_check", "cepstra_from_json", "cepstra_from_replicates",
    "cepstra_to_csv", "cepstra_to_json", "classify", "compute_moments",
    "confusion_from_csv", "confusion_from_json", "confusion_to_csv",
    "confusion_to_json", "contaminate", "decay_envelope",
    "detrend", "draw_population_params", "estimate_cepstra",
    "estimate_spectrum", "evaluate", "fit", "huber_psi", "loo_rate",
    "m_harmonic_regression", "m_periodogram", "mc_result_rows",
    "mc_result_to_json", "median_sd_filter", "model_from_json",
    "model_to_json", "multitaper_m_periodogram", "multitaper_periodogram",
    "periodogram", "predict_labels", "project", "read_cepstra_csv",
    "read_series", "read_series_long", "read_series_wide", "run_mc",
    "sample_autocovariance", "scenario_from_file", "scenario_from_mapping",
    "select_L", "simulate_arma", "sine_tapers", "theoretical_cepstra",
    "theoretical_log_spectrum", "write_cepstra_csv", "write_series_long",
    "write_series_wide",
]
