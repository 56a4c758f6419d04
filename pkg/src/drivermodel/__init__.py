"""Driver-behaviour modelling under a speed advisory.

A three-mode driver ODE (EDM) with genetic-algorithm calibration, a numpy
LSTM encoder-decoder forecaster (LSTMED), synthetic driver generation and
the tooling to compare the two predictors on held-out drivers.
"""

from .edm import EdmParams, ReferenceProfile, generate_reference, replay, simulate_edm
from .evalcmp import ComparisonRow, comparison_table, evaluate_edm, evaluate_lstmed, rmse
from .gacal import CalibrationResult, EdmCalibrator, GaConfig, calibrate
from .scenario import RouteMap, StopKind, StopPoint, TrafficLight, default_route
from .seqnet import LstmEdConfig, LstmEdForecaster, LstmEdModel, TrainConfig, train
from .synthdrive import (FeatureScaler, NoiseConfig, NormStats, WindowConfig, WindowedDataset,
                         sample_driver_params, simulate_human, window_dataset)
from .trace import DriveTrace

__version__ = "0.1.0"

__all__ = [
    "ComparisonRow", "CalibrationResult", "DriveTrace", "EdmCalibrator", "EdmParams", "FeatureScaler",
    "GaConfig", "LstmEdConfig", "LstmEdForecaster", "LstmEdModel", "NoiseConfig", "NormStats",
    "ReferenceProfile", "RouteMap", "StopKind", "StopPoint", "TrafficLight", "TrainConfig",
    "WindowConfig", "WindowedDataset", "calibrate", "comparison_table", "default_route", "evaluate_edm",
    "evaluate_lstmed", "generate_reference", "replay", "rmse", "sample_driver_params", "simulate_edm",
    "simulate_human", "train", "window_dataset",
]
