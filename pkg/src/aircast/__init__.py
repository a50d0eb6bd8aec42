"""aircast: hierarchical two-level graph forecasting for station AQI series.

City-level and per-city station-level graphs with wind-aware edge weights
feed an LSTM encoder-decoder; everything trains end-to-end on a small
built-in reverse-mode autodiff engine.
"""

from .config import TrainConfig
from .data import NormStats, SampleWindow, StationRecord, TimeSeriesFrame
from .errors import AircastError, DataError, NumericalError, ShapeMismatch, ValidationError
from .graphs import GraphTopology
from .model import ForecastResult, ModelParams, forecast, train
from .tensor import Tape, Tensor

__version__ = "0.1.0"

__all__ = [
    "TrainConfig",
    "NormStats",
    "SampleWindow",
    "StationRecord",
    "TimeSeriesFrame",
    "AircastError",
    "DataError",
    "NumericalError",
    "ShapeMismatch",
    "ValidationError",
    "GraphTopology",
    "ForecastResult",
    "ModelParams",
    "forecast",
    "train",
    "Tape",
    "Tensor",
    "__version__",
]
