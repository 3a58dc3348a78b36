"""Multivariate forecasting with a learned graph, on a small numpy autodiff core."""
from .checkpoint import load_checkpoint, save_checkpoint
from .config import DataConfig, RunConfig
from .data import Normalizer, RawSeries, WindowedDataset, load_csv, make_windows
from .estimator import MTGNNForecaster
from .exceptions import (CheckpointError, ConfigError, ContractError, DimensionError, LengthError,
                         MissingInputError, MtgnnError, ParseError, ReceptiveFieldError, TrainingError)
from .graph_conv import GCModule, MixHopLayer, normalize_adjacency
from .graph_learning import AdjacencyMatrix, GraphLearner
from .metrics import MetricReport, metrics
from .model import MtgnnConfig, MtgnnModel
from .synth import make_synthetic
from .temporal_conv import DilatedInceptionLayer, TCModule, receptive_field
from .tensor import Tensor, backward
from .training import TrainConfig, train

__version__ = "0.1.0"
