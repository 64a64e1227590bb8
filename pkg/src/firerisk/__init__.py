"""Wildfire risk from synthetic weather, imagery and ground sensing.

Pipeline: region LSTM forecasters and a CNN activity detector feed a small
meta network that outputs a per-tile fire probability.
"""

from .errors import (ArgumentError, ConfigError, ConsistencyError, DimensionError, FireRiskError,
                     FormatError, StateError, TrainingError)
from .ensemble import (EnsembleBundle, EnsembleConfig, TransferPlan, evaluate_bundle, predict,
                       scratch_baseline, train_ensemble, transfer)
from .metrics import MetricsReport, auc_roc, confusion, evaluate_scores, precision_recall_f1
from .rng import Rng
from .trainer import TrainConfig, TrainHistory, fit, oversample
from .world import (WorldConfig, WorldDataset, generate_world, load_dataset, save_dataset,
                    split_dataset, tile_entropy)

__version__ = "0.1.0"
