"""Toy decoder-only transformer trained in-context on prompt-matrix
dataset files; predictions are written in the evaluation harness's
prediction-file format."""

from .data import ContextDataset, load_dataset, target_positions
from .model import ColumnTransformer, TrainConfig, build_model
from .predict import predict, predictions_document, write_predictions
from .train import TrainingDiverged, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"
