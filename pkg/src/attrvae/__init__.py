"""Attribute-regularized variational autoencoder toolkit.

Encodes named scalar attributes into designated latent dimensions via a
monotonicity-enforcing regularization loss, classifies samples from the latent
code, generates attribute-controlled images, renders gradient-based attention
maps, and scores disentanglement / interpretability / fidelity.
"""

from .dataio import AnnulusSpec, Dataset, Sample, generate_annulus_dataset, load_dataset, save_dataset
from .losses import AttributeMapping, LossBreakdown, LossWeights, Toggles
from .metrics import MetricsReport
from .model import AttrVae, ModelCheckpoint, ModelConfig, build_model
from .train import TrainConfig, evaluate_model, hyperparameter_sweep, split, train

__all__ = [
    "AnnulusSpec",
    "AttrVae",
    "AttributeMapping",
    "Dataset",
    "LossBreakdown",
    "LossWeights",
    "MetricsReport",
    "ModelCheckpoint",
    "ModelConfig",
    "Sample",
    "Toggles",
    "TrainConfig",
    "build_model",
    "evaluate_model",
    "generate_annulus_dataset",
    "hyperparameter_sweep",
    "load_dataset",
    "save_dataset",
    "split",
    "train",
]

__version__ = "0.1.0"
