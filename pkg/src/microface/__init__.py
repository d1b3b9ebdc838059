"""Desk-scale face-embedding transformer trainer.

A miniature vision transformer for face verification, trained with
dominant-patch amplitude perturbation (Fourier-domain augmentation of the
patches the model leans on hardest) and entropy-guided hard-sample
weighting, on top of a self-contained float64 autodiff engine.
"""

from .data import DatasetManifest, ImageSample, VerificationPair
from .dpap import AugmentationConfig, PatchGrid
from .errors import (
    ContractError,
    DataError,
    MicrofaceError,
    NumericalAbort,
    ShapeError,
    UsageError,
)
from .model import Model, ModelConfig, TokenSet, load_checkpoint, save_checkpoint
from .tensor import Tensor, backward, no_grad
from .train import TrainRecord, TrainResult, TrainSettings, train_model

__version__ = "0.1.0"

__all__ = [
    "AugmentationConfig",
    "ContractError",
    "DataError",
    "DatasetManifest",
    "ImageSample",
    "MicrofaceError",
    "Model",
    "ModelConfig",
    "NumericalAbort",
    "PatchGrid",
    "ShapeError",
    "Tensor",
    "TokenSet",
    "TrainRecord",
    "TrainResult",
    "TrainSettings",
    "UsageError",
    "VerificationPair",
    "backward",
    "load_checkpoint",
    "no_grad",
    "save_checkpoint",
    "train_model",
    "__version__",
]
