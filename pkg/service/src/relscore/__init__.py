"""Masked-language-model relation classifier and batch scoring service."""

from .data import LabeledSample, load_samples
from .model import CLASS_NAMES, MaskedRelationClassifier, ModelConfig
from .serve import ModelRuntime, create_app
from .tokenizer import EncodedStatement, TokenizerError, WordTokenizer
from .train import TrainResult, TrainSettings, train_classifier

__version__ = "0.1.0"

__all__ = [
    "CLASS_NAMES",
    "EncodedStatement",
    "LabeledSample",
    "MaskedRelationClassifier",
    "ModelConfig",
    "ModelRuntime",
    "TokenizerError",
    "TrainResult",
    "TrainSettings",
    "WordTokenizer",
    "create_app",
    "load_samples",
    "train_classifier",
]
