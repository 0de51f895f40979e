"""Toy trainer for hypothesis generators: supervised pretraining plus PPO.

Talks to the reasoning engine only through its published surfaces: the
sampled data directory, the NDJSON reward socket, and the ``kgabduce``
command line.
"""

from .data import Pair, Vocab, load_pairs, load_vocab
from .errors import (
    DataError,
    DivergedError,
    EnvConnectionError,
    TrainerError,
    VocabularyMismatchError,
)
from .models import ModelConfig, build_model, full_config, load_checkpoint, save_checkpoint, toy_config
from .ppo import PpoConfig, ppo_finetune
from .supervised import token_accuracy, train_supervised

__all__ = [
    "DataError",
    "DivergedError",
    "EnvConnectionError",
    "ModelConfig",
    "Pair",
    "PpoConfig",
    "TrainerError",
    "Vocab",
    "VocabularyMismatchError",
    "build_model",
    "full_config",
    "load_checkpoint",
    "load_pairs",
    "load_vocab",
    "ppo_finetune",
    "save_checkpoint",
    "token_accuracy",
    "toy_config",
    "train_supervised",
]

__version__ = "0.1.0"
