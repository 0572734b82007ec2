"""Victim architectures and their instrumentation."""

from __future__ import annotations

import torch

from ..errors import InvalidArgument
from .handle import ActivationProbe, ModelHandle
from .checkpoint import (
    bn_statistics_from_file,
    checkpoints_bitwise_equal,
    load_checkpoint,
    save_checkpoint,
)
from .inception import InceptionNet
from .lstm_fcn import LstmFcnNet
from .macnn import MacnnNet
from .tcn import TcnNet

ARCHITECTURES = {
    "inception_time": InceptionNet,
    "lstm_fcn": LstmFcnNet,
    "tcn": TcnNet,
    "macnn": MacnnNet,
}

MIN_INPUT_LENGTH = 8


def build_model(
    architecture: str,
    num_classes: int,
    input_length: int,
    seed: int = 0,
    **model_config,
) -> ModelHandle:
    """Construct a deterministically initialized, instrumented classifier.

    ``model_config`` passes width overrides through to the architecture
    (for example ``branch_filters`` or ``channels``); the defaults are
    small enough for CPU training.
    """
    if architecture not in ARCHITECTURES:
        raise InvalidArgument(
            f"unknown architecture {architecture!r}; known: {sorted(ARCHITECTURES)}"
        )
    if num_classes < 2:
        raise InvalidArgument(f"need at least 2 classes, got {num_classes}")
    if input_length < MIN_INPUT_LENGTH:
        raise InvalidArgument(
            f"input_length must be >= {MIN_INPUT_LENGTH}, got {input_length}"
        )
    torch.manual_seed(seed)
    net = ARCHITECTURES[architecture](
        num_classes=num_classes, input_length=input_length, **model_config
    )
    return ModelHandle(
        net,
        architecture=architecture,
        num_classes=num_classes,
        input_length=input_length,
        seed=seed,
        model_config=model_config,
    )


__all__ = [
    "ARCHITECTURES",
    "ActivationProbe",
    "ModelHandle",
    "bn_statistics_from_file",
    "build_model",
    "checkpoints_bitwise_equal",
    "load_checkpoint",
    "save_checkpoint",
]
