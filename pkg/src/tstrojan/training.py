"""Supervised training of benign reference models.

The attack assumes a pre-trained victim; this is where one comes from.
Plain cross-entropy training with a seeded shuffle, tracking validation
accuracy per epoch and keeping both the best and the final model.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .data import SeriesDataset
from .errors import InvalidArgument, TrainingError
from .metrics import clean_accuracy
from .models import ModelHandle, build_model, save_checkpoint

logger = logging.getLogger(__name__)


@dataclass
class TrainResult:
    best: ModelHandle
    last: ModelHandle
    best_accuracy: float
    best_epoch: int
    history: list[float]
    best_path: Path | None = None
    last_path: Path | None = None


def train_benign(
    architecture: str,
    d_train: SeriesDataset,
    d_test: SeriesDataset,
    epochs: int,
    learning_rate: float = 1e-4,
    seed: int = 0,
    batch_size: int = 16,
    model_config: dict | None = None,
    out_dir=None,
    log_every: int = 0,
) -> TrainResult:
    """Train a classifier from scratch and keep best + last checkpoints.

    The best model is the one with the highest validation accuracy,
    latest epoch winning ties (at a plateau the longer-trained model is
    the more confident one). When ``out_dir`` is given, it is saved as
    ``benign_best.ckpt`` next to ``benign_last.ckpt``.
    """
    if len(d_train) == 0:
        raise InvalidArgument("training set is empty")
    if epochs < 1:
        raise InvalidArgument(f"epochs must be >= 1, got {epochs}")
    if d_train.series_length != d_test.series_length:
        raise InvalidArgument(
            f"train length {d_train.series_length} != test length "
            f"{d_test.series_length}"
        )
    m = build_model(
        architecture,
        num_classes=d_train.num_classes,
        input_length=d_train.series_length,
        seed=seed,
        **(model_config or {}),
    )
    x = torch.as_tensor(d_train.values_matrix(np.float32), dtype=m.dtype)
    y = torch.as_tensor(d_train.labels_array())
    optimizer = torch.optim.Adam(m.trainable_parameters(), lr=learning_rate)
    # Dropout draws from the global torch RNG; pin it or reruns diverge.
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)

    best: ModelHandle | None = None
    best_acc = -1.0
    best_epoch = -1
    history: list[float] = []
    n = len(d_train)
    for epoch in range(epochs):
        m.set_training(True)
        perm = rng.permutation(n)
        for lo in range(0, n, batch_size):
            idx = torch.as_tensor(perm[lo : lo + batch_size])
            loss = F.cross_entropy(m.net(x[idx].unsqueeze(1)), y[idx])
            if not torch.isfinite(loss):
                raise TrainingError("loss is not finite", epoch=epoch)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        m.set_training(False)
        acc = clean_accuracy(m, d_test)
        history.append(acc)
        if acc >= best_acc:
            best_acc = acc
            best_epoch = epoch
            best = m.clone()
        if log_every and (epoch + 1) % log_every == 0:
            logger.info("epoch %d: val accuracy %.4f", epoch + 1, acc)

    result = TrainResult(
        best=best,
        last=m,
        best_accuracy=best_acc,
        best_epoch=best_epoch,
        history=history,
    )
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        result.best_path = out_dir / "benign_best.ckpt"
        result.last_path = out_dir / "benign_last.ckpt"
        save_checkpoint(result.best, result.best_path)
        save_checkpoint(result.last, result.last_path)
    return result
