"""Evaluation metrics: clean accuracy, attack success rate, norm maps.

The attack success rate is computed over triggered copies of the test
samples whose true class differs from the target; counting true-target
samples would credit predictions that are correct anyway. The inclusive
variant is available via ``include_target`` for comparison.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import SeriesDataset
from .errors import InvalidArgument, InvalidDataset
from .models import ModelHandle
from .triggers import TriggerSpec, apply_values

EVAL_BATCH = 64


def _predict(m: ModelHandle, values: np.ndarray) -> np.ndarray:
    preds = np.empty(values.shape[0], dtype=np.int64)
    for lo in range(0, values.shape[0], EVAL_BATCH):
        logits = m.forward_logits(values[lo : lo + EVAL_BATCH])
        preds[lo : lo + logits.shape[0]] = np.argmax(logits, axis=1)
    return preds


def _check_lengths(m: ModelHandle, d: SeriesDataset) -> None:
    if d.series_length != m.input_length:
        raise InvalidArgument(
            f"dataset length {d.series_length} does not match model input "
            f"length {m.input_length}"
        )


def clean_accuracy(m: ModelHandle, d_test: SeriesDataset) -> float:
    """Fraction of test samples whose argmax logit equals the label."""
    if len(d_test) == 0:
        raise InvalidDataset("test set is empty")
    _check_lengths(m, d_test)
    preds = _predict(m, d_test.values_matrix(np.float32))
    return float(np.mean(preds == d_test.labels_array()))


def per_class_accuracy(m: ModelHandle, d_test: SeriesDataset) -> np.ndarray:
    """Accuracy per class id; NaN for classes absent from the test set.

    The class-frequency-weighted mean of the finite entries equals
    :func:`clean_accuracy`.
    """
    if len(d_test) == 0:
        raise InvalidDataset("test set is empty")
    _check_lengths(m, d_test)
    preds = _predict(m, d_test.values_matrix(np.float32))
    labels = d_test.labels_array()
    out = np.full(d_test.num_classes, np.nan)
    for c in range(d_test.num_classes):
        mask = labels == c
        if mask.any():
            out[c] = np.mean(preds[mask] == c)
    return out


def attack_success_rate(
    m: ModelHandle,
    d_test: SeriesDataset,
    trigger: TriggerSpec,
    k: int,
    include_target: bool = False,
) -> float:
    """Fraction of triggered test samples classified as the target class.

    Samples whose true class is already ``k`` are excluded from the
    denominator unless ``include_target``.
    """
    if len(d_test) == 0:
        raise InvalidDataset("test set is empty")
    _check_lengths(m, d_test)
    if not 0 <= k < d_test.num_classes:
        raise InvalidArgument(f"target {k} outside [0, {d_test.num_classes})")
    values = d_test.values_matrix(np.float32)
    labels = d_test.labels_array()
    if not include_target:
        mask = labels != k
        if not mask.any():
            raise InvalidDataset(f"every test sample has the target class {k}")
        values = values[mask]
    preds = _predict(m, apply_values(values, trigger))
    return float(np.mean(preds == k))


def norm_difference_matrix(
    m: ModelHandle,
    probe_layers,
    clean_set: SeriesDataset,
    bd_set: SeriesDataset,
) -> "OrderedDict[str, np.ndarray]":
    """Per-layer |mean channel norm on bd_set - mean channel norm on clean_set|.

    Rows are probe layers, entries are channels; this is the data behind
    the channel-response heatmaps.
    """
    if len(clean_set) == 0 or len(bd_set) == 0:
        raise InvalidDataset("both sample sets must be non-empty")
    _check_lengths(m, clean_set)
    _check_lengths(m, bd_set)
    layer_ids = tuple(probe_layers) if probe_layers else m.default_probe_layers()

    def mean_norms(d: SeriesDataset) -> "OrderedDict[str, np.ndarray]":
        values = d.values_matrix(np.float32)
        sums: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for lo in range(0, len(d), EVAL_BATCH):
            for layer, per_channel in m.channel_norms(
                values[lo : lo + EVAL_BATCH], layer_ids
            ).items():
                block = np.asarray(per_channel, dtype=np.float64).sum(axis=0)
                if layer in sums:
                    sums[layer] += block
                else:
                    sums[layer] = block
        for layer in sums:
            sums[layer] /= len(d)
        return sums

    clean_means = mean_norms(clean_set)
    bd_means = mean_norms(bd_set)
    return OrderedDict(
        (layer, np.abs(bd_means[layer] - clean_means[layer])) for layer in layer_ids
    )


def write_norm_diff_csv(norm_diff: "OrderedDict[str, np.ndarray]", path) -> None:
    """Long-format table (layer, channel, value); layers may differ in width."""
    with open(Path(path), "w") as fh:
        fh.write("layer,channel,value\n")
        for layer, values in norm_diff.items():
            for c, v in enumerate(values):
                fh.write(f"{layer},{c},{v:.8e}\n")


def export_features(m: ModelHandle, d: SeriesDataset, path) -> None:
    """Write penultimate features, one row per sample, for external embedding.

    Columns: index, label, provenance, then the feature vector.
    """
    _check_lengths(m, d)
    path = Path(path)
    try:
        with open(path, "w") as fh:
            header = ["index", "label", "provenance"] + [
                f"f{j}" for j in range(m.feature_dim)
            ]
            fh.write(",".join(header) + "\n")
            values = d.values_matrix(np.float32)
            for lo in range(0, len(d), EVAL_BATCH):
                feats = m.penultimate_features(values[lo : lo + EVAL_BATCH])
                for i in range(feats.shape[0]):
                    sample = d.samples[lo + i]
                    row = [str(lo + i), str(sample.label), sample.provenance.value]
                    row += [f"{v:.8e}" for v in feats[i]]
                    fh.write(",".join(row) + "\n")
    except OSError as exc:
        raise OSError(f"failed writing features to {path}: {exc}") from exc


@dataclass
class EvalReport:
    """Metrics of one evaluated checkpoint plus run metadata."""

    clean_accuracy: float
    per_class_accuracy: np.ndarray
    n_clean_eval: int
    attack_success_rate: float | None = None
    n_asr_eval: int = 0
    norm_diff: "OrderedDict[str, np.ndarray] | None" = None
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.clean_accuracy <= 1.0:
            raise InvalidArgument(f"clean_accuracy {self.clean_accuracy} outside [0, 1]")
        if self.attack_success_rate is not None and not (
            0.0 <= self.attack_success_rate <= 1.0
        ):
            raise InvalidArgument(
                f"attack_success_rate {self.attack_success_rate} outside [0, 1]"
            )
        self.per_class_accuracy = np.asarray(self.per_class_accuracy, dtype=np.float64)

    def to_dict(self) -> dict:
        per_class = [
            None if np.isnan(v) else float(v) for v in self.per_class_accuracy
        ]
        return {
            "clean_accuracy": self.clean_accuracy,
            "attack_success_rate": self.attack_success_rate,
            "per_class_accuracy": per_class,
            "n_clean_eval": self.n_clean_eval,
            "n_asr_eval": self.n_asr_eval,
            "manifest": self.manifest,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        per_class = np.array(
            [np.nan if v is None else v for v in d["per_class_accuracy"]],
            dtype=np.float64,
        )
        return cls(
            clean_accuracy=d["clean_accuracy"],
            per_class_accuracy=per_class,
            n_clean_eval=d["n_clean_eval"],
            attack_success_rate=d.get("attack_success_rate"),
            n_asr_eval=d.get("n_asr_eval", 0),
            manifest=d.get("manifest", {}),
        )


def evaluate_model(
    m: ModelHandle,
    d_test: SeriesDataset,
    trigger: TriggerSpec | None = None,
    target_class: int | None = None,
    include_target: bool = False,
    probe_layers=None,
    manifest: dict | None = None,
) -> EvalReport:
    """CA, per-class accuracy, and (when a trigger is given) ASR."""
    ca = clean_accuracy(m, d_test)
    per_class = per_class_accuracy(m, d_test)
    asr = None
    n_asr = 0
    norm_diff = None
    if trigger is not None:
        if target_class is None:
            raise InvalidArgument("target_class is required when a trigger is given")
        asr = attack_success_rate(m, d_test, trigger, target_class, include_target)
        labels = d_test.labels_array()
        n_asr = int(len(d_test) if include_target else np.sum(labels != target_class))
        if probe_layers is not None:
            from .triggers import poison_dataset

            bd_set = poison_dataset(d_test, trigger, target_class, relabel=False)
            norm_diff = norm_difference_matrix(m, probe_layers, d_test, bd_set)
    return EvalReport(
        clean_accuracy=ca,
        per_class_accuracy=per_class,
        n_clean_eval=len(d_test),
        attack_success_rate=asr,
        n_asr_eval=n_asr,
        norm_diff=norm_diff,
        manifest=manifest or {},
    )
