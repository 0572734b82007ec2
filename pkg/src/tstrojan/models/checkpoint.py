"""Self-describing checkpoint files.

A checkpoint stores a metadata header (architecture id, class count,
input length, freeze state, init seed, width overrides) next to the
named parameter tensors, so loading needs no outside information and a
save/load round trip reproduces forwards bit-exactly.
"""

from __future__ import annotations

from pathlib import Path

import torch

from ..errors import CheckpointError
from .handle import ModelHandle

FORMAT_VERSION = 1

_HEADER_FIELDS = (
    "format_version",
    "architecture",
    "num_classes",
    "input_length",
    "bn_frozen",
    "seed",
    "model_config",
)


def save_checkpoint(handle: ModelHandle, path) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "architecture": handle.architecture,
        "num_classes": handle.num_classes,
        "input_length": handle.input_length,
        "bn_frozen": handle.bn_frozen,
        "seed": handle.seed,
        "model_config": dict(handle.model_config),
        "state_dict": handle.net.state_dict(),
    }
    torch.save(payload, Path(path))


def _read_payload(path) -> dict:
    try:
        payload = torch.load(Path(path), map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from exc
    if not isinstance(payload, dict):
        raise CheckpointError(f"{path}: not a checkpoint container")
    missing = [f for f in _HEADER_FIELDS if f not in payload]
    if missing:
        raise CheckpointError(f"{path}: missing header fields {missing}")
    if payload["format_version"] != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {payload['format_version']} unsupported"
        )
    return payload


def load_checkpoint(
    path,
    expect_architecture: str | None = None,
    expect_num_classes: int | None = None,
    expect_input_length: int | None = None,
) -> ModelHandle:
    """Load a checkpoint, optionally checking it against expectations.

    Any mismatch between the stored header and the ``expect_*`` values,
    an unknown architecture, or state tensors inconsistent with the
    rebuilt network raises :class:`CheckpointError`.
    """
    from . import build_model

    payload = _read_payload(path)
    expectations = (
        ("architecture", expect_architecture),
        ("num_classes", expect_num_classes),
        ("input_length", expect_input_length),
    )
    for field, expected in expectations:
        if expected is not None and payload[field] != expected:
            raise CheckpointError(
                f"{path}: {field} is {payload[field]!r}, expected {expected!r}"
            )
    try:
        handle = build_model(
            payload["architecture"],
            payload["num_classes"],
            payload["input_length"],
            seed=payload["seed"],
            **payload["model_config"],
        )
        handle.net.load_state_dict(payload["state_dict"], strict=True)
    except CheckpointError:
        raise
    except Exception as exc:
        raise CheckpointError(f"{path}: state incompatible with header ({exc})") from exc
    handle.set_bn_frozen(payload["bn_frozen"])
    return handle


def bn_statistics_from_file(path) -> dict[str, torch.Tensor]:
    """BatchNorm running statistics stored in a checkpoint, by tensor name."""
    payload = _read_payload(path)
    return {
        name: tensor
        for name, tensor in payload["state_dict"].items()
        if name.endswith(("running_mean", "running_var", "num_batches_tracked"))
    }


def checkpoints_bitwise_equal(path_a, path_b) -> bool:
    """True when two checkpoints agree on header and every tensor, bit for bit."""
    a, b = _read_payload(path_a), _read_payload(path_b)
    for field in _HEADER_FIELDS:
        if a[field] != b[field]:
            return False
    sd_a, sd_b = a["state_dict"], b["state_dict"]
    if set(sd_a) != set(sd_b):
        return False
    for name, ta in sd_a.items():
        tb = sd_b[name]
        if ta.dtype != tb.dtype or ta.shape != tb.shape or not torch.equal(ta, tb):
            return False
    return True
