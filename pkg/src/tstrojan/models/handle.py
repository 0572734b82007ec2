"""Instrumented wrapper around a classifier network.

The handle owns everything the attack and defense need beyond a plain
forward pass: gradients with respect to the input, a freeze switch for
BatchNorm layers, per-channel activation norms at probe layers, and the
penultimate feature vector.
"""

from __future__ import annotations

import copy
from collections import OrderedDict

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import InvalidArgument

LOSS_KINDS = ("cross_entropy",)


class ModelHandle:
    """A classifier plus the instrumentation state attached to it.

    Parameters
    ----------
    net : nn.Module
        Network taking (B, 1, L) inputs and returning (B, K) logits.
        Architectures built by :func:`tstrojan.models.build_model` also
        expose ``forward_features`` and ordered ``probe_points``.
    architecture : str
        Architecture id recorded in checkpoints.
    num_classes, input_length : int
        Logits width K and expected series length L.
    seed : int
        Seed the parameters were initialized from.
    """

    def __init__(
        self,
        net: nn.Module,
        architecture: str,
        num_classes: int,
        input_length: int,
        seed: int = 0,
        bn_frozen: bool = False,
        model_config: dict | None = None,
    ):
        self.net = net
        self.architecture = architecture
        self.num_classes = num_classes
        self.input_length = input_length
        self.seed = seed
        self.model_config = dict(model_config or {})
        self.bn_frozen = False
        self.net.eval()
        if bn_frozen:
            self.set_bn_frozen(True)

    # ---- tensor plumbing -------------------------------------------------

    @property
    def dtype(self) -> torch.dtype:
        return next(self.net.parameters()).dtype

    def _to_batch(self, x) -> tuple[torch.Tensor, bool]:
        """Convert (L,) or (B, L) input to a (B, 1, L) tensor."""
        t = torch.as_tensor(np.asarray(x), dtype=self.dtype)
        single = t.ndim == 1
        if single:
            t = t.unsqueeze(0)
        if t.ndim != 2 or t.shape[-1] != self.input_length:
            raise InvalidArgument(
                f"expected series of length {self.input_length}, got shape {tuple(t.shape)}"
            )
        return t.unsqueeze(1), single

    # ---- forward / gradients ---------------------------------------------

    def forward_logits(self, x) -> np.ndarray:
        """Logits for one series (L,) -> (K,) or a batch (B, L) -> (B, K)."""
        batch, single = self._to_batch(x)
        self.set_training(False)
        with torch.no_grad():
            logits = self.net(batch)
        out = logits.cpu().numpy()
        return out[0] if single else out

    def input_gradient(
        self, x, loss_target: int, loss_kind: str = "cross_entropy"
    ) -> np.ndarray:
        """Gradient of the scalar loss at ``loss_target`` w.r.t. the input."""
        if loss_kind not in LOSS_KINDS:
            raise InvalidArgument(f"unknown loss kind {loss_kind!r}")
        if not 0 <= loss_target < self.num_classes:
            raise InvalidArgument(
                f"loss target {loss_target} outside [0, {self.num_classes})"
            )
        batch, single = self._to_batch(x)
        if not single:
            raise InvalidArgument("input_gradient takes a single series")
        self.set_training(False)
        batch = batch.requires_grad_(True)
        loss = F.cross_entropy(
            self.net(batch), torch.tensor([loss_target], dtype=torch.long)
        )
        (grad,) = torch.autograd.grad(loss, batch)
        return grad[0, 0].detach().cpu().numpy()

    def penultimate_features(self, x) -> np.ndarray:
        """Pre-classifier pooled representation, (D,) or (B, D)."""
        batch, single = self._to_batch(x)
        self.set_training(False)
        with torch.no_grad():
            feats = self.net.forward_features(batch)
        out = feats.cpu().numpy()
        return out[0] if single else out

    @property
    def feature_dim(self) -> int:
        return self.net.feature_dim

    # ---- BatchNorm freezing ----------------------------------------------

    def _bn_modules(self):
        return [m for m in self.net.modules() if isinstance(m, nn.BatchNorm1d)]

    def set_bn_frozen(self, frozen: bool) -> None:
        """Freeze or thaw every BatchNorm layer.

        Frozen means: forward always uses the stored running statistics,
        the statistics are never updated, and the affine scale/shift
        parameters drop out of :meth:`trainable_parameters`.
        """
        self.bn_frozen = bool(frozen)
        for bn in self._bn_modules():
            if bn.affine:
                bn.weight.requires_grad_(not frozen)
                bn.bias.requires_grad_(not frozen)
            if frozen:
                bn.eval()

    def set_training(self, training: bool) -> None:
        """Switch train/eval mode, keeping frozen BatchNorm in eval."""
        self.net.train(training)
        if training and self.bn_frozen:
            for bn in self._bn_modules():
                bn.eval()

    def trainable_parameters(self) -> list[torch.nn.Parameter]:
        return [p for p in self.net.parameters() if p.requires_grad]

    def bn_statistics(self) -> "OrderedDict[str, torch.Tensor]":
        """Snapshot of every BatchNorm running statistic, by module path."""
        stats = OrderedDict()
        for name, m in self.net.named_modules():
            if isinstance(m, nn.BatchNorm1d):
                stats[f"{name}.running_mean"] = m.running_mean.detach().clone()
                stats[f"{name}.running_var"] = m.running_var.detach().clone()
                stats[f"{name}.num_batches_tracked"] = m.num_batches_tracked.detach().clone()
        return stats

    # ---- activation probing ----------------------------------------------

    @property
    def feature_layer_ids(self) -> tuple[str, ...]:
        points = getattr(self.net, "probe_points", None)
        if not points:
            return ()
        return tuple(points.keys())

    def default_probe_layers(self) -> tuple[str, ...]:
        """The rear feature layers: the last two before the classifier."""
        ids = self.feature_layer_ids
        return ids[-2:] if len(ids) >= 2 else ids

    def channel_norms(self, x, layer_ids=None) -> "OrderedDict[str, np.ndarray]":
        """Per-channel L2 norms over time at each probed layer.

        For a single series the result maps layer id to a (C,) vector;
        for a batch, to a (B, C) matrix.
        """
        probe = ActivationProbe(self, layer_ids)
        batch, single = self._to_batch(x)
        captured = probe.capture(batch)
        out = OrderedDict()
        for layer_id, act in captured.items():
            norms = torch.linalg.vector_norm(act, dim=-1).cpu().numpy()
            out[layer_id] = norms[0] if single else norms
        return out

    def clone(self) -> "ModelHandle":
        """Independent deep copy, preserving parameters and freeze state."""
        twin = copy.deepcopy(self.net)
        return ModelHandle(
            twin,
            architecture=self.architecture,
            num_classes=self.num_classes,
            input_length=self.input_length,
            seed=self.seed,
            bn_frozen=self.bn_frozen,
            model_config=self.model_config,
        )


class ActivationProbe:
    """Captures per-layer activations for the last forward pass.

    Probe layers must be feature layers exposed by the architecture
    (``net.probe_points``); the capture order always follows depth.
    """

    def __init__(self, handle: ModelHandle, layer_ids=None):
        available = handle.feature_layer_ids
        if not available:
            raise InvalidArgument(
                f"architecture {handle.architecture!r} exposes no probe layers"
            )
        if layer_ids is None:
            layer_ids = handle.default_probe_layers()
        unknown = [l for l in layer_ids if l not in available]
        if unknown:
            raise InvalidArgument(
                f"unknown probe layers {unknown}; available: {list(available)}"
            )
        self.handle = handle
        self.layer_ids = tuple(l for l in available if l in set(layer_ids))
        self.capture_result: "OrderedDict[str, torch.Tensor]" = OrderedDict()

    def capture(self, batch: torch.Tensor) -> "OrderedDict[str, torch.Tensor]":
        """Run a forward pass and record (B, C, T) activations per layer."""
        points = self.handle.net.probe_points
        captured: dict[str, torch.Tensor] = {}
        hooks = []

        def make_hook(layer_id):
            def hook(_module, _inputs, output):
                captured[layer_id] = output.detach()

            return hook

        for layer_id in self.layer_ids:
            hooks.append(points[layer_id].register_forward_hook(make_hook(layer_id)))
        try:
            self.handle.set_training(False)
            with torch.no_grad():
                self.handle.net(batch)
        finally:
            for h in hooks:
                h.remove()
        self.capture_result = OrderedDict((l, captured[l]) for l in self.layer_ids)
        return self.capture_result
