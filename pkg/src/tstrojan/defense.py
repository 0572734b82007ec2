"""Trigger removal by response-norm isolation and unlearning.

Triggered samples excite the rear feature layers of a trojaned model
far more than clean ones. The defense scores every sample by its
aggregate channel response norm, isolates the top r% as the suspected
backdoor set, and then fine-tunes with a negated, annealed
cross-entropy term on that set so the trigger association is erased
while clean behavior is retained.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .data import SeriesDataset
from .errors import DefenseError, InvalidArgument
from .models import ModelHandle

logger = logging.getLogger(__name__)

SCORE_BATCH = 64


@dataclass(frozen=True)
class DefenseConfig:
    """Hyperparameters of isolation and unlearning.

    Defaults follow the reference operating point: isolate the top 5%,
    anneal the penalty factor linearly from 10 to 1 over 20 epochs. The
    toxic-term gradient norm is clipped at 5.0; the negated term is
    otherwise unbounded below and can blow up the ascent.
    """

    r_percent: float = 5.0
    alpha_start: float = 10.0
    alpha_end: float = 1.0
    epochs: int = 20
    learning_rate: float = 1e-4
    probe_layers: tuple[str, ...] | None = None
    toxic_grad_clip: float = 5.0
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.r_percent < 100:
            raise InvalidArgument(f"r_percent must be in (0, 100), got {self.r_percent}")
        if not self.alpha_start >= self.alpha_end > 0:
            raise InvalidArgument(
                f"need alpha_start >= alpha_end > 0, got "
                f"{self.alpha_start} and {self.alpha_end}"
            )
        if self.epochs < 1:
            raise InvalidArgument(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise InvalidArgument(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.toxic_grad_clip <= 0:
            raise InvalidArgument(
                f"toxic_grad_clip must be > 0, got {self.toxic_grad_clip}"
            )
        if self.batch_size < 1:
            raise InvalidArgument(f"batch_size must be >= 1, got {self.batch_size}")
        if self.probe_layers is not None:
            object.__setattr__(self, "probe_layers", tuple(self.probe_layers))

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        if out["probe_layers"] is not None:
            out["probe_layers"] = list(out["probe_layers"])
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "DefenseConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise InvalidArgument(f"unknown defense fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class IsolationResult:
    """Partition of a dataset into suspected-toxic and clean subsets."""

    toxic: SeriesDataset
    clean: SeriesDataset
    scores: np.ndarray
    toxic_indices: np.ndarray
    clean_indices: np.ndarray


def alpha_schedule(cfg: DefenseConfig, epoch: int) -> float:
    """Penalty factor at ``epoch``: linear from alpha_start to alpha_end."""
    if cfg.epochs == 1:
        return cfg.alpha_start
    frac = epoch / (cfg.epochs - 1)
    return cfg.alpha_start + (cfg.alpha_end - cfg.alpha_start) * frac


def score_samples(
    m: ModelHandle, d: SeriesDataset, probe_layers=None
) -> np.ndarray:
    """Aggregate rear-layer response norm of every sample.

    For each probe layer the per-channel response norms form a vector;
    the sample's score is the sum over probe layers of that vector's L2
    norm. Defaults to the last two feature layers.
    """
    layer_ids = (
        m.default_probe_layers() if probe_layers is None else tuple(probe_layers)
    )
    values = d.values_matrix(np.float32)
    scores = np.zeros(len(d), dtype=np.float64)
    for lo in range(0, len(d), SCORE_BATCH):
        batch = values[lo : lo + SCORE_BATCH]
        norms = m.channel_norms(batch, layer_ids)
        for per_channel in norms.values():
            scores[lo : lo + batch.shape[0]] += np.linalg.norm(
                np.asarray(per_channel, dtype=np.float64), axis=-1
            )
    return scores


def isolate(scores, d: SeriesDataset, r_percent: float) -> IsolationResult:
    """Split off the top r% of samples by score as the suspected backdoor set.

    Samples are ranked by descending score with ties broken by original
    index ascending; the top ceil(r_percent * N / 100) go to the toxic
    side.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = len(d)
    if n < 1:
        raise InvalidArgument("dataset is empty")
    if scores.shape != (n,):
        raise InvalidArgument(
            f"scores shape {scores.shape} does not match dataset size {n}"
        )
    if not 0 < r_percent < 100:
        raise InvalidArgument(f"r_percent must be in (0, 100), got {r_percent}")
    # The small slack keeps ceil from overshooting when r*N/100 is an
    # exact integer that float arithmetic lands a hair above.
    n_toxic = min(n, math.ceil(r_percent * n / 100 - 1e-9))
    order = np.lexsort((np.arange(n), -scores))
    toxic_idx = np.sort(order[:n_toxic])
    clean_idx = np.sort(order[n_toxic:])
    return IsolationResult(
        toxic=d.subset(toxic_idx.tolist()),
        clean=d.subset(clean_idx.tolist()),
        scores=scores,
        toxic_indices=toxic_idx,
        clean_indices=clean_idx,
    )


def write_isolation_csv(iso: IsolationResult, d: SeriesDataset, path) -> None:
    """Per-sample audit table: index, score, partition, provenance."""
    toxic = set(iso.toxic_indices.tolist())
    with open(Path(path), "w") as fh:
        fh.write("index,score,partition,provenance\n")
        for i, sample in enumerate(d.samples):
            part = "toxic" if i in toxic else "clean"
            fh.write(f"{i},{iso.scores[i]:.8e},{part},{sample.provenance.value}\n")


def _clip_global_norm(grads, max_norm: float):
    """Rescale a gradient tuple so its global L2 norm is at most ``max_norm``."""
    total = torch.sqrt(sum((g * g).sum() for g in grads))
    if total > max_norm:
        scale = max_norm / total
        grads = tuple(g * scale for g in grads)
    return grads


def unlearn(
    m: ModelHandle, iso: IsolationResult, cfg: DefenseConfig
) -> ModelHandle:
    """Erase the trigger by fine-tuning against the isolated set.

    Each batch minimizes CE on clean samples minus alpha(epoch) times CE
    on toxic samples (their dataset-attached labels), with the toxic
    term's gradient clipped to ``toxic_grad_clip`` by global norm. The
    model of the final epoch is returned. An empty toxic set degrades to
    plain fine-tuning on the clean samples, with a warning.
    """
    sanitized = m.clone()
    # Ordinary fine-tuning: a BN freeze left over from whoever produced
    # the checkpoint does not bind the defender.
    sanitized.set_bn_frozen(False)
    n_clean = len(iso.clean)
    n_toxic = len(iso.toxic)
    if n_clean == 0:
        logger.warning("clean partition is empty; returning the model untrained")
        return sanitized
    if n_toxic == 0:
        logger.warning("toxic partition is empty; falling back to plain fine-tuning")

    x_clean = torch.as_tensor(iso.clean.values_matrix(np.float32), dtype=sanitized.dtype)
    y_clean = torch.as_tensor(iso.clean.labels_array())
    if n_toxic > 0:
        x_toxic = torch.as_tensor(
            iso.toxic.values_matrix(np.float32), dtype=sanitized.dtype
        )
        y_toxic = torch.as_tensor(iso.toxic.labels_array())

    params = list(sanitized.trainable_parameters())
    optimizer = torch.optim.Adam(params, lr=cfg.learning_rate)
    # Dropout draws from the global torch RNG; pin it or reruns diverge.
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    toxic_bs = min(cfg.batch_size, n_toxic) if n_toxic else 0

    sanitized.set_training(True)
    for epoch in range(cfg.epochs):
        alpha = alpha_schedule(cfg, epoch)
        perm = rng.permutation(n_clean)
        if n_toxic:
            toxic_perm = rng.permutation(n_toxic)
        for b, lo in enumerate(range(0, n_clean, cfg.batch_size)):
            idx = torch.as_tensor(perm[lo : lo + cfg.batch_size])
            loss_clean = F.cross_entropy(
                sanitized.net(x_clean[idx].unsqueeze(1)), y_clean[idx]
            )
            if n_toxic:
                # Cycle through the shuffled toxic set; it is far smaller
                # than the clean set.
                pos = np.arange(b * toxic_bs, (b + 1) * toxic_bs) % n_toxic
                tidx = torch.as_tensor(toxic_perm[pos])
                loss_toxic = F.cross_entropy(
                    sanitized.net(x_toxic[tidx].unsqueeze(1)), y_toxic[tidx]
                )
                total = loss_clean - alpha * loss_toxic
                if not torch.isfinite(total):
                    raise DefenseError(f"non-finite loss at epoch {epoch}")
                g_clean = torch.autograd.grad(loss_clean, params, retain_graph=False)
                g_toxic = torch.autograd.grad(alpha * loss_toxic, params)
                g_toxic = _clip_global_norm(g_toxic, cfg.toxic_grad_clip)
                optimizer.zero_grad()
                for p, gc, gt in zip(params, g_clean, g_toxic):
                    p.grad = gc - gt
            else:
                if not torch.isfinite(loss_clean):
                    raise DefenseError(f"non-finite loss at epoch {epoch}")
                optimizer.zero_grad()
                loss_clean.backward()
            optimizer.step()
    sanitized.set_training(False)
    return sanitized


def run_defense(
    m: ModelHandle, d: SeriesDataset, cfg: DefenseConfig
) -> tuple[ModelHandle, IsolationResult]:
    """Score, isolate, unlearn: the full defense pass."""
    scores = score_samples(m, d, cfg.probe_layers)
    iso = isolate(scores, d, cfg.r_percent)
    sanitized = unlearn(m, iso, cfg)
    return sanitized, iso
