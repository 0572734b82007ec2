"""Data-free trojaning of a pre-trained classifier.

The attacker never sees the victim's training data. Instead:

1. An arbitrary external dataset is resized to the victim's input length
   and pushed toward every class of the victim with targeted,
   unconstrained PGD, yielding a pseudo-dataset that covers the class
   landscape. The benign model's logits on each synthesized sample are
   stored alongside it.
2. Starting from the benign parameters, the model is fine-tuned on
   paired batches: the synthesized samples are regressed onto their
   stored logits (keeping the decision boundary in place), while
   triggered copies are cross-entropy-trained toward the target class.
   BatchNorm layers stay frozen so the foreign data distribution cannot
   shift the normalization statistics.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .data import SeriesDataset, resize_dataset
from .errors import InvalidArgument, InvalidDataset, TrainingError
from .models import ModelHandle, load_checkpoint, save_checkpoint
from .triggers import TriggerSpec, apply_values

OPTIMIZERS = ("adam",)


@dataclass(frozen=True)
class AttackConfig:
    """Hyperparameters of synthesis and backdoor training.

    The defaults are the reference operating point: 50 unconstrained PGD
    steps of size 0.01, loss trade-off 1, 1000 epochs at learning rate
    1e-4 with Adam. The three ablation flags switch off BatchNorm
    freezing, logits alignment (falling back to hard-label cross-entropy
    on the synthesized samples), and adversarial synthesis (training on
    the raw external data instead).
    """

    pgd_steps: int = 50
    pgd_step_size: float = 0.01
    lam: float = 1.0
    epochs: int = 1000
    learning_rate: float = 1e-4
    target_class: int = 0
    optimizer: str = "adam"
    keep_failed_adversarials: bool = False
    bn_freeze: bool = True
    logits_alignment: bool = True
    use_adv_synthesis: bool = True
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.pgd_steps < 0:
            raise InvalidArgument(f"pgd_steps must be >= 0, got {self.pgd_steps}")
        if self.pgd_step_size <= 0:
            raise InvalidArgument(
                f"pgd_step_size must be > 0, got {self.pgd_step_size}"
            )
        if self.target_class < 0:
            raise InvalidArgument(
                f"target_class must be >= 0, got {self.target_class}"
            )
        if self.learning_rate <= 0:
            raise InvalidArgument(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.lam < 0:
            raise InvalidArgument(f"lambda must be >= 0, got {self.lam}")
        if self.epochs < 0:
            raise InvalidArgument(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidArgument(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer not in OPTIMIZERS:
            raise InvalidArgument(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["lambda"] = out.pop("lam")
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "AttackConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise InvalidArgument(f"unknown attack fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class SynthesisRecord:
    """One synthesized sample with the benign model's view of it."""

    x_adv: np.ndarray
    y_adv_logits: np.ndarray
    target_class: int
    attack_succeeded: bool

    def __post_init__(self):
        object.__setattr__(self, "x_adv", np.asarray(self.x_adv, dtype=np.float32))
        object.__setattr__(
            self, "y_adv_logits", np.asarray(self.y_adv_logits, dtype=np.float32)
        )
        succeeded = int(np.argmax(self.y_adv_logits)) == self.target_class
        if succeeded != self.attack_succeeded:
            raise InvalidArgument(
                "attack_succeeded flag inconsistent with stored logits"
            )


def _pgd_batch(
    m: ModelHandle, x: torch.Tensor, target: int, steps: int, step_size: float
) -> torch.Tensor:
    """Signed-gradient descent of CE toward ``target`` on a (B, L) batch."""
    m.set_training(False)
    target_vec = torch.full((x.shape[0],), target, dtype=torch.long)
    x = x.detach().clone()
    for _ in range(steps):
        x.requires_grad_(True)
        loss = F.cross_entropy(m.net(x.unsqueeze(1)), target_vec, reduction="sum")
        (grad,) = torch.autograd.grad(loss, x)
        x = (x - step_size * torch.sign(grad)).detach()
    return x


def targeted_pgd(
    m: ModelHandle, x, target: int, steps: int = 50, step_size: float = 0.01
) -> np.ndarray:
    """Drive one series toward ``target`` with unconstrained PGD.

    Each step moves every coordinate by ``step_size`` against the sign of
    the input gradient of the cross-entropy to the target class. There is
    no norm-ball projection; the walk is free.
    """
    if not 0 <= target < m.num_classes:
        raise InvalidArgument(f"target {target} outside [0, {m.num_classes})")
    if steps < 0:
        raise InvalidArgument(f"steps must be >= 0, got {steps}")
    arr = np.asarray(x)
    if arr.ndim != 1 or arr.shape[0] != m.input_length:
        raise InvalidArgument(
            f"expected series of length {m.input_length}, got shape {arr.shape}"
        )
    batch = torch.as_tensor(arr, dtype=m.dtype).unsqueeze(0)
    out = _pgd_batch(m, batch, target, steps, step_size)
    return out[0].cpu().numpy()


def synthesize_pseudo_dataset(
    m_benign: ModelHandle, d_ext: SeriesDataset, cfg: AttackConfig
) -> list[SynthesisRecord]:
    """Build the pseudo-dataset: every external sample, every class.

    For each series in ``d_ext`` and each class t of the victim, a PGD
    run targets t and the benign logits of the result are stored. Records
    are ordered by (sample index, class). Unless
    ``keep_failed_adversarials``, records whose final prediction is not t
    are dropped: the stored class id is only meaningful for samples the
    attack actually moved.
    """
    if len(d_ext) == 0:
        raise InvalidDataset("external dataset is empty")
    if d_ext.series_length != m_benign.input_length:
        raise InvalidArgument(
            f"external dataset has length {d_ext.series_length}, "
            f"model expects {m_benign.input_length}; resize it first"
        )
    num_classes = m_benign.num_classes
    x = torch.as_tensor(d_ext.values_matrix(np.float32), dtype=m_benign.dtype)
    per_class: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    for t in range(num_classes):
        x_adv = _pgd_batch(m_benign, x, t, cfg.pgd_steps, cfg.pgd_step_size)
        with torch.no_grad():
            logits = m_benign.net(x_adv.unsqueeze(1))
        preds = logits.argmax(dim=1).cpu().numpy()
        per_class.append((x_adv.cpu().numpy(), logits.cpu().numpy(), preds))

    records = []
    for i in range(len(d_ext)):
        for t in range(num_classes):
            x_adv, logits, preds = per_class[t]
            succeeded = bool(preds[i] == t)
            if succeeded or cfg.keep_failed_adversarials:
                records.append(
                    SynthesisRecord(
                        x_adv=x_adv[i],
                        y_adv_logits=logits[i],
                        target_class=t,
                        attack_succeeded=succeeded,
                    )
                )
    return records


def records_from_raw(m_benign: ModelHandle, d_ext: SeriesDataset) -> list[SynthesisRecord]:
    """Pseudo-dataset without adversarial synthesis: the raw external
    samples with the benign model's logits as alignment targets."""
    if len(d_ext) == 0:
        raise InvalidDataset("external dataset is empty")
    if d_ext.series_length != m_benign.input_length:
        raise InvalidArgument(
            f"external dataset has length {d_ext.series_length}, "
            f"model expects {m_benign.input_length}; resize it first"
        )
    values = d_ext.values_matrix(np.float32)
    logits = m_benign.forward_logits(values)
    return [
        SynthesisRecord(
            x_adv=values[i],
            y_adv_logits=logits[i],
            target_class=int(np.argmax(logits[i])),
            attack_succeeded=True,
        )
        for i in range(len(d_ext))
    ]


def _alignment_loss(
    logits_adv: torch.Tensor,
    stored_logits: torch.Tensor,
    stored_labels: torch.Tensor,
    logits_alignment: bool,
) -> torch.Tensor:
    if logits_alignment:
        # Mean over samples of the squared L2 distance between current
        # and stored logits.
        return ((logits_adv - stored_logits) ** 2).sum(dim=1).mean()
    return F.cross_entropy(logits_adv, stored_labels)


def trojan_batch_loss(
    m: ModelHandle,
    xb_adv: torch.Tensor,
    yb_logits: torch.Tensor,
    yb_labels: torch.Tensor,
    xb_bd: torch.Tensor,
    target: int,
    cfg: AttackConfig,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Loss of one paired batch: (total, alignment term, backdoor term)."""
    logits_adv = m.net(xb_adv.unsqueeze(1))
    logits_bd = m.net(xb_bd.unsqueeze(1))
    align = _alignment_loss(logits_adv, yb_logits, yb_labels, cfg.logits_alignment)
    target_vec = torch.full((xb_bd.shape[0],), target, dtype=torch.long)
    bd = F.cross_entropy(logits_bd, target_vec)
    return align + cfg.lam * bd, align, bd


def trojan_train(
    m_benign: ModelHandle,
    records: list[SynthesisRecord],
    trigger: TriggerSpec,
    cfg: AttackConfig,
) -> ModelHandle:
    """Embed the trigger into a copy of the benign model.

    Every epoch walks the records in a freshly shuffled order (seeded)
    and, per batch, pairs each synthesized sample with its triggered
    copy: the former is pulled toward its stored benign logits, the
    latter toward the target class. The model of the final epoch is
    returned; BatchNorm statistics are untouched when ``bn_freeze``.
    """
    if not records:
        raise InvalidArgument("records must be non-empty")
    if not 0 <= cfg.target_class < m_benign.num_classes:
        raise InvalidArgument(
            f"target class {cfg.target_class} outside [0, {m_benign.num_classes})"
        )
    x_adv = np.stack([r.x_adv for r in records])
    y_logits = np.stack([r.y_adv_logits for r in records])
    if y_logits.shape[1] != m_benign.num_classes:
        raise InvalidArgument(
            f"records carry {y_logits.shape[1]} logits, model has "
            f"{m_benign.num_classes} classes"
        )
    y_labels = np.array([int(np.argmax(r.y_adv_logits)) for r in records], dtype=np.int64)
    x_bd = apply_values(x_adv, trigger)

    m = m_benign.clone()
    m.set_bn_frozen(cfg.bn_freeze)
    x_adv_t = torch.as_tensor(x_adv, dtype=m.dtype)
    y_logits_t = torch.as_tensor(y_logits, dtype=m.dtype)
    y_labels_t = torch.as_tensor(y_labels)
    x_bd_t = torch.as_tensor(x_bd, dtype=m.dtype)

    optimizer = torch.optim.Adam(m.trainable_parameters(), lr=cfg.learning_rate)
    # Dropout draws from the global torch RNG; pin it or reruns diverge.
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    n = len(records)
    m.set_training(True)
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = torch.as_tensor(perm[lo : lo + cfg.batch_size])
            loss, _, _ = trojan_batch_loss(
                m,
                x_adv_t[idx],
                y_logits_t[idx],
                y_labels_t[idx],
                x_bd_t[idx],
                cfg.target_class,
                cfg,
            )
            if not torch.isfinite(loss):
                raise TrainingError("loss is not finite", epoch=epoch)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
    m.set_training(False)
    return m


def save_synthesis_archive(records: list[SynthesisRecord], path) -> None:
    """Columnar archive of the synthesized samples and their metadata."""
    np.savez(
        Path(path),
        x_adv=np.stack([r.x_adv for r in records]),
        y_adv_logits=np.stack([r.y_adv_logits for r in records]),
        target_class=np.array([r.target_class for r in records], dtype=np.int64),
        attack_succeeded=np.array([r.attack_succeeded for r in records], dtype=bool),
    )


def load_synthesis_archive(path) -> list[SynthesisRecord]:
    with np.load(Path(path)) as data:
        return [
            SynthesisRecord(
                x_adv=data["x_adv"][i],
                y_adv_logits=data["y_adv_logits"][i],
                target_class=int(data["target_class"][i]),
                attack_succeeded=bool(data["attack_succeeded"][i]),
            )
            for i in range(data["x_adv"].shape[0])
        ]


@dataclass
class AttackResult:
    trojaned: ModelHandle
    records: list[SynthesisRecord]
    checkpoint_path: Path | None = None
    archive_path: Path | None = None
    manifest_path: Path | None = None
    manifest: dict = field(default_factory=dict)


def run_attack(
    benign,
    d_ext: SeriesDataset,
    trigger: TriggerSpec,
    cfg: AttackConfig,
    out_dir=None,
) -> AttackResult:
    """Full pipeline: resize, synthesize, poison, train, save.

    ``benign`` may be a checkpoint path or a live handle. When
    ``out_dir`` is given, the trojaned checkpoint, the synthesis archive,
    and a manifest capturing every config field and seed are written
    there; a rerun from the same manifest reproduces the checkpoint
    bit for bit.
    """
    if isinstance(benign, (str, Path)):
        benign_path = str(benign)
        m_benign = load_checkpoint(benign)
    else:
        benign_path = None
        m_benign = benign

    if d_ext.series_length != m_benign.input_length:
        d_ext = resize_dataset(d_ext, m_benign.input_length)
    if cfg.use_adv_synthesis:
        records = synthesize_pseudo_dataset(m_benign, d_ext, cfg)
    else:
        records = records_from_raw(m_benign, d_ext)
    succeeded = sum(r.attack_succeeded for r in records)
    trojaned = trojan_train(m_benign, records, trigger, cfg)

    from . import __version__

    manifest = {
        "stage": "attack",
        "version": __version__,
        "benign_checkpoint": benign_path,
        "model": {
            "architecture": m_benign.architecture,
            "num_classes": m_benign.num_classes,
            "input_length": m_benign.input_length,
            "config": m_benign.model_config,
        },
        "external_dataset": {
            "name": d_ext.name,
            "num_samples": len(d_ext),
            "series_length": d_ext.series_length,
        },
        "trigger": trigger.to_dict(),
        "attack": cfg.to_dict(),
        "records": {"kept": len(records), "succeeded": int(succeeded)},
        "seeds": {"model_init": m_benign.seed, "shuffle": cfg.seed},
    }
    result = AttackResult(trojaned=trojaned, records=records, manifest=manifest)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        result.checkpoint_path = out_dir / "trojaned.ckpt"
        result.archive_path = out_dir / "synthesis.npz"
        result.manifest_path = out_dir / "attack_manifest.json"
        save_checkpoint(trojaned, result.checkpoint_path)
        save_synthesis_archive(records, result.archive_path)
        result.manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return result
