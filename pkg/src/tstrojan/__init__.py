"""Trojaning and defending time-series classifiers without their training data."""

__version__ = "0.1.0"

from .attack import (
    AttackConfig,
    AttackResult,
    SynthesisRecord,
    load_synthesis_archive,
    records_from_raw,
    run_attack,
    save_synthesis_archive,
    synthesize_pseudo_dataset,
    targeted_pgd,
    trojan_train,
)
from .data import (
    LabeledSeries,
    Provenance,
    SeriesDataset,
    load_ucr,
    resize_dataset,
    resize_series,
    save_ucr,
    znormalize,
)
from .defense import (
    DefenseConfig,
    IsolationResult,
    isolate,
    run_defense,
    score_samples,
    unlearn,
    write_isolation_csv,
)
from .errors import (
    CheckpointError,
    ConfigError,
    DefenseError,
    InvalidArgument,
    InvalidDataset,
    ParseError,
    TrainingError,
)
from .metrics import (
    EvalReport,
    attack_success_rate,
    clean_accuracy,
    evaluate_model,
    export_features,
    norm_difference_matrix,
    per_class_accuracy,
    write_norm_diff_csv,
)
from .models import (
    ARCHITECTURES,
    ActivationProbe,
    ModelHandle,
    build_model,
    checkpoints_bitwise_equal,
    load_checkpoint,
    save_checkpoint,
)
from .training import TrainResult, train_benign
from .triggers import (
    TriggerSpec,
    apply_trigger,
    apply_values,
    default_patch_len,
    poison_dataset,
    poison_fraction,
)
from .config import BenignConfig, RunConfig, load_run_config

__all__ = [
    "ARCHITECTURES",
    "ActivationProbe",
    "AttackConfig",
    "AttackResult",
    "BenignConfig",
    "CheckpointError",
    "ConfigError",
    "DefenseConfig",
    "DefenseError",
    "EvalReport",
    "InvalidArgument",
    "InvalidDataset",
    "IsolationResult",
    "LabeledSeries",
    "ModelHandle",
    "ParseError",
    "Provenance",
    "RunConfig",
    "SeriesDataset",
    "SynthesisRecord",
    "TrainResult",
    "TrainingError",
    "TriggerSpec",
    "apply_trigger",
    "apply_values",
    "attack_success_rate",
    "build_model",
    "checkpoints_bitwise_equal",
    "clean_accuracy",
    "default_patch_len",
    "evaluate_model",
    "export_features",
    "isolate",
    "load_checkpoint",
    "load_run_config",
    "load_synthesis_archive",
    "load_ucr",
    "norm_difference_matrix",
    "per_class_accuracy",
    "poison_dataset",
    "poison_fraction",
    "records_from_raw",
    "resize_dataset",
    "resize_series",
    "run_attack",
    "run_defense",
    "save_checkpoint",
    "save_synthesis_archive",
    "save_ucr",
    "score_samples",
    "synthesize_pseudo_dataset",
    "targeted_pgd",
    "train_benign",
    "trojan_train",
    "unlearn",
    "write_isolation_csv",
    "write_norm_diff_csv",
    "znormalize",
]
