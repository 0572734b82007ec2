"""Run configuration: one YAML file drives the whole pipeline.

Sections mirror the pipeline stages::

    dataset:            # file paths, UCR text format
      train: data/train.tsv
      test: data/test.tsv
      external: data/external.tsv
      normalize: true
    model:
      architecture: inception_time
      seed: 0
      # remaining keys go to the architecture constructor, e.g.
      branch_filters: 8
    trigger:
      kind: fixed_patch # patch_len defaults to 10% of the input length
      amplitude: 1.0
      position: end
    attack: {}          # AttackConfig fields; "lambda" maps to the loss weight
    defense: {}         # DefenseConfig fields + poison_fraction for the scenario
    benign:
      epochs: 300
      learning_rate: 1.0e-3
      batch_size: 16
    output_dir: runs/example

Every section is optional at load time; each subcommand checks for what
it needs. Field errors carry the dotted path of the offending key.
"""

from __future__ import annotations

import inspect
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .attack import AttackConfig
from .defense import DefenseConfig
from .errors import ConfigError, InvalidArgument
from .models import ARCHITECTURES
from .triggers import TRIGGER_KINDS, TriggerSpec, default_patch_len

_DATASET_KEYS = {"train", "test", "external", "normalize"}
_TRIGGER_KEYS = {
    "kind", "amplitude", "wavelength", "patch_len", "position", "seed",
    "allow_custom_wavelength",
}
_BENIGN_KEYS = {"epochs", "learning_rate", "batch_size"}
_TOP_KEYS = {"dataset", "model", "trigger", "attack", "defense", "benign", "output_dir"}


@dataclass(frozen=True)
class BenignConfig:
    """Supervised-training settings for producing the victim model."""

    epochs: int = 300
    learning_rate: float = 1e-3
    batch_size: int = 16

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidArgument(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise InvalidArgument(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise InvalidArgument(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class RunConfig:
    """Validated contents of one run configuration file."""

    train_path: Path | None = None
    test_path: Path | None = None
    external_path: Path | None = None
    normalize: bool = True
    architecture: str | None = None
    model_seed: int = 0
    model_config: dict = field(default_factory=dict)
    trigger_params: dict | None = None
    attack: AttackConfig = field(default_factory=AttackConfig)
    defense: DefenseConfig = field(default_factory=DefenseConfig)
    poison_fraction: float = 0.10
    benign: BenignConfig = field(default_factory=BenignConfig)
    output_dir: Path = Path("runs")

    def build_trigger(self, series_length: int) -> TriggerSpec:
        """Materialize the trigger for a known input length.

        ``patch_len`` defaults to 10% of the length when the config omits
        it for a patch trigger.
        """
        if self.trigger_params is None:
            raise InvalidArgument("config has no trigger section")
        params = dict(self.trigger_params)
        if params.get("kind") in ("fixed_patch", "random_patch"):
            params.setdefault("patch_len", default_patch_len(series_length))
        return TriggerSpec.from_dict(params)

    def with_seed(self, seed: int) -> "RunConfig":
        """Copy with every stage seed overridden (the --seed flag)."""
        return replace(
            self,
            model_seed=seed,
            attack=replace(self.attack, seed=seed),
            defense=replace(self.defense, seed=seed),
        )


def _require_mapping(value, where: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(where, f"expected a mapping, got {type(value).__name__}")
    return value


def _dataset_path(section: dict, key: str, base: Path) -> Path | None:
    if key not in section or section[key] is None:
        return None
    p = Path(section[key])
    if not p.is_absolute():
        p = base / p
    if not p.is_file():
        raise ConfigError(f"dataset.{key}", f"file not found: {p}")
    return p


def _model_section(section: dict) -> tuple[str, int, dict]:
    if "architecture" not in section:
        raise ConfigError("model.architecture", "required")
    architecture = section["architecture"]
    if architecture not in ARCHITECTURES:
        raise ConfigError(
            "model.architecture",
            f"unknown architecture {architecture!r}; "
            f"choose from {sorted(ARCHITECTURES)}",
        )
    seed = section.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("model.seed", f"expected an integer, got {seed!r}")
    extras = {k: v for k, v in section.items() if k not in ("architecture", "seed")}
    allowed = set(inspect.signature(ARCHITECTURES[architecture]).parameters)
    allowed -= {"num_classes", "input_length"}
    for key in extras:
        if key not in allowed:
            raise ConfigError(
                f"model.{key}",
                f"not a parameter of {architecture}; allowed: {sorted(allowed)}",
            )
    return architecture, seed, extras


def load_run_config(path) -> RunConfig:
    """Parse and validate a YAML run configuration.

    Relative dataset paths are resolved against the config file's
    directory. Raises ConfigError with a dotted field path on any
    malformed or unknown entry.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"invalid YAML: {exc}") from None
    raw = _require_mapping(raw, "config")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown section")
    base = path.parent
    cfg = RunConfig()

    dataset = _require_mapping(raw.get("dataset"), "dataset")
    for key in dataset:
        if key not in _DATASET_KEYS:
            raise ConfigError(f"dataset.{key}", "unknown key")
    cfg.train_path = _dataset_path(dataset, "train", base)
    cfg.test_path = _dataset_path(dataset, "test", base)
    cfg.external_path = _dataset_path(dataset, "external", base)
    normalize = dataset.get("normalize", True)
    if not isinstance(normalize, bool):
        raise ConfigError("dataset.normalize", f"expected a boolean, got {normalize!r}")
    cfg.normalize = normalize

    if "model" in raw:
        section = _require_mapping(raw["model"], "model")
        cfg.architecture, cfg.model_seed, cfg.model_config = _model_section(section)

    if "trigger" in raw:
        section = _require_mapping(raw["trigger"], "trigger")
        for key in section:
            if key not in _TRIGGER_KEYS:
                raise ConfigError(f"trigger.{key}", "unknown key")
        if "kind" not in section:
            raise ConfigError("trigger.kind", "required")
        if section["kind"] not in TRIGGER_KINDS:
            raise ConfigError(
                "trigger.kind",
                f"unknown kind {section['kind']!r}; choose from {TRIGGER_KINDS}",
            )
        cfg.trigger_params = dict(section)

    if "attack" in raw:
        section = _require_mapping(raw["attack"], "attack")
        try:
            cfg.attack = AttackConfig.from_dict(section)
        except (InvalidArgument, TypeError) as exc:
            raise ConfigError("attack", str(exc)) from None

    if "defense" in raw:
        section = dict(_require_mapping(raw["defense"], "defense"))
        fraction = section.pop("poison_fraction", cfg.poison_fraction)
        if not isinstance(fraction, (int, float)) or not 0 < fraction < 1:
            raise ConfigError(
                "defense.poison_fraction", f"expected a fraction in (0, 1), got {fraction!r}"
            )
        cfg.poison_fraction = float(fraction)
        try:
            cfg.defense = DefenseConfig.from_dict(section)
        except (InvalidArgument, TypeError) as exc:
            raise ConfigError("defense", str(exc)) from None

    if "benign" in raw:
        section = _require_mapping(raw["benign"], "benign")
        for key in section:
            if key not in _BENIGN_KEYS:
                raise ConfigError(f"benign.{key}", "unknown key")
        try:
            cfg.benign = BenignConfig(**section)
        except (InvalidArgument, TypeError) as exc:
            raise ConfigError("benign", str(exc)) from None

    if "output_dir" in raw:
        out = raw["output_dir"]
        if not isinstance(out, str) or not out:
            raise ConfigError("output_dir", f"expected a non-empty string, got {out!r}")
        out_path = Path(out)
        cfg.output_dir = out_path if out_path.is_absolute() else base / out_path

    return cfg
