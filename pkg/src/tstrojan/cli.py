"""Command-line pipeline driver.

Subcommands cover the full life cycle::

    tstrojan train-benign --config run.yaml        # victim model
    tstrojan synthesize   --config run.yaml        # pseudo-dataset only
    tstrojan attack       --config run.yaml        # trojaned checkpoint
    tstrojan defend       --config run.yaml        # sanitized checkpoint
    tstrojan evaluate     --config run.yaml --checkpoint out/trojaned.ckpt
    tstrojan report       --out out                # consolidate eval_*.json
    tstrojan ablate       --config run.yaml        # variant comparison

Exit codes: 0 on success, 2 on configuration errors (including unknown
subcommands), 1 on runtime failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import statistics
import sys
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .attack import (
    records_from_raw,
    run_attack,
    save_synthesis_archive,
    synthesize_pseudo_dataset,
    trojan_train,
)
from .config import RunConfig, load_run_config
from .data import Provenance, load_ucr, resize_dataset
from .defense import run_defense, write_isolation_csv
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
    evaluate_model,
    export_features,
    write_norm_diff_csv,
)
from .models import load_checkpoint, save_checkpoint
from .training import train_benign
from .triggers import poison_fraction

logger = logging.getLogger(__name__)

ABLATION_VARIANTS = (
    ("full", {}),
    ("no_bn_freeze", {"bn_freeze": False}),
    ("no_logits_alignment", {"logits_alignment": False}),
    ("no_adv_synthesis", {"use_adv_synthesis": False}),
)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_cfg(args) -> tuple[RunConfig, Path]:
    cfg = load_run_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    out = Path(args.out) if getattr(args, "out", None) else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def _require(value, field: str):
    if value is None:
        raise ConfigError(field, "required by this subcommand")
    return value


def _load_split(cfg: RunConfig, which: str):
    path = _require(getattr(cfg, f"{which}_path"), f"dataset.{which}")
    return load_ucr(path, normalize=cfg.normalize)


def cmd_train_benign(args) -> int:
    cfg, out = _load_cfg(args)
    _require(cfg.architecture, "model.architecture")
    d_train = _load_split(cfg, "train")
    d_test = _load_split(cfg, "test")
    result = train_benign(
        cfg.architecture,
        d_train,
        d_test,
        epochs=cfg.benign.epochs,
        learning_rate=cfg.benign.learning_rate,
        seed=cfg.model_seed,
        batch_size=cfg.benign.batch_size,
        model_config=cfg.model_config,
        out_dir=out,
    )
    _write_json(
        out / "benign_manifest.json",
        {
            "stage": "train-benign",
            "version": __version__,
            "dataset": {"train": d_train.name, "test": d_test.name,
                        "n_train": len(d_train), "n_test": len(d_test)},
            "model": {
                "architecture": cfg.architecture,
                "seed": cfg.model_seed,
                "config": cfg.model_config,
            },
            "benign": dataclasses.asdict(cfg.benign),
            "best_epoch": result.best_epoch,
            "best_accuracy": result.best_accuracy,
            "last_accuracy": result.history[-1],
        },
    )
    print(f"best val accuracy {result.best_accuracy:.4f} at epoch {result.best_epoch + 1}")
    print(f"last val accuracy {result.history[-1]:.4f} after {cfg.benign.epochs} epochs")
    print(f"saved {result.best_path} and {result.last_path}")
    return 0


def _benign_checkpoint(args, out: Path):
    path = Path(args.checkpoint) if args.checkpoint else out / "benign_best.ckpt"
    return load_checkpoint(path), path


def cmd_synthesize(args) -> int:
    cfg, out = _load_cfg(args)
    m, ckpt_path = _benign_checkpoint(args, out)
    d_ext = load_ucr(_require(cfg.external_path, "dataset.external"), normalize=cfg.normalize)
    if d_ext.series_length != m.input_length:
        d_ext = resize_dataset(d_ext, m.input_length)
    if cfg.attack.use_adv_synthesis:
        records = synthesize_pseudo_dataset(m, d_ext, cfg.attack)
    else:
        records = records_from_raw(m, d_ext)
    archive = out / "synthesis.npz"
    save_synthesis_archive(records, archive)
    succeeded = sum(r.attack_succeeded for r in records)
    _write_json(
        out / "synthesis_manifest.json",
        {
            "stage": "synthesize",
            "version": __version__,
            "benign_checkpoint": str(ckpt_path),
            "external_dataset": {"name": d_ext.name, "num_samples": len(d_ext),
                                 "series_length": d_ext.series_length},
            "attack": cfg.attack.to_dict(),
            "records": {"kept": len(records), "succeeded": int(succeeded)},
        },
    )
    print(f"kept {len(records)} records ({succeeded} successful) -> {archive}")
    return 0


def cmd_attack(args) -> int:
    cfg, out = _load_cfg(args)
    m, ckpt_path = _benign_checkpoint(args, out)
    d_ext = load_ucr(_require(cfg.external_path, "dataset.external"), normalize=cfg.normalize)
    trigger = cfg.build_trigger(m.input_length)
    result = run_attack(str(ckpt_path), d_ext, trigger, cfg.attack, out_dir=out)
    print(
        f"trojaned with {len(result.records)} records "
        f"(target class {cfg.attack.target_class}) -> {result.checkpoint_path}"
    )
    return 0


def cmd_defend(args) -> int:
    cfg, out = _load_cfg(args)
    ckpt_path = Path(args.checkpoint) if args.checkpoint else out / "trojaned.ckpt"
    m = load_checkpoint(ckpt_path)
    d_train = _load_split(cfg, "train")
    if d_train.series_length != m.input_length:
        d_train = resize_dataset(d_train, m.input_length)
    trigger = cfg.build_trigger(m.input_length)
    k = cfg.attack.target_class
    defense_set = poison_fraction(
        d_train, trigger, k, cfg.poison_fraction, seed=cfg.defense.seed
    )
    sanitized, iso = run_defense(m, defense_set, cfg.defense)
    save_checkpoint(sanitized, out / "sanitized.ckpt")
    write_isolation_csv(iso, defense_set, out / "isolation.csv")
    n_poisoned = sum(
        1 for s in defense_set.samples if s.provenance is Provenance.TRIGGERED
    )
    hit = sum(1 for s in iso.toxic.samples if s.provenance is Provenance.TRIGGERED)
    _write_json(
        out / "defend_manifest.json",
        {
            "stage": "defend",
            "version": __version__,
            "checkpoint": str(ckpt_path),
            "defense": cfg.defense.to_dict(),
            "poison_fraction": cfg.poison_fraction,
            "target_class": k,
            "counts": {
                "defense_set": len(defense_set),
                "poisoned": n_poisoned,
                "isolated": len(iso.toxic),
                "isolated_triggered": hit,
            },
        },
    )
    print(f"isolated {len(iso.toxic)} samples, {hit} of them triggered")
    print(f"saved {out / 'sanitized.ckpt'} and {out / 'isolation.csv'}")
    return 0


def cmd_evaluate(args) -> int:
    cfg, out = _load_cfg(args)
    ckpt_path = Path(_require(args.checkpoint, "--checkpoint"))
    m = load_checkpoint(ckpt_path)
    d_test = _load_split(cfg, "test")
    trigger = None
    k = None
    if cfg.trigger_params is not None:
        trigger = cfg.build_trigger(m.input_length)
        k = cfg.attack.target_class
    label = args.label or ckpt_path.stem
    manifest = {
        "label": label,
        "checkpoint": str(ckpt_path),
        "dataset": d_test.name,
        "architecture": m.architecture,
        "trigger": trigger.to_dict() if trigger else None,
        "target_class": k,
        "include_target": bool(args.asr_include_target),
    }
    probe = m.default_probe_layers() if args.norm_diff else None
    report = evaluate_model(
        m,
        d_test,
        trigger=trigger,
        target_class=k,
        include_target=args.asr_include_target,
        probe_layers=probe,
        manifest=manifest,
    )
    _write_json(out / f"eval_{label}.json", report.to_dict())
    print(f"CA {report.clean_accuracy:.4f} (n={report.n_clean_eval})")
    if report.attack_success_rate is not None:
        print(
            f"ASR {report.attack_success_rate:.4f} "
            f"(n={report.n_asr_eval}, target {k})"
        )
    if report.norm_diff is not None:
        write_norm_diff_csv(report.norm_diff, out / "norm_diff.csv")
        print(f"wrote {out / 'norm_diff.csv'}")
    if args.export_features:
        export_features(m, d_test, out / "features.csv")
        print(f"wrote {out / 'features.csv'}")
    return 0


def _report_rows(out: Path) -> list[dict]:
    rows = []
    for path in sorted(out.glob("eval_*.json")):
        data = json.loads(path.read_text())
        report = EvalReport.from_dict(data)
        manifest = report.manifest
        trigger = manifest.get("trigger") or {}
        rows.append(
            {
                "label": manifest.get("label", path.stem[len("eval_"):]),
                "dataset": manifest.get("dataset", ""),
                "architecture": manifest.get("architecture", ""),
                "trigger": trigger.get("kind", ""),
                "target_class": manifest.get("target_class"),
                "n_clean_eval": report.n_clean_eval,
                "clean_accuracy": report.clean_accuracy,
                "n_asr_eval": report.n_asr_eval,
                "attack_success_rate": report.attack_success_rate,
            }
        )
    return rows


def _render_heatmap(out: Path) -> None:
    src = out / "norm_diff.csv"
    if not src.is_file():
        logger.warning("no norm_diff.csv in %s; skipping heatmap", out)
        return
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        logger.warning("matplotlib not available; skipping heatmap")
        return
    layers: dict[str, dict[int, float]] = {}
    with open(src) as fh:
        next(fh)
        for line in fh:
            layer, channel, value = line.rstrip("\n").split(",")
            layers.setdefault(layer, {})[int(channel)] = float(value)
    names = list(layers)
    width = max(len(v) for v in layers.values())
    grid = np.full((len(names), width), np.nan)
    for i, name in enumerate(names):
        for c, v in layers[name].items():
            grid[i, c] = v
    fig, ax = plt.subplots(figsize=(8, 1.2 + 0.6 * len(names)))
    im = ax.imshow(grid, aspect="auto", cmap="viridis")
    ax.set_yticks(range(len(names)), names)
    ax.set_xlabel("channel")
    fig.colorbar(im, ax=ax, label="|norm difference|")
    fig.tight_layout()
    fig.savefig(out / "heatmap.png", dpi=120)
    plt.close(fig)
    print(f"wrote {out / 'heatmap.png'}")


def cmd_report(args) -> int:
    if args.out:
        out = Path(args.out)
    elif args.config:
        out = load_run_config(args.config).output_dir
    else:
        raise ConfigError("--out", "report needs --out or --config")
    if not out.is_dir():
        raise ConfigError("--out", f"not a directory: {out}")
    rows = _report_rows(out)
    columns = (
        "label", "dataset", "architecture", "trigger", "target_class",
        "n_clean_eval", "clean_accuracy", "n_asr_eval", "attack_success_rate",
    )
    with open(out / "report.csv", "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            rendered = []
            for col in columns:
                v = row[col]
                if v is None:
                    rendered.append("")
                elif isinstance(v, float):
                    rendered.append(f"{v:.6f}")
                else:
                    rendered.append(str(v))
            fh.write(",".join(rendered) + "\n")
    print(f"wrote {out / 'report.csv'} ({len(rows)} rows)")
    if args.heatmap:
        _render_heatmap(out)
    return 0


def cmd_ablate(args) -> int:
    cfg, out = _load_cfg(args)
    m_benign, ckpt_path = _benign_checkpoint(args, out)
    d_ext = load_ucr(_require(cfg.external_path, "dataset.external"), normalize=cfg.normalize)
    if d_ext.series_length != m_benign.input_length:
        d_ext = resize_dataset(d_ext, m_benign.input_length)
    d_test = _load_split(cfg, "test")
    trigger = cfg.build_trigger(m_benign.input_length)
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    if not seeds:
        raise ConfigError("--seeds", "need at least one seed")

    # PGD is deterministic given the benign model, so the synthesized
    # records are shared across seeds and variants.
    records_adv = synthesize_pseudo_dataset(m_benign, d_ext, cfg.attack)
    records_raw = records_from_raw(m_benign, d_ext)

    ablate_dir = out / "ablate"
    ablate_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for variant, overrides in ABLATION_VARIANTS:
        for seed in seeds:
            cfg_v = dataclasses.replace(cfg.attack, seed=seed, **overrides)
            records = records_adv if cfg_v.use_adv_synthesis else records_raw
            trojaned = trojan_train(m_benign, records, trigger, cfg_v)
            save_checkpoint(trojaned, ablate_dir / f"{variant}_seed{seed}.ckpt")
            report = evaluate_model(
                trojaned,
                d_test,
                trigger=trigger,
                target_class=cfg_v.target_class,
                include_target=args.asr_include_target,
            )
            rows.append((variant, seed, report.clean_accuracy, report.attack_success_rate))
            print(
                f"{variant} seed={seed}: CA {report.clean_accuracy:.4f} "
                f"ASR {report.attack_success_rate:.4f}"
            )

    with open(out / "ablation.csv", "w") as fh:
        fh.write("variant,seed,clean_accuracy,attack_success_rate\n")
        for variant, seed, ca, asr in rows:
            fh.write(f"{variant},{seed},{ca:.6f},{asr:.6f}\n")
    print(f"wrote {out / 'ablation.csv'}")

    for variant, _ in ABLATION_VARIANTS:
        cas = [ca for v, _, ca, _ in rows if v == variant]
        asrs = [asr for v, _, _, asr in rows if v == variant]
        print(
            f"{variant}: median CA {statistics.median(cas):.4f} "
            f"median ASR {statistics.median(asrs):.4f}"
        )
    _write_json(
        out / "ablate_manifest.json",
        {
            "stage": "ablate",
            "version": __version__,
            "benign_checkpoint": str(ckpt_path),
            "attack": cfg.attack.to_dict(),
            "trigger": trigger.to_dict(),
            "seeds": seeds,
            "variants": [name for name, _ in ABLATION_VARIANTS],
        },
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tstrojan",
        description="Trojan and defend time-series classifiers without training data.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--verbose", action="store_true", help="log progress details")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint_help=None):
        p.add_argument("--config", required=True, help="run configuration YAML")
        p.add_argument("--seed", type=int, default=None, help="override all stage seeds")
        p.add_argument("--out", default=None, help="override output directory")
        if checkpoint_help:
            p.add_argument("--checkpoint", default=None, help=checkpoint_help)

    p = sub.add_parser("train-benign", help="train the victim model")
    common(p)
    p.set_defaults(func=cmd_train_benign)

    p = sub.add_parser("synthesize", help="build the pseudo-dataset only")
    common(p, "benign checkpoint (default <out>/benign_best.ckpt)")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("attack", help="synthesize and embed the trigger")
    common(p, "benign checkpoint (default <out>/benign_best.ckpt)")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("defend", help="isolate and unlearn a trojaned model")
    common(p, "checkpoint to defend (default <out>/trojaned.ckpt)")
    p.set_defaults(func=cmd_defend)

    p = sub.add_parser("evaluate", help="CA/ASR of one checkpoint")
    common(p, "checkpoint to evaluate (required)")
    p.add_argument("--label", default=None, help="name for eval_<label>.json")
    p.add_argument(
        "--asr-include-target",
        action="store_true",
        help="count true-target-class samples in the ASR denominator",
    )
    p.add_argument("--norm-diff", action="store_true", help="write norm_diff.csv")
    p.add_argument("--export-features", action="store_true", help="write features.csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="consolidate eval_*.json into report.csv")
    p.add_argument("--config", default=None, help="run configuration YAML")
    p.add_argument("--out", default=None, help="directory holding eval_*.json")
    p.add_argument("--heatmap", action="store_true", help="also render heatmap.png")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("ablate", help="run the attack variants side by side")
    common(p, "benign checkpoint (default <out>/benign_best.ckpt)")
    p.add_argument("--seeds", default="0,1,2", help="comma-separated seed list")
    p.add_argument(
        "--asr-include-target",
        action="store_true",
        help="count true-target-class samples in the ASR denominator",
    )
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    torch.set_num_threads(1)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (
        InvalidArgument,
        InvalidDataset,
        ParseError,
        CheckpointError,
        TrainingError,
        DefenseError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
