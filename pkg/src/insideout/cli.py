"""Command-line entry point: prepare | train | evaluate | infer | report.

Every subcommand takes --config pointing at a run-config JSON; flags override
file values. Artifacts land under the configured output directory with fixed,
documented names; reruns refuse to clobber them unless --overwrite is given.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch

from . import artifacts
from .config import (
    AUGMENT_GRID_PNG,
    CONFUSION_CSV,
    CONFUSION_PNG,
    CURVES_ACC_PNG,
    CURVES_CSV,
    CURVES_LOSS_PNG,
    HISTOGRAM_CSV,
    HISTOGRAM_PNG,
    INFERENCE_GRID_PNG,
    INFERENCES_JSON,
    MANIFEST_FILE,
    REPORT_JSON,
    REPORT_TXT,
    SPLIT_FILE,
    VALIDATION_FILE,
    RunConfig,
    load_run_config,
)
from .dataset import class_histogram, parse_fer_csv, validate_dataset
from .errors import CheckpointError, ConfigError, InsideOutError, SplitError
from .inference import load_image_grayscale, run_inference
from .labels import EMOTION_NAMES
from .losses import compute_class_weights
from .metrics import (
    ConfusionMatrix,
    confusion_from_predictions,
    confusion_to_csv,
    render_report_text,
    report_from_confusion,
    report_from_dict,
    save_report_json,
)
from .model import build_model, load_model_checkpoint
from .splits import load_split, make_split, save_split
from .training import CHECKPOINT_DIR_NAME, EpochRecord, evaluate_pass, run_training
from .transforms import preprocess_eval, preprocess_train


def _guard_overwrite(paths: list[Path], overwrite: bool) -> None:
    existing = [str(p) for p in paths if p.exists()]
    if existing and not overwrite:
        raise ConfigError(
            "artifacts already exist (pass --overwrite to replace): " + ", ".join(existing)
        )


def _apply_determinism() -> None:
    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)


def _load_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_run_config(args.config, seed_override=args.seed)
    if args.deterministic:
        _apply_determinism()
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    return cfg


def cmd_prepare(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    out = cfg.output_dir
    targets = [
        out / SPLIT_FILE,
        out / VALIDATION_FILE,
        out / HISTOGRAM_CSV,
        out / HISTOGRAM_PNG,
        out / AUGMENT_GRID_PNG,
    ]
    _guard_overwrite(targets, args.overwrite)

    ds = parse_fer_csv(cfg.dataset_csv)
    print(f"parsed {len(ds)} samples from {cfg.dataset_csv}")
    print(f"dataset digest: {ds.source_digest}")

    report = validate_dataset(ds)
    (out / VALIDATION_FILE).write_text(report.to_text())
    if not report.is_clean:
        for finding in report.findings:
            print(f"validation: {finding}")

    hist = class_histogram(ds)
    artifacts.write_histogram_csv(hist, out / HISTOGRAM_CSV)
    artifacts.plot_class_histogram(hist, out / HISTOGRAM_PNG)

    split = make_split(ds, cfg.split)
    save_split(split, out / SPLIT_FILE)
    print(
        f"split ({cfg.split.mode.value}): train={len(split.train)} "
        f"val={len(split.val)} test={len(split.test)}"
    )

    n_samples = args.emit_samples
    picks = np.random.default_rng(cfg.seed).choice(
        split.train, size=min(n_samples, len(split.train)), replace=False
    )
    tensors = [
        preprocess_train(ds.images[i], cfg.augment, sample_index=int(i), epoch=0).data
        for i in picks
    ]
    titles = [EMOTION_NAMES[ds.labels[i]] for i in picks]
    artifacts.plot_image_grid(tensors, out / AUGMENT_GRID_PNG, titles=titles)

    print(f"artifacts written to {out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    out = cfg.output_dir
    split_path = out / SPLIT_FILE
    if not split_path.exists():
        raise ConfigError(f"missing {split_path}; run `insideout prepare` first")

    _guard_overwrite(
        [out / MANIFEST_FILE, out / CURVES_CSV, out / CURVES_ACC_PNG, out / CURVES_LOSS_PNG],
        args.overwrite or args.resume is not None,
    )

    ds = parse_fer_csv(cfg.dataset_csv)
    split = load_split(split_path)
    if split.dataset_digest != ds.source_digest:
        raise SplitError(
            f"split file {split_path} was built from a different dataset "
            f"(digest {split.dataset_digest[:12]}... != {ds.source_digest[:12]}...)"
        )

    train_labels = ds.labels[split.train]
    class_weights = compute_class_weights(np.bincount(train_labels, minlength=len(EMOTION_NAMES)))
    print("class weights (train partition): " + ", ".join(f"{w:.4f}" for w in class_weights.w))

    model = build_model(cfg.model)
    checkpoint_dir, state = run_training(
        ds,
        split,
        model,
        cfg.augment,
        class_weights,
        cfg.training,
        out,
        resume_from=args.resume,
        log=print,
    )

    manifest = {
        "config": cfg.to_dict(),
        "dataset_digest": ds.source_digest,
        "split_digest": split.digest(),
        "class_weights": [float(w) for w in class_weights.w],
        "best_epoch": state.best_epoch,
        "best_val_loss": state.best_val_loss,
        "stopped_early": state.stopped_early,
        "epochs_trained": len(state.history),
        "epochs": [r.to_dict() for r in state.history],
        "total_wall_time": sum(r.wall_time for r in state.history),
    }
    (out / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2) + "\n")
    artifacts.write_curves_csv(state.history, out / CURVES_CSV)
    artifacts.plot_curves(state.history, out / CURVES_ACC_PNG, out / CURVES_LOSS_PNG)

    print(
        f"best epoch {state.best_epoch} (val loss {state.best_val_loss:.4f}); "
        f"checkpoint at {checkpoint_dir}"
    )
    if state.stopped_early:
        print(f"stopped early after {len(state.history)} epochs")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    out = cfg.output_dir
    checkpoint = Path(args.checkpoint) if args.checkpoint else out / CHECKPOINT_DIR_NAME
    if not checkpoint.exists():
        raise CheckpointError(f"checkpoint directory not found: {checkpoint}")

    split_path = out / SPLIT_FILE
    if not split_path.exists():
        raise ConfigError(f"missing {split_path}; run `insideout prepare` first")

    ds = parse_fer_csv(cfg.dataset_csv)
    split = load_split(split_path)
    indices = split.partitions()[args.partition]
    if len(indices) == 0:
        raise SplitError(f"{args.partition} partition is empty; nothing to evaluate")

    _guard_overwrite(
        [out / REPORT_TXT, out / REPORT_JSON, out / CONFUSION_CSV, out / CONFUSION_PNG],
        args.overwrite,
    )

    model = load_model_checkpoint(checkpoint)
    result = evaluate_pass(model, ds, indices, batch_size=cfg.training.batch_size)

    truths = [int(ds.labels[p.index]) for p in result.predictions]
    preds = [p.label for p in result.predictions]
    cm = confusion_from_predictions(truths, preds)
    report = report_from_confusion(cm)

    text = render_report_text(report, args.partition)
    (out / REPORT_TXT).write_text(text)
    save_report_json(report, args.partition, out / REPORT_JSON)
    confusion_to_csv(cm, out / CONFUSION_CSV)
    artifacts.plot_confusion_heatmap(cm, out / CONFUSION_PNG, args.partition)

    print(text, end="")
    print(f"loss {result.loss:.4f}  accuracy {result.accuracy:.4f}")
    return 0


def cmd_infer(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    out = cfg.output_dir
    checkpoint = Path(args.checkpoint) if args.checkpoint else out / CHECKPOINT_DIR_NAME
    if not checkpoint.exists():
        raise CheckpointError(f"checkpoint directory not found: {checkpoint}")
    model = load_model_checkpoint(checkpoint)

    results = run_inference(model, args.images)
    (out / INFERENCES_JSON).write_text(
        json.dumps([r.to_dict() for r in results], indent=2) + "\n"
    )
    for r in results:
        if r.ok:
            print(f"{r.image}: {r.label} ({r.confidence:.3f})")
        else:
            print(f"{r.image}: ERROR {r.error}", file=sys.stderr)

    readable = [r for r in results if r.ok]
    if args.grid and readable:
        tensors = []
        titles = []
        for r in readable:
            tensors.append(preprocess_eval(load_image_grayscale(r.image)).data)
            titles.append(f"{r.label} {r.confidence:.2f}")
        artifacts.plot_image_grid(tensors, out / INFERENCE_GRID_PNG, titles=titles)

    if not readable:
        print("error: no readable images", file=sys.stderr)
        return 1
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    run_dir = Path(args.run_dir) if args.run_dir else cfg.output_dir

    regenerated = []
    report_json = run_dir / REPORT_JSON
    if report_json.exists():
        report, partition = report_from_dict(json.loads(report_json.read_text()))
        (run_dir / REPORT_TXT).write_text(render_report_text(report, partition))
        regenerated.append(REPORT_TXT)

        confusion_csv = run_dir / CONFUSION_CSV
        if confusion_csv.exists():
            rows = confusion_csv.read_text().strip().splitlines()[1:]
            m = np.array([[int(v) for v in row.split(",")[1:]] for row in rows])
            artifacts.plot_confusion_heatmap(ConfusionMatrix(m), run_dir / CONFUSION_PNG, partition)
            regenerated.append(CONFUSION_PNG)

    manifest_path = run_dir / MANIFEST_FILE
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        history = [EpochRecord(**r) for r in manifest["epochs"]]
        artifacts.write_curves_csv(history, run_dir / CURVES_CSV)
        artifacts.plot_curves(history, run_dir / CURVES_ACC_PNG, run_dir / CURVES_LOSS_PNG)
        regenerated.extend([CURVES_CSV, CURVES_ACC_PNG, CURVES_LOSS_PNG])

    if not regenerated:
        raise ConfigError(
            f"nothing to report: no {REPORT_JSON} or {MANIFEST_FILE} under {run_dir}"
        )
    print(f"regenerated {', '.join(regenerated)} in {run_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="insideout",
        description="Facial-emotion-recognition pipeline over FER2013-format data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="run-config JSON path")
        p.add_argument("--seed", type=int, default=None, help="override every configured seed")
        p.add_argument(
            "--deterministic",
            action="store_true",
            help="single-threaded torch with deterministic kernels",
        )
        p.add_argument("--overwrite", action="store_true", help="replace existing artifacts")

    p = sub.add_parser("prepare", help="validate the dataset, write split and stats artifacts")
    common(p)
    p.add_argument(
        "--emit-samples",
        type=int,
        default=16,
        metavar="N",
        help="number of augmented samples in the inspection grid",
    )
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="fine-tune the model and write manifest + curves")
    common(p)
    p.add_argument("--resume", default=None, metavar="CKPT", help="checkpoint dir to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint and write report artifacts")
    common(p)
    p.add_argument("--checkpoint", default=None, help="checkpoint dir (default: run output)")
    p.add_argument(
        "--partition", choices=("train", "val", "test"), default="test", help="partition to score"
    )
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("infer", help="classify image files with a checkpoint")
    common(p)
    p.add_argument("--checkpoint", default=None, help="checkpoint dir (default: run output)")
    p.add_argument("--grid", action="store_true", help="also write an annotated grid image")
    p.add_argument("images", nargs="+", help="image files to classify")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("report", help="re-render human-readable artifacts from saved outputs")
    common(p)
    p.add_argument("--run-dir", default=None, help="run directory (default: config output_dir)")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InsideOutError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
