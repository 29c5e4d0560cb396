"""Run configuration: one JSON document with a section per pipeline stage.

CLI flags override file values; section seeds default to the top-level seed
so a single `--seed N` pins the whole run. A relative dataset path resolves
under $INSIDEOUT_DATA_ROOT when that variable is set.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .model import FreezePolicy, ModelConfig, WeightsSource
from .splits import SplitMode, SplitSpec
from .training import TrainingConfig
from .transforms import AugmentConfig

DATA_ROOT_ENV = "INSIDEOUT_DATA_ROOT"

SPLIT_FILE = "split.json"
VALIDATION_FILE = "validation.txt"
HISTOGRAM_CSV = "class_histogram.csv"
HISTOGRAM_PNG = "class_distribution.png"
AUGMENT_GRID_PNG = "augmented_samples.png"
MANIFEST_FILE = "manifest.json"
CURVES_CSV = "curves.csv"
CURVES_ACC_PNG = "curves_acc.png"
CURVES_LOSS_PNG = "curves_loss.png"
REPORT_TXT = "report.txt"
REPORT_JSON = "report.json"
CONFUSION_CSV = "confusion.csv"
CONFUSION_PNG = "confusion.png"
INFERENCES_JSON = "inferences.json"
INFERENCE_GRID_PNG = "inference_grid.png"


@dataclass(frozen=True)
class RunConfig:
    dataset_csv: Path
    split: SplitSpec
    augment: AugmentConfig
    model: ModelConfig
    training: TrainingConfig
    output_dir: Path
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "dataset": {"csv_path": str(self.dataset_csv)},
            "split": {
                "mode": self.split.mode.value,
                "ratios": list(self.split.ratios),
                "seed": self.split.seed,
            },
            "augment": {
                "crop_scale_range": list(self.augment.crop_scale_range),
                "rotation_degrees": self.augment.rotation_degrees,
                "hflip_prob": self.augment.hflip_prob,
                "jitter": list(self.augment.jitter),
                "seed": self.augment.seed,
            },
            "model": self.model.to_dict(),
            "training": {
                "initial_lr": self.training.initial_lr,
                "min_lr": self.training.min_lr,
                "batch_size": self.training.batch_size,
                "max_epochs": self.training.max_epochs,
                "patience": self.training.patience,
                "min_delta": self.training.min_delta,
                "seed": self.training.seed,
                "adam_beta1": self.training.adam_beta1,
                "adam_beta2": self.training.adam_beta2,
                "adam_eps": self.training.adam_eps,
            },
            "output_dir": str(self.output_dir),
            "seed": self.seed,
        }


def _section(payload: dict, name: str) -> dict:
    section = payload.get(name, {})
    if not isinstance(section, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return dict(section)


def _build(cls, section: dict, name: str, **extra):
    try:
        return cls(**section, **extra)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config section {name!r}: {exc}") from exc


def _resolve_dataset_path(raw: str) -> Path:
    path = Path(raw)
    root = os.environ.get(DATA_ROOT_ENV)
    if root and not path.is_absolute():
        return Path(root) / path
    return path


def load_run_config(path: str | Path, seed_override: int | None = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")

    known = {"dataset", "split", "augment", "model", "training", "output_dir", "seed"}
    unknown = set(payload) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    seed = int(payload.get("seed", 0))
    if seed_override is not None:
        seed = seed_override

    dataset = _section(payload, "dataset")
    csv_path = dataset.pop("csv_path", None)
    if csv_path is None:
        raise ConfigError("config requires dataset.csv_path")
    if dataset:
        raise ConfigError(f"unknown dataset keys: {sorted(dataset)}")

    split_raw = _section(payload, "split")
    if seed_override is not None:
        split_raw["seed"] = seed
    else:
        split_raw.setdefault("seed", seed)
    if "mode" in split_raw:
        try:
            split_raw["mode"] = SplitMode(split_raw["mode"])
        except ValueError as exc:
            raise ConfigError(f"unknown split mode {split_raw['mode']!r}") from exc
    if "ratios" in split_raw:
        split_raw["ratios"] = tuple(split_raw["ratios"])
    split = _build(SplitSpec, split_raw, "split")

    augment_raw = _section(payload, "augment")
    if seed_override is not None:
        augment_raw["seed"] = seed
    else:
        augment_raw.setdefault("seed", seed)
    for key in ("crop_scale_range", "jitter"):
        if key in augment_raw:
            augment_raw[key] = tuple(augment_raw[key])
    augment = _build(AugmentConfig, augment_raw, "augment")

    model_raw = _section(payload, "model")
    if seed_override is not None:
        model_raw["seed"] = seed
    else:
        model_raw.setdefault("seed", seed)
    if "weights_source" in model_raw:
        try:
            model_raw["weights_source"] = WeightsSource(model_raw["weights_source"])
        except ValueError as exc:
            raise ConfigError(f"unknown weights_source {model_raw['weights_source']!r}") from exc
    if "freeze_policy" in model_raw:
        try:
            model_raw["freeze_policy"] = FreezePolicy(model_raw["freeze_policy"])
        except ValueError as exc:
            raise ConfigError(f"unknown freeze_policy {model_raw['freeze_policy']!r}") from exc
    model = _build(ModelConfig, model_raw, "model")

    training_raw = _section(payload, "training")
    if seed_override is not None:
        training_raw["seed"] = seed
    else:
        training_raw.setdefault("seed", seed)
    training = _build(TrainingConfig, training_raw, "training")

    output_dir = payload.get("output_dir")
    if output_dir is None:
        raise ConfigError("config requires output_dir")

    return RunConfig(
        dataset_csv=_resolve_dataset_path(str(csv_path)),
        split=split,
        augment=augment,
        model=model,
        training=training,
        output_dir=Path(output_dir),
        seed=seed,
    )
