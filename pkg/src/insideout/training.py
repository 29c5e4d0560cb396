"""Training orchestration: Adam + cosine annealing, early stopping, resume.

Reproducibility contract: the shuffle order, every augmentation draw, and the
torch global RNG (dropout) are all reseeded per epoch from the training seed,
so equal seeds give bitwise-equal runs and a resumed run replays the exact
epoch stream an uninterrupted run would have produced.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .dataset import LabeledDataset
from .errors import CheckpointError, ConfigError
from .losses import ClassWeights, Reduction, weighted_ce_from_logits
from .model import (
    OPTIMIZER_FILE,
    EmotionClassifier,
    load_model_checkpoint,
    save_model_checkpoint,
    stable_softmax,
)
from .splits import DatasetSplit
from .transforms import AugmentConfig, preprocess_eval, preprocess_train

TRAINING_STATE_FILE = "training_state.json"
CHECKPOINT_DIR_NAME = "checkpoint_best"

_SEED_MASK = 0xFFFFFFFFFFFFFFFF
_SHUFFLE_STREAM = 1
_TORCH_STREAM = 2


@dataclass(frozen=True)
class TrainingConfig:
    initial_lr: float = 1e-3
    min_lr: float = 1e-5
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 10
    min_delta: float = 1e-4
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self) -> None:
        if not 0 <= self.min_lr < self.initial_lr:
            raise ConfigError(
                f"need 0 <= min_lr < initial_lr, got {self.min_lr} and {self.initial_lr}"
            )
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if not 1 <= self.patience <= self.max_epochs:
            raise ConfigError(
                f"need 1 <= patience <= max_epochs, got patience={self.patience}"
            )
        if self.min_delta < 0:
            raise ConfigError("min_delta must be >= 0")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    train_acc: float
    val_acc: float
    lr: float
    wall_time: float

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "train_acc": self.train_acc,
            "val_acc": self.val_acc,
            "lr": self.lr,
            "wall_time": self.wall_time,
        }


@dataclass
class TrainingState:
    best_val_loss: float = math.inf
    best_epoch: int = -1
    epochs_since_improvement: int = 0
    history: list[EpochRecord] = field(default_factory=list)
    stopped_early: bool = False
    last_epoch: int = -1

    def to_dict(self) -> dict:
        return {
            "best_val_loss": self.best_val_loss,
            "best_epoch": self.best_epoch,
            "epochs_since_improvement": self.epochs_since_improvement,
            "stopped_early": self.stopped_early,
            "last_epoch": self.last_epoch,
            "history": [r.to_dict() for r in self.history],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingState":
        return cls(
            best_val_loss=d["best_val_loss"],
            best_epoch=d["best_epoch"],
            epochs_since_improvement=d["epochs_since_improvement"],
            stopped_early=d["stopped_early"],
            last_epoch=d["last_epoch"],
            history=[EpochRecord(**r) for r in d["history"]],
        )


def cosine_lr(epoch: int, cfg: TrainingConfig) -> float:
    """Half-cosine decay from initial_lr at epoch 0 to min_lr at the last epoch."""
    if not 0 <= epoch < cfg.max_epochs:
        raise ValueError(f"epoch {epoch} out of range [0,{cfg.max_epochs - 1}]")
    if cfg.max_epochs == 1:
        return cfg.initial_lr
    span = cfg.initial_lr - cfg.min_lr
    return cfg.min_lr + 0.5 * span * (1 + math.cos(math.pi * epoch / (cfg.max_epochs - 1)))


def early_stop_update(state: TrainingState, val_loss: float, cfg: TrainingConfig) -> TrainingState:
    """Register one epoch's validation loss; flips stopped_early at patience."""
    state.last_epoch += 1
    if val_loss < state.best_val_loss - cfg.min_delta:
        state.best_val_loss = val_loss
        state.best_epoch = state.last_epoch
        state.epochs_since_improvement = 0
    else:
        state.epochs_since_improvement = state.last_epoch - state.best_epoch
        if state.epochs_since_improvement >= cfg.patience:
            state.stopped_early = True
    return state


@dataclass(frozen=True)
class PredictionRecord:
    index: int
    label: int
    confidence: float


@dataclass(frozen=True)
class EvalResult:
    loss: float
    accuracy: float
    predictions: tuple[PredictionRecord, ...]


def _mix_seed(seed: int, stream: int, epoch: int) -> int:
    return int(np.random.SeedSequence([seed & _SEED_MASK, stream, epoch]).generate_state(1)[0])


def _batches(indices: np.ndarray, batch_size: int):
    for start in range(0, len(indices), batch_size):
        yield indices[start : start + batch_size]


def evaluate_pass(
    model: EmotionClassifier,
    ds: LabeledDataset,
    indices: np.ndarray,
    batch_size: int = 64,
) -> EvalResult:
    """Deterministic eval-mode sweep: unweighted mean CE, accuracy, predictions.

    Ties in the predicted distribution break toward the lowest class index.
    """
    indices = np.asarray(indices, dtype=np.int64)
    if len(indices) == 0:
        raise ValueError("cannot evaluate an empty partition")
    was_training = model.training
    model.eval()
    loss_sum = 0.0
    correct = 0
    predictions: list[PredictionRecord] = []
    try:
        with torch.no_grad():
            for batch_idx in _batches(indices, batch_size):
                batch = torch.stack(
                    [preprocess_eval(ds.images[i]).data for i in batch_idx]
                )
                probs = stable_softmax(model(batch)).numpy().astype(np.float64)
                targets = ds.labels[batch_idx]
                picked = np.clip(probs[np.arange(len(targets)), targets], 1e-12, None)
                loss_sum += float(-np.log(picked).sum())
                pred = np.argmax(probs, axis=1)
                correct += int((pred == targets).sum())
                predictions.extend(
                    PredictionRecord(
                        index=int(i), label=int(p), confidence=float(probs[row, p])
                    )
                    for row, (i, p) in enumerate(zip(batch_idx, pred))
                )
    finally:
        model.train(was_training)
    return EvalResult(
        loss=loss_sum / len(indices),
        accuracy=correct / len(indices),
        predictions=tuple(predictions),
    )


def save_training_checkpoint(
    directory: Path,
    model: EmotionClassifier,
    optimizer: torch.optim.Optimizer,
    state: TrainingState,
) -> Path:
    save_model_checkpoint(directory, model)
    torch.save(optimizer.state_dict(), directory / OPTIMIZER_FILE)
    (directory / TRAINING_STATE_FILE).write_text(json.dumps(state.to_dict(), indent=2) + "\n")
    return directory


def load_training_state(directory: str | Path) -> TrainingState:
    path = Path(directory) / TRAINING_STATE_FILE
    if not path.exists():
        raise CheckpointError(f"checkpoint has no training state: {path}")
    return TrainingState.from_dict(json.loads(path.read_text()))


def run_training(
    ds: LabeledDataset,
    split: DatasetSplit,
    model: EmotionClassifier,
    augment_cfg: AugmentConfig,
    class_weights: ClassWeights,
    cfg: TrainingConfig,
    out_dir: str | Path,
    resume_from: str | Path | None = None,
    log=None,
) -> tuple[Path, TrainingState]:
    """Fine-tune `model`, checkpointing on every validation-loss improvement.

    Returns the best-epoch checkpoint directory (never the last epoch) and the
    final training state.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_dir = out_dir / CHECKPOINT_DIR_NAME

    weights_t = class_weights.as_tensor()
    trainable = [p for p in model.parameters() if p.requires_grad]
    if not trainable:
        raise ConfigError("model has no trainable parameters")
    optimizer = torch.optim.Adam(
        trainable,
        lr=cfg.initial_lr,
        betas=(cfg.adam_beta1, cfg.adam_beta2),
        eps=cfg.adam_eps,
    )

    state = TrainingState()
    start_epoch = 0
    if resume_from is not None:
        resume_from = Path(resume_from)
        restored = load_model_checkpoint(resume_from)
        model.load_state_dict(restored.state_dict())
        optimizer.load_state_dict(
            torch.load(resume_from / OPTIMIZER_FILE, map_location="cpu", weights_only=False)
        )
        state = load_training_state(resume_from)
        start_epoch = state.last_epoch + 1

    for epoch in range(start_epoch, cfg.max_epochs):
        t0 = time.perf_counter()
        lr = cosine_lr(epoch, cfg)
        for group in optimizer.param_groups:
            group["lr"] = lr
        torch.manual_seed(_mix_seed(cfg.seed, _TORCH_STREAM, epoch))
        perm = np.random.default_rng(
            [cfg.seed & _SEED_MASK, _SHUFFLE_STREAM, epoch]
        ).permutation(split.train)

        model.train()
        weighted_loss_sum = 0.0
        weight_sum = 0.0
        correct = 0
        for batch_no, batch_idx in enumerate(_batches(perm, cfg.batch_size)):
            batch = torch.stack(
                [
                    preprocess_train(
                        ds.images[i], augment_cfg, sample_index=int(i), epoch=epoch
                    ).data
                    for i in batch_idx
                ]
            )
            targets = torch.from_numpy(ds.labels[batch_idx])
            logits = model(batch)
            loss = weighted_ce_from_logits(logits, targets, weights_t, Reduction.WeightedMean)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"non-finite training loss (epoch {epoch}, batch {batch_no}, lr {lr:g})"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

            batch_weight = float(weights_t[targets].sum())
            weighted_loss_sum += float(loss.detach()) * batch_weight
            weight_sum += batch_weight
            correct += int(
                (np.argmax(logits.detach().numpy(), axis=1) == targets.numpy()).sum()
            )

        val = evaluate_pass(model, ds, split.val, batch_size=cfg.batch_size)
        record = EpochRecord(
            epoch=epoch,
            train_loss=weighted_loss_sum / weight_sum,
            val_loss=val.loss,
            train_acc=correct / len(perm),
            val_acc=val.accuracy,
            lr=lr,
            wall_time=time.perf_counter() - t0,
        )
        state.history.append(record)
        early_stop_update(state, val.loss, cfg)
        if state.best_epoch == epoch:
            save_training_checkpoint(checkpoint_dir, model, optimizer, state)
        if log is not None:
            log(
                f"epoch {epoch:3d}  lr {lr:.2e}  train loss {record.train_loss:.4f} "
                f"acc {record.train_acc:.3f}  val loss {record.val_loss:.4f} "
                f"acc {record.val_acc:.3f}"
            )
        if state.stopped_early:
            break

    return checkpoint_dir, state
