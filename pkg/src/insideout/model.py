"""Backbone adapter, lightweight 7-way classification head, checkpoint I/O.

The pretrained EfficientNetV2-S backbone is consumed through a small adapter
interface (feature_dim + stage list + feature-map forward) so the tiny CNN
stand-in can substitute anywhere the full backbone would be too heavy, e.g.
in the test suite, without touching the rest of the pipeline.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import CheckpointError, ConfigError
from .labels import NUM_CLASSES, label_mapping
from .transforms import IMAGENET_MEAN, IMAGENET_STD, TARGET_SIZE

WEIGHTS_FILE = "weights.pt"
OPTIMIZER_FILE = "optimizer.pt"
MODEL_CONFIG_FILE = "model_config.json"
LABELS_FILE = "labels.json"
NORMALIZATION_FILE = "normalization.json"


class WeightsSource(str, enum.Enum):
    ImageNetPretrained = "imagenet_pretrained"
    RandomInit = "random_init"


class FreezePolicy(str, enum.Enum):
    HeadOnly = "head_only"
    FullFineTune = "full_finetune"
    PartialLastK = "partial_last_k"


@dataclass(frozen=True)
class ModelConfig:
    backbone: str = "efficientnet_v2_s"
    weights_source: WeightsSource = WeightsSource.ImageNetPretrained
    dropout_rate: float = 0.3
    freeze_policy: FreezePolicy = FreezePolicy.FullFineTune
    last_k: int = 2
    freeze_batchnorm_stats: bool = False
    seed: int = 0
    num_classes: int = NUM_CLASSES

    def __post_init__(self) -> None:
        if self.num_classes != NUM_CLASSES:
            raise ConfigError(f"num_classes is fixed at {NUM_CLASSES}, got {self.num_classes}")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigError(f"dropout_rate must be in [0,1), got {self.dropout_rate}")
        if self.backbone not in ("efficientnet_v2_s", "tiny_cnn"):
            raise ConfigError(f"unknown backbone {self.backbone!r}")
        if self.freeze_policy is FreezePolicy.PartialLastK and self.last_k < 1:
            raise ConfigError("last_k must be >= 1 for the partial_last_k policy")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights_source"] = self.weights_source.value
        d["freeze_policy"] = self.freeze_policy.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["weights_source"] = WeightsSource(d["weights_source"])
        d["freeze_policy"] = FreezePolicy(d["freeze_policy"])
        return cls(**d)


class TinyBackbone(nn.Module):
    """Three-stage stand-in CNN (feature_dim 64) for weightless environments."""

    feature_dim = 64

    def __init__(self) -> None:
        super().__init__()
        self.stages = nn.ModuleList(
            [
                self._stage(3, 16, stride=4),
                self._stage(16, 32, stride=2),
                self._stage(32, 64, stride=2),
            ]
        )

    @staticmethod
    def _stage(in_ch: int, out_ch: int, stride: int) -> nn.Sequential:
        return nn.Sequential(
            nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=stride, padding=1),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for stage in self.stages:
            x = stage(x)
        return x


class EfficientNetV2SBackbone(nn.Module):
    """Adapter over torchvision's EfficientNetV2-S feature extractor."""

    feature_dim = 1280

    def __init__(self, pretrained: bool) -> None:
        super().__init__()
        from torchvision.models import EfficientNet_V2_S_Weights, efficientnet_v2_s

        weights = EfficientNet_V2_S_Weights.IMAGENET1K_V1 if pretrained else None
        try:
            net = efficientnet_v2_s(weights=weights)
        except Exception as exc:
            raise CheckpointError(
                "pretrained EfficientNetV2-S weights unavailable: "
                f"{exc}. Download {EfficientNet_V2_S_Weights.IMAGENET1K_V1.url} "
                "into $TORCH_HOME/hub/checkpoints (default ~/.cache/torch/hub/checkpoints) "
                "or build with weights_source=random_init."
            ) from exc
        self.stages = nn.ModuleList(list(net.features))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for stage in self.stages:
            x = stage(x)
        return x


class ClassifierHead(nn.Module):
    """Global average pooling, dropout, and a single 7-way linear layer."""

    def __init__(self, feature_dim: int, dropout_rate: float, num_classes: int = NUM_CLASSES):
        super().__init__()
        self.dropout = nn.Dropout(dropout_rate)
        self.fc = nn.Linear(feature_dim, num_classes)
        bound = 1.0 / math.sqrt(feature_dim)
        nn.init.uniform_(self.fc.weight, -bound, bound)
        nn.init.zeros_(self.fc.bias)

    def forward(self, feature_map: torch.Tensor) -> torch.Tensor:
        pooled = feature_map.mean(dim=(2, 3))
        return self.fc(self.dropout(pooled))


class EmotionClassifier(nn.Module):
    def __init__(self, backbone: nn.Module, head: ClassifierHead, config: ModelConfig):
        super().__init__()
        self.backbone = backbone
        self.head = head
        self.config = config

    def forward(self, batch: torch.Tensor) -> torch.Tensor:
        expected = (3, TARGET_SIZE, TARGET_SIZE)
        if batch.ndim != 4 or tuple(batch.shape[1:]) != expected:
            raise ValueError(
                f"expected batch of shape (B, {expected[0]}, {expected[1]}, {expected[2]}), "
                f"got {tuple(batch.shape)}"
            )
        return self.head(self.backbone(batch))

    def train(self, mode: bool = True) -> "EmotionClassifier":
        super().train(mode)
        if mode and self.config.freeze_batchnorm_stats:
            for module in self.backbone.modules():
                if isinstance(module, nn.modules.batchnorm._BatchNorm):
                    module.eval()
        return self


def _apply_freeze_policy(backbone: nn.Module, cfg: ModelConfig) -> None:
    if cfg.freeze_policy is FreezePolicy.FullFineTune:
        return
    for param in backbone.parameters():
        param.requires_grad = False
    if cfg.freeze_policy is FreezePolicy.PartialLastK:
        stages = list(backbone.stages)
        for stage in stages[-cfg.last_k :]:
            for param in stage.parameters():
                param.requires_grad = True


def build_model(cfg: ModelConfig) -> EmotionClassifier:
    """Backbone + freshly initialized head, trainability per freeze policy."""
    torch.manual_seed(cfg.seed & 0xFFFFFFFFFFFF)
    if cfg.backbone == "tiny_cnn":
        if cfg.weights_source is WeightsSource.ImageNetPretrained:
            raise ConfigError("tiny_cnn has no pretrained weights; use random_init")
        backbone: nn.Module = TinyBackbone()
    else:
        backbone = EfficientNetV2SBackbone(
            pretrained=cfg.weights_source is WeightsSource.ImageNetPretrained
        )
    head = ClassifierHead(backbone.feature_dim, cfg.dropout_rate, cfg.num_classes)
    _apply_freeze_policy(backbone, cfg)
    return EmotionClassifier(backbone, head, cfg)


def stable_softmax(logits: torch.Tensor) -> torch.Tensor:
    """Row-wise softmax with max subtraction; safe for extreme logits."""
    shifted = logits - logits.max(dim=1, keepdim=True).values
    exp = torch.exp(shifted)
    return exp / exp.sum(dim=1, keepdim=True)


def predict_proba(model: EmotionClassifier, batch: torch.Tensor) -> torch.Tensor:
    """Row-stochastic class probabilities; no gradients, no parameter mutation."""
    with torch.no_grad():
        logits = model(batch)
    return stable_softmax(logits)


def save_model_checkpoint(directory: str | Path, model: EmotionClassifier) -> Path:
    """Write everything standalone inference needs into `directory`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), directory / WEIGHTS_FILE)
    (directory / MODEL_CONFIG_FILE).write_text(
        json.dumps(model.config.to_dict(), indent=2) + "\n"
    )
    (directory / LABELS_FILE).write_text(
        json.dumps({str(k): v for k, v in label_mapping().items()}, indent=2) + "\n"
    )
    (directory / NORMALIZATION_FILE).write_text(
        json.dumps(
            {"mean": list(IMAGENET_MEAN), "std": list(IMAGENET_STD), "input_size": TARGET_SIZE},
            indent=2,
        )
        + "\n"
    )
    return directory


def load_model_checkpoint(directory: str | Path) -> EmotionClassifier:
    """Rebuild a model from a checkpoint directory without fetching weights."""
    directory = Path(directory)
    for name in (WEIGHTS_FILE, MODEL_CONFIG_FILE, LABELS_FILE):
        if not (directory / name).exists():
            raise CheckpointError(f"checkpoint incomplete: missing {name} in {directory}")

    stored_labels = json.loads((directory / LABELS_FILE).read_text())
    expected = {str(k): v for k, v in label_mapping().items()}
    if stored_labels != expected:
        raise CheckpointError(
            f"label mapping in {directory} does not match this package's classes"
        )

    cfg = ModelConfig.from_dict(json.loads((directory / MODEL_CONFIG_FILE).read_text()))
    # Saved weights supersede any pretrained init; build randomly to avoid a fetch.
    build_cfg = ModelConfig.from_dict(
        {**cfg.to_dict(), "weights_source": WeightsSource.RandomInit.value}
    )
    model = build_model(build_cfg)
    state = torch.load(directory / WEIGHTS_FILE, map_location="cpu", weights_only=True)
    try:
        model.load_state_dict(state)
    except RuntimeError as exc:
        raise CheckpointError(f"checkpoint weights do not fit the stored config: {exc}") from exc
    model.config = cfg
    return model


def parameter_snapshot(model: nn.Module) -> dict[str, np.ndarray]:
    """Bitwise copy of all parameters, for freeze/no-mutation checks."""
    return {name: p.detach().numpy().copy() for name, p in model.named_parameters()}
