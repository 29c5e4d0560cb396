"""Preprocessing: 48x48 grayscale in, normalized 3x224x224 tensors out.

The eval path is fully deterministic. The train path draws every augmentation
parameter from a numpy stream keyed by (seed, sample index, epoch), so the
same sample in the same epoch always augments identically no matter how the
loader is parallelized; torch ops are only ever called with explicit
parameters.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
import torch
from torchvision.transforms import InterpolationMode
from torchvision.transforms.v2 import functional as TF

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
TARGET_SIZE = 224

# RandomResizedCrop aspect-ratio bounds (width/height), log-uniform sampled.
_ASPECT_RANGE = (3.0 / 4.0, 4.0 / 3.0)
_AUG_STREAM = 3  # namespaces the augmentation RNG against other seeded streams

_MEAN_T = torch.tensor(IMAGENET_MEAN).view(3, 1, 1)
_STD_T = torch.tensor(IMAGENET_STD).view(3, 1, 1)


class Provenance(enum.Enum):
    TrainAugmented = "train_augmented"
    EvalDeterministic = "eval_deterministic"


@dataclass(frozen=True)
class ImageTensor:
    """A normalized 3x224x224 float tensor tagged with how it was produced."""

    data: torch.Tensor
    provenance: Provenance


@dataclass(frozen=True)
class AugmentConfig:
    crop_scale_range: tuple[float, float] = (0.8, 1.0)
    rotation_degrees: float = 10.0
    hflip_prob: float = 0.5
    jitter: tuple[float, float, float] = (0.2, 0.2, 0.2)
    seed: int = 0

    def __post_init__(self) -> None:
        lo, hi = self.crop_scale_range
        if not 0 < lo <= hi <= 1:
            raise ValueError(f"crop_scale_range must satisfy 0 < lo <= hi <= 1, got {(lo, hi)}")
        if self.rotation_degrees < 0:
            raise ValueError("rotation_degrees must be >= 0")
        if not 0 <= self.hflip_prob <= 1:
            raise ValueError("hflip_prob must be in [0,1]")
        if any(j < 0 for j in self.jitter):
            raise ValueError("jitter factors must be >= 0")

    def is_identity(self) -> bool:
        return (
            self.crop_scale_range == (1.0, 1.0)
            and self.rotation_degrees == 0
            and self.hflip_prob == 0
            and all(j == 0 for j in self.jitter)
        )


def to_rgb(img: np.ndarray) -> np.ndarray:
    """Replicate a (H, W) grayscale image into identical (3, H, W) channels."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale image, got shape {img.shape}")
    return np.stack([img, img, img])


def _to_unit_rgb_tensor(img: np.ndarray) -> torch.Tensor:
    """(H, W) intensities in [0,255] -> (3, H, W) float32 in [0,1]."""
    gray = torch.from_numpy(np.asarray(img, dtype=np.float32)) / 255.0
    return gray.unsqueeze(0).expand(3, -1, -1).contiguous()


def _resize(t: torch.Tensor) -> torch.Tensor:
    return TF.resize(
        t, [TARGET_SIZE, TARGET_SIZE], interpolation=InterpolationMode.BILINEAR, antialias=True
    )


def normalize(t: torch.Tensor) -> torch.Tensor:
    return (t - _MEAN_T) / _STD_T


def denormalize(t: torch.Tensor) -> torch.Tensor:
    """Inverse of normalize; recovers [0,1] intensities for display."""
    return t * _STD_T + _MEAN_T


def preprocess_eval(img: np.ndarray) -> ImageTensor:
    """Deterministic path: replicate to RGB, bilinear resize, normalize."""
    t = _resize(_to_unit_rgb_tensor(img))
    return ImageTensor(data=normalize(t), provenance=Provenance.EvalDeterministic)


def _sample_crop(
    rng: np.random.Generator, height: int, width: int, scale: tuple[float, float]
) -> tuple[int, int, int, int]:
    """torchvision-style random-resized-crop parameter sampling (10 tries,
    then a center-crop fallback clamped to the aspect bounds)."""
    if scale == (1.0, 1.0):
        return 0, 0, height, width
    area = height * width
    log_lo, log_hi = math.log(_ASPECT_RANGE[0]), math.log(_ASPECT_RANGE[1])
    for _ in range(10):
        target_area = area * rng.uniform(scale[0], scale[1])
        aspect = math.exp(rng.uniform(log_lo, log_hi))
        w = int(round(math.sqrt(target_area * aspect)))
        h = int(round(math.sqrt(target_area / aspect)))
        if 0 < w <= width and 0 < h <= height:
            top = int(rng.integers(0, height - h + 1))
            left = int(rng.integers(0, width - w + 1))
            return top, left, h, w
    in_ratio = width / height
    if in_ratio < _ASPECT_RANGE[0]:
        w = width
        h = int(round(w / _ASPECT_RANGE[0]))
    elif in_ratio > _ASPECT_RANGE[1]:
        h = height
        w = int(round(h * _ASPECT_RANGE[1]))
    else:
        w, h = width, height
    return (height - h) // 2, (width - w) // 2, h, w


def augment_rng(seed: int, sample_index: int, epoch: int) -> np.random.Generator:
    """Per-sample stream; stable across platforms and loader parallelism."""
    key = [seed & 0xFFFFFFFFFFFFFFFF, _AUG_STREAM, epoch, sample_index]
    return np.random.default_rng(key)


def preprocess_train(
    img: np.ndarray, cfg: AugmentConfig, *, sample_index: int, epoch: int
) -> ImageTensor:
    """Augmented path: random resized crop, flip, rotation, jitter, normalize.

    Identity-valued steps are skipped entirely so a fully collapsed config
    reproduces the eval path bit for bit.
    """
    rng = augment_rng(cfg.seed, sample_index, epoch)
    t = _to_unit_rgb_tensor(img)
    height, width = t.shape[1], t.shape[2]

    top, left, h, w = _sample_crop(rng, height, width, cfg.crop_scale_range)
    if (top, left, h, w) == (0, 0, height, width):
        t = _resize(t)
    else:
        t = TF.resized_crop(
            t,
            top,
            left,
            h,
            w,
            [TARGET_SIZE, TARGET_SIZE],
            interpolation=InterpolationMode.BILINEAR,
            antialias=True,
        )

    if cfg.hflip_prob > 0 and rng.random() < cfg.hflip_prob:
        t = TF.horizontal_flip(t)

    if cfg.rotation_degrees > 0:
        angle = float(rng.uniform(-cfg.rotation_degrees, cfg.rotation_degrees))
        t = TF.rotate(t, angle, interpolation=InterpolationMode.BILINEAR, fill=0.0)

    brightness, contrast, saturation = cfg.jitter
    if brightness > 0:
        t = TF.adjust_brightness(t, float(rng.uniform(max(0.0, 1 - brightness), 1 + brightness)))
    if contrast > 0:
        t = TF.adjust_contrast(t, float(rng.uniform(max(0.0, 1 - contrast), 1 + contrast)))
    if saturation > 0:
        # No-op on replicated grayscale (all channels equal); kept for parity
        # with color inputs.
        t = TF.adjust_saturation(t, float(rng.uniform(max(0.0, 1 - saturation), 1 + saturation)))

    return ImageTensor(data=normalize(t), provenance=Provenance.TrainAugmented)
