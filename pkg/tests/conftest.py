"""Shared fixtures: synthetic datasets and tiny-model helpers."""

from __future__ import annotations

import numpy as np
import pytest
import torch
from hypothesis import settings

from insideout.dataset import LabeledDataset
from insideout.model import ModelConfig, WeightsSource, build_model
from insideout.splits import DatasetSplit, SplitSpec
from insideout.transforms import AugmentConfig

settings.register_profile("suite", deadline=None, max_examples=50)
settings.load_profile("suite")

torch.set_num_threads(1)


IDENTITY_AUGMENT = AugmentConfig(
    crop_scale_range=(1.0, 1.0), rotation_degrees=0.0, hflip_prob=0.0, jitter=(0, 0, 0), seed=0
)


def flat_dataset(labels, usages=None, digest: str = "f" * 64) -> LabeledDataset:
    """Dataset of uniform mid-gray images with the given labels."""
    labels = np.asarray(labels, dtype=np.int64)
    images = np.full((len(labels), 48, 48), 127, dtype=np.uint8)
    if usages is None:
        usages = np.zeros(len(labels), dtype=np.int64)
    return LabeledDataset(images, labels, np.asarray(usages, dtype=np.int64), digest)


def orientation_dataset(
    counts, seed: int = 0, noise: int = 10, amp: float = 80.0, freq: float = 6.0
) -> LabeledDataset:
    """Learnable synthetic corpus: class c is a sinusoidal grating at angle c*pi/7."""
    rng = np.random.default_rng(seed)
    labels = rng.permutation(
        np.concatenate([np.full(c, k, dtype=np.int64) for k, c in enumerate(counts)])
    )
    yy, xx = np.meshgrid(np.arange(48), np.arange(48), indexing="ij")
    images = []
    for label in labels:
        theta = label * np.pi / 7
        wave = np.sin(2 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy) / 48)
        img = 128 + amp * wave + rng.integers(-noise, noise + 1, (48, 48))
        images.append(np.clip(img, 0, 255))
    return LabeledDataset(
        np.array(images, dtype=np.uint8),
        labels,
        np.zeros(len(labels), dtype=np.int64),
        "5" * 64,
    )


def trivial_split(ds: LabeledDataset, val_size: int = 8) -> DatasetSplit:
    """Train on everything, validate on a fixed prefix; for oracle experiments."""
    idx = np.arange(len(ds))
    return DatasetSplit(
        train=idx,
        val=idx[:val_size],
        test=idx[:val_size],
        spec=SplitSpec(seed=0),
        dataset_digest=ds.source_digest,
    )


def tiny_model(seed: int = 11, dropout: float = 0.0, **kwargs):
    cfg = ModelConfig(
        backbone="tiny_cnn",
        weights_source=WeightsSource.RandomInit,
        dropout_rate=dropout,
        seed=seed,
        **kwargs,
    )
    return build_model(cfg)


@pytest.fixture
def fer_csv(tmp_path):
    """Small valid FER2013-format file: 9 rows covering all usages."""

    def pixel_string(value: int) -> str:
        return " ".join([str(value)] * 2304)

    rows = ["emotion,pixels,Usage"]
    specs = [
        (0, 10, "Training"),
        (1, 20, "Training"),
        (2, 30, "Training"),
        (3, 40, "Training"),
        (4, 50, "Training"),
        (5, 60, "Training"),
        (6, 70, "Training"),
        (3, 80, "PublicTest"),
        (5, 90, "PrivateTest"),
    ]
    rows += [f"{label},{pixel_string(v)},{usage}" for label, v, usage in specs]
    path = tmp_path / "fer_small.csv"
    path.write_text("\n".join(rows) + "\n")
    return path
