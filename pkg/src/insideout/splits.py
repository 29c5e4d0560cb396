"""Stratified and usage-column train/val/test partitioning.

Stratified allocation uses largest-remainder apportionment in two passes:
partition totals first, then per-class quotas constrained to the remaining
partition capacity. This keeps every class within one sample of exact
proportionality in every partition while partition sizes stay exact.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import LabeledDataset
from .errors import SplitError
from .labels import NUM_CLASSES, EmotionLabel, Usage

PARTITION_NAMES = ("train", "val", "test")
_RATIO_TOL = 1e-9


class SplitMode(str, enum.Enum):
    UsageColumn = "usage_column"
    StratifiedRandom = "stratified_random"


@dataclass(frozen=True)
class SplitSpec:
    mode: SplitMode = SplitMode.StratifiedRandom
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode is SplitMode.StratifiedRandom:
            if len(self.ratios) != 3:
                raise SplitError(f"expected 3 ratios, got {len(self.ratios)}")
            if any(r <= 0 for r in self.ratios):
                raise SplitError(f"all ratios must be positive, got {self.ratios}")
            if abs(sum(self.ratios) - 1.0) > _RATIO_TOL:
                raise SplitError(f"ratios must sum to 1.0, got {sum(self.ratios)!r}")


@dataclass
class DatasetSplit:
    """Index lists into a LabeledDataset; pairwise disjoint and covering."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    spec: SplitSpec
    dataset_digest: str

    def partitions(self) -> dict[str, np.ndarray]:
        return {"train": self.train, "val": self.val, "test": self.test}

    def digest(self) -> str:
        """Checksum of the canonical serialized form, for run manifests."""
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def to_json(self) -> str:
        payload = {
            "mode": self.spec.mode.value,
            "ratios": list(self.spec.ratios),
            "seed": self.spec.seed,
            "dataset_digest": self.dataset_digest,
            "train": [int(i) for i in self.train],
            "val": [int(i) for i in self.val],
            "test": [int(i) for i in self.test],
        }
        return json.dumps(payload, indent=2) + "\n"


def _largest_remainder(weights: np.ndarray, total: int) -> np.ndarray:
    """Apportion `total` integer units proportionally to `weights`.

    Each result differs from its exact share by less than one unit. Ties go to
    the lower index (train before val before test).
    """
    shares = weights * (total / weights.sum())
    base = np.floor(shares).astype(np.int64)
    residue = total - int(base.sum())
    if residue > 0:
        order = np.lexsort((np.arange(len(shares)), -(shares - base)))
        base[order[:residue]] += 1
    return base


def _allocate_counts(class_counts: np.ndarray, ratios: tuple[float, float, float]) -> np.ndarray:
    """Per-class, per-partition sample counts, shape (3, num_classes).

    Controlled rounding of the quota table q[p][c] = |p| * n_c / N: cell counts
    are floor(q) plus a 0/1 leftover matrix whose row sums are the partition
    deficits and column sums the class deficits. Assigning each class's
    leftovers to the partitions with the largest remaining deficit (Ryser's
    construction) always succeeds, so every cell stays within one sample of
    its exact quota and partition totals are exact.
    """
    n_total = int(class_counts.sum())
    targets = _largest_remainder(np.asarray(ratios, dtype=np.float64), n_total)

    quotas = np.outer(targets, class_counts).astype(np.float64) / n_total
    counts = np.floor(quotas).astype(np.int64)
    fractions = quotas - counts
    partition_deficit = targets - counts.sum(axis=1)
    class_deficit = class_counts - counts.sum(axis=0)

    class_order = sorted(
        range(len(class_counts)), key=lambda c: (-class_deficit[c], -class_counts[c], c)
    )
    for c in class_order:
        for _ in range(int(class_deficit[c])):
            given = counts[:, c] - np.floor(quotas[:, c]).astype(np.int64)
            eligible = [p for p in range(len(targets)) if partition_deficit[p] > 0 and not given[p]]
            if not eligible:  # cannot happen: Gale-Ryser feasibility holds here
                raise SplitError("internal allocation error")
            choice = min(eligible, key=lambda p: (-partition_deficit[p], -fractions[p, c], p))
            counts[choice, c] += 1
            partition_deficit[choice] -= 1
    return counts


def split_stratified(ds: LabeledDataset, spec: SplitSpec) -> DatasetSplit:
    """Partition `ds` preserving per-class proportions; deterministic per seed."""
    if spec.mode is not SplitMode.StratifiedRandom:
        raise SplitError(f"split_stratified requires StratifiedRandom mode, got {spec.mode}")
    class_counts = np.bincount(ds.labels, minlength=NUM_CLASSES)
    for label in EmotionLabel:
        # Absent classes are tolerated; present ones need one sample per partition.
        if 0 < class_counts[label] < len(PARTITION_NAMES):
            raise SplitError(
                f"class {label.name} has {int(class_counts[label])} samples, "
                f"fewer than {len(PARTITION_NAMES)} partitions"
            )

    counts = _allocate_counts(class_counts, spec.ratios)

    rng = np.random.default_rng(spec.seed)
    parts: list[list[np.ndarray]] = [[], [], []]
    for c in range(NUM_CLASSES):
        indices = rng.permutation(np.flatnonzero(ds.labels == c))
        offset = 0
        for p in range(3):
            parts[p].append(indices[offset : offset + counts[p, c]])
            offset += counts[p, c]

    assembled = [rng.permutation(np.concatenate(chunks)) for chunks in parts]
    return DatasetSplit(
        train=assembled[0],
        val=assembled[1],
        test=assembled[2],
        spec=spec,
        dataset_digest=ds.source_digest,
    )


def split_by_usage(ds: LabeledDataset) -> DatasetSplit:
    """Honor FER2013's built-in Training/PublicTest/PrivateTest tags."""
    by_usage = {
        "train": np.flatnonzero(ds.usages == 0),
        "val": np.flatnonzero(ds.usages == 1),
        "test": np.flatnonzero(ds.usages == 2),
    }
    for name, usage in zip(PARTITION_NAMES, Usage):
        if len(by_usage[name]) == 0:
            raise SplitError(f"{usage.value} partition empty")
    spec = SplitSpec(mode=SplitMode.UsageColumn)
    return DatasetSplit(
        train=by_usage["train"],
        val=by_usage["val"],
        test=by_usage["test"],
        spec=spec,
        dataset_digest=ds.source_digest,
    )


def make_split(ds: LabeledDataset, spec: SplitSpec) -> DatasetSplit:
    if spec.mode is SplitMode.UsageColumn:
        return split_by_usage(ds)
    return split_stratified(ds, spec)


def save_split(split: DatasetSplit, path: str | Path) -> None:
    Path(path).write_text(split.to_json())


def load_split(path: str | Path) -> DatasetSplit:
    path = Path(path)
    if not path.exists():
        raise SplitError(f"split file not found: {path}")
    payload = json.loads(path.read_text())
    try:
        spec = SplitSpec(
            mode=SplitMode(payload["mode"]),
            ratios=tuple(payload["ratios"]),
            seed=int(payload["seed"]),
        )
        return DatasetSplit(
            train=np.asarray(payload["train"], dtype=np.int64),
            val=np.asarray(payload["val"], dtype=np.int64),
            test=np.asarray(payload["test"], dtype=np.int64),
            spec=spec,
            dataset_digest=payload["dataset_digest"],
        )
    except (KeyError, ValueError) as exc:
        raise SplitError(f"malformed split file {path}: {exc}") from exc
