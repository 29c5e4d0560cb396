"""FER2013 CSV ingestion, integrity validation, and class statistics.

The ingest contract is the public Kaggle distribution format: a header row
``emotion,pixels,Usage`` followed by one row per sample, where ``pixels`` is a
space-separated string of 2304 grayscale intensities (48x48, row-major).
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetFormatError
from .labels import NUM_CLASSES, EmotionLabel, Usage

IMAGE_SIDE = 48
PIXELS_PER_IMAGE = IMAGE_SIDE * IMAGE_SIDE
EXPECTED_HEADER = ("emotion", "pixels", "Usage")

_USAGE_CODES = {usage.value: code for code, usage in enumerate(Usage)}
_USAGE_BY_CODE = tuple(Usage)


@dataclass(frozen=True)
class Sample:
    """One labeled 48x48 grayscale face crop."""

    image: np.ndarray
    label: EmotionLabel
    usage: Usage

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.label == other.label
            and self.usage == other.usage
            and np.array_equal(self.image, other.image)
        )


class LabeledDataset:
    """Immutable, ordered collection of samples plus the source checksum.

    Images are stored as one (N, 48, 48) array; the backing arrays are marked
    read-only so a parsed dataset can be shared freely across readers.
    """

    def __init__(
        self,
        images: np.ndarray,
        labels: np.ndarray,
        usages: np.ndarray,
        source_digest: str,
    ) -> None:
        images = np.asarray(images)
        labels = np.asarray(labels, dtype=np.int64)
        usages = np.asarray(usages, dtype=np.int64)
        if images.ndim != 3 or images.shape[1:] != (IMAGE_SIDE, IMAGE_SIDE):
            raise DatasetFormatError(
                f"images must have shape (N, {IMAGE_SIDE}, {IMAGE_SIDE}), got {images.shape}"
            )
        if len(images) == 0:
            raise DatasetFormatError("dataset must contain at least one sample")
        if not (len(images) == len(labels) == len(usages)):
            raise DatasetFormatError("images, labels and usages must have equal length")
        for arr in (images, labels, usages):
            arr.setflags(write=False)
        self.images = images
        self.labels = labels
        self.usages = usages
        self.source_digest = source_digest

    @classmethod
    def from_samples(cls, samples: list[Sample], source_digest: str = "") -> "LabeledDataset":
        if not samples:
            raise DatasetFormatError("dataset must contain at least one sample")
        images = np.stack([np.asarray(s.image) for s in samples])
        labels = np.array([int(s.label) for s in samples])
        usages = np.array([_USAGE_CODES[s.usage.value] for s in samples])
        return cls(images, labels, usages, source_digest)

    def __len__(self) -> int:
        return len(self.images)

    def __getitem__(self, index: int) -> Sample:
        return Sample(
            image=self.images[index],
            label=EmotionLabel(int(self.labels[index])),
            usage=_USAGE_BY_CODE[int(self.usages[index])],
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __repr__(self) -> str:
        return f"LabeledDataset(n={len(self)}, digest={self.source_digest[:12]}...)"


@dataclass(frozen=True)
class ClassHistogram:
    """Per-class sample counts over the native label order."""

    counts: np.ndarray
    total: int

    def __post_init__(self) -> None:
        counts = np.array(self.counts, dtype=np.int64)  # private copy, frozen below
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        if counts.shape != (NUM_CLASSES,):
            raise ValueError(f"counts must be a {NUM_CLASSES}-vector, got shape {counts.shape}")
        if (counts < 0).any():
            raise ValueError("counts must be non-negative")
        if int(counts.sum()) != self.total:
            raise ValueError(f"sum(counts)={int(counts.sum())} != total={self.total}")


@dataclass
class ValidationReport:
    """Findings from a non-mutating integrity sweep over a dataset."""

    total: int
    source_digest: str
    class_counts: np.ndarray
    duplicate_pairs: int
    range_violation_indices: list[int] = field(default_factory=list)
    findings: list[str] = field(default_factory=list)

    @property
    def is_clean(self) -> bool:
        return not self.findings

    def to_text(self) -> str:
        lines = [
            "dataset validation report",
            f"samples: {self.total}",
            f"source digest: {self.source_digest}",
            "per-class counts:",
        ]
        for label in EmotionLabel:
            lines.append(f"  {label.name:9s} {int(self.class_counts[label])}")
        minority = EmotionLabel(int(np.argmin(self.class_counts)))
        lines.append(f"smallest class: {minority.name} ({int(self.class_counts[minority])})")
        lines.append(f"duplicate image pairs: {self.duplicate_pairs}")
        lines.append(f"pixel-range violations: {len(self.range_violation_indices)}")
        if self.findings:
            lines.append("findings:")
            lines.extend(f"  - {msg}" for msg in self.findings)
        else:
            lines.append("findings: none")
        return "\n".join(lines) + "\n"


def _parse_row(row_number: int, row: list[str]) -> tuple[int, np.ndarray, int]:
    if len(row) != 3:
        raise DatasetFormatError(f"row {row_number}: expected 3 fields, got {len(row)}")
    label_text, pixel_text, usage_text = row

    try:
        label = int(label_text)
    except ValueError:
        raise DatasetFormatError(f"row {row_number}: non-integer label {label_text!r}") from None
    if not 0 <= label < NUM_CLASSES:
        raise DatasetFormatError(
            f"row {row_number}: label {label} out of range [0,{NUM_CLASSES - 1}]"
        )

    tokens = pixel_text.split()
    if len(tokens) != PIXELS_PER_IMAGE:
        raise DatasetFormatError(
            f"row {row_number}: expected {PIXELS_PER_IMAGE} pixels, got {len(tokens)}"
        )
    try:
        pixels = np.array(tokens, dtype=np.int64)
    except (ValueError, OverflowError):
        bad = next(
            (tok for tok in tokens if not tok.lstrip("+-").isdigit()), tokens[0]
        )
        raise DatasetFormatError(f"row {row_number}: non-integer pixel {bad!r}") from None
    if pixels.min() < 0 or pixels.max() > 255:
        bad_value = int(pixels[(pixels < 0) | (pixels > 255)][0])
        raise DatasetFormatError(
            f"row {row_number}: pixel value {bad_value} outside [0,255]"
        )

    usage_text = usage_text.strip()
    if usage_text not in _USAGE_CODES:
        raise DatasetFormatError(f"row {row_number}: unknown usage tag {usage_text!r}")
    return label, pixels.astype(np.uint8), _USAGE_CODES[usage_text]


def parse_fer_csv(path: str | Path) -> LabeledDataset:
    """Parse a FER2013 CSV into a LabeledDataset, preserving file order.

    Raises DatasetFormatError naming the first defective row (1-indexed over
    data rows) and the defect.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetFormatError(f"dataset file not found: {path}")
    raw = path.read_bytes()
    digest = hashlib.sha256(raw).hexdigest()

    reader = csv.reader(io.StringIO(raw.decode("utf-8-sig")))
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetFormatError(f"{path}: empty file") from None
    if tuple(col.strip() for col in header) != EXPECTED_HEADER:
        raise DatasetFormatError(
            f"{path}: expected header {','.join(EXPECTED_HEADER)!r}, got {','.join(header)!r}"
        )

    images: list[np.ndarray] = []
    labels: list[int] = []
    usages: list[int] = []
    for row_number, row in enumerate(reader, start=1):
        if not row:
            continue
        label, pixels, usage = _parse_row(row_number, row)
        images.append(pixels.reshape(IMAGE_SIDE, IMAGE_SIDE))
        labels.append(label)
        usages.append(usage)
    if not images:
        raise DatasetFormatError(f"{path}: no data rows")

    return LabeledDataset(np.stack(images), np.array(labels), np.array(usages), digest)


def write_fer_csv(ds: LabeledDataset, path: str | Path) -> None:
    """Serialize a dataset back to the canonical CSV form."""
    path = Path(path)
    with path.open("w", newline="\n") as fh:
        fh.write(",".join(EXPECTED_HEADER) + "\n")
        for i in range(len(ds)):
            pixels = " ".join(str(int(v)) for v in ds.images[i].reshape(-1))
            usage = _USAGE_BY_CODE[int(ds.usages[i])].value
            fh.write(f"{int(ds.labels[i])},{pixels},{usage}\n")


def class_histogram(ds: LabeledDataset) -> ClassHistogram:
    """Count samples per class; counts[c] is the number of label-c samples."""
    if len(ds) == 0:
        raise ValueError("cannot build a class histogram from an empty dataset")
    counts = np.bincount(ds.labels, minlength=NUM_CLASSES)
    return ClassHistogram(counts=counts, total=len(ds))


def validate_dataset(ds: LabeledDataset) -> ValidationReport:
    """Report duplicates, per-class minima, and pixel-range violations.

    Never mutates or rejects the dataset; all observations land in the report.
    """
    counts = np.bincount(ds.labels, minlength=NUM_CLASSES)
    findings: list[str] = []

    seen: dict[bytes, int] = {}
    duplicate_pairs = 0
    for i in range(len(ds)):
        key = hashlib.sha1(np.ascontiguousarray(ds.images[i])).digest()
        group = seen.get(key, 0)
        duplicate_pairs += group  # each prior copy forms one new pair
        seen[key] = group + 1
    if duplicate_pairs:
        findings.append(f"{duplicate_pairs} duplicate image pair(s)")

    range_violations = []
    images = np.asarray(ds.images)
    if images.dtype != np.uint8:
        per_sample_min = images.reshape(len(ds), -1).min(axis=1)
        per_sample_max = images.reshape(len(ds), -1).max(axis=1)
        bad = np.flatnonzero((per_sample_min < 0) | (per_sample_max > 255))
        range_violations = [int(i) for i in bad]
        if range_violations:
            findings.append(f"{len(range_violations)} sample(s) with pixels outside [0,255]")

    for label in EmotionLabel:
        if counts[label] == 0:
            findings.append(f"class {label.name} has no samples")

    return ValidationReport(
        total=len(ds),
        source_digest=ds.source_digest,
        class_counts=counts,
        duplicate_pairs=duplicate_pairs,
        range_violation_indices=range_violations,
        findings=findings,
    )
