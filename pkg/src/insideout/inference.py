"""Single-image inference against a saved checkpoint."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .labels import EMOTION_NAMES
from .model import EmotionClassifier, stable_softmax
from .transforms import preprocess_eval

TOP_K = 3


@dataclass(frozen=True)
class InferenceResult:
    image: str
    ok: bool
    label: str | None = None
    confidence: float | None = None
    top_k: tuple[tuple[str, float], ...] = ()
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "image": self.image,
            "ok": self.ok,
            "label": self.label,
            "confidence": self.confidence,
            "top_k": [{"label": name, "probability": p} for name, p in self.top_k],
            "error": self.error,
        }


def load_image_grayscale(path: str | Path) -> np.ndarray:
    """Read any PIL-supported image as (H, W) uint8 grayscale."""
    with Image.open(path) as img:
        return np.asarray(img.convert("L"))


def classify_probabilities(probs: np.ndarray, image: str) -> InferenceResult:
    """Turn one probability row into a ranked result (ties -> lowest index)."""
    pred = int(np.argmax(probs))
    order = np.lexsort((np.arange(len(probs)), -probs))[:TOP_K]
    return InferenceResult(
        image=image,
        ok=True,
        label=EMOTION_NAMES[pred],
        confidence=float(probs[pred]),
        top_k=tuple((EMOTION_NAMES[int(c)], float(probs[int(c)])) for c in order),
    )


def run_inference(
    model: EmotionClassifier, image_paths: list[str | Path]
) -> list[InferenceResult]:
    """Classify each image; unreadable files yield error entries, order kept."""
    results: list[InferenceResult] = []
    model.eval()
    for path in image_paths:
        try:
            gray = load_image_grayscale(path)
        except Exception as exc:
            results.append(InferenceResult(image=str(path), ok=False, error=str(exc)))
            continue
        batch = preprocess_eval(gray).data.unsqueeze(0)
        with torch.no_grad():
            probs = stable_softmax(model(batch))[0].numpy().astype(np.float64)
        results.append(classify_probabilities(probs, str(path)))
    return results
