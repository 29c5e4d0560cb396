"""Emotion label table and usage tags for the FER2013 corpus.

The native FER2013 integer coding is preserved end-to-end; any other ordering
(e.g. alphabetical tables in reports) is purely presentational.
"""

from __future__ import annotations

import enum


class EmotionLabel(enum.IntEnum):
    """The seven FER2013 emotion classes in native index order."""

    Anger = 0
    Disgust = 1
    Fear = 2
    Happy = 3
    Sadness = 4
    Surprise = 5
    Neutral = 6


NUM_CLASSES = len(EmotionLabel)

EMOTION_NAMES: tuple[str, ...] = tuple(label.name for label in EmotionLabel)


class Usage(str, enum.Enum):
    """FER2013's built-in partition tags."""

    Training = "Training"
    PublicTest = "PublicTest"
    PrivateTest = "PrivateTest"


USAGE_ORDER: tuple[Usage, ...] = (Usage.Training, Usage.PublicTest, Usage.PrivateTest)


def label_mapping() -> dict[int, str]:
    """Index -> name mapping, as persisted in checkpoints."""
    return {int(label): label.name for label in EmotionLabel}
