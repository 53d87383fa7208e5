from enum import Enum
from typing import Dict, Tuple

EMOTIONS: Tuple[str, ...] = (
    "happy",
    "sad",
    "angry",
    "fear",
    "surprise",
    "trust",
    "disgust",
    "anticipation",
)

# NRC lexicon labels by emotion; joy, sadness and anger are renamed, the rest coincide.
NRC_LABELS: Dict[str, str] = {
    "happy": "joy",
    "sad": "sadness",
    "angry": "anger",
    "fear": "fear",
    "surprise": "surprise",
    "trust": "trust",
    "disgust": "disgust",
    "anticipation": "anticipation",
}
NRC_TO_EMOTION: Dict[str, str] = {label: emotion for emotion, label in NRC_LABELS.items()}


class Polarity(str, Enum):
    POSITIVE = "positive"
    NEUTRAL = "neutral"
    NEGATIVE = "negative"


POLARITY: Dict[str, Polarity] = {
    "trust": Polarity.POSITIVE,
    "anticipation": Polarity.POSITIVE,
    "happy": Polarity.POSITIVE,
    "surprise": Polarity.NEUTRAL,
    "disgust": Polarity.NEGATIVE,
    "angry": Polarity.NEGATIVE,
    "fear": Polarity.NEGATIVE,
    "sad": Polarity.NEGATIVE,
}
