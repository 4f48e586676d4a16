"""Feature extraction for forecast examples.

The text family hashes prefix content tokens into a fixed number of signed
buckets; the label family encodes the prefix label sequence as normalized
unigram and bigram counts, a last-label one-hot, and the prefix length.
The vector layout depends only on the FeatureConfig.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from forager.heuristics import DEFAULT_STOPWORDS, normalize_tokens
from forager.model import LABEL_INDEX, LABEL_ORDER
from forager.forecasting.tasks import ForecastExample

N_LABELS = len(LABEL_ORDER)
#: unigrams + bigrams + last-label one-hot + prefix length
LABEL_FAMILY_DIMS = N_LABELS + N_LABELS * N_LABELS + N_LABELS + 1

#: Scale for the prefix-length feature; keeps it comparable to the count features.
LENGTH_SCALE = 32.0


@dataclass(frozen=True)
class FeatureConfig:
    """Which feature families to extract."""

    use_text: bool = True
    use_labels: bool = True
    text_hash_dims: int = 256

    def __post_init__(self) -> None:
        if not (self.use_text or self.use_labels):
            raise ValueError("at least one feature family must be enabled")
        if self.text_hash_dims < 1:
            raise ValueError("text_hash_dims must be positive")

    @property
    def dimension(self) -> int:
        dims = 0
        if self.use_text:
            dims += self.text_hash_dims
        if self.use_labels:
            dims += LABEL_FAMILY_DIMS
        return dims

    @property
    def name(self) -> str:
        if self.use_text and self.use_labels:
            return "both"
        return "text" if self.use_text else "labels"


def _hash_token(token: str) -> tuple[int, int]:
    """Stable bucket index and +/-1 sign for one token."""
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=9).digest()
    bucket = int.from_bytes(digest[:8], "big")
    sign = 1 if digest[8] & 1 else -1
    return bucket, sign


def _text_vector(example: ForecastExample, dims: int) -> np.ndarray:
    vec = np.zeros(dims)
    for event, _ in example.prefix_events:
        for token in normalize_tokens(event.content, DEFAULT_STOPWORDS):
            bucket, sign = _hash_token(token)
            vec[bucket % dims] += sign
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return vec


def _label_vector(example: ForecastExample) -> np.ndarray:
    labels = [label for _, label in example.prefix_events]
    n = len(labels)
    unigrams = np.zeros(N_LABELS)
    for lab in labels:
        unigrams[LABEL_INDEX[lab]] += 1.0
    unigrams /= max(1, n)
    bigrams = np.zeros(N_LABELS * N_LABELS)
    for prev, cur in zip(labels, labels[1:]):
        bigrams[LABEL_INDEX[prev] * N_LABELS + LABEL_INDEX[cur]] += 1.0
    bigrams /= max(1, n - 1)
    last = np.zeros(N_LABELS)
    if labels:
        last[LABEL_INDEX[labels[-1]]] = 1.0
    return np.concatenate([unigrams, bigrams, last, [n / LENGTH_SCALE]])


def featurize(example: ForecastExample, cfg: FeatureConfig) -> np.ndarray:
    """Fixed-dimension feature vector for one example."""
    parts = []
    if cfg.use_text:
        parts.append(_text_vector(example, cfg.text_hash_dims))
    if cfg.use_labels:
        parts.append(_label_vector(example))
    return np.concatenate(parts)
