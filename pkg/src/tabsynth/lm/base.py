"""Backend-agnostic training and scoring entry points."""

from __future__ import annotations

import math
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from ..errors import ValidationError
from .vocab import Corpus, Vocabulary


@runtime_checkable
class GenerativeBackend(Protocol):
    """An autoregressive model over token ids.

    ``next_distribution`` returns a dense probability vector over the
    vocabulary given the context so far (context starts with BOS).
    """

    vocab: Vocabulary

    def next_distribution(self, context: Sequence[int]) -> np.ndarray: ...

    def train_corpus(self, corpus: Corpus, epochs: int, seed: int) -> list[float]: ...

    def finetune_corpus(
        self, corpus: Corpus, epochs: int, seed: int, downstream_weight: float
    ) -> list[float]: ...


def pretrain(
    backend: GenerativeBackend, corpus: Corpus, epochs: int, seed: int
) -> list[float]:
    """Fit the backend on the corpus; returns the per-epoch loss trace
    (count models return an empty trace)."""
    if len(corpus) == 0:
        raise ValidationError("pretraining corpus is empty")
    corpus.validate_ids(len(backend.vocab))
    return backend.train_corpus(corpus, epochs, seed)


def finetune(
    backend: GenerativeBackend,
    corpus: Corpus,
    epochs: int,
    seed: int,
    downstream_weight: float = 1e3,
) -> list[float]:
    """Adapt an initialized backend to a downstream corpus.

    Count models reweight accumulated mass by 1/downstream_weight before
    absorbing the downstream counts, so large weights converge to a model
    trained on the downstream data alone. Gradient models keep training on
    the downstream sequences only.
    """
    if len(corpus) == 0:
        raise ValidationError("fine-tuning corpus is empty")
    corpus.validate_ids(len(backend.vocab))
    return backend.finetune_corpus(corpus, epochs, seed, downstream_weight)


def sequence_logprob(backend: GenerativeBackend, seq: Sequence[int]) -> float:
    """Chain-rule log probability of a complete token sequence."""
    if len(seq) < 2:
        raise ValidationError("sequence must contain BOS plus at least one token")
    total = 0.0
    for k in range(1, len(seq)):
        dist = backend.next_distribution(seq[:k])
        total += math.log(dist[seq[k]])
    return total


def apply_temperature(dist: np.ndarray, temperature: float) -> np.ndarray:
    if temperature <= 0:
        raise ValidationError("temperature must be positive")
    if temperature == 1.0:
        return dist
    powered = np.power(dist, 1.0 / temperature)
    return powered / powered.sum()
