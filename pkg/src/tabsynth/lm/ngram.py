"""Backoff n-gram model with add-k smoothing.

Counts are kept per order. A query uses the longest context with nonzero
mass, falling back one order at a time; the final estimate is
(count + k) / (context_total + k * |V|), which is uniform when nothing has
been counted at all. Every token therefore keeps probability at least
k / (context_total + k * |V|) > 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ValidationError
from .vocab import Corpus, Vocabulary


@dataclass(frozen=True)
class NgramConfig:
    order: int = 3
    add_k: float = 0.01

    def __post_init__(self):
        if self.order < 1:
            raise ValidationError("order must be >= 1")
        if self.add_k <= 0:
            raise ValidationError("add_k must be positive for nonzero smoothing mass")


class NgramModel:
    def __init__(self, vocab: Vocabulary, config: NgramConfig = NgramConfig()):
        self.vocab = vocab
        self.config = config
        # counts[o][ctx][token] and totals[o][ctx] for ctx of length o-1
        self.counts: list[dict] = [dict() for _ in range(config.order + 1)]
        self.totals: list[dict] = [dict() for _ in range(config.order + 1)]

    # -- training -----------------------------------------------------------

    def _add(self, ctx: tuple, token: int, weight: float, order: int) -> None:
        by_ctx = self.counts[order].setdefault(ctx, {})
        by_ctx[token] = by_ctx.get(token, 0.0) + weight
        self.totals[order][ctx] = self.totals[order].get(ctx, 0.0) + weight

    def add_sequence(self, seq: Sequence[int], weight: float = 1.0) -> None:
        for k in range(1, len(seq)):
            target = seq[k]
            for order in range(1, self.config.order + 1):
                if k - (order - 1) < 0:
                    continue
                ctx = tuple(seq[k - order + 1 : k])
                self._add(ctx, target, weight, order)

    def train_corpus(self, corpus: Corpus, epochs: int, seed: int) -> list[float]:
        # one counting pass; epochs and seed do not change count totals
        for seq in corpus.sequences:
            self.add_sequence(seq)
        return []

    def scale_counts(self, factor: float) -> None:
        for order in range(1, self.config.order + 1):
            for ctx, by_tok in self.counts[order].items():
                for tok in by_tok:
                    by_tok[tok] *= factor
            for ctx in self.totals[order]:
                self.totals[order][ctx] *= factor

    def finetune_corpus(
        self, corpus: Corpus, epochs: int, seed: int, downstream_weight: float
    ) -> list[float]:
        if downstream_weight <= 0:
            raise ValidationError("downstream weight must be positive")
        self.scale_counts(1.0 / downstream_weight)
        return self.train_corpus(corpus, epochs, seed)

    def extend_vocabulary(self, sentences: Sequence[str]) -> None:
        """Append unseen downstream tokens; existing ids (and counts) keep."""
        self.vocab = self.vocab.extended(sentences)

    # -- querying ------------------------------------------------------------

    def resolve_context(self, context: Sequence[int]) -> tuple[int, tuple]:
        """Longest suffix of ``context`` with observed mass, as (order, ctx)."""
        order = min(self.config.order, len(context) + 1)
        ctx = tuple(context[len(context) - (order - 1) :]) if order > 1 else ()
        while order > 1 and self.totals[order].get(ctx, 0.0) <= 0.0:
            order -= 1
            ctx = ctx[1:]
        return order, ctx

    def resolved_distribution(self, order: int, ctx: tuple) -> np.ndarray:
        size = len(self.vocab)
        k = self.config.add_k
        total = self.totals[order].get(ctx, 0.0)
        denom = total + k * size
        dist = np.full(size, k / denom)
        for tok, c in self.counts[order].get(ctx, {}).items():
            dist[tok] += c / denom
        return dist

    def next_distribution(self, context: Sequence[int]) -> np.ndarray:
        order, ctx = self.resolve_context(context)
        return self.resolved_distribution(order, ctx)

    # -- persistence helpers --------------------------------------------------

    def count_arrays(self) -> dict[str, np.ndarray]:
        """Counts flattened to sorted arrays for the checkpoint container."""
        out = {}
        for order in range(1, self.config.order + 1):
            rows = []
            for ctx in sorted(self.counts[order]):
                for tok in sorted(self.counts[order][ctx]):
                    rows.append((*ctx, tok, self.counts[order][ctx][tok]))
            arr = np.array(rows, dtype=np.float64) if rows else np.zeros((0, order + 1))
            out[f"order{order}"] = arr
        return out

    @classmethod
    def from_count_arrays(
        cls, vocab: Vocabulary, config: NgramConfig, arrays: dict[str, np.ndarray]
    ) -> "NgramModel":
        model = cls(vocab, config)
        for order in range(1, config.order + 1):
            arr = arrays[f"order{order}"]
            for row in arr:
                ctx = tuple(int(v) for v in row[: order - 1])
                model._add(ctx, int(row[order - 1]), float(row[order]), order)
        return model
