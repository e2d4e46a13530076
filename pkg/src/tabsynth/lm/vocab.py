"""Token vocabulary and encoded corpora.

Tokens are the whitespace units of rendered sentences (feature-name words,
"is", the "," separator, categorical value words, individual number
characters) plus five specials. The separator token is the bare comma; the
language-model layer therefore assumes the codec's default ", " separator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from ..codec import detokenize, tokenize
from ..errors import ValidationError

BOS = 0
EOS = 1
UNK = 2
SEP = 3
IS = 4

SPECIAL_TOKENS = ("<bos>", "<eos>", "<unk>", ",", "is")


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    _ids: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.tokens[: len(SPECIAL_TOKENS)] != SPECIAL_TOKENS:
            raise ValidationError("vocabulary must start with the special tokens")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValidationError("vocabulary has duplicate tokens")
        object.__setattr__(self, "_ids", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        return self._ids.get(token, UNK)

    def contains(self, token: str) -> bool:
        return token in self._ids

    def encode_words(self, words: Sequence[str]) -> list[int]:
        return [self._ids.get(w, UNK) for w in words]

    def encode_sentence(self, text: str) -> list[int]:
        return [BOS, *self.encode_words(tokenize(text)), EOS]

    def decode_to_text(self, ids: Sequence[int]) -> str:
        words = [self.tokens[i] for i in ids if i not in (BOS, EOS)]
        return detokenize(words)

    def extended(self, sentences: Iterable[str]) -> "Vocabulary":
        """Vocabulary grown with tokens seen in ``sentences``; existing ids
        are preserved, new tokens are appended in sorted order."""
        new = set()
        for text in sentences:
            for tok in tokenize(text):
                if tok not in self._ids:
                    new.add(tok)
        if not new:
            return self
        return Vocabulary(self.tokens + tuple(sorted(new)))


def build_vocabulary(sentences: Sequence[str]) -> Vocabulary:
    """Specials first, then every corpus token in lexicographic order."""
    if not sentences:
        raise ValidationError("cannot build a vocabulary from an empty corpus")
    seen = set()
    for text in sentences:
        seen.update(tokenize(text))
    seen.difference_update(SPECIAL_TOKENS)
    return Vocabulary(SPECIAL_TOKENS + tuple(sorted(seen)))


@dataclass(frozen=True)
class Corpus:
    """Encoded training sequences plus where each came from."""

    sequences: tuple[tuple[int, ...], ...]
    provenance: tuple[str, ...] = ()

    def __post_init__(self):
        for seq in self.sequences:
            if not seq or seq[0] != BOS or seq[-1] != EOS:
                raise ValidationError("sequences must start with BOS and end with EOS")

    def __len__(self) -> int:
        return len(self.sequences)

    def validate_ids(self, vocab_size: int) -> None:
        for seq in self.sequences:
            for t in seq:
                if not 0 <= t < vocab_size:
                    raise ValidationError(f"token id {t} outside vocabulary")


def encode_corpus(
    sentences: Sequence[str],
    vocab: Vocabulary,
    provenance: Optional[Sequence[str]] = None,
) -> Corpus:
    if not sentences:
        raise ValidationError("empty corpus")
    seqs = tuple(tuple(vocab.encode_sentence(s)) for s in sentences)
    prov = tuple(provenance) if provenance is not None else ()
    return Corpus(seqs, prov)
