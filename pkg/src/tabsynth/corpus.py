"""Serialize tables into training sentences.

Each row yields one sentence per requested permutation; permutation seeds
derive from (seed, row index, repeat index) so corpora are reproducible and
rows can be serialized in parallel. Tables whose column names are mostly
meaningless identifiers ("V1", "x2", single letters) are rejected from
pre-training corpora because they carry no transferable semantics.
"""

from __future__ import annotations

import re
from typing import Iterable, Sequence

import numpy as np

from .codec import CodecConfig, encode_row, random_permutation
from .errors import ValidationError
from .tables import Table

_MEANINGLESS = re.compile(r"^[A-Za-z][0-9]+$")


def is_meaningless_name(name: str) -> bool:
    return len(name) <= 1 or bool(_MEANINGLESS.match(name))


def meaningless_name_fraction(table: Table) -> float:
    names = list(table.schema.feature_names)
    if table.schema.label is not None:
        names.append(table.schema.label.name)
    return sum(is_meaningless_name(n) for n in names) / len(names)


def accepts_table(table: Table) -> bool:
    """Pre-training filter: reject when at least half the names are meaningless."""
    return meaningless_name_fraction(table) < 0.5


def _row_seed(seed: int, row_idx: int, rep: int) -> int:
    ss = np.random.SeedSequence((seed, row_idx, rep))
    return int(ss.generate_state(1)[0])


def table_sentences(
    table: Table,
    cfg: CodecConfig,
    permutations_per_row: int = 1,
    seed: int = 0,
) -> list[str]:
    """Render every row ``permutations_per_row`` times under fresh seeded
    feature orders."""
    if permutations_per_row < 1:
        raise ValidationError("permutations_per_row must be >= 1")
    m = len(table.schema.columns)
    out = []
    for i, row in enumerate(table.rows):
        slots = m + 1 if (cfg.include_label and row.label is not None) else m
        for rep in range(permutations_per_row):
            perm = random_permutation(slots, _row_seed(seed, i, rep))
            out.append(encode_row(row, table.schema, perm, cfg))
    return out


def corpus_sentences(
    tables: Sequence[Table],
    cfg: CodecConfig,
    permutations_per_row: int = 1,
    seed: int = 0,
    apply_name_filter: bool = True,
) -> tuple[list[str], list[str], list[tuple[str, bool]]]:
    """Sentences plus per-sentence provenance plus a per-table acceptance log."""
    sentences: list[str] = []
    provenance: list[str] = []
    log: list[tuple[str, bool]] = []
    for t_idx, table in enumerate(tables):
        accepted = accepts_table(table) if apply_name_filter else True
        log.append((table.source_id, accepted))
        if not accepted:
            continue
        sents = table_sentences(table, cfg, permutations_per_row, seed=seed + t_idx)
        sentences.extend(sents)
        provenance.extend([table.source_id] * len(sents))
    if not sentences:
        raise ValidationError("no tables accepted into the corpus")
    return sentences, provenance, log
