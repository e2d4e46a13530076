"""Conditional row sampling from a trained backend.

Three prompting strategies: a bare feature name ("Age is "), one
feature-value pair ("Income is <=50K, "), or several pairs in random order.
Generation is plain temperature sampling until EOS; malformed outputs are
rejected and resampled under a bounded attempt budget, and every prompted
value is copied verbatim into the accepted row, so conditioning is exact by
construction.

Backends come in two flavors: token-level (anything with
``next_distribution``) and sentence-level generators exposing
``complete(prompt) -> sentence`` (the external-plugin contract).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .codec import (
    CodecConfig,
    DecodeRejection,
    clause_name,
    decode_row,
    parse_sentence,
    render_value,
    tokenize,
)
from .errors import SamplingBudgetError, ValidationError
from .lm.base import apply_temperature
from .lm.vocab import BOS, EOS
from .tables import Cell, ColumnKind, Row, Schema, Table

STRATEGIES = ("feature-name", "one-pair", "multi-pair")


@dataclass(frozen=True)
class Prompt:
    strategy: str
    pairs: tuple[tuple[str, str], ...] = ()
    start_feature: Optional[str] = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"unknown strategy {self.strategy!r}")
        if self.strategy == "feature-name" and self.pairs:
            raise ValidationError("feature-name prompts carry no pairs")
        if self.strategy == "one-pair" and len(self.pairs) != 1:
            raise ValidationError("one-pair prompts carry exactly one pair")
        if self.strategy == "multi-pair" and not self.pairs:
            raise ValidationError("multi-pair prompts need at least one pair")
        names = [n for n, _ in self.pairs]
        if len(set(names)) != len(names):
            raise ValidationError("prompt pair features must be distinct")


@dataclass(frozen=True)
class SamplingConfig:
    temperature: float = 1.0
    max_tokens: int = 256
    max_attempts_per_row: int = 16
    seed: int = 0
    categorical_clamp: bool = True

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValidationError("temperature must be positive")
        if self.max_attempts_per_row < 1 or self.max_tokens < 1:
            raise ValidationError("attempt and token budgets must be >= 1")


@dataclass
class SamplingReport:
    requested: int = 0
    accepted: int = 0
    attempted: int = 0
    rejections: dict[str, int] = field(default_factory=dict)
    per_row_attempts: list[int] = field(default_factory=list)
    model_filled_cells: int = 0
    fallback_filled_cells: int = 0
    fallback_rows: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.attempted if self.attempted else 0.0

    def count_rejection(self, category: str) -> None:
        self.rejections[category] = self.rejections.get(category, 0) + 1

    def merge(self, other: "SamplingReport") -> None:
        self.requested += other.requested
        self.accepted += other.accepted
        self.attempted += other.attempted
        for k, v in other.rejections.items():
            self.rejections[k] = self.rejections.get(k, 0) + v
        self.per_row_attempts.extend(other.per_row_attempts)
        self.model_filled_cells += other.model_filled_cells
        self.fallback_filled_cells += other.fallback_filled_cells
        self.fallback_rows += other.fallback_rows

    def to_dict(self) -> dict:
        return {
            "requested": self.requested,
            "accepted": self.accepted,
            "attempted": self.attempted,
            "acceptance_rate": self.acceptance_rate,
            "rejections": dict(sorted(self.rejections.items())),
            "model_filled_cells": self.model_filled_cells,
            "fallback_filled_cells": self.fallback_filled_cells,
            "fallback_rows": self.fallback_rows,
        }


class RowRejected(Exception):
    def __init__(self, categories: list[str]):
        super().__init__(f"row rejected after {len(categories)} attempts")
        self.categories = categories


def _slot_of(schema: Schema, name: str) -> int:
    if schema.label is not None and name == schema.label.name:
        return len(schema.columns)
    return schema.index_of(name)


def render_pair(schema: Schema, name: str, value_text: str, cfg: CodecConfig) -> str:
    slot = _slot_of(schema, name)
    kind = (
        schema.label_kind if slot == len(schema.columns) else schema.columns[slot][1]
    )
    shown = clause_name(schema, slot, cfg)
    cell = Cell.of(value_text, kind)
    return f"{shown} is {render_value(cell, kind, cfg)}"


def render_prompt(
    prompt: Prompt, schema: Schema, cfg: CodecConfig, rng: np.random.Generator
) -> str:
    """Prompt text per strategy; pair order (and an unset start feature) are
    drawn from ``rng``."""
    sep = cfg.clause_separator
    if prompt.strategy == "feature-name":
        if prompt.start_feature is not None:
            slot = _slot_of(schema, prompt.start_feature)
        else:
            slot = int(rng.integers(0, len(schema.columns)))
        return f"{clause_name(schema, slot, cfg)} is "
    pairs = list(prompt.pairs)
    if prompt.strategy == "multi-pair" and len(pairs) > 1:
        order = rng.permutation(len(pairs))
        pairs = [pairs[i] for i in order]
    rendered = sep.join(render_pair(schema, n, v, cfg) for n, v in pairs)
    return rendered + sep


def category_value_sets(table: Table) -> dict[str, frozenset[str]]:
    """Observed value sets per categorical column (label included), used by
    the clamp check."""
    out: dict[str, set[str]] = {}
    for name, kind in table.schema.columns:
        if kind is ColumnKind.CATEGORICAL:
            out[name] = set()
    label = table.schema.label
    if label is not None and table.schema.label_kind is ColumnKind.CATEGORICAL:
        out[label.name] = set()
    for row in table.rows:
        for (name, kind), cell in zip(table.schema.columns, row.cells):
            if kind is ColumnKind.CATEGORICAL and not cell.is_missing:
                out[name].add(cell.text)
        if label is not None and label.name in out and row.label is not None:
            out[label.name].add(row.label.text)
    return {k: frozenset(v) for k, v in out.items()}


def _clamp_violation(
    row: Row, schema: Schema, clamp_values: Mapping[str, frozenset[str]]
) -> bool:
    for (name, kind), cell in zip(schema.columns, row.cells):
        if kind is ColumnKind.CATEGORICAL and not cell.is_missing:
            allowed = clamp_values.get(name)
            if allowed is not None and cell.text not in allowed:
                return True
    if row.label is not None and schema.label is not None:
        allowed = clamp_values.get(schema.label.name)
        if allowed is not None and row.label.text not in allowed:
            return True
    return False


def _generate_text(backend, prompt_text: str, cfg: SamplingConfig, rng) -> str:
    if hasattr(backend, "complete"):  # sentence-level plugin contract
        return backend.complete(prompt_text)
    vocab = backend.vocab
    ctx = [BOS, *vocab.encode_words(tokenize(prompt_text))]
    cache = getattr(backend, "_sampler_cache", None)
    if cache is None:
        cache = {}
        try:
            backend._sampler_cache = cache
        except AttributeError:
            pass
    resolve = getattr(backend, "resolve_context", None)
    for _ in range(cfg.max_tokens):
        cdf = None
        key = None
        if resolve is not None:
            key = (resolve(ctx), cfg.temperature)
            cdf = cache.get(key)
        if cdf is None:
            dist = apply_temperature(backend.next_distribution(ctx), cfg.temperature)
            cdf = np.cumsum(dist)
            if key is not None:
                cache[key] = cdf
        u = rng.random() * cdf[-1]
        tok = int(np.searchsorted(cdf, u, side="right"))
        tok = min(tok, len(cdf) - 1)
        ctx.append(tok)
        if tok == EOS:
            break
    return vocab.decode_to_text(ctx)


def _apply_prompt_pairs(row: Row, schema: Schema, prompt: Prompt) -> Row:
    """Prompted values win over anything the model generated."""
    cells = list(row.cells)
    label = row.label
    for name, value in prompt.pairs:
        slot = _slot_of(schema, name)
        if slot == len(schema.columns):
            label = Cell.of(value, schema.label_kind)
        else:
            cells[slot] = Cell.of(value, schema.columns[slot][1])
    return Row(tuple(cells), label)


def sample_row(
    backend,
    schema: Schema,
    prompt: Prompt,
    sampling_cfg: SamplingConfig,
    codec_cfg: CodecConfig,
    rng: np.random.Generator,
    clamp_values: Optional[Mapping[str, frozenset[str]]] = None,
    policy: str = "strict",
    report: Optional[SamplingReport] = None,
    required_slots: Optional[Sequence[int]] = None,
) -> tuple[Row, int]:
    """One accepted row plus the number of attempts it took.

    ``required_slots`` (partial decodes only) lists feature indices that the
    generation must have filled, e.g. the missing cells during imputation.
    Raises RowRejected when max_attempts_per_row generations all fail to
    parse, decode, fill, or satisfy the clamp.
    """
    if sampling_cfg.categorical_clamp and clamp_values is None:
        raise ValidationError("clamp enabled but no clamp value sets supplied")
    categories: list[str] = []
    for attempt in range(1, sampling_cfg.max_attempts_per_row + 1):
        if report is not None:
            report.attempted += 1
        prompt_text = render_prompt(prompt, schema, codec_cfg, rng)
        text = _generate_text(backend, prompt_text, sampling_cfg, rng)
        parsed = parse_sentence(text, schema, codec_cfg)
        try:
            row = decode_row(parsed, schema, policy)
        except DecodeRejection as rej:
            categories.append(rej.category)
            if report is not None:
                report.count_rejection(rej.category)
            continue
        row = _apply_prompt_pairs(row, schema, prompt)
        if required_slots is not None and any(
            row.cells[j].is_missing for j in required_slots
        ):
            categories.append("incomplete-fill")
            if report is not None:
                report.count_rejection("incomplete-fill")
            continue
        if sampling_cfg.categorical_clamp and _clamp_violation(row, schema, clamp_values):
            categories.append("clamp-violation")
            if report is not None:
                report.count_rejection("clamp-violation")
            continue
        return row, attempt
    raise RowRejected(categories)


def _row_rng(master_seed: int, row_index: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence((master_seed, row_index)))
    )


def sample_table(
    backend,
    schema: Schema,
    prompt: Prompt,
    count: int,
    sampling_cfg: SamplingConfig,
    codec_cfg: CodecConfig,
    clamp_values: Optional[Mapping[str, frozenset[str]]] = None,
    keep_labels: bool = False,
    source_id: str = "synthetic",
) -> tuple[Table, SamplingReport]:
    """Exactly ``count`` accepted rows, or SamplingBudgetError carrying the
    partial table once a row slot exhausts its attempts.

    Output rows are feature-only unless keep_labels is set (the imbalance
    protocol keeps the prompted label).
    """
    if count < 1:
        raise ValidationError("count must be >= 1")
    report = SamplingReport(requested=count)
    rows: list[Row] = []
    out_schema = schema if keep_labels else schema.without_label()
    for i in range(count):
        rng = _row_rng(sampling_cfg.seed, i)
        try:
            row, attempts = sample_row(
                backend, schema, prompt, sampling_cfg, codec_cfg, rng,
                clamp_values=clamp_values, report=report,
            )
        except RowRejected as rej:
            partial = Table(out_schema, tuple(rows), source_id)
            raise SamplingBudgetError(
                f"row {i}: no valid sample in {sampling_cfg.max_attempts_per_row} "
                f"attempts (last reasons: {rej.categories[-3:]})",
                partial_table=partial,
                report=report,
            ) from None
        report.accepted += 1
        report.per_row_attempts.append(attempts)
        if keep_labels:
            if row.label is None and schema.label is not None:
                # label clause absent from the generation and not prompted
                partial = Table(out_schema, tuple(rows), source_id)
                raise SamplingBudgetError(
                    f"row {i}: generation carries no label clause",
                    partial_table=partial,
                    report=report,
                )
            rows.append(row)
        else:
            rows.append(Row(row.cells))
    return Table(out_schema, tuple(rows), source_id), report


def column_fallbacks(table: Table) -> dict[str, str]:
    """Per-column fallback fill values from observed cells: mode for
    categorical columns (ties to the lexicographically smallest), lower
    median for numerical ones (always an observed text)."""
    out: dict[str, str] = {}
    for j, (name, kind) in enumerate(table.schema.columns):
        observed = [r.cells[j] for r in table.rows if not r.cells[j].is_missing]
        if not observed:
            continue
        if kind is ColumnKind.CATEGORICAL:
            counts: dict[str, int] = {}
            for c in observed:
                counts[c.text] = counts.get(c.text, 0) + 1
            out[name] = min(counts, key=lambda t: (-counts[t], t))
        else:
            ordered = sorted(observed, key=lambda c: (c.number, c.text))
            out[name] = ordered[(len(ordered) - 1) // 2].text
    return out


def impute_rows(
    backend,
    table: Table,
    sampling_cfg: SamplingConfig,
    codec_cfg: CodecConfig,
    clamp_values: Optional[Mapping[str, frozenset[str]]] = None,
) -> tuple[Table, SamplingReport]:
    """Fill missing feature cells by multi-pair prompting on observed cells.

    Observed cells and labels pass through byte-identical. Rows whose attempt
    budget runs out fall back to per-column mode/median fills and are flagged
    in the report.
    """
    if sampling_cfg.categorical_clamp and clamp_values is None:
        clamp_values = category_value_sets(table)
    fallbacks = column_fallbacks(table)
    schema = table.schema
    report = SamplingReport(requested=len(table.rows))
    out_rows: list[Row] = []
    for i, row in enumerate(table.rows):
        missing = [j for j, c in enumerate(row.cells) if c.is_missing]
        if not missing:
            out_rows.append(row)
            report.accepted += 1
            continue
        pairs = [
            (schema.columns[j][0], c.text)
            for j, c in enumerate(row.cells)
            if not c.is_missing
        ]
        if codec_cfg.include_label and row.label is not None and schema.label is not None:
            pairs.append((schema.label.name, row.label.text))
        rng = _row_rng(sampling_cfg.seed, i)
        filled: Optional[Row] = None
        if pairs:
            prompt = Prompt("multi-pair", tuple(pairs))
            try:
                filled, attempts = sample_row(
                    backend, schema, prompt, sampling_cfg, codec_cfg, rng,
                    clamp_values=clamp_values, policy="partial", report=report,
                    required_slots=missing,
                )
                report.per_row_attempts.append(attempts)
            except RowRejected:
                filled = None
        else:
            report.count_rejection("no-observed-features")

        cells = list(row.cells)
        used_fallback = False
        for j in missing:
            candidate = filled.cells[j] if filled is not None else Cell.missing()
            if not candidate.is_missing:
                cells[j] = candidate
                report.model_filled_cells += 1
            else:
                name = schema.columns[j][0]
                if name not in fallbacks:
                    raise ValidationError(
                        f"column {name!r} has no observed values to fall back on"
                    )
                cells[j] = Cell.of(fallbacks[name], schema.columns[j][1])
                report.fallback_filled_cells += 1
                used_fallback = True
        if used_fallback:
            report.fallback_rows += 1
        else:
            report.accepted += 1
        out_rows.append(Row(tuple(cells), row.label))
    return table.with_rows(out_rows), report
