"""Row <-> sentence codec.

A row serializes to clauses of the form "<Feature> is <Value>" joined by a
separator (default ", "), in a permuted feature order. Numeric values can be
rendered character by character ("18" -> "1 8") so a language model sees one
token per digit; sign and decimal point are characters of their own
("-12.5" -> "- 1 2 . 5"). Categorical values that would collide with the
separator are CSV-style double-quoted.

The parser is total: it never raises on bad input, it returns a ParseResult
whose diagnostics list what went wrong, clause by clause.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError
from .tables import Cell, ColumnKind, Row, Schema, is_number_text


@dataclass(frozen=True)
class CodecConfig:
    use_character_numbers: bool = True
    use_real_feature_names: bool = True
    clause_separator: str = ", "
    include_label: bool = True

    def __post_init__(self):
        if not self.clause_separator:
            raise ValidationError("clause separator must be non-empty")


@dataclass(frozen=True)
class Permutation:
    """Bijection of clause slots; mapping[p] is the slot shown at position p."""

    mapping: tuple[int, ...]
    seed: Optional[int] = None

    def __post_init__(self):
        if sorted(self.mapping) != list(range(len(self.mapping))):
            raise ValidationError(f"not a permutation: {self.mapping}")

    def __len__(self) -> int:
        return len(self.mapping)

    def inverse(self) -> "Permutation":
        inv = [0] * len(self.mapping)
        for p, s in enumerate(self.mapping):
            inv[s] = p
        return Permutation(tuple(inv), self.seed)


def identity_permutation(m: int) -> Permutation:
    return Permutation(tuple(range(m)))


def random_permutation(m: int, seed: int) -> Permutation:
    """Uniform over the m! orders, deterministic per seed."""
    if m < 1:
        raise ValidationError("permutation size must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    return Permutation(tuple(int(i) for i in rng.permutation(m)), seed)


@dataclass(frozen=True)
class EncodedSentence:
    clauses: tuple[tuple[str, str], ...]  # (feature name, rendered value text)
    order: Permutation


# ---------------------------------------------------------------------------
# Rendering


def _clause_names(schema: Schema, cfg: CodecConfig) -> dict[str, tuple[int, ColumnKind]]:
    """Map rendered clause name -> (slot index, column kind).

    Slots 0..m-1 are features in schema order; slot m is the label.
    """
    m = len(schema.columns)
    names: dict[str, tuple[int, ColumnKind]] = {}
    for j, (name, kind) in enumerate(schema.columns):
        shown = name if cfg.use_real_feature_names else f"V{j + 1}"
        names[shown] = (j, kind)
    if schema.label is not None:
        shown = schema.label.name if cfg.use_real_feature_names else f"V{m + 1}"
        names[shown] = (m, schema.label_kind)
    return names


def clause_name(schema: Schema, slot: int, cfg: CodecConfig) -> str:
    m = len(schema.columns)
    if slot == m:
        if schema.label is None:
            raise ValidationError("schema has no label slot")
        return schema.label.name if cfg.use_real_feature_names else f"V{m + 1}"
    name = schema.columns[slot][0]
    return name if cfg.use_real_feature_names else f"V{slot + 1}"


def render_value(cell: Cell, kind: ColumnKind, cfg: CodecConfig) -> str:
    if cell.is_missing:
        raise ValidationError("cannot render a missing cell")
    text = cell.text
    if kind is ColumnKind.NUMERICAL:
        return " ".join(text) if cfg.use_character_numbers else text
    return _quote_if_needed(text, cfg.clause_separator)


def _quote_if_needed(value: str, separator: str) -> str:
    # Any embedded quote forces quoting, so rendered text never contains a
    # bare unpaired quote and the clause scanner's quote state stays sound.
    if (
        value == ""
        or separator in value
        or '"' in value
        or value != value.strip()
    ):
        return '"' + value.replace('"', '""') + '"'
    return value


def encode_clauses(
    row: Row, schema: Schema, perm: Permutation, cfg: CodecConfig
) -> EncodedSentence:
    m = len(schema.columns)
    with_label = cfg.include_label and row.label is not None
    slots = m + 1 if with_label else m
    if len(perm) != slots:
        raise ValidationError(
            f"permutation covers {len(perm)} slots, row serializes {slots}"
        )
    sep = cfg.clause_separator
    clauses = []
    for p in range(slots):
        slot = perm.mapping[p]
        cell = row.label if slot == m else row.cells[slot]
        if cell.is_missing:
            continue
        name = clause_name(schema, slot, cfg)
        if sep in name:
            raise ValidationError(f"feature name {name!r} contains the separator")
        kind = schema.label_kind if slot == m else schema.columns[slot][1]
        clauses.append((name, render_value(cell, kind, cfg)))
    return EncodedSentence(tuple(clauses), perm)


def render_sentence(sentence: EncodedSentence, cfg: CodecConfig) -> str:
    return cfg.clause_separator.join(f"{n} is {v}" for n, v in sentence.clauses)


def encode_row(row: Row, schema: Schema, perm: Permutation, cfg: CodecConfig) -> str:
    """Serialize one row; missing cells simply have no clause."""
    return render_sentence(encode_clauses(row, schema, perm, cfg), cfg)


# ---------------------------------------------------------------------------
# Tokenization (whitespace units; the separator is its own token)


def tokenize(text: str) -> list[str]:
    """Split into whitespace-delimited tokens, emitting a bare "," separator
    token, without splitting on commas inside double-quoted values."""
    tokens: list[str] = []
    cur: list[str] = []
    in_quotes = False
    i = 0
    n = len(text)

    def flush():
        if cur:
            tokens.append("".join(cur))
            cur.clear()

    while i < n:
        ch = text[i]
        if in_quotes:
            if ch == '"':
                if i + 1 < n and text[i + 1] == '"':
                    cur.append('""')
                    i += 2
                    continue
                cur.append('"')
                in_quotes = False
            elif ch.isspace():
                flush()
            else:
                cur.append(ch)
            i += 1
        else:
            if ch == '"':
                in_quotes = True
                cur.append('"')
            elif ch == ",":
                flush()
                tokens.append(",")
            elif ch.isspace():
                flush()
            else:
                cur.append(ch)
            i += 1
    flush()
    return tokens


def detokenize(tokens: Sequence[str]) -> str:
    parts: list[str] = []
    for tok in tokens:
        if tok == "," or not parts:
            parts.append(tok)
        else:
            parts.append(" " + tok)
    return "".join(parts)


# ---------------------------------------------------------------------------
# Parsing


@dataclass(frozen=True)
class Diagnostic:
    category: str  # unknown-feature | duplicate-feature | type-mismatch | unparseable-clause
    clause: str
    message: str


@dataclass
class ParseResult:
    clauses: list[tuple[str, str]] = field(default_factory=list)  # (real name, value)
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.diagnostics

    def value_of(self, name: str) -> Optional[str]:
        for n, v in self.clauses:
            if n == name:
                return v
        return None


class DecodeRejection(ValidationError):
    def __init__(self, diagnostics: list[Diagnostic]):
        first = diagnostics[0] if diagnostics else None
        super().__init__(first.message if first else "rejected")
        self.diagnostics = diagnostics

    @property
    def category(self) -> str:
        return self.diagnostics[0].category if self.diagnostics else "rejected"


def _split_clauses(text: str, separator: str) -> list[str]:
    if '"' not in text:
        return text.split(separator)
    out = []
    cur_start = 0
    in_quotes = False
    i = 0
    n = len(text)
    sep_len = len(separator)
    while i < n:
        ch = text[i]
        if in_quotes:
            if ch == '"':
                if i + 1 < n and text[i + 1] == '"':
                    i += 2
                    continue
                in_quotes = False
            i += 1
        elif ch == '"':
            in_quotes = True
            i += 1
        elif text.startswith(separator, i):
            out.append(text[cur_start:i])
            i += sep_len
            cur_start = i
        else:
            i += 1
    out.append(text[cur_start:])
    return out


def _unquote(value: str) -> Optional[str]:
    """Inverse of _quote_if_needed; None when the quoting is malformed."""
    if len(value) < 2 or not value.endswith('"'):
        return None
    body = value[1:-1]
    out = []
    i = 0
    while i < len(body):
        if body[i] == '"':
            if i + 1 < len(body) and body[i + 1] == '"':
                out.append('"')
                i += 2
                continue
            return None
        out.append(body[i])
        i += 1
    return "".join(out)


def parse_sentence(text: str, schema: Schema, cfg: CodecConfig) -> ParseResult:
    """Split ``text`` into "<name> is <value>" clauses against the schema.

    Total: malformed input lands in ``diagnostics`` instead of raising.
    Numeric values have their inter-character spaces removed and must then
    parse as decimal literals. Returned clause names are always the real
    schema names, even when dummy names were rendered.
    """
    names = _clause_names(schema, cfg)
    # Longest-first so a name that prefixes another cannot shadow it.
    ordered = sorted(names, key=len, reverse=True)
    m = len(schema.columns)
    result = ParseResult()
    seen: set[int] = set()
    raw_clauses = _split_clauses(text, cfg.clause_separator)
    for raw in raw_clauses:
        clause = raw.strip()
        if not clause:
            continue
        matched = None
        for name in ordered:
            if clause.startswith(name + " is "):
                matched = name
                break
            if clause == name + " is":  # prompt fragment with no value yet
                matched = name
                break
        if matched is None:
            result.diagnostics.append(
                Diagnostic("unknown-feature", clause, f"no known feature starts clause {clause!r}")
            )
            continue
        slot, kind = names[matched]
        value = clause[len(matched) + 4 :]
        if slot in seen:
            result.diagnostics.append(
                Diagnostic("duplicate-feature", clause, f"feature {matched!r} repeated")
            )
            continue
        if value.startswith('"'):
            unquoted = _unquote(value.strip())
            if unquoted is None:
                result.diagnostics.append(
                    Diagnostic("unparseable-clause", clause, f"bad quoting in {value!r}")
                )
                continue
            value = unquoted
        else:
            value = value.strip()
            if kind is ColumnKind.NUMERICAL:
                value = "".join(value.split())
        if not value:
            result.diagnostics.append(
                Diagnostic("unparseable-clause", clause, f"empty value for {matched!r}")
            )
            continue
        if kind is ColumnKind.NUMERICAL and not is_number_text(value):
            result.diagnostics.append(
                Diagnostic("type-mismatch", clause, f"{matched!r} value {value!r} is not numeric")
            )
            continue
        seen.add(slot)
        real = (
            schema.label.name
            if slot == m
            else schema.columns[slot][0]
        )
        result.clauses.append((real, value))
    return result


def decode_row(
    parse: ParseResult,
    schema: Schema,
    policy: str = "strict",
    require_label: bool = False,
) -> Row:
    """Rebuild a Row from parsed clauses.

    strict: every schema feature must appear exactly once, with no
    diagnostics at all. partial: absent features become Missing and bad
    clauses are ignored (used by imputation).
    Raises DecodeRejection carrying the diagnostics otherwise.
    """
    if policy not in ("strict", "partial"):
        raise ValidationError(f"unknown decode policy {policy!r}")
    values = dict(parse.clauses)
    problems = list(parse.diagnostics)
    if policy == "strict" and problems:
        raise DecodeRejection(problems)

    cells = []
    for name, kind in schema.columns:
        if name in values:
            cells.append(Cell.of(values[name], kind))
        elif policy == "strict":
            problems.append(
                Diagnostic("missing-feature", "", f"feature {name!r} absent")
            )
        else:
            cells.append(Cell.missing())
    label_cell = None
    if schema.label is not None and schema.label.name in values:
        label_cell = Cell.of(values[schema.label.name], schema.label_kind)
    if require_label and label_cell is None:
        problems.append(
            Diagnostic("missing-feature", "", f"label {schema.label.name!r} absent")
        )
        raise DecodeRejection(problems)
    if policy == "strict" and problems:
        raise DecodeRejection(problems)
    return Row(tuple(cells), label_cell)
