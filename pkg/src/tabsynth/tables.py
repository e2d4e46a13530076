"""Tabular data model: typed columns, CSV round-trips, splits, perturbations.

Tables are immutable after construction. Every operation here is a pure
function of its inputs plus an explicit seed, so repeated calls with the
same arguments give identical results.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import LoadError, ValidationError

# Decimal literal only: no exponents, no thousands separators. This is the
# alphabet the character-level number rendering can represent.
_NUMBER_RE = re.compile(r"^[+-]?(?:\d+\.?\d*|\.\d+)$")


def is_number_text(text: str) -> bool:
    """True when ``text`` is a plain decimal literal (optionally signed)."""
    return bool(_NUMBER_RE.match(text))


class ColumnKind(Enum):
    NUMERICAL = "numerical"
    CATEGORICAL = "categorical"


class Task(Enum):
    CLASSIFICATION = "classification"
    REGRESSION = "regression"


@dataclass(frozen=True)
class Cell:
    """One table cell. ``text is None`` means the value is missing.

    Numerical cells keep the exact text they were parsed from, so writing
    a cell back out reproduces the original bytes even for forms like
    "018" or "2.50" that a float round-trip would mangle.
    """

    text: Optional[str]
    number: Optional[float] = None

    @staticmethod
    def missing() -> "Cell":
        return _MISSING

    @staticmethod
    def of(text: str, kind: ColumnKind) -> "Cell":
        if kind is ColumnKind.NUMERICAL:
            if not is_number_text(text):
                raise ValidationError(f"not a decimal literal: {text!r}")
            return Cell(text, float(text))
        return Cell(text)

    @property
    def is_missing(self) -> bool:
        return self.text is None

    def render(self) -> str:
        return "" if self.text is None else self.text


_MISSING = Cell(None)


@dataclass(frozen=True)
class LabelSpec:
    name: str
    task: Task
    class_count: Optional[int] = None

    def __post_init__(self):
        if self.task is Task.CLASSIFICATION and self.class_count is not None:
            if self.class_count < 2:
                raise ValidationError("classification needs at least 2 classes")


@dataclass(frozen=True)
class Schema:
    """Ordered feature columns plus an optional label column."""

    columns: tuple[tuple[str, ColumnKind], ...]
    label: Optional[LabelSpec] = None

    def __post_init__(self):
        names = [n for n, _ in self.columns]
        if self.label is not None:
            names.append(self.label.name)
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate column names: {names}")
        if any(not n for n in names):
            raise ValidationError("empty column name")

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.columns)

    def kind_of(self, name: str) -> ColumnKind:
        for n, k in self.columns:
            if n == name:
                return k
        if self.label is not None and name == self.label.name:
            return self.label_kind
        raise KeyError(name)

    @property
    def label_kind(self) -> ColumnKind:
        if self.label is None:
            raise ValidationError("schema has no label")
        return (
            ColumnKind.CATEGORICAL
            if self.label.task is Task.CLASSIFICATION
            else ColumnKind.NUMERICAL
        )

    def index_of(self, name: str) -> int:
        return self.feature_names.index(name)

    def without_label(self) -> "Schema":
        return Schema(self.columns, None)


@dataclass(frozen=True)
class Row:
    cells: tuple[Cell, ...]
    label: Optional[Cell] = None


@dataclass(frozen=True)
class Table:
    schema: Schema
    rows: tuple[Row, ...]
    source_id: str = ""

    def __post_init__(self):
        m = len(self.schema.columns)
        for i, row in enumerate(self.rows):
            if len(row.cells) != m:
                raise ValidationError(
                    f"row {i} has {len(row.cells)} cells, schema has {m} columns"
                )
            if (row.label is not None) != (self.schema.label is not None):
                raise ValidationError(f"row {i} label presence disagrees with schema")
            if row.label is not None and row.label.is_missing:
                raise ValidationError(f"row {i} has a missing label")

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list[Cell]:
        if self.schema.label is not None and name == self.schema.label.name:
            return [r.label for r in self.rows]
        j = self.schema.index_of(name)
        return [r.cells[j] for r in self.rows]

    def with_rows(self, rows: Iterable[Row], source_id: Optional[str] = None) -> "Table":
        return Table(self.schema, tuple(rows), self.source_id if source_id is None else source_id)

    def without_label(self) -> "Table":
        return Table(
            self.schema.without_label(),
            tuple(Row(r.cells) for r in self.rows),
            self.source_id,
        )

    def with_labels(self, labels: Sequence[Cell], label_spec: LabelSpec) -> "Table":
        if len(labels) != len(self.rows):
            raise ValidationError("label count does not match row count")
        schema = Schema(self.schema.columns, label_spec)
        return Table(
            schema,
            tuple(Row(r.cells, lab) for r, lab in zip(self.rows, labels)),
            self.source_id,
        )


@dataclass(frozen=True)
class MissingnessSpec:
    mechanism: str  # "mcar" | "mar"
    miss_ratio: float
    seed: int
    anchor_column: Optional[str] = None

    def __post_init__(self):
        if not 0.0 < self.miss_ratio < 1.0:
            raise ValidationError("miss_ratio must be strictly between 0 and 1")
        if self.mechanism not in ("mcar", "mar"):
            raise ValidationError(f"unknown mechanism: {self.mechanism!r}")


def infer_kind(values: Sequence[str]) -> ColumnKind:
    """Numerical iff at least one cell is observed and every observed cell
    is a decimal literal. An all-missing column carries no evidence, so it
    falls back to categorical."""
    observed = [v for v in values if v != ""]
    if observed and all(is_number_text(v) for v in observed):
        return ColumnKind.NUMERICAL
    return ColumnKind.CATEGORICAL


def load_csv(
    path: str | Path,
    label: Optional[str] = None,
    task: Optional[Task] = None,
    schema_hint: Optional[Schema] = None,
) -> Table:
    """Load a UTF-8 comma-separated file. First line is the header; an empty
    field is a missing value. Column kinds are inferred unless a schema hint
    pins them."""
    path = Path(path)
    if not path.exists():
        raise LoadError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        return _parse_csv(fh, str(path), label, task, schema_hint)


def loads_csv(
    text: str,
    source_id: str = "<string>",
    label: Optional[str] = None,
    task: Optional[Task] = None,
    schema_hint: Optional[Schema] = None,
) -> Table:
    return _parse_csv(io.StringIO(text), source_id, label, task, schema_hint)


def _parse_csv(fh, source_id, label, task, schema_hint) -> Table:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise LoadError(f"{source_id}: empty file") from None
    if len(set(header)) != len(header):
        raise LoadError(f"{source_id}: duplicate header names in {header}")
    if any(not h for h in header):
        raise LoadError(f"{source_id}: empty header name")

    records: list[list[str]] = []
    for lineno, rec in enumerate(reader, start=2):
        if len(rec) != len(header):
            raise LoadError(
                f"{source_id}: line {lineno}: expected {len(header)} fields, got {len(rec)}"
            )
        records.append(rec)
    if not records:
        raise LoadError(f"{source_id}: no data rows")

    if label is not None and label not in header:
        raise LoadError(f"{source_id}: label column {label!r} not in header")

    if schema_hint is not None:
        kinds = {name: kind for name, kind in schema_hint.columns}
        if schema_hint.label is not None:
            kinds[schema_hint.label.name] = (
                ColumnKind.CATEGORICAL
                if schema_hint.label.task is Task.CLASSIFICATION
                else ColumnKind.NUMERICAL
            )
        missing_names = [h for h in header if h not in kinds]
        if missing_names:
            raise LoadError(f"{source_id}: schema hint lacks columns {missing_names}")
    else:
        kinds = {
            name: infer_kind([rec[j] for rec in records])
            for j, name in enumerate(header)
        }

    feature_names = [h for h in header if h != label]
    label_spec = None
    if label is not None:
        if task is None:
            task = (
                Task.REGRESSION
                if kinds[label] is ColumnKind.NUMERICAL
                else Task.CLASSIFICATION
            )
        class_count = None
        if task is Task.CLASSIFICATION:
            j = header.index(label)
            class_count = len({rec[j] for rec in records})
            if class_count < 2:
                raise LoadError(f"{source_id}: label column has a single class")
        label_spec = LabelSpec(label, task, class_count)
        if task is Task.CLASSIFICATION:
            kinds[label] = ColumnKind.CATEGORICAL

    schema = Schema(tuple((n, kinds[n]) for n in feature_names), label_spec)

    def _cell(text: str, name: str, lineno: int) -> Cell:
        if text == "":
            return Cell.missing()
        if kinds[name] is ColumnKind.NUMERICAL:
            if not is_number_text(text):
                raise LoadError(
                    f"{source_id}: line {lineno}: {name!r} value {text!r} is not numeric"
                )
            return Cell(text, float(text))
        return Cell(text)

    rows = []
    label_idx = header.index(label) if label is not None else -1
    for i, rec in enumerate(records):
        cells = tuple(
            _cell(v, h, i + 2) for h, v in zip(header, rec) if h != label
        )
        lab = None
        if label is not None:
            value = rec[label_idx]
            if value == "":
                raise LoadError(f"{source_id}: line {i + 2}: missing label value")
            lab = _cell(value, label, i + 2)
        rows.append(Row(cells, lab))
    return Table(schema, tuple(rows), source_id)


def write_csv(table: Table, path: str | Path) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(dumps_csv(table))


def dumps_csv(table: Table) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = list(table.schema.feature_names)
    if table.schema.label is not None:
        header.append(table.schema.label.name)
    writer.writerow(header)
    for row in table.rows:
        rec = [c.render() for c in row.cells]
        if row.label is not None:
            rec.append(row.label.render())
        writer.writerow(rec)
    return buf.getvalue()


def split(table: Table, train_fraction: float, seed: int) -> tuple[Table, Table]:
    """Disjoint, exhaustive two-way partition under a seeded permutation."""
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError("train_fraction must be in (0, 1)")
    n = len(table.rows)
    if n < 2:
        raise ValidationError("need at least 2 rows to split")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(n)
    n_train = int(round(train_fraction * n))
    if n_train == 0 or n_train == n:
        raise ValidationError(
            f"split of {n} rows at fraction {train_fraction} leaves an empty part"
        )
    train = table.with_rows([table.rows[i] for i in order[:n_train]])
    test = table.with_rows([table.rows[i] for i in order[n_train:]])
    return train, test


def apply_missingness(table: Table, spec: MissingnessSpec) -> Table:
    """Mask feature cells according to the requested mechanism.

    MCAR masks each feature cell independently with probability miss_ratio.
    MAR ranks rows by the anchor column and masks each non-anchor cell with
    probability 2 * miss_ratio * rank_percentile, so the expected masked
    fraction over maskable cells is miss_ratio while the mask depends on an
    observed value. Labels and the anchor column are never masked.
    """
    for i, row in enumerate(table.rows):
        if any(c.is_missing for c in row.cells):
            raise ValidationError(f"row {i} already has missing feature cells")
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    n = len(table.rows)
    m = len(table.schema.columns)

    if spec.mechanism == "mcar":
        mask = rng.random((n, m)) < spec.miss_ratio
    else:
        if spec.anchor_column is None:
            raise ValidationError("MAR requires an anchor column")
        if spec.anchor_column not in table.schema.feature_names:
            raise ValidationError(f"anchor column {spec.anchor_column!r} not in schema")
        if table.schema.kind_of(spec.anchor_column) is not ColumnKind.NUMERICAL:
            raise ValidationError("MAR anchor column must be numerical")
        anchor_idx = table.schema.index_of(spec.anchor_column)
        values = np.array([row.cells[anchor_idx].number for row in table.rows])
        # Ranks 0..n-1 with ties broken by row index; percentiles average 0.5.
        order = np.argsort(values, kind="stable")
        ranks = np.empty(n, dtype=np.int64)
        ranks[order] = np.arange(n)
        percentile = (ranks + 0.5) / n
        p_row = np.clip(2.0 * spec.miss_ratio * percentile, 0.0, 1.0)
        mask = rng.random((n, m)) < p_row[:, None]
        mask[:, anchor_idx] = False

    rows = []
    for i, row in enumerate(table.rows):
        cells = tuple(
            Cell.missing() if mask[i, j] else c for j, c in enumerate(row.cells)
        )
        rows.append(Row(cells, row.label))
    return table.with_rows(rows)


def missing_fraction(table: Table, exclude_columns: Sequence[str] = ()) -> float:
    """Fraction of maskable feature cells that are missing."""
    skip = {table.schema.index_of(c) for c in exclude_columns}
    total = 0
    missing = 0
    for row in table.rows:
        for j, cell in enumerate(row.cells):
            if j in skip:
                continue
            total += 1
            missing += cell.is_missing
    return missing / total if total else 0.0


def downsample_minority(table: Table, ratio: int, seed: int) -> Table:
    """Subsample the minority class of a binary table to majority/minority = ratio."""
    if ratio < 1:
        raise ValidationError("ratio must be a positive integer")
    if table.schema.label is None or table.schema.label.task is not Task.CLASSIFICATION:
        raise ValidationError("downsampling needs a classification label")
    labels = [row.label.text for row in table.rows]
    classes = sorted(set(labels))
    if len(classes) != 2:
        raise ValidationError(f"need a binary label, got {len(classes)} classes")
    counts = {c: labels.count(c) for c in classes}
    # Tie on counts: treat the lexicographically later class as minority.
    minority = min(classes, key=lambda c: (counts[c], -classes.index(c)))
    majority = classes[1] if minority == classes[0] else classes[0]
    target = counts[majority] // ratio
    if target == 0:
        raise ValidationError(
            f"ratio {ratio} would empty the minority class "
            f"({counts[majority]} majority rows)"
        )
    target = min(target, counts[minority])
    minority_idx = [i for i, lab in enumerate(labels) if lab == minority]
    rng = np.random.Generator(np.random.PCG64(seed))
    keep = set(rng.choice(len(minority_idx), size=target, replace=False).tolist())
    kept_minority = {minority_idx[i] for i in keep}
    rows = [
        row
        for i, row in enumerate(table.rows)
        if labels[i] == majority or i in kept_minority
    ]
    return table.with_rows(rows)


def class_counts(table: Table) -> dict[str, int]:
    if table.schema.label is None:
        raise ValidationError("table has no label")
    out: dict[str, int] = {}
    for row in table.rows:
        out[row.label.text] = out.get(row.label.text, 0) + 1
    return out


@dataclass(frozen=True)
class ManifestEntry:
    name: str
    path: str
    label: Optional[str] = None
    task: Optional[Task] = None
    split_seed: int = 0
    train_fraction: float = 0.75
    mar_anchor: Optional[str] = None


@dataclass(frozen=True)
class Manifest:
    """Dataset manifest driving CLI benchmark runs."""

    datasets: tuple[ManifestEntry, ...]
    pretrain_paths: tuple[str, ...] = ()

    def entry(self, name: str) -> ManifestEntry:
        for e in self.datasets:
            if e.name == name:
                return e
        raise ValidationError(f"no dataset named {name!r} in manifest")


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    if not path.exists():
        raise LoadError(f"no such file: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise LoadError(f"{path}: invalid JSON: {exc}") from None
    known = {"format_version", "datasets", "pretrain_paths"}
    unknown = set(doc) - known
    if unknown:
        raise LoadError(f"{path}: unknown manifest keys {sorted(unknown)}")
    entries = []
    base = path.parent
    for raw in doc.get("datasets", []):
        allowed = {
            "name", "path", "label", "task", "split_seed", "train_fraction", "mar_anchor",
        }
        bad = set(raw) - allowed
        if bad:
            raise LoadError(f"{path}: unknown dataset keys {sorted(bad)}")
        task = Task(raw["task"]) if "task" in raw else None
        entries.append(
            ManifestEntry(
                name=raw["name"],
                path=str((base / raw["path"]).resolve()),
                label=raw.get("label"),
                task=task,
                split_seed=raw.get("split_seed", 0),
                train_fraction=raw.get("train_fraction", 0.75),
                mar_anchor=raw.get("mar_anchor"),
            )
        )
    pretrain = tuple(str((base / p).resolve()) for p in doc.get("pretrain_paths", []))
    return Manifest(tuple(entries), pretrain)


def load_entry(entry: ManifestEntry) -> Table:
    return load_csv(entry.path, label=entry.label, task=entry.task)
