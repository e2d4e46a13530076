import math

import numpy as np
import pytest

from tabsynth.errors import LoadError, ValidationError
from tabsynth.tables import (
    Cell,
    ColumnKind,
    MissingnessSpec,
    Task,
    apply_missingness,
    class_counts,
    downsample_minority,
    dumps_csv,
    infer_kind,
    load_csv,
    loads_csv,
    missing_fraction,
    split,
)


def test_load_two_numeric_columns():
    t = loads_csv("Age,Income\n18,1000\n30,2000\n")
    assert [k for _, k in t.schema.columns] == [ColumnKind.NUMERICAL] * 2
    assert len(t) == 2
    assert t.rows[0].cells[0].text == "18"
    assert t.rows[0].cells[0].number == 18.0


def test_mixed_values_force_categorical():
    t = loads_csv("X\n1\n2\nx\n")
    assert t.schema.columns[0][1] is ColumnKind.CATEGORICAL


def test_adult_style_inference():
    t = loads_csv(
        "Age,Education,Occupation,Income\n"
        "18,HS-grad,Machine-op-inspct,<=50K\n"
        "40,Bachelors,Sales,>50K\n"
    )
    kinds = [k for _, k in t.schema.columns]
    assert kinds == [
        ColumnKind.NUMERICAL,
        ColumnKind.CATEGORICAL,
        ColumnKind.CATEGORICAL,
        ColumnKind.CATEGORICAL,
    ]


def test_number_text_preserved_exactly():
    t = loads_csv("A\n018\n2.50\n-0.0\n")
    assert [r.cells[0].text for r in t.rows] == ["018", "2.50", "-0.0"]
    assert dumps_csv(t) == "A\n018\n2.50\n-0.0\n"


def test_duplicate_header_rejected():
    with pytest.raises(LoadError):
        loads_csv("A,A\n1,2\n")


def test_row_length_mismatch_names_line():
    with pytest.raises(LoadError, match="line 3"):
        loads_csv("A,B\n1,2\n1\n")


def test_csv_round_trip_with_quoting(tmp_path):
    raw = 'A,B\n"x, y",1\nplain,2\n'
    t = loads_csv(raw)
    assert t.rows[0].cells[0].text == "x, y"
    out = tmp_path / "t.csv"
    from tabsynth.tables import write_csv

    write_csv(t, out)
    assert out.read_text() == raw


def test_empty_field_is_missing():
    t = loads_csv("A,B\n1,\n2,3\n")
    assert t.rows[0].cells[1].is_missing
    assert t.schema.columns[1][1] is ColumnKind.NUMERICAL


def test_label_loading_and_class_count():
    t = loads_csv("A,Y\n1,yes\n2,no\n3,yes\n", label="Y")
    assert t.schema.label is not None
    assert t.schema.label.task is Task.CLASSIFICATION
    assert t.schema.label.class_count == 2
    assert t.rows[0].label.text == "yes"
    assert t.schema.feature_names == ("A",)


def test_numeric_label_defaults_to_regression():
    t = loads_csv("A,Y\n1,0.5\n2,1.5\n", label="Y")
    assert t.schema.label.task is Task.REGRESSION


class TestSplit:
    def _table(self, n):
        body = "".join(f"{i},{i % 3}\n" for i in range(n))
        return loads_csv("A,B\n" + body)

    def test_75_25(self):
        train, test = split(self._table(100), 0.75, seed=7)
        assert len(train) == 75
        assert len(test) == 25

    def test_two_rows_half(self):
        train, test = split(self._table(2), 0.5, seed=0)
        assert len(train) == 1
        assert len(test) == 1

    def test_deterministic(self):
        a = split(self._table(40), 0.6, seed=3)
        b = split(self._table(40), 0.6, seed=3)
        assert a == b

    def test_partition(self):
        t = self._table(31)
        train, test = split(t, 0.4, seed=11)
        combined = sorted(
            [tuple(c.text for c in r.cells) for r in train.rows + test.rows]
        )
        original = sorted([tuple(c.text for c in r.cells) for r in t.rows])
        assert combined == original

    def test_degenerate_fraction_errors(self):
        with pytest.raises(ValidationError):
            split(self._table(3), 0.01, seed=0)


class TestMissingness:
    def _table(self, n=100, m=4):
        header = ",".join(f"C{j}" for j in range(m)) + ",Y"
        body = "".join(
            ",".join(str(i * m + j) for j in range(m)) + f",{i % 2}\n" for i in range(n)
        )
        return loads_csv(header + "\n" + body, label="Y")

    def test_mcar_fraction_in_bound(self):
        # 10,000 feature cells; binomial tail puts the mass inside +/-0.02.
        t = self._table(n=2500, m=4)
        masked = apply_missingness(t, MissingnessSpec("mcar", 0.3, seed=5))
        frac = missing_fraction(masked)
        assert 0.28 <= frac <= 0.32

    def test_tiny_ratio_masks_nothing(self):
        t = self._table(n=25, m=4)
        masked = apply_missingness(t, MissingnessSpec("mcar", 1e-9, seed=1))
        assert missing_fraction(masked) == 0.0

    def test_mar_anchor_never_masked(self):
        t = self._table(n=200, m=4)
        spec = MissingnessSpec("mar", 0.3, seed=2, anchor_column="C0")
        masked = apply_missingness(t, spec)
        assert all(not r.cells[0].is_missing for r in masked.rows)

    def test_mar_requires_anchor(self):
        t = self._table()
        with pytest.raises(ValidationError):
            apply_missingness(t, MissingnessSpec("mar", 0.3, seed=2))

    def test_labels_never_masked(self):
        t = self._table(n=300, m=3)
        masked = apply_missingness(t, MissingnessSpec("mcar", 0.5, seed=3))
        assert all(r.label is not None and not r.label.is_missing for r in masked.rows)

    def test_deterministic(self):
        t = self._table()
        spec = MissingnessSpec("mcar", 0.3, seed=9)
        assert apply_missingness(t, spec) == apply_missingness(t, spec)

    def test_mar_rate_tracks_ratio(self):
        t = self._table(n=1000, m=5)
        spec = MissingnessSpec("mar", 0.3, seed=4, anchor_column="C0")
        masked = apply_missingness(t, spec)
        frac = missing_fraction(masked, exclude_columns=["C0"])
        assert 0.27 <= frac <= 0.33

    def test_must_start_fully_observed(self):
        t = loads_csv("A,B\n1,\n2,3\n")
        with pytest.raises(ValidationError):
            apply_missingness(t, MissingnessSpec("mcar", 0.3, seed=0))


class TestDownsample:
    def _table(self, n_major, n_minor):
        rows = [f"{i},maj\n" for i in range(n_major)]
        rows += [f"{i + n_major},min\n" for i in range(n_minor)]
        return loads_csv("A,Y\n" + "".join(rows), label="Y")

    def test_ratio_50(self):
        t = self._table(5000, 5000)
        out = downsample_minority(t, 50, seed=0)
        assert class_counts(out) == {"maj": 5000, "min": 100}

    def test_ratio_1_unchanged(self):
        t = self._table(10, 10)
        out = downsample_minority(t, 1, seed=0)
        assert class_counts(out) == {"maj": 10, "min": 10}

    def test_minority_would_vanish(self):
        t = self._table(50, 50)
        with pytest.raises(ValidationError):
            downsample_minority(t, 100, seed=0)

    def test_majority_untouched(self):
        t = self._table(60, 30)
        out = downsample_minority(t, 3, seed=1)
        majors = [r.cells[0].text for r in out.rows if r.label.text == "maj"]
        assert majors == [str(i) for i in range(60)]

    def test_non_binary_rejected(self):
        t = loads_csv("A,Y\n1,a\n2,b\n3,c\n", label="Y")
        with pytest.raises(ValidationError):
            downsample_minority(t, 2, seed=0)


def test_infer_kind_all_missing_is_categorical():
    assert infer_kind(["", ""]) is ColumnKind.CATEGORICAL
