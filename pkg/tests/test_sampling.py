import numpy as np
import pytest

from tabsynth.codec import CodecConfig
from tabsynth.corpus import table_sentences
from tabsynth.errors import SamplingBudgetError, ValidationError
from tabsynth.lm import NgramConfig, NgramModel, build_vocabulary, pretrain
from tabsynth.lm.vocab import encode_corpus
from tabsynth.sampling import (
    Prompt,
    SamplingConfig,
    category_value_sets,
    column_fallbacks,
    impute_rows,
    render_prompt,
    sample_row,
    sample_table,
)
from tabsynth.tables import (
    Cell,
    ColumnKind,
    MissingnessSpec,
    Row,
    apply_missingness,
    class_counts,
    loads_csv,
)

CODEC = CodecConfig()


def _ngram_for(table, order=4, add_k=1e-9, permutations=1, seed=0):
    sentences = table_sentences(table, CODEC, permutations_per_row=permutations, seed=seed)
    vocab = build_vocabulary(sentences)
    corpus = encode_corpus(sentences, vocab)
    model = NgramModel(vocab, NgramConfig(order=order, add_k=add_k))
    pretrain(model, corpus, 1, 0)
    return model


def _rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


class TestRenderPrompt:
    schema = loads_csv("Age,City,Income\n18,Oslo,hi\n30,Bonn,lo\n", label="Income").schema

    def test_one_pair_label(self):
        p = Prompt("one-pair", (("Income", "hi"),))
        assert render_prompt(p, self.schema, CODEC, _rng()) == "Income is hi, "

    def test_feature_name_with_start(self):
        p = Prompt("feature-name", start_feature="Age")
        assert render_prompt(p, self.schema, CODEC, _rng()) == "Age is "

    def test_feature_name_random_start_is_a_feature(self):
        p = Prompt("feature-name")
        seen = set()
        rng = _rng(3)
        for _ in range(40):
            text = render_prompt(p, self.schema, CODEC, rng)
            seen.add(text.split(" is ")[0])
        assert seen == {"Age", "City"}

    def test_multi_pair_single_equals_one_pair(self):
        a = Prompt("multi-pair", (("City", "Oslo"),))
        b = Prompt("one-pair", (("City", "Oslo"),))
        assert render_prompt(a, self.schema, CODEC, _rng()) == render_prompt(
            b, self.schema, CODEC, _rng()
        )

    def test_numeric_prompt_value_uses_character_encoding(self):
        p = Prompt("one-pair", (("Age", "18"),))
        assert render_prompt(p, self.schema, CODEC, _rng()) == "Age is 1 8, "

    def test_multi_pair_order_is_random(self):
        p = Prompt("multi-pair", (("Age", "18"), ("City", "Oslo")))
        rng = _rng(5)
        starts = {render_prompt(p, self.schema, CODEC, rng)[:4] for _ in range(30)}
        assert starts == {"Age ", "City"}


class TestSampleRow:
    def test_memorized_row_replayed(self):
        table = loads_csv("Age,City\n18,Tokyo\n")
        model = _ngram_for(table)
        cfg = SamplingConfig(seed=1, categorical_clamp=False)
        row, attempts = sample_row(
            model, table.schema, Prompt("feature-name", start_feature="Age"),
            cfg, CODEC, _rng(1),
        )
        assert attempts == 1
        assert [c.text for c in row.cells] == ["18", "Tokyo"]

    def test_prompted_pair_copied_verbatim(self):
        table = loads_csv("Age,City,Y\n18,Tokyo,a\n30,Bonn,b\n", label="Y")
        model = _ngram_for(table, permutations=4)
        cfg = SamplingConfig(seed=2, categorical_clamp=False)
        for i in range(20):
            row, _ = sample_row(
                model, table.schema, Prompt("one-pair", (("Y", "a"),)),
                cfg, CODEC, _rng(i),
            )
            assert row.label.text == "a"

    def test_two_value_frequency_matches_model(self):
        # equal training counts for "X is a" / "X is b" -> sampled frequency
        # must sit within a binomial bound around 1/2
        table = loads_csv("X\na\nb\n")
        model = _ngram_for(table, add_k=1e-12)
        cfg = SamplingConfig(seed=3, categorical_clamp=False)
        rng = _rng(3)
        prompt = Prompt("feature-name", start_feature="X")
        hits = 0
        n = 10_000
        for _ in range(n):
            row, _ = sample_row(model, table.schema, prompt, cfg, CODEC, rng)
            hits += row.cells[0].text == "a"
        assert abs(hits / n - 0.5) < 0.02


class TestSampleTable:
    def _table_and_model(self):
        table = loads_csv(
            "Age,City,Y\n18,Tokyo,a\n30,Bonn,b\n25,Oslo,a\n41,Lima,b\n", label="Y"
        )
        return table, _ngram_for(table, permutations=6)

    def test_exact_count_and_schema(self):
        table, model = self._table_and_model()
        cfg = SamplingConfig(seed=5, categorical_clamp=False)
        out, report = sample_table(
            model, table.schema, Prompt("feature-name"), 25, cfg, CODEC
        )
        assert len(out) == 25
        assert out.schema.label is None
        assert report.accepted == 25
        assert report.requested == 25
        assert 0 < report.acceptance_rate <= 1
        assert report.accepted / report.attempted == report.acceptance_rate

    def test_deterministic(self):
        table, model = self._table_and_model()
        cfg = SamplingConfig(seed=5, categorical_clamp=False)
        a = sample_table(model, table.schema, Prompt("feature-name"), 10, cfg, CODEC)
        b = sample_table(model, table.schema, Prompt("feature-name"), 10, cfg, CODEC)
        assert a[0] == b[0]
        assert a[1].to_dict() == b[1].to_dict()

    def test_clamp_soundness(self):
        table, model = self._table_and_model()
        clamp = category_value_sets(table)
        cfg = SamplingConfig(seed=6, categorical_clamp=True)
        out, _ = sample_table(
            model, table.schema, Prompt("feature-name"), 40, cfg, CODEC,
            clamp_values=clamp,
        )
        cities = {r.cells[1].text for r in out.rows}
        assert cities <= clamp["City"]

    def test_budget_exhaustion_carries_partial(self):
        table, model = self._table_and_model()
        # clamp against an empty value set rejects every categorical sample
        clamp = {"City": frozenset()}
        cfg = SamplingConfig(seed=7, categorical_clamp=True, max_attempts_per_row=3)
        with pytest.raises(SamplingBudgetError) as err:
            sample_table(
                model, table.schema, Prompt("feature-name"), 5, cfg, CODEC,
                clamp_values=clamp,
            )
        assert err.value.partial_table is not None
        assert len(err.value.partial_table) == 0
        assert err.value.report.rejections.get("clamp-violation", 0) >= 3

    def test_keep_labels_for_minority_prompt(self):
        table, model = self._table_and_model()
        cfg = SamplingConfig(seed=8, categorical_clamp=False)
        out, _ = sample_table(
            model, table.schema, Prompt("one-pair", (("Y", "b"),)), 12, cfg, CODEC,
            keep_labels=True,
        )
        assert class_counts(out) == {"b": 12}


class TestImpute:
    def _masked_setup(self, n=60, ratio=0.3, seed=0):
        rows = "".join(
            f"{20 + i % 7},{['Oslo', 'Bonn', 'Lima'][i % 3]},{i % 2}\n" for i in range(n)
        )
        table = loads_csv("Age,City,Y\n" + rows, label="Y")
        masked = apply_missingness(table, MissingnessSpec("mcar", ratio, seed=seed))
        model = _ngram_for(masked, permutations=4)
        return table, masked, model

    def test_complete_rows_pass_through(self):
        table = loads_csv("A,B\n1,2\n3,4\n")
        model = _ngram_for(table)
        out, report = impute_rows(model, table, SamplingConfig(seed=1), CODEC)
        assert out == table
        assert report.model_filled_cells == 0

    def test_memorized_fill(self):
        # clamp must be off: the only B cell is masked, so the masked table
        # has no observed B values to clamp against
        table = loads_csv("A,B\na,b\n")
        model = _ngram_for(table)
        masked = table.with_rows(
            [Row((Cell("a"), Cell.missing()))]
        )
        cfg = SamplingConfig(seed=2, categorical_clamp=False)
        out, report = impute_rows(model, masked, cfg, CODEC)
        assert out.rows[0].cells[1].text == "b"
        assert report.model_filled_cells == 1
        assert report.fallback_filled_cells == 0

    def test_observed_cells_and_labels_untouched(self):
        _, masked, model = self._masked_setup()
        out, report = impute_rows(model, masked, SamplingConfig(seed=3), CODEC)
        for before, after in zip(masked.rows, out.rows):
            assert before.label == after.label
            for b, a in zip(before.cells, after.cells):
                if not b.is_missing:
                    assert b == a
                else:
                    assert not a.is_missing

    def test_cell_accounting(self):
        _, masked, model = self._masked_setup(n=80, seed=5)
        missing_before = sum(c.is_missing for r in masked.rows for c in r.cells)
        out, report = impute_rows(model, masked, SamplingConfig(seed=4), CODEC)
        assert report.model_filled_cells + report.fallback_filled_cells == missing_before
        assert all(not c.is_missing for r in out.rows for c in r.cells)


def test_column_fallbacks_mode_and_median():
    table = loads_csv("N,C\n1,x\n5,y\n3,x\n9,\n,x\n")
    fb = column_fallbacks(table)
    assert fb["C"] == "x"
    assert fb["N"] == "3"  # lower median of 1,3,5,9


def test_prompt_validation():
    with pytest.raises(ValidationError):
        Prompt("one-pair", ())
    with pytest.raises(ValidationError):
        Prompt("feature-name", (("A", "1"),))
    with pytest.raises(ValidationError):
        Prompt("multi-pair", (("A", "1"), ("A", "2")))
