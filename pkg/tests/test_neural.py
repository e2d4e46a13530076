import numpy as np
import pytest

from tabsynth.codec import (
    CodecConfig,
    DecodeRejection,
    decode_row,
    encode_row,
    identity_permutation,
    parse_sentence,
)
from tabsynth.errors import ValidationError
from tabsynth.lm import (
    NeuralConfig,
    TinyNeuralLM,
    Vocabulary,
    build_vocabulary,
    gradient_check,
    pretrain,
)
from tabsynth.lm.vocab import BOS, EOS, encode_corpus
from tabsynth.tables import loads_csv

TINY_VOCAB = Vocabulary(("<bos>", "<eos>", "<unk>", ",", "is", "A", "B", "1", "2"))
TINY_CFG = NeuralConfig(dim=8, context=12, layers=1, mlp_mult=2)
TINY_BATCH = [(BOS, 5, 4, 7, 3, 6, 4, 8, EOS), (BOS, 6, 4, 8, EOS)]


def _memorization_fixture():
    cities = ["Tokyo", "Paris", "Lagos", "Quito", "Oslo",
              "Cairo", "Lima", "Delhi", "Perth", "Bonn"]
    lines = ["Age,Code,Score,City,Group,Flag"]
    for i in range(10):
        lines.append(
            f"{18 + i},{1000 + 137 * i},{3.5 + 0.63 * i:.2f},"
            f"{cities[i]},{i % 3},{'yes' if i % 2 else 'no'}"
        )
    table = loads_csv("\n".join(lines) + "\n")
    cfg = CodecConfig()
    perm = identity_permutation(len(table.schema.columns))
    sentences = [encode_row(r, table.schema, perm, cfg) for r in table.rows]
    vocab = build_vocabulary(sentences)
    return table, cfg, vocab, encode_corpus(sentences, vocab)


def sample_unconditional(lm, vocab, rng, max_tokens=80):
    ctx = [BOS]
    for _ in range(max_tokens):
        dist = lm.next_distribution(ctx)
        ctx.append(int(rng.choice(len(dist), p=dist)))
        if ctx[-1] == EOS:
            break
    return vocab.decode_to_text(ctx)


class TestGradientCheck:
    def test_small_config_passes(self):
        lm = TinyNeuralLM(TINY_VOCAB, TINY_CFG, seed=3)
        assert lm.parameter_count() <= 10_000
        err = gradient_check(lm, TINY_BATCH, epsilon=1e-4)
        assert err < 1e-3

    def test_empty_batch_errors(self):
        lm = TinyNeuralLM(TINY_VOCAB, TINY_CFG, seed=0)
        with pytest.raises(ValidationError):
            gradient_check(lm, [], 1e-4)

    def test_large_model_refused(self):
        lm = TinyNeuralLM(TINY_VOCAB, NeuralConfig(dim=64), seed=0)
        with pytest.raises(ValidationError):
            gradient_check(lm, TINY_BATCH, 1e-4)

    def test_head_bias_gradient_matches_closed_form(self):
        # d(mean NLL)/d(output bias) = mean over positions of (softmax - onehot),
        # the logistic-regression gradient; exercised on a 2-real-token vocab.
        lm = TinyNeuralLM(TINY_VOCAB, TINY_CFG, seed=5)
        seq = TINY_BATCH[0]
        _, grads = lm.batch_loss_and_grads([seq])
        inputs = np.array(seq[:-1])
        targets = np.array(seq[1:])
        logits, _ = lm._forward(inputs)
        z = logits - logits.max(axis=1, keepdims=True)
        probs = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
        probs[np.arange(len(targets)), targets] -= 1.0
        closed = probs.sum(axis=0) / len(targets)
        assert np.abs(grads["bout"] - closed).max() < 1e-6


class TestTraining:
    def test_zero_epochs_leaves_parameters_unchanged(self):
        _, _, vocab, corpus = _memorization_fixture()
        lm = TinyNeuralLM(vocab, TINY_CFG, seed=1)
        before = {k: v.copy() for k, v in lm.params.items()}
        trace = pretrain(lm, corpus, epochs=0, seed=1)
        assert trace == []
        for k in before:
            assert np.array_equal(before[k], lm.params[k])

    def test_loss_decreases_epoch10_vs_epoch1(self):
        _, _, vocab, corpus = _memorization_fixture()
        lm = TinyNeuralLM(vocab, NeuralConfig(dim=16, context=64, layers=1), seed=0)
        trace = pretrain(lm, corpus, epochs=10, seed=0)
        assert trace[9] < trace[0]

    def test_deterministic_training(self):
        _, _, vocab, corpus = _memorization_fixture()
        a = TinyNeuralLM(vocab, TINY_CFG, seed=4)
        b = TinyNeuralLM(vocab, TINY_CFG, seed=4)
        ta = pretrain(a, corpus, epochs=3, seed=9)
        tb = pretrain(b, corpus, epochs=3, seed=9)
        assert ta == tb
        for k in a.params:
            assert np.array_equal(a.params[k], b.params[k])

    def test_distributions_normalized(self):
        _, _, vocab, corpus = _memorization_fixture()
        lm = TinyNeuralLM(vocab, TINY_CFG, seed=0)
        pretrain(lm, corpus, epochs=1, seed=0)
        rng = np.random.Generator(np.random.PCG64(0))
        for _ in range(50):
            ctx = rng.integers(0, len(vocab), size=rng.integers(1, 10)).tolist()
            dist = lm.next_distribution(ctx)
            assert abs(dist.sum() - 1.0) < 1e-6
            assert (dist >= 0).all()


@pytest.mark.slow
class TestMemorization:
    def test_memorizes_and_samples_valid_rows(self):
        table, cfg, vocab, corpus = _memorization_fixture()
        lm = TinyNeuralLM(vocab, NeuralConfig(), seed=0)
        trace = pretrain(lm, corpus, epochs=200, seed=0)
        assert trace[-1] < 0.1

        rng = np.random.Generator(np.random.PCG64(7))
        valid = 0
        for _ in range(200):
            text = sample_unconditional(lm, vocab, rng)
            try:
                decode_row(parse_sentence(text, table.schema, cfg), table.schema, "strict")
                valid += 1
            except DecodeRejection:
                pass
        assert valid >= 190
