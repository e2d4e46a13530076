"""Small autoregressive transformer trained with plain numpy.

Pre-norm, single-head causal self-attention, GELU MLP, Adam. Everything is
float64 and single-threaded so runs are bit-reproducible and the analytic
backward pass can be validated against central finite differences.
Sequences longer than the context window are truncated, not windowed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ValidationError
from .vocab import Corpus, Vocabulary

_LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class NeuralConfig:
    dim: int = 64
    context: int = 128
    layers: int = 2
    mlp_mult: int = 4
    learning_rate: float = 3e-4
    batch_size: int = 1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.99
    adam_eps: float = 1e-8
    init_std: float = 0.02

    def __post_init__(self):
        if min(self.dim, self.context, self.layers, self.mlp_mult, self.batch_size) < 1:
            raise ValidationError("neural config fields must be positive")


def _gelu(x):
    inner = _GELU_C * (x + 0.044715 * x**3)
    return 0.5 * x * (1.0 + np.tanh(inner))


def _gelu_grad(x):
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * _GELU_C * (1.0 + 3 * 0.044715 * x**2)


def _layernorm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = (x - mu) * inv
    return xhat * g + b, (xhat, inv)


def _layernorm_backward(dy, cache, g):
    xhat, inv = cache
    dg = (dy * xhat).sum(axis=0)
    db = dy.sum(axis=0)
    dxhat = dy * g
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


class TinyNeuralLM:
    def __init__(self, vocab: Vocabulary, config: NeuralConfig = NeuralConfig(), seed: int = 0):
        self.vocab = vocab
        self.config = config
        self.step_count = 0
        self.params = self._init_params(seed)
        self.adam_m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.adam_v = {k: np.zeros_like(v) for k, v in self.params.items()}

    def _init_params(self, seed: int) -> dict[str, np.ndarray]:
        cfg = self.config
        rng = np.random.Generator(np.random.PCG64(seed))
        d, h, v = cfg.dim, cfg.dim * cfg.mlp_mult, len(self.vocab)

        def w(*shape):
            return rng.normal(0.0, cfg.init_std, size=shape)

        p = {"emb": w(v, d), "pos": w(cfg.context, d)}
        for i in range(cfg.layers):
            p[f"l{i}.ln1_g"] = np.ones(d)
            p[f"l{i}.ln1_b"] = np.zeros(d)
            for name in ("wq", "wk", "wv", "wo"):
                p[f"l{i}.{name}"] = w(d, d)
            for name in ("bq", "bk", "bv", "bo"):
                p[f"l{i}.{name}"] = np.zeros(d)
            p[f"l{i}.ln2_g"] = np.ones(d)
            p[f"l{i}.ln2_b"] = np.zeros(d)
            p[f"l{i}.w1"] = w(d, h)
            p[f"l{i}.b1"] = np.zeros(h)
            p[f"l{i}.w2"] = w(h, d)
            p[f"l{i}.b2"] = np.zeros(d)
        p["lnf_g"] = np.ones(d)
        p["lnf_b"] = np.zeros(d)
        p["wout"] = w(d, v)
        p["bout"] = np.zeros(v)
        return p

    def parameter_count(self) -> int:
        return sum(v.size for v in self.params.values())

    # -- forward ---------------------------------------------------------------

    def _forward(self, inputs: np.ndarray):
        """Hidden states for a 1-D id array; returns (logits, cache)."""
        p = self.params
        cfg = self.config
        T = len(inputs)
        scale = 1.0 / math.sqrt(cfg.dim)
        x = p["emb"][inputs] + p["pos"][:T]
        cache = {"inputs": inputs, "T": T, "layers": []}
        mask = np.triu(np.ones((T, T), dtype=bool), k=1)
        for i in range(cfg.layers):
            lc = {}
            lc["x_attn_in"] = x
            a_in, lc["ln1"] = _layernorm(x, p[f"l{i}.ln1_g"], p[f"l{i}.ln1_b"])
            lc["a_in"] = a_in
            q = a_in @ p[f"l{i}.wq"] + p[f"l{i}.bq"]
            k = a_in @ p[f"l{i}.wk"] + p[f"l{i}.bk"]
            v = a_in @ p[f"l{i}.wv"] + p[f"l{i}.bv"]
            scores = (q @ k.T) * scale
            scores[mask] = -np.inf
            att = _softmax(scores, axis=1)
            ctx = att @ v
            lc.update(q=q, k=k, v=v, att=att, ctx=ctx)
            x = x + ctx @ p[f"l{i}.wo"] + p[f"l{i}.bo"]
            lc["x_mlp_in"] = x
            m_in, lc["ln2"] = _layernorm(x, p[f"l{i}.ln2_g"], p[f"l{i}.ln2_b"])
            z1 = m_in @ p[f"l{i}.w1"] + p[f"l{i}.b1"]
            g = _gelu(z1)
            x = x + g @ p[f"l{i}.w2"] + p[f"l{i}.b2"]
            lc.update(m_in=m_in, z1=z1, g=g)
            cache["layers"].append(lc)
        cache["x_final"] = x
        hf, cache["lnf"] = _layernorm(x, p["lnf_g"], p["lnf_b"])
        cache["hf"] = hf
        logits = hf @ p["wout"] + p["bout"]
        return logits, cache

    def _loss_forward(self, seq: Sequence[int]):
        """Summed NLL of a sequence plus caches for backward."""
        cfg = self.config
        ids = np.asarray(seq, dtype=np.int64)
        inputs = ids[:-1][: cfg.context]
        targets = ids[1:][: cfg.context]
        logits, cache = self._forward(inputs)
        probs = _softmax(logits, axis=1)
        T = len(targets)
        nll = -np.log(probs[np.arange(T), targets]).sum()
        cache["probs"] = probs
        cache["targets"] = targets
        return nll, T, cache

    def _backward(self, cache, grads: dict[str, np.ndarray], scale: float):
        """Accumulate scale * d(summed NLL)/dparam into ``grads``."""
        p = self.params
        cfg = self.config
        T = cache["T"]
        targets = cache["targets"]
        att_scale = 1.0 / math.sqrt(cfg.dim)

        dlogits = cache["probs"].copy()
        dlogits[np.arange(T), targets] -= 1.0
        dlogits *= scale

        grads["wout"] += cache["hf"].T @ dlogits
        grads["bout"] += dlogits.sum(axis=0)
        dhf = dlogits @ p["wout"].T
        dx, dg, db = _layernorm_backward(dhf, cache["lnf"], p["lnf_g"])
        grads["lnf_g"] += dg
        grads["lnf_b"] += db

        for i in reversed(range(cfg.layers)):
            lc = cache["layers"][i]
            # MLP block
            dgelu_out = dx  # gradient into g @ w2 + b2
            grads[f"l{i}.w2"] += lc["g"].T @ dgelu_out
            grads[f"l{i}.b2"] += dgelu_out.sum(axis=0)
            dgact = dgelu_out @ p[f"l{i}.w2"].T
            dz1 = dgact * _gelu_grad(lc["z1"])
            grads[f"l{i}.w1"] += lc["m_in"].T @ dz1
            grads[f"l{i}.b1"] += dz1.sum(axis=0)
            dm_in = dz1 @ p[f"l{i}.w1"].T
            dx2, dg2, db2 = _layernorm_backward(dm_in, lc["ln2"], p[f"l{i}.ln2_g"])
            grads[f"l{i}.ln2_g"] += dg2
            grads[f"l{i}.ln2_b"] += db2
            dx = dx + dx2  # residual

            # attention block
            dctx_o = dx
            grads[f"l{i}.wo"] += lc["ctx"].T @ dctx_o
            grads[f"l{i}.bo"] += dctx_o.sum(axis=0)
            dctx = dctx_o @ p[f"l{i}.wo"].T
            datt = dctx @ lc["v"].T
            dv = lc["att"].T @ dctx
            att = lc["att"]
            ds = att * (datt - (datt * att).sum(axis=1, keepdims=True))
            ds *= att_scale
            dq = ds @ lc["k"]
            dk = ds.T @ lc["q"]
            a_in = lc["a_in"]
            grads[f"l{i}.wq"] += a_in.T @ dq
            grads[f"l{i}.bq"] += dq.sum(axis=0)
            grads[f"l{i}.wk"] += a_in.T @ dk
            grads[f"l{i}.bk"] += dk.sum(axis=0)
            grads[f"l{i}.wv"] += a_in.T @ dv
            grads[f"l{i}.bv"] += dv.sum(axis=0)
            da_in = dq @ p[f"l{i}.wq"].T + dk @ p[f"l{i}.wk"].T + dv @ p[f"l{i}.wv"].T
            dx1, dg1, db1 = _layernorm_backward(da_in, lc["ln1"], p[f"l{i}.ln1_g"])
            grads[f"l{i}.ln1_g"] += dg1
            grads[f"l{i}.ln1_b"] += db1
            dx = dx + dx1  # residual

        inputs = cache["inputs"]
        np.add.at(grads["emb"], inputs, dx)
        grads["pos"][:T] += dx

    # -- training ----------------------------------------------------------------

    def batch_loss_and_grads(self, seqs: Sequence[Sequence[int]]):
        """Mean per-token NLL over the batch and its parameter gradients."""
        if not seqs:
            raise ValidationError("empty batch")
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        caches = []
        nll_total = 0.0
        tok_total = 0
        for seq in seqs:
            nll, T, cache = self._loss_forward(seq)
            nll_total += nll
            tok_total += T
            caches.append(cache)
        scale = 1.0 / tok_total
        for cache in caches:
            self._backward(cache, grads, scale)
        loss = nll_total / tok_total
        if not math.isfinite(loss):
            raise ValidationError("non-finite loss")
        return loss, grads

    def batch_loss(self, seqs: Sequence[Sequence[int]]) -> float:
        nll_total = 0.0
        tok_total = 0
        for seq in seqs:
            nll, T, _ = self._loss_forward(seq)
            nll_total += nll
            tok_total += T
        return nll_total / tok_total

    def _adam_step(self, grads: dict[str, np.ndarray]) -> None:
        cfg = self.config
        self.step_count += 1
        b1, b2 = cfg.adam_beta1, cfg.adam_beta2
        c1 = 1.0 - b1**self.step_count
        c2 = 1.0 - b2**self.step_count
        for name, g in grads.items():
            m = self.adam_m[name]
            v = self.adam_v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            self.params[name] -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)

    def train_corpus(self, corpus: Corpus, epochs: int, seed: int) -> list[float]:
        rng = np.random.Generator(np.random.PCG64(seed))
        seqs = list(corpus.sequences)
        trace = []
        bs = self.config.batch_size
        for _ in range(epochs):
            order = rng.permutation(len(seqs))
            epoch_nll = 0.0
            epoch_tok = 0
            for start in range(0, len(seqs), bs):
                batch = [seqs[i] for i in order[start : start + bs]]
                loss, grads = self.batch_loss_and_grads(batch)
                self._adam_step(grads)
                ntok = sum(min(len(s) - 1, self.config.context) for s in batch)
                epoch_nll += loss * ntok
                epoch_tok += ntok
            trace.append(epoch_nll / epoch_tok)
        return trace

    def finetune_corpus(
        self, corpus: Corpus, epochs: int, seed: int, downstream_weight: float
    ) -> list[float]:
        # gradient model: fine-tuning is continued training on the downstream
        # sequences only; the count-interpolation weight does not apply
        return self.train_corpus(corpus, epochs, seed)

    # -- inference -----------------------------------------------------------------

    def next_distribution(self, context: Sequence[int]) -> np.ndarray:
        ids = np.asarray(context, dtype=np.int64)
        if len(ids) == 0:
            raise ValidationError("context must contain at least BOS")
        ids = ids[-self.config.context :]
        logits, _ = self._forward(ids)
        return _softmax(logits[-1])


def gradient_check(lm: TinyNeuralLM, batch: Sequence[Sequence[int]], epsilon: float = 1e-4) -> float:
    """Max relative error between analytic gradients and central finite
    differences, over every parameter.

    Relative error uses max(|analytic|, |numeric|, 1e-6) in the denominator
    so near-zero gradients are compared on an absolute scale.
    """
    if not batch:
        raise ValidationError("empty batch")
    if lm.parameter_count() > 10_000:
        raise ValidationError(
            f"{lm.parameter_count()} parameters; gradient check is capped at 10^4"
        )
    loss, grads = lm.batch_loss_and_grads(batch)
    if not math.isfinite(loss):
        raise ValidationError("non-finite loss")
    worst = 0.0
    for name in sorted(lm.params):
        p = lm.params[name]
        g = grads[name]
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + epsilon
            up = lm.batch_loss(batch)
            flat[idx] = orig - epsilon
            down = lm.batch_loss(batch)
            flat[idx] = orig
            numeric = (up - down) / (2 * epsilon)
            denom = max(abs(gflat[idx]), abs(numeric), 1e-6)
            worst = max(worst, abs(gflat[idx] - numeric) / denom)
    return worst
