"""Model cores: transformer cross-encoder, siamese biLSTM, losses, Adam.

Everything is built on :mod:`finrank.autograd`; gradients come from the
tape, and :func:`backward` packages them per named parameter. Batch inputs
use plain integer/float numpy arrays; model outputs are autograd Tensors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import NumericalError
from .textenc import PAD, PairEncoding, SeqEncoding

NEG_BIG = -1e30  # additive mask value; underflows to exact zero after softmax


# ---------------------------------------------------------------------------
# parameters


class ParameterStore:
    """Named trainable tensors with deterministic (sorted-name) iteration."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self):
        for name in self.names():
            yield name, self._params[name]

    def set_data(self, name: str, data: np.ndarray) -> None:
        t = self._params[name]
        data = np.asarray(data, dtype=np.float64)
        if data.shape != t.data.shape:
            raise ValueError(
                f"shape mismatch for {name!r}: {data.shape} vs {t.data.shape}"
            )
        t.data = data.copy()

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.items()}


def init_store(shapes: dict[str, tuple], seed: int) -> ParameterStore:
    """Uniform [-0.05, 0.05] from one seeded generator, in name order.

    Layer-norm gains start at 1 and biases at 0; the PAD row of any
    ``*emb.token`` table starts at 0.
    """
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    for name in sorted(shapes):
        shape = shapes[name]
        if name.endswith("ln.gain"):
            data = np.ones(shape)
        elif name.endswith("ln.bias"):
            data = np.zeros(shape)
        else:
            data = rng.uniform(-0.05, 0.05, size=shape)
        if name.endswith("emb.token"):
            data[PAD] = 0.0
        store.add(name, data)
    return store


# ---------------------------------------------------------------------------
# batches


@dataclass
class PairBatch:
    ids: np.ndarray       # (B, T) int
    segment_ids: np.ndarray
    mask: np.ndarray      # (B, T) float 0/1


@dataclass
class SeqBatch:
    ids: np.ndarray
    mask: np.ndarray


def pair_batch(encodings: list[PairEncoding]) -> PairBatch:
    return PairBatch(
        ids=np.array([e.ids for e in encodings], dtype=np.int64),
        segment_ids=np.array([e.segment_ids for e in encodings], dtype=np.int64),
        mask=np.array([e.mask for e in encodings], dtype=np.float64),
    )


def seq_batch(encodings: list[SeqEncoding]) -> SeqBatch:
    return SeqBatch(
        ids=np.array([e.ids for e in encodings], dtype=np.int64),
        mask=np.array([e.mask for e in encodings], dtype=np.float64),
    )


# ---------------------------------------------------------------------------
# building blocks


def attention(q, k, v, key_mask=None) -> Tensor:
    """softmax(q k^T / sqrt(d_k)) v with optional key masking.

    Masked keys get an additive -1e30 logit, which zeroes their weight.
    Works for single matrices or any stack of leading batch dimensions.
    """
    q, k, v = ag._wrap(q), ag._wrap(k), ag._wrap(v)
    d_k = q.shape[-1]
    if k.shape[-1] != d_k or k.shape[-2] != v.shape[-2]:
        raise ValueError(
            f"attention shape mismatch: q {q.shape}, k {k.shape}, v {v.shape}"
        )
    scores = ag.matmul(q, ag.transpose(k, _swap_last(k.ndim))) * (1.0 / math.sqrt(d_k))
    if key_mask is not None:
        bias = (1.0 - np.asarray(key_mask, dtype=np.float64)) * NEG_BIG
        scores = scores + np.expand_dims(bias, -2)
    weights = ag.softmax(scores, axis=-1)
    return ag.matmul(weights, v)


def _swap_last(ndim: int) -> tuple:
    axes = list(range(ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return tuple(axes)


def multi_head_attention(
    x, wq, bq, wk, bk, wv, bv, wo, bo, n_heads: int, key_mask=None
) -> Tensor:
    """h parallel heads over learned projections, concatenated, then W^o."""
    x = ag._wrap(x)
    squeeze = x.ndim == 2
    if squeeze:
        x = ag.reshape(x, (1,) + x.shape)
        if key_mask is not None:
            key_mask = np.asarray(key_mask)[None, :]
    b, t, d_model = x.shape
    if d_model % n_heads != 0:
        raise ValueError(f"d_model {d_model} not divisible by n_heads {n_heads}")
    d_head = d_model // n_heads

    def split_heads(m):
        m = ag.reshape(m, (b, t, n_heads, d_head))
        return ag.transpose(m, (0, 2, 1, 3))  # (B, h, T, d_head)

    q = split_heads(ag.matmul(x, wq) + bq)
    k = split_heads(ag.matmul(x, wk) + bk)
    v = split_heads(ag.matmul(x, wv) + bv)
    mask = None if key_mask is None else np.asarray(key_mask, dtype=np.float64)[:, None, :]
    heads = attention(q, k, v, key_mask=mask)          # (B, h, T, d_head)
    merged = ag.reshape(ag.transpose(heads, (0, 2, 1, 3)), (b, t, d_model))
    out = ag.matmul(merged, wo) + bo
    if squeeze:
        out = ag.reshape(out, (t, d_model))
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-12) -> Tensor:
    mu = ag.tmean(x, axis=-1, keepdims=True)
    centered = x - mu
    var = ag.tmean(centered * centered, axis=-1, keepdims=True)
    return centered * ag.power(var + eps, -0.5) * gain + bias


def gelu(x: Tensor) -> Tensor:
    # tanh approximation; smooth everywhere, which keeps finite differences honest
    c = math.sqrt(2.0 / math.pi)
    return 0.5 * x * (1.0 + ag.tanh(c * (x + 0.044715 * x * x * x)))


# ---------------------------------------------------------------------------
# cross-encoder


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    n_layers: int = 2
    d_model: int = 64
    n_heads: int = 4
    d_ff: int = 128
    max_len: int = 128
    n_segments: int = 2
    dropout: float = 0.1

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _encoder_shapes(cfg: EncoderConfig) -> dict[str, tuple]:
    d, f, v = cfg.d_model, cfg.d_ff, cfg.vocab_size
    shapes = {
        "emb.token": (v, d),
        "emb.pos": (cfg.max_len, d),
        "emb.seg": (cfg.n_segments, d),
        "head.w": (d, 2),
        "head.b": (2,),
        "mlm.w": (d, v),
        "mlm.b": (v,),
    }
    for i in range(cfg.n_layers):
        p = f"layer{i:02d}"
        shapes.update({
            f"{p}.attn.wq": (d, d), f"{p}.attn.bq": (d,),
            f"{p}.attn.wk": (d, d), f"{p}.attn.bk": (d,),
            f"{p}.attn.wv": (d, d), f"{p}.attn.bv": (d,),
            f"{p}.attn.wo": (d, d), f"{p}.attn.bo": (d,),
            f"{p}.attn_ln.gain": (d,), f"{p}.attn_ln.bias": (d,),
            f"{p}.ffn.w1": (d, f), f"{p}.ffn.b1": (f,),
            f"{p}.ffn.w2": (f, d), f"{p}.ffn.b2": (d,),
            f"{p}.ffn_ln.gain": (d,), f"{p}.ffn_ln.bias": (d,),
        })
    return shapes


ENCODER_HEAD_NAMES = ("head.w", "head.b", "mlm.w", "mlm.b")


def encoder_forward(
    batch: PairBatch | PairEncoding,
    params: ParameterStore,
    config: EncoderConfig,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    """Run the encoder stack; returns (cls_vectors (B, D), states (B, T, D)).

    Embeddings are the sum of token, learned position, and segment tables.
    Each sublayer is wrapped residual + layer norm; dropout fires only in
    train mode.
    """
    if isinstance(batch, PairEncoding):
        batch = pair_batch([batch])
    ids, segs, mask = batch.ids, batch.segment_ids, batch.mask
    t = ids.shape[1]
    if t > config.max_len:
        raise ValueError(f"sequence length {t} exceeds max_len {config.max_len}")
    drop = rng if train_mode else None

    x = (
        ag.embedding(params["emb.token"], ids)
        + ag.embedding(params["emb.seg"], segs)
        + params["emb.pos"][:t]
    )
    for i in range(config.n_layers):
        p = f"layer{i:02d}"
        attn = multi_head_attention(
            x,
            params[f"{p}.attn.wq"], params[f"{p}.attn.bq"],
            params[f"{p}.attn.wk"], params[f"{p}.attn.bk"],
            params[f"{p}.attn.wv"], params[f"{p}.attn.bv"],
            params[f"{p}.attn.wo"], params[f"{p}.attn.bo"],
            config.n_heads,
            key_mask=mask,
        )
        x = layer_norm(
            x + ag.dropout(attn, config.dropout, drop),
            params[f"{p}.attn_ln.gain"], params[f"{p}.attn_ln.bias"],
        )
        hidden = gelu(ag.matmul(x, params[f"{p}.ffn.w1"]) + params[f"{p}.ffn.b1"])
        ffn = ag.matmul(hidden, params[f"{p}.ffn.w2"]) + params[f"{p}.ffn.b2"]
        x = layer_norm(
            x + ag.dropout(ffn, config.dropout, drop),
            params[f"{p}.ffn_ln.gain"], params[f"{p}.ffn_ln.bias"],
        )
    cls = x[:, 0, :]
    return cls, x


class CrossEncoderModel:
    """Question-answer pair scorer with a 2-logit relevance head."""

    kind = "cross_encoder"

    def __init__(self, config: EncoderConfig, seed: int = 0):
        self.config = config
        self.params = init_store(_encoder_shapes(config), seed)

    def forward(self, batch, train_mode=False, rng=None):
        return encoder_forward(batch, self.params, self.config, train_mode, rng)

    def relevance(self, batch, train_mode=False, rng=None) -> Tensor:
        """Probability that each pair in the batch is relevant, shape (B,)."""
        cls, _ = self.forward(batch, train_mode, rng)
        logits = ag.matmul(cls, self.params["head.w"]) + self.params["head.b"]
        probs = ag.softmax(logits, axis=-1)
        return probs[:, 1]

    def mlm_logits(self, batch, train_mode=False, rng=None) -> Tensor:
        _, states = self.forward(batch, train_mode, rng)
        return ag.matmul(states, self.params["mlm.w"]) + self.params["mlm.b"]


# ---------------------------------------------------------------------------
# QA-LSTM


@dataclass(frozen=True)
class QaLstmConfig:
    vocab_size: int
    embed_dim: int = 100
    hidden_size: int = 256
    max_len: int = 128
    dropout: float = 0.2

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _qalstm_shapes(cfg: QaLstmConfig) -> dict[str, tuple]:
    e, h = cfg.embed_dim, cfg.hidden_size
    return {
        "emb.token": (cfg.vocab_size, e),
        "fwd.wx": (e, 4 * h), "fwd.wh": (h, 4 * h), "fwd.b": (4 * h,),
        "bwd.wx": (e, 4 * h), "bwd.wh": (h, 4 * h), "bwd.b": (4 * h,),
    }


def _lstm_direction(emb, mask, wx, wh, b, hidden: int, order) -> list[Tensor]:
    """Gated recurrence with carry-over masking so PAD steps are inert."""
    bsz = emb.shape[0]
    h = Tensor(np.zeros((bsz, hidden)))
    c = Tensor(np.zeros((bsz, hidden)))
    states: dict[int, Tensor] = {}
    for t in order:
        x_t = emb[:, t, :]
        gates = ag.matmul(x_t, wx) + ag.matmul(h, wh) + b
        i_g = ag.sigmoid(gates[:, :hidden])
        f_g = ag.sigmoid(gates[:, hidden:2 * hidden])
        g_g = ag.tanh(gates[:, 2 * hidden:3 * hidden])
        o_g = ag.sigmoid(gates[:, 3 * hidden:])
        c_new = f_g * c + i_g * g_g
        h_new = o_g * ag.tanh(c_new)
        m = mask[:, t:t + 1]  # (B, 1) constant
        c = c_new * m + c * (1.0 - m)
        h = h_new * m + h * (1.0 - m)
        states[t] = h
    return [states[t] for t in range(emb.shape[1])]


def bilstm_forward(
    batch: SeqBatch | SeqEncoding,
    params: ParameterStore,
    config: QaLstmConfig,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Embed, run both directions, concatenate, masked max-pool, dropout."""
    if isinstance(batch, SeqEncoding):
        batch = seq_batch([batch])
    ids, mask = batch.ids, batch.mask
    if np.any(mask.sum(axis=1) == 0):
        raise ValueError("fully-masked sequence: nothing to pool")
    t_len = ids.shape[1]
    h = config.hidden_size
    emb = ag.embedding(params["emb.token"], ids)
    fwd = _lstm_direction(emb, mask, params["fwd.wx"], params["fwd.wh"],
                          params["fwd.b"], h, range(t_len))
    bwd = _lstm_direction(emb, mask, params["bwd.wx"], params["bwd.wh"],
                          params["bwd.b"], h, range(t_len - 1, -1, -1))
    per_pos = ag.stack(
        [ag.concat([fwd[t], bwd[t]], axis=-1) for t in range(t_len)], axis=1
    )  # (B, T, 2H)
    neg = (1.0 - mask)[:, :, None] * NEG_BIG
    pooled = ag.tmax(per_pos + neg, axis=1)
    return ag.dropout(pooled, config.dropout, rng if train_mode else None)


class QaLstmModel:
    """Siamese biLSTM encoder; one weight set serves questions and answers."""

    kind = "qa_lstm"

    def __init__(self, config: QaLstmConfig, seed: int = 0):
        self.config = config
        self.params = init_store(_qalstm_shapes(config), seed)

    def set_embeddings(self, matrix: np.ndarray) -> None:
        self.params.set_data("emb.token", matrix)

    def encode(self, batch, train_mode=False, rng=None) -> Tensor:
        return bilstm_forward(batch, self.params, self.config, train_mode, rng)


# ---------------------------------------------------------------------------
# similarities and losses


def cosine_similarity(u, v) -> Tensor:
    """u.v / (|u| |v|), elementwise over a leading batch dimension if present."""
    u, v = ag._wrap(u), ag._wrap(v)
    nu = np.linalg.norm(u.data, axis=-1)
    nv = np.linalg.norm(v.data, axis=-1)
    if np.any(nu == 0) or np.any(nv == 0):
        raise ValueError("cosine similarity of a zero vector")
    dot = ag.tsum(u * v, axis=-1)
    inv = ag.power(ag.tsum(u * u, axis=-1), -0.5) * ag.power(ag.tsum(v * v, axis=-1), -0.5)
    return dot * inv


def hinge_loss(cos_pos, cos_neg, margin: float = 0.2) -> Tensor:
    """max(0, margin - cos_pos + cos_neg), elementwise."""
    return ag.relu(margin - ag._wrap(cos_pos) + ag._wrap(cos_neg))


PROB_EPS = 1e-7


def pointwise_loss(probs, labels) -> Tensor:
    """Summed binary cross-entropy: -sum_pos log s - sum_neg log(1-s)."""
    s = ag.clamp(ag._wrap(probs), PROB_EPS, 1.0 - PROB_EPS)
    y = np.asarray(labels, dtype=np.float64)
    return -ag.tsum(y * ag.log(s) + (1.0 - y) * ag.log(1.0 - s))


def pairwise_loss(
    y_pos, y_neg, lambda1: float = 0.5, lambda2: float = 0.5, margin: float = 0.2
) -> Tensor:
    """Minimized pairwise objective, elementwise per triple.

    Cross-entropy pulls the positive toward 1 and the negative toward 0;
    the hinge term additionally enforces the score gap.
    """
    p = ag.clamp(ag._wrap(y_pos), PROB_EPS, 1.0 - PROB_EPS)
    n = ag.clamp(ag._wrap(y_neg), PROB_EPS, 1.0 - PROB_EPS)
    ce = -(ag.log(p) + ag.log(1.0 - n)) * lambda1
    return ce + lambda2 * ag.relu(margin - p + n)


def mlm_loss(token_logits: Tensor, target_ids, masked_positions) -> Tensor:
    """Mean negative log-likelihood of the original token at masked slots."""
    masked = np.asarray(masked_positions, dtype=bool)
    if not masked.any():
        raise ValueError("mlm loss needs at least one masked position")
    targets = np.asarray(target_ids)
    log_probs = ag.log_softmax(token_logits, axis=-1)
    where = np.nonzero(masked)
    picked = log_probs[where + (targets[where],)]
    return -ag.tmean(picked)


# ---------------------------------------------------------------------------
# gradients and optimizer


def backward(loss: Tensor, params: ParameterStore) -> dict[str, np.ndarray]:
    """Exact gradients of a scalar loss for every named parameter."""
    if not np.isfinite(loss.data).all():
        raise NumericalError("loss is not finite")
    loss.backward()
    grads: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.isfinite(g).all():
            raise NumericalError(f"gradient of {name!r} is not finite")
        grads[name] = np.array(g)
        p.grad = None
    return grads


@dataclass
class AdamState:
    """First/second moment estimates per parameter, plus the step counter."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(
    params: ParameterStore,
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
) -> None:
    """Bias-corrected Adam with decoupled weight decay, in place."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape mismatch for {name!r}")
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p.data -= lr * (m_hat / (np.sqrt(v_hat) + state.eps) + weight_decay * p.data)


def effective_warmup(configured: int, total_steps: int) -> int:
    """Rescale long warmups so short runs still leave the ramp."""
    return max(1, min(configured, math.ceil(0.1 * total_steps)))


def warmup_lr(base_lr: float, step: int, warmup_steps: int) -> float:
    """Linear ramp to base_lr over warmup_steps, then constant."""
    return base_lr * min(step / warmup_steps, 1.0)


# spec'd scalar activations, re-exported where the models live
sigmoid = ag.sigmoid
softmax = ag.softmax
