"""Training loops, checkpoint persistence, MLM pre-training, transfer-and-adapt.

Checkpoint file layout (magic ``FRCK``, version 1, little-endian):

    FRCK | u32 version | u32 header_len | header JSON (utf-8)
    u32 n_tensors
    n_tensors x (u32 name_len | name | u32 rank | rank x u32 dims | f32 data)

The header carries model kind, model config, vocabulary hash, training
history, and the optimizer step when moments are included (their tensors
ride along under ``opt.m.`` / ``opt.v.`` name prefixes).
"""

from __future__ import annotations

import io
import json
import math
import random
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import AnswerCorpus, LabeledSample, Question, TripleSample
from .errors import (
    BadMagicError,
    NumericalError,
    TruncatedFileError,
    UnsupportedVersionError,
    VocabularyMismatchError,
)
from .neural import (
    AdamState,
    CrossEncoderModel,
    ENCODER_HEAD_NAMES,
    EncoderConfig,
    PairBatch,
    QaLstmConfig,
    QaLstmModel,
    SeqBatch,
    adam_step,
    backward,
    cosine_similarity,
    effective_warmup,
    hinge_loss,
    mlm_loss,
    pairwise_loss,
    pointwise_loss,
    warmup_lr,
)
from . import autograd as ag
from .textenc import CLS, MASK, PAD, SEP, Vocabulary, encode_pair, tokenize

MAGIC = b"FRCK"
VERSION = 1
N_RESERVED_TOKENS = 5

OBJECTIVES = ("pointwise", "pairwise", "hinge", "mlm")


@dataclass(frozen=True)
class TrainConfig:
    objective: str
    batch_size: int = 16
    base_lr: float = 3e-6
    epochs: int = 3
    max_len: int = 128
    weight_decay: float = 0.01
    warmup_steps: int = 10_000
    seed: int = 0
    margin: float = 0.2
    lambda1: float = 0.5
    lambda2: float = 0.5
    mlm_mask_rate: float = 0.15

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.base_lr < 0:
            raise ValueError("base_lr must be >= 0")

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def qalstm_defaults(**overrides) -> TrainConfig:
    """Siamese biLSTM training defaults: 3 epochs, batch 64, lr 1e-3, margin 0.2."""
    base = dict(objective="hinge", batch_size=64, base_lr=1e-3, epochs=3,
                weight_decay=0.0, warmup_steps=1)
    base.update(overrides)
    return TrainConfig(**base)


def mlm_defaults(**overrides) -> TrainConfig:
    """Further pre-training defaults: 1 epoch, batch 8."""
    base = dict(objective="mlm", batch_size=8, epochs=1, base_lr=1e-4)
    base.update(overrides)
    return TrainConfig(**base)


@dataclass
class TrainData:
    """Samples plus the text and vocabulary needed to encode them."""

    train: list
    valid: list
    question_text: dict[str, str]
    answer_text: dict[str, str]
    vocab: Vocabulary

    @classmethod
    def from_corpus(cls, train, valid, questions: list[Question],
                    corpus: AnswerCorpus, vocab: Vocabulary) -> "TrainData":
        return cls(
            train=train,
            valid=valid,
            question_text={q.id: q.text for q in questions},
            answer_text={a.id: a.text for a in corpus},
            vocab=vocab,
        )


@dataclass
class Checkpoint:
    """A trained model snapshot plus enough metadata to reload it safely."""

    model_kind: str
    config: dict
    vocab_hash: str
    tensors: dict[str, np.ndarray]          # float32
    history: list[dict] = field(default_factory=list)
    optimizer_step: int | None = None
    optimizer_m: dict[str, np.ndarray] | None = None
    optimizer_v: dict[str, np.ndarray] | None = None
    version: int = VERSION

    def require_vocab(self, vocab: Vocabulary, override: bool = False) -> None:
        if not override and vocab.content_hash() != self.vocab_hash:
            raise VocabularyMismatchError(
                f"checkpoint was built with vocabulary {self.vocab_hash[:12]}..., "
                f"got {vocab.content_hash()[:12]}..."
            )


def _snapshot(params) -> dict[str, np.ndarray]:
    return {name: t.data.astype(np.float32) for name, t in params.items()}


def _write_tensor(f, name: str, data: np.ndarray) -> None:
    raw = name.encode("utf-8")
    f.write(struct.pack("<I", len(raw)))
    f.write(raw)
    arr = np.ascontiguousarray(data, dtype=np.float32)
    f.write(struct.pack("<I", arr.ndim))
    for dim in arr.shape:
        f.write(struct.pack("<I", dim))
    f.write(arr.astype("<f4").tobytes())


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    header = {
        "model_kind": ckpt.model_kind,
        "config": ckpt.config,
        "vocab_hash": ckpt.vocab_hash,
        "history": ckpt.history,
        "optimizer_step": ckpt.optimizer_step,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    tensors = dict(sorted(ckpt.tensors.items()))
    if ckpt.optimizer_m is not None:
        tensors.update({f"opt.m.{n}": a for n, a in sorted(ckpt.optimizer_m.items())})
        tensors.update({f"opt.v.{n}": a for n, a in sorted(ckpt.optimizer_v.items())})
    out = path if hasattr(path, "write") else open(path, "wb")
    try:
        out.write(MAGIC)
        out.write(struct.pack("<I", ckpt.version))
        out.write(struct.pack("<I", len(blob)))
        out.write(blob)
        out.write(struct.pack("<I", len(tensors)))
        for name, data in tensors.items():
            _write_tensor(out, name, data)
    finally:
        if out is not path:
            out.close()


class _Reader:
    def __init__(self, f, label):
        self.f = f
        self.label = label

    def read(self, n: int) -> bytes:
        data = self.f.read(n)
        if len(data) != n:
            raise TruncatedFileError(
                f"{self.label}: expected {n} more bytes, got {len(data)}"
            )
        return data

    def u32(self) -> int:
        return struct.unpack("<I", self.read(4))[0]


def load_checkpoint(path) -> Checkpoint:
    f = path if hasattr(path, "read") else open(path, "rb")
    label = getattr(f, "name", "checkpoint")
    try:
        magic = f.read(4)
        if magic != MAGIC:
            raise BadMagicError(f"{label}: not a checkpoint file (magic {magic!r})")
        r = _Reader(f, label)
        version = r.u32()
        if version != VERSION:
            raise UnsupportedVersionError(f"{label}: checkpoint version {version} unsupported")
        header = json.loads(r.read(r.u32()).decode("utf-8"))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(r.u32()):
            name = r.read(r.u32()).decode("utf-8")
            rank = r.u32()
            shape = tuple(r.u32() for _ in range(rank))
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(r.read(4 * count), dtype="<f4").reshape(shape)
            tensors[name] = data.copy()
    finally:
        if f is not path:
            f.close()
    opt_m = {n[len("opt.m."):]: a for n, a in tensors.items() if n.startswith("opt.m.")}
    opt_v = {n[len("opt.v."):]: a for n, a in tensors.items() if n.startswith("opt.v.")}
    model_tensors = {
        n: a for n, a in tensors.items()
        if not n.startswith("opt.m.") and not n.startswith("opt.v.")
    }
    return Checkpoint(
        model_kind=header["model_kind"],
        config=header["config"],
        vocab_hash=header["vocab_hash"],
        tensors=model_tensors,
        history=header["history"],
        optimizer_step=header.get("optimizer_step"),
        optimizer_m=opt_m or None,
        optimizer_v=opt_v or None,
        version=version,
    )


def apply_checkpoint(model, ckpt: Checkpoint, strict: bool = True) -> None:
    """Copy checkpoint tensors into the model's parameter store."""
    names = set(model.params.names())
    missing = names - set(ckpt.tensors)
    extra = set(ckpt.tensors) - names
    if extra:
        raise ValueError(f"checkpoint has unknown tensors: {sorted(extra)}")
    if strict and missing:
        raise ValueError(f"checkpoint is missing tensors: {sorted(missing)}")
    for name, data in ckpt.tensors.items():
        model.params.set_data(name, data.astype(np.float64))


def build_model(ckpt: Checkpoint, seed: int = 0):
    """Instantiate the right model class for a checkpoint and load it.

    Pre-training checkpoints legitimately omit the cross-encoder heads
    (those stay freshly initialized); anything else missing is an error.
    """
    if ckpt.model_kind == "cross_encoder":
        model = CrossEncoderModel(EncoderConfig(**ckpt.config), seed=seed)
    elif ckpt.model_kind == "qa_lstm":
        model = QaLstmModel(QaLstmConfig(**ckpt.config), seed=seed)
    else:
        raise ValueError(f"unknown model kind {ckpt.model_kind!r}")
    missing = set(model.params.names()) - set(ckpt.tensors)
    if missing - set(ENCODER_HEAD_NAMES):
        raise ValueError(f"checkpoint is missing tensors: {sorted(missing)}")
    apply_checkpoint(model, ckpt, strict=False)
    return model


# ---------------------------------------------------------------------------
# encoding helpers


def _encode_pairs(samples, data: TrainData, max_len: int):
    """(ids, segs, mask) arrays for (question, answer) id pairs."""
    cache: dict[tuple[str, str], int] = {}
    rows = []
    index = []
    for qid, aid in samples:
        key = (qid, aid)
        if key not in cache:
            if qid not in data.question_text:
                raise KeyError(f"unknown question id {qid!r} in samples")
            if aid not in data.answer_text:
                raise KeyError(f"unknown answer id {aid!r} in samples")
            enc = encode_pair(
                tokenize(data.question_text[qid]),
                tokenize(data.answer_text[aid]),
                data.vocab, max_len,
            )
            cache[key] = len(rows)
            rows.append(enc)
        index.append(cache[key])
    ids = np.array([rows[i].ids for i in index], dtype=np.int64)
    segs = np.array([rows[i].segment_ids for i in index], dtype=np.int64)
    mask = np.array([rows[i].mask for i in index], dtype=np.float64)
    return ids, segs, mask


def _encode_seqs(texts: list[str], vocab: Vocabulary, max_len: int):
    ids = np.full((len(texts), max_len), PAD, dtype=np.int64)
    mask = np.zeros((len(texts), max_len), dtype=np.float64)
    for i, text in enumerate(texts):
        toks = vocab.ids(tokenize(text))[:max_len]
        ids[i, :len(toks)] = toks
        mask[i, :len(toks)] = 1.0
    return ids, mask


def _encode_cls_wrapped(texts: list[str], vocab: Vocabulary, max_len: int):
    """[CLS] tokens [SEP] rows for masked-LM pre-training."""
    ids = np.full((len(texts), max_len), PAD, dtype=np.int64)
    mask = np.zeros((len(texts), max_len), dtype=np.float64)
    for i, text in enumerate(texts):
        toks = vocab.ids(tokenize(text))[:max_len - 2]
        row = [CLS] + toks + [SEP]
        ids[i, :len(row)] = row
        mask[i, :len(row)] = 1.0
    return ids, mask


def _mlm_corrupt(ids: np.ndarray, mask: np.ndarray, vocab_size: int,
                 rate: float, rng: np.random.Generator):
    """BERT-style corruption: pick ~rate of real tokens; 80/10/10 replace rule.

    Guarantees at least one selected position per row.
    """
    corrupted = ids.copy()
    selectable = (mask > 0) & (ids != CLS) & (ids != SEP)
    selected = np.zeros_like(selectable)
    for i in range(ids.shape[0]):
        cand = np.nonzero(selectable[i])[0]
        if cand.size == 0:
            raise ValueError(f"sequence {i} has no maskable positions")
        pick = cand[rng.random(cand.size) < rate]
        if pick.size == 0:
            pick = cand[[rng.integers(cand.size)]]
        selected[i, pick] = True
        for pos in pick:
            roll = rng.random()
            if roll < 0.8:
                corrupted[i, pos] = MASK
            elif roll < 0.9:
                lo = min(N_RESERVED_TOKENS, vocab_size - 1)
                corrupted[i, pos] = int(rng.integers(lo, vocab_size))
            # else: keep the original token
    return corrupted, selected


# ---------------------------------------------------------------------------
# the training loop


def _check_data(model, data: TrainData, config: TrainConfig) -> None:
    if not data.train:
        raise ValueError("empty training dataset")
    if config.objective == "pointwise":
        want, name = LabeledSample, "LabeledSample"
    elif config.objective in ("pairwise", "hinge"):
        want, name = TripleSample, "TripleSample"
    else:
        return
    for part in (data.train, data.valid):
        if part and not isinstance(part[0], want):
            raise TypeError(f"{config.objective} training expects {name} data")
    if config.objective == "hinge" and model.kind != "qa_lstm":
        raise TypeError("hinge objective trains the QA-LSTM model")
    if config.objective in ("pointwise", "pairwise") and model.kind != "cross_encoder":
        raise TypeError(f"{config.objective} objective trains the cross-encoder")


class _PointwiseTask:
    def __init__(self, model, samples, data, config):
        self.model = model
        pairs = [(s.question_id, s.answer_id) for s in samples]
        self.ids, self.segs, self.mask = _encode_pairs(pairs, data, config.max_len)
        self.labels = np.array([s.label for s in samples], dtype=np.float64)
        self.n = len(samples)

    def loss(self, idx, train_mode, rng):
        batch = PairBatch(self.ids[idx], self.segs[idx], self.mask[idx])
        probs = self.model.relevance(batch, train_mode=train_mode, rng=rng)
        return pointwise_loss(probs, self.labels[idx]) * (1.0 / len(idx))


class _PairwiseTask:
    def __init__(self, model, samples, data, config):
        self.model = model
        self.config = config
        pos = [(s.question_id, s.positive_id) for s in samples]
        neg = [(s.question_id, s.negative_id) for s in samples]
        self.pos = _encode_pairs(pos, data, config.max_len)
        self.neg = _encode_pairs(neg, data, config.max_len)
        self.n = len(samples)

    def loss(self, idx, train_mode, rng):
        pb = PairBatch(self.pos[0][idx], self.pos[1][idx], self.pos[2][idx])
        nb = PairBatch(self.neg[0][idx], self.neg[1][idx], self.neg[2][idx])
        y_pos = self.model.relevance(pb, train_mode=train_mode, rng=rng)
        y_neg = self.model.relevance(nb, train_mode=train_mode, rng=rng)
        per = pairwise_loss(y_pos, y_neg, self.config.lambda1,
                            self.config.lambda2, self.config.margin)
        return ag.tmean(per)


class _HingeTask:
    def __init__(self, model, samples, data, config):
        self.model = model
        self.config = config
        vocab, ml = data.vocab, config.max_len
        self.q = _encode_seqs([data.question_text[s.question_id] for s in samples], vocab, ml)
        self.p = _encode_seqs([data.answer_text[s.positive_id] for s in samples], vocab, ml)
        self.g = _encode_seqs([data.answer_text[s.negative_id] for s in samples], vocab, ml)
        self.n = len(samples)

    def loss(self, idx, train_mode, rng):
        enc = lambda pair: self.model.encode(
            SeqBatch(pair[0][idx], pair[1][idx]), train_mode=train_mode, rng=rng
        )
        q, p, g = enc(self.q), enc(self.p), enc(self.g)
        per = hinge_loss(cosine_similarity(q, p), cosine_similarity(q, g),
                         self.config.margin)
        return ag.tmean(per)


class _MlmTask:
    """Masks are redrawn per epoch for training; fixed for validation."""

    def __init__(self, model, texts, data, config, fixed_mask_seed=None):
        self.model = model
        self.config = config
        self.vocab_size = len(data.vocab)
        self.ids, self.mask = _encode_cls_wrapped(texts, data.vocab, config.max_len)
        self.n = len(texts)
        self.epoch_rng = None
        if fixed_mask_seed is not None:
            rng = np.random.default_rng(fixed_mask_seed)
            self.fixed = _mlm_corrupt(self.ids, self.mask, self.vocab_size,
                                      config.mlm_mask_rate, rng)
        else:
            self.fixed = None

    def loss(self, idx, train_mode, rng):
        if self.fixed is not None and not train_mode:
            corrupted, selected = self.fixed[0][idx], self.fixed[1][idx]
        else:
            corrupted, selected = _mlm_corrupt(
                self.ids[idx], self.mask[idx], self.vocab_size,
                self.config.mlm_mask_rate, self.epoch_rng,
            )
        batch = PairBatch(corrupted, np.zeros_like(corrupted), self.mask[idx])
        logits = self.model.mlm_logits(batch, train_mode=train_mode, rng=rng)
        return mlm_loss(logits, self.ids[idx], selected)


def _make_task(model, samples, data, config, valid=False):
    if config.objective == "pointwise":
        return _PointwiseTask(model, samples, data, config)
    if config.objective == "pairwise":
        return _PairwiseTask(model, samples, data, config)
    if config.objective == "hinge":
        return _HingeTask(model, samples, data, config)
    seed = [config.seed, 0xF1CED] if valid else None
    return _MlmTask(model, samples, data, config, fixed_mask_seed=seed)


def _mean_loss(task, order, batch_size, train=False, rng=None,
               on_batch=None) -> float:
    total, count = 0.0, 0
    for b in range(0, len(order), batch_size):
        idx = order[b:b + batch_size]
        loss = task.loss(idx, train, rng)
        value = loss.item()
        if not math.isfinite(value):
            raise NumericalError(
                f"non-finite loss at batch {b // batch_size}"
            )
        if on_batch is not None:
            on_batch(loss)
        total += value * len(idx)
        count += len(idx)
    return total / count


def train(model, data: TrainData, config: TrainConfig):
    """Mini-batch Adam training; returns (best checkpoint, history).

    The checkpoint is the epoch with minimal validation loss (earliest on
    ties). Epoch order is reshuffled from the run seed; everything about
    the run is a pure function of (seed, config, data).
    """
    _check_data(model, data, config)
    task = _make_task(model, data.train, data, config)
    valid_task = _make_task(model, data.valid, data, config, valid=True) if data.valid else None

    steps_per_epoch = math.ceil(task.n / config.batch_size)
    warmup = effective_warmup(config.warmup_steps, steps_per_epoch * config.epochs)
    shuffle_rng = random.Random(config.seed * 1_000_003 + 17)
    drop_rng = np.random.default_rng([config.seed, 0xD509])
    state = AdamState()
    history: list[dict] = []
    snapshots: list[dict[str, np.ndarray]] = []

    for epoch in range(1, config.epochs + 1):
        order = list(range(task.n))
        shuffle_rng.shuffle(order)
        if config.objective == "mlm":
            task.epoch_rng = np.random.default_rng([config.seed, 0xA5C, epoch])

        def train_batch(loss):
            grads = backward(loss, model.params)
            lr = warmup_lr(config.base_lr, state.step + 1, warmup)
            adam_step(model.params, grads, state, lr, config.weight_decay)

        try:
            train_loss = _mean_loss(task, np.array(order), config.batch_size,
                                    train=True, rng=drop_rng, on_batch=train_batch)
        except NumericalError as err:
            raise NumericalError(f"epoch {epoch}: {err}") from None
        if valid_task is not None and valid_task.n:
            valid_loss = _mean_loss(valid_task, np.arange(valid_task.n),
                                    config.batch_size)
        else:
            valid_loss = train_loss
        history.append({"epoch": epoch, "train_loss": train_loss,
                        "valid_loss": valid_loss})
        snapshots.append(_snapshot(model.params))

    best_epoch = min(range(len(history)), key=lambda i: history[i]["valid_loss"])
    ckpt = Checkpoint(
        model_kind=model.kind,
        config=model.config.as_dict(),
        vocab_hash=data.vocab.content_hash(),
        tensors=snapshots[best_epoch],
        history=history,
    )
    return ckpt, history


def train_qalstm(model: QaLstmModel, data: TrainData,
                 config: TrainConfig | None = None):
    """Hinge-loss training of the shared-encoder model on (q, pos, neg) triples."""
    config = config or qalstm_defaults()
    if config.objective != "hinge":
        raise ValueError("train_qalstm requires the hinge objective")
    ckpt, _ = train(model, data, config)
    return ckpt


def pretrain_mlm(model: CrossEncoderModel, corpus: AnswerCorpus,
                 config: TrainConfig | None = None, vocab: Vocabulary = None):
    """Masked-LM pre-training over single answers; heads are not exported."""
    config = config or mlm_defaults()
    if config.objective != "mlm":
        raise ValueError("pretrain_mlm requires the mlm objective")
    if vocab is None:
        raise ValueError("pretrain_mlm needs the vocabulary")
    texts = [a.text for a in sorted(corpus, key=lambda a: a.id)]
    if not texts:
        raise ValueError("empty pre-training corpus")
    data = TrainData(train=texts, valid=texts, question_text={},
                     answer_text={}, vocab=vocab)
    ckpt, _ = train(model, data, config)
    ckpt.tensors = {
        n: a for n, a in ckpt.tensors.items() if n not in ENCODER_HEAD_NAMES
    }
    return ckpt


def transfer_and_adapt(
    model,
    general_data: TrainData,
    target_data: TrainData,
    config_transfer: TrainConfig,
    config_adapt: TrainConfig,
    out_dir: str | Path | None = None,
):
    """Two-stage fine-tuning: general dataset first, then the target domain.

    Stage 2 starts from the persisted stage-1 best checkpoint (all weights,
    head included). Returns (stage1 ckpt, stage2 ckpt); both are written to
    out_dir when given.
    """
    if general_data.vocab.content_hash() != target_data.vocab.content_hash():
        raise VocabularyMismatchError(
            "transfer and adapt stages must share one vocabulary"
        )
    stage1, _ = train(model, general_data, config_transfer)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stage1_path = out_dir / "stage1.ckpt"
        save_checkpoint(stage1, stage1_path)
        reloaded = load_checkpoint(stage1_path)
    else:
        buf = io.BytesIO()
        save_checkpoint(stage1, buf)
        buf.seek(0)
        reloaded = load_checkpoint(buf)
    reloaded.require_vocab(target_data.vocab)
    apply_checkpoint(model, reloaded)
    stage2, _ = train(model, target_data, config_adapt)
    if out_dir is not None:
        save_checkpoint(stage2, out_dir / "stage2.ckpt")
    return stage1, stage2
