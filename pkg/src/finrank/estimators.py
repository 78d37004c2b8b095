"""Scikit-learn style estimators wrapping the retriever and the re-rankers.

These follow the estimator contract (constructor stores hyperparameters
verbatim, ``fit`` returns self, ``get_params``/``set_params`` round-trip)
so the models compose with pipelines and search tools without depending
on scikit-learn itself. Inputs are plain text: the retriever fits on an
id -> passage mapping, the rankers on (question, answer[, answer]) text
tuples.
"""

from __future__ import annotations

import inspect

import numpy as np

from .corpus import Answer, AnswerCorpus, LabeledSample, TripleSample
from .index import Bm25Params, build_index, retrieve
from .neural import CrossEncoderModel, EncoderConfig, QaLstmConfig, QaLstmModel
from .rankers import Bm25Scorer, CrossEncoderScorer, QaLstmScorer
from .textenc import build_vocab, tokenize
from .training import TrainConfig, TrainData, apply_checkpoint, train


class BaseEstimator:
    """Minimal sklearn-compatible parameter handling."""

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return [p for p in sig.parameters if p != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(
                    f"invalid parameter {name!r} for {type(self).__name__}"
                )
            setattr(self, name, value)
        return self

    def _check_fitted(self, attr: str):
        if not hasattr(self, attr):
            raise RuntimeError(
                f"this {type(self).__name__} instance is not fitted yet"
            )


class BM25Retriever(BaseEstimator):
    """Sparse lexical retriever over a fitted passage collection."""

    def __init__(self, k1: float = 0.82, b: float = 0.68, pool_size: int = 50):
        self.k1 = k1
        self.b = b
        self.pool_size = pool_size

    def fit(self, X, y=None):
        """X: mapping id -> passage text, or an iterable of texts (ids auto)."""
        if hasattr(X, "items"):
            answers = [Answer(str(k), str(v)) for k, v in X.items()]
        else:
            answers = [Answer(f"d{i}", str(t)) for i, t in enumerate(X)]
        self.corpus_ = AnswerCorpus(answers)
        self.index_ = build_index(self.corpus_, tokenize)
        self.params_ = Bm25Params(k1=self.k1, b=self.b)
        return self

    def retrieve(self, question: str, k: int | None = None):
        self._check_fitted("index_")
        return retrieve(self.index_, tokenize(question), k or self.pool_size,
                        self.params_)

    def transform(self, X):
        """Candidate pools for a list of question texts."""
        return [self.retrieve(q) for q in X]

    def scorer(self) -> Bm25Scorer:
        self._check_fitted("index_")
        return Bm25Scorer(self.index_, self.params_)


def _text_train_data(pairs, labels, triples, vocab, valid_fraction, seed):
    """Map raw texts onto synthetic ids and split off a validation slice."""
    q_ids: dict[str, str] = {}
    a_ids: dict[str, str] = {}

    def _qid(text):
        return q_ids.setdefault(text, f"q{len(q_ids)}")

    def _aid(text):
        return a_ids.setdefault(text, f"a{len(a_ids)}")

    if pairs is not None:
        samples = [
            LabeledSample(_qid(q), _aid(a), int(y))
            for (q, a), y in zip(pairs, labels)
        ]
    else:
        samples = [
            TripleSample(_qid(q), _aid(p), _aid(n)) for q, p, n in triples
        ]
    rng = np.random.default_rng([seed, 0xE57])
    order = rng.permutation(len(samples))
    n_valid = max(1, int(round(valid_fraction * len(samples)))) if len(samples) > 1 else 0
    valid_idx = set(order[:n_valid].tolist())
    train_part = [s for i, s in enumerate(samples) if i not in valid_idx]
    valid_part = [s for i, s in enumerate(samples) if i in valid_idx]
    if not train_part:
        train_part, valid_part = valid_part, []
    return TrainData(
        train=train_part,
        valid=valid_part,
        question_text={v: k for k, v in q_ids.items()},
        answer_text={v: k for k, v in a_ids.items()},
        vocab=vocab,
    )


class CrossEncoderRanker(BaseEstimator):
    """Trainable joint question-answer relevance classifier.

    Pointwise: ``fit(pairs, y)`` with (question, answer) tuples and 0/1
    labels. Pairwise: ``fit(triples)`` with (question, positive, negative)
    tuples. ``predict_proba`` scores (question, answer) pairs.
    """

    def __init__(self, objective: str = "pointwise", n_layers: int = 2,
                 d_model: int = 64, n_heads: int = 4, d_ff: int = 128,
                 max_len: int = 128, dropout: float = 0.1, epochs: int = 3,
                 batch_size: int = 16, lr: float = 3e-6,
                 weight_decay: float = 0.01, warmup_steps: int = 10_000,
                 min_count: int = 1, valid_fraction: float = 0.1,
                 seed: int = 0):
        self.objective = objective
        self.n_layers = n_layers
        self.d_model = d_model
        self.n_heads = n_heads
        self.d_ff = d_ff
        self.max_len = max_len
        self.dropout = dropout
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.warmup_steps = warmup_steps
        self.min_count = min_count
        self.valid_fraction = valid_fraction
        self.seed = seed

    def fit(self, X, y=None):
        if self.objective == "pointwise":
            if y is None:
                raise ValueError("pointwise fitting needs 0/1 labels")
            pairs, triples = list(X), None
            texts = [t for q, a in pairs for t in (q, a)]
        elif self.objective == "pairwise":
            pairs, triples = None, list(X)
            texts = [t for tri in triples for t in tri]
        else:
            raise ValueError(f"unsupported objective {self.objective!r}")
        self.vocab_ = build_vocab((tokenize(t) for t in texts), self.min_count)
        config = EncoderConfig(
            vocab_size=len(self.vocab_), n_layers=self.n_layers,
            d_model=self.d_model, n_heads=self.n_heads, d_ff=self.d_ff,
            max_len=self.max_len, dropout=self.dropout,
        )
        self.model_ = CrossEncoderModel(config, seed=self.seed)
        data = _text_train_data(pairs, y, triples, self.vocab_,
                                self.valid_fraction, self.seed)
        train_config = TrainConfig(
            objective=self.objective, batch_size=self.batch_size,
            base_lr=self.lr, epochs=self.epochs, max_len=self.max_len,
            weight_decay=self.weight_decay, warmup_steps=self.warmup_steps,
            seed=self.seed,
        )
        self.checkpoint_, self.history_ = train(self.model_, data, train_config)
        apply_checkpoint(self.model_, self.checkpoint_)
        self.scorer_ = CrossEncoderScorer(self.model_, self.vocab_)
        return self

    def predict_proba(self, pairs) -> np.ndarray:
        self._check_fitted("scorer_")
        return np.array([self.scorer_.score(q, a) for q, a in pairs])

    def predict(self, pairs) -> np.ndarray:
        return (self.predict_proba(pairs) >= 0.5).astype(int)

    def scorer(self) -> CrossEncoderScorer:
        self._check_fitted("scorer_")
        return self.scorer_


class QaLstmRanker(BaseEstimator):
    """Siamese biLSTM ranker trained with the margin objective.

    ``fit(triples)`` takes (question, positive, negative) text tuples;
    ``similarity(pairs)`` returns cosine scores in [-1, 1].
    """

    def __init__(self, embed_dim: int = 100, hidden_size: int = 256,
                 max_len: int = 128, dropout: float = 0.2, epochs: int = 3,
                 batch_size: int = 64, lr: float = 1e-3, margin: float = 0.2,
                 min_count: int = 1, valid_fraction: float = 0.1,
                 seed: int = 0):
        self.embed_dim = embed_dim
        self.hidden_size = hidden_size
        self.max_len = max_len
        self.dropout = dropout
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.margin = margin
        self.min_count = min_count
        self.valid_fraction = valid_fraction
        self.seed = seed

    def fit(self, X, y=None):
        triples = list(X)
        texts = [t for tri in triples for t in tri]
        self.vocab_ = build_vocab((tokenize(t) for t in texts), self.min_count)
        config = QaLstmConfig(
            vocab_size=len(self.vocab_), embed_dim=self.embed_dim,
            hidden_size=self.hidden_size, max_len=self.max_len,
            dropout=self.dropout,
        )
        self.model_ = QaLstmModel(config, seed=self.seed)
        data = _text_train_data(None, None, triples, self.vocab_,
                                self.valid_fraction, self.seed)
        train_config = TrainConfig(
            objective="hinge", batch_size=self.batch_size, base_lr=self.lr,
            epochs=self.epochs, max_len=self.max_len, weight_decay=0.0,
            warmup_steps=1, margin=self.margin, seed=self.seed,
        )
        self.checkpoint_, self.history_ = train(self.model_, data, train_config)
        apply_checkpoint(self.model_, self.checkpoint_)
        self.scorer_ = QaLstmScorer(self.model_, self.vocab_)
        return self

    def similarity(self, pairs) -> np.ndarray:
        self._check_fitted("scorer_")
        return np.array([self.scorer_.score(q, a) for q, a in pairs])

    def scorer(self) -> QaLstmScorer:
        self._check_fitted("scorer_")
        return self.scorer_
