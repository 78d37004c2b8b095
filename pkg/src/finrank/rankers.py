"""A uniform scorer interface over BM25, QA-LSTM, and the cross-encoder,
plus the retrieve-then-rerank answer pipeline."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corpus import AnswerCorpus, Question
from .index import Bm25Params, InvertedIndex, retrieve
from .neural import (
    CrossEncoderModel,
    QaLstmModel,
    SeqBatch,
    cosine_similarity,
    pair_batch,
)
from .textenc import Vocabulary, encode_pair, encode_single, tokenize
from .training import Checkpoint, build_model


@dataclass
class RankedAnswers:
    question_id: str
    ranked: list[tuple[str, float]]  # (answer_id, score), scores non-increasing

    def ids(self) -> list[str]:
        return [aid for aid, _ in self.ranked]


class Bm25Scorer:
    """RSV of the answer text against the question, using index statistics."""

    variant = "bm25"

    def __init__(self, index: InvertedIndex, params: Bm25Params = Bm25Params()):
        self.index = index
        self.params = params

    def score(self, question_text: str, answer_text: str) -> float:
        tokens = tokenize(answer_text)
        if not tokens:
            return 0.0
        tf: dict[str, int] = {}
        for tok in tokens:
            tf[tok] = tf.get(tok, 0) + 1
        k1, b = self.params.k1, self.params.b
        length_norm = k1 * ((1.0 - b) + b * (len(tokens) / self.index.avg_len))
        score = 0.0
        for term in tokenize(question_text):
            df = self.index.df.get(term)
            t = tf.get(term, 0)
            if not df or not t:
                continue
            idf = math.log(self.index.n_docs / df)
            score += idf * ((k1 + 1.0) * t) / (length_norm + t)
        return score


class QaLstmScorer:
    """Cosine similarity of independently encoded question and answer."""

    variant = "qa_lstm"

    def __init__(self, model: QaLstmModel, vocab: Vocabulary):
        self.model = model
        self.vocab = vocab

    def _encode(self, texts: list[str]) -> np.ndarray:
        encs = [
            encode_single(tokenize(t), self.vocab, self.model.config.max_len)
            for t in texts
        ]
        batch = SeqBatch(
            np.array([e.ids for e in encs], dtype=np.int64),
            np.array([e.mask for e in encs], dtype=np.float64),
        )
        return self.model.encode(batch).data

    def score(self, question_text: str, answer_text: str) -> float:
        return self.score_batch(question_text, [answer_text])[0]

    def score_batch(self, question_text: str, answer_texts: list[str]) -> list[float]:
        q = self._encode([question_text] * len(answer_texts))
        a = self._encode(answer_texts)
        return [float(v) for v in cosine_similarity(q, a).data]


class CrossEncoderScorer:
    """Relevance probability of the jointly encoded question-answer pair."""

    variant = "cross_encoder"

    def __init__(self, model: CrossEncoderModel, vocab: Vocabulary,
                 batch_size: int = 32):
        self.model = model
        self.vocab = vocab
        self.batch_size = batch_size

    def score(self, question_text: str, answer_text: str) -> float:
        return self.score_batch(question_text, [answer_text])[0]

    def score_batch(self, question_text: str, answer_texts: list[str]) -> list[float]:
        q_tokens = tokenize(question_text)
        encs = [
            encode_pair(q_tokens, tokenize(a), self.vocab, self.model.config.max_len)
            for a in answer_texts
        ]
        out: list[float] = []
        for b in range(0, len(encs), self.batch_size):
            batch = pair_batch(encs[b:b + self.batch_size])
            out.extend(float(v) for v in self.model.relevance(batch).data)
        return out


def scorer_from_checkpoint(ckpt: Checkpoint, vocab: Vocabulary,
                           override_vocab: bool = False):
    """Build the matching scorer for a trained checkpoint."""
    ckpt.require_vocab(vocab, override=override_vocab)
    model = build_model(ckpt)
    if ckpt.model_kind == "cross_encoder":
        return CrossEncoderScorer(model, vocab)
    return QaLstmScorer(model, vocab)


def rerank(scorer, question, candidate_ids: list[str], corpus: AnswerCorpus,
           top_k: int) -> RankedAnswers:
    """Score every candidate, sort by (score desc, id asc), keep top_k."""
    qid, q_text = _question_parts(question)
    texts = [corpus.text(aid) for aid in candidate_ids]
    if hasattr(scorer, "score_batch"):
        scores = scorer.score_batch(q_text, texts)
    else:
        scores = [scorer.score(q_text, t) for t in texts]
    order = sorted(zip(candidate_ids, scores), key=lambda p: (-p[1], p[0]))
    return RankedAnswers(qid, order[:top_k])


def answer_pipeline(question, index: InvertedIndex, scorer,
                    corpus: AnswerCorpus, pool_size: int = 50,
                    top_k: int = 10,
                    bm25_params: Bm25Params = Bm25Params()) -> RankedAnswers:
    """Retrieve a candidate pool with BM25, then rerank it with the scorer.

    An empty retrieval gives an empty result rather than an error.
    """
    qid, q_text = _question_parts(question)
    pool = retrieve(index, tokenize(q_text), pool_size, bm25_params)
    if not pool:
        return RankedAnswers(qid, [])
    return rerank(scorer, question, [aid for aid, _ in pool], corpus, top_k)


def _question_parts(question) -> tuple[str, str]:
    if isinstance(question, Question):
        return question.id, question.text
    return "", str(question)
