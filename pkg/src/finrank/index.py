"""Inverted index construction, BM25 scoring, and top-k retrieval.

Index file layout (magic ``FRIX``, version 1, little-endian):

    FRIX | u32 version | u32 n_docs | f64 avg_len
    n_docs x (u32 id_len | id utf-8 | u32 doc_len)          docs sorted by id
    u32 n_terms
    n_terms x (u32 term_len | term utf-8 | u32 df | df x (u32 doc_idx, u32 tf))
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

from .corpus import AnswerCorpus
from .errors import BadMagicError, TruncatedFileError, UnsupportedVersionError

MAGIC = b"FRIX"
VERSION = 1


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 0.82
    b: float = 0.68

    def __post_init__(self):
        if self.k1 < 0:
            raise ValueError(f"k1 must be >= 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"b must be in [0, 1], got {self.b}")


class InvertedIndex:
    """term -> postings [(doc_id, tf)], plus the length statistics BM25 needs."""

    def __init__(
        self,
        postings: dict[str, list[tuple[str, int]]],
        doc_len: dict[str, int],
        avg_len: float,
    ):
        self.postings = postings
        self.doc_len = doc_len
        self.avg_len = avg_len
        self.n_docs = len(doc_len)
        self.df = {t: len(p) for t, p in postings.items()}
        self._tf = {
            t: {doc_id: tf for doc_id, tf in plist} for t, plist in postings.items()
        }

    def tf(self, term: str, doc_id: str) -> int:
        return self._tf.get(term, {}).get(doc_id, 0)


def build_index(corpus: AnswerCorpus, tokenizer) -> InvertedIndex:
    """Count term and document frequencies over the whole corpus."""
    if len(corpus) == 0:
        raise ValueError("cannot index an empty corpus")
    doc_len: dict[str, int] = {}
    postings: dict[str, list[tuple[str, int]]] = {}
    for answer in sorted(corpus, key=lambda a: a.id):
        tokens = tokenizer(answer.text)
        if not tokens:
            raise ValueError(f"document {answer.id!r} has no tokens")
        doc_len[answer.id] = len(tokens)
        counts: dict[str, int] = {}
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
        for term, tf in counts.items():
            postings.setdefault(term, []).append((answer.id, tf))
    avg_len = sum(doc_len.values()) / len(doc_len)
    return InvertedIndex(postings, doc_len, avg_len)


def bm25_score(
    index: InvertedIndex,
    query_tokens: list[str],
    doc_id: str,
    params: Bm25Params = Bm25Params(),
) -> float:
    """Retrieval status value of one document; natural-log IDF.

    Each query token occurrence contributes independently; terms missing
    from the index or the document contribute zero.
    """
    if doc_id not in index.doc_len:
        raise KeyError(f"unknown doc id {doc_id!r}")
    k1, b = params.k1, params.b
    length_norm = k1 * ((1.0 - b) + b * (index.doc_len[doc_id] / index.avg_len))
    score = 0.0
    for term in query_tokens:
        df = index.df.get(term)
        if not df:
            continue
        tf = index.tf(term, doc_id)
        if tf == 0:
            continue
        idf = math.log(index.n_docs / df)
        score += idf * ((k1 + 1.0) * tf) / (length_norm + tf)
    return score


def retrieve(
    index: InvertedIndex,
    query_tokens: list[str],
    k: int,
    params: Bm25Params = Bm25Params(),
) -> list[tuple[str, float]]:
    """Top-k documents by RSV, ties broken by doc id ascending.

    Documents scoring zero are omitted, so fewer than k may come back.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    candidates: set[str] = set()
    for term in set(query_tokens):
        for doc_id, _ in index.postings.get(term, ()):
            candidates.add(doc_id)
    scored = []
    for doc_id in candidates:
        s = bm25_score(index, query_tokens, doc_id, params)
        if s > 0.0:
            scored.append((doc_id, s))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:k]


def _write_str(f, s: str) -> None:
    raw = s.encode("utf-8")
    f.write(struct.pack("<I", len(raw)))
    f.write(raw)


class _Reader:
    def __init__(self, f, path):
        self.f = f
        self.path = path

    def read(self, n: int) -> bytes:
        data = self.f.read(n)
        if len(data) != n:
            raise TruncatedFileError(f"{self.path}: expected {n} more bytes, got {len(data)}")
        return data

    def u32(self) -> int:
        return struct.unpack("<I", self.read(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.read(8))[0]

    def string(self) -> str:
        return self.read(self.u32()).decode("utf-8")


def save_index(index: InvertedIndex, path: str | Path) -> None:
    doc_ids = sorted(index.doc_len)
    doc_pos = {doc_id: i for i, doc_id in enumerate(doc_ids)}
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", index.n_docs))
        f.write(struct.pack("<d", index.avg_len))
        for doc_id in doc_ids:
            _write_str(f, doc_id)
            f.write(struct.pack("<I", index.doc_len[doc_id]))
        f.write(struct.pack("<I", len(index.postings)))
        for term in sorted(index.postings):
            _write_str(f, term)
            plist = index.postings[term]
            f.write(struct.pack("<I", len(plist)))
            for doc_id, tf in plist:
                f.write(struct.pack("<II", doc_pos[doc_id], tf))


def load_index(path: str | Path) -> InvertedIndex:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise BadMagicError(f"{path}: not an index file (magic {magic!r})")
        r = _Reader(f, path)
        version = r.u32()
        if version != VERSION:
            raise UnsupportedVersionError(f"{path}: index version {version} unsupported")
        n_docs = r.u32()
        avg_len = r.f64()
        doc_ids = []
        doc_len = {}
        for _ in range(n_docs):
            doc_id = r.string()
            doc_len[doc_id] = r.u32()
            doc_ids.append(doc_id)
        postings: dict[str, list[tuple[str, int]]] = {}
        for _ in range(r.u32()):
            term = r.string()
            df = r.u32()
            plist = []
            for _ in range(df):
                pos = r.u32()
                tf = r.u32()
                plist.append((doc_ids[pos], tf))
            postings[term] = plist
    return InvertedIndex(postings, doc_len, avg_len)
