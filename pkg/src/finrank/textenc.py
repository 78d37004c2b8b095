"""Tokenization, vocabulary, and fixed-length sequence/pair encodings."""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError

PAD, UNK, CLS, SEP, MASK = 0, 1, 2, 3, 4
RESERVED = {"[PAD]": PAD, "[UNK]": UNK, "[CLS]": CLS, "[SEP]": SEP, "[MASK]": MASK}


def tokenize(text: str) -> list[str]:
    """Whitespace split of already-cleaned text."""
    return text.split()


class Vocabulary:
    """token -> contiguous id, with fixed reserved ids 0..4."""

    def __init__(self, tokens_in_order: list[str], min_count: int = 1):
        self.min_count = min_count
        self._token_to_id = dict(RESERVED)
        for tok in tokens_in_order:
            if tok not in self._token_to_id:
                self._token_to_id[tok] = len(self._token_to_id)
        self._id_to_token = {i: t for t, i in self._token_to_id.items()}

    def __len__(self) -> int:
        return len(self._token_to_id)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def id(self, token: str) -> int:
        return self._token_to_id.get(token, UNK)

    def token(self, token_id: int) -> str:
        return self._id_to_token[token_id]

    def ids(self, tokens: list[str]) -> list[int]:
        get = self._token_to_id.get
        return [get(t, UNK) for t in tokens]

    def items(self):
        return self._token_to_id.items()

    def content_hash(self) -> str:
        """Stable digest of the full token->id assignment."""
        h = hashlib.sha256()
        for i in range(len(self)):
            h.update(f"{self._id_to_token[i]}\t{i}\n".encode("utf-8"))
        return h.hexdigest()

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for i in range(len(self)):
                f.write(f"{self._id_to_token[i]}\t{i}\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        tokens = []
        with open(path, encoding="utf-8") as f:
            for i, line in enumerate(f, start=1):
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 2:
                    raise DataFormatError("expected token<TAB>id", path=path, line_no=i)
                tok, tok_id = parts[0], int(parts[1])
                if tok_id != i - 1:
                    raise DataFormatError(
                        f"non-contiguous id {tok_id} at position {i - 1}",
                        path=path, line_no=i,
                    )
                tokens.append(tok)
        for tok, i in RESERVED.items():
            if tokens[i] != tok:
                raise DataFormatError(f"reserved slot {i} holds {tokens[i]!r}, wanted {tok!r}", path=path)
        return cls(tokens[len(RESERVED):])


def build_vocab(token_lists, min_count: int = 1) -> Vocabulary:
    """Admit tokens seen >= min_count times, ordered by (freq desc, token asc)."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter = Counter()
    for tokens in token_lists:
        counts.update(tokens)
    admitted = [t for t, c in counts.items() if c >= min_count and t not in RESERVED]
    admitted.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(admitted, min_count=min_count)


@dataclass(frozen=True)
class SeqEncoding:
    """A single sequence padded/truncated to a fixed length."""

    ids: tuple[int, ...]
    mask: tuple[int, ...]


@dataclass(frozen=True)
class PairEncoding:
    """[CLS] question [SEP] answer [SEP], padded/truncated to a fixed length."""

    ids: tuple[int, ...]
    segment_ids: tuple[int, ...]
    mask: tuple[int, ...]


def encode_single(tokens: list[str], vocab: Vocabulary, max_len: int) -> SeqEncoding:
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    ids = vocab.ids(tokens)[:max_len]
    n = len(ids)
    ids = ids + [PAD] * (max_len - n)
    mask = [1] * n + [0] * (max_len - n)
    return SeqEncoding(tuple(ids), tuple(mask))


def encode_pair(
    q_tokens: list[str],
    a_tokens: list[str],
    vocab: Vocabulary,
    max_len: int,
) -> PairEncoding:
    """Pair layout with answer-tail-first truncation; CLS and both SEPs survive."""
    if max_len < 4:
        raise ValueError(f"max_len {max_len} cannot host [CLS] q [SEP] a [SEP]")
    q_ids = vocab.ids(q_tokens)
    a_ids = vocab.ids(a_tokens)
    budget = max_len - 3
    if len(q_ids) + len(a_ids) > budget:
        a_ids = a_ids[:max(0, budget - len(q_ids))]
        q_ids = q_ids[:budget - len(a_ids)]
    ids = [CLS] + q_ids + [SEP] + a_ids + [SEP]
    segs = [0] * (len(q_ids) + 2) + [1] * (len(a_ids) + 1)
    n = len(ids)
    ids += [PAD] * (max_len - n)
    segs += [0] * (max_len - n)
    mask = [1] * n + [0] * (max_len - n)
    return PairEncoding(tuple(ids), tuple(segs), tuple(mask))


def load_embeddings(
    path: str | Path,
    vocab: Vocabulary,
    dim: int,
    seed: int = 0,
) -> np.ndarray:
    """|V| x dim matrix: file rows for known tokens, seeded uniform elsewhere.

    The file holds ``token v1 ... v_dim`` per line. The PAD row is zeroed.
    """
    matrix = np.random.default_rng(seed).uniform(-0.05, 0.05, size=(len(vocab), dim))
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f, start=1):
            parts = line.rstrip("\n").split(" ")
            if not parts or not parts[0]:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise DataFormatError(
                    f"expected {dim} values for token {token!r}, got {len(values)}",
                    path=path, line_no=i,
                )
            if token in vocab:
                matrix[vocab.id(token)] = [float(v) for v in values]
    matrix[PAD] = 0.0
    return matrix
