"""Inverted index construction, BM25 scoring, retrieval, persistence."""

import math

import numpy as np
import pytest

from finrank.corpus import Answer, AnswerCorpus
from finrank.errors import BadMagicError, TruncatedFileError, UnsupportedVersionError
from finrank.index import (
    Bm25Params,
    bm25_score,
    build_index,
    load_index,
    retrieve,
    save_index,
)
from finrank.textenc import tokenize


def corpus_of(texts: dict[str, str]) -> AnswerCorpus:
    return AnswerCorpus([Answer(k, v) for k, v in texts.items()])


@pytest.fixture
def three_docs():
    # three docs of four tokens each; "tax" only in doc1, twice
    return build_index(corpus_of({
        "doc1": "tax tax rate fund",
        "doc2": "bond rate fund yield",
        "doc3": "stock fund yield rate",
    }), tokenize)


class TestBuildIndex:
    def test_statistics(self, three_docs):
        idx = three_docs
        assert idx.n_docs == 3
        assert idx.avg_len == 4.0
        assert idx.df["tax"] == 1
        assert idx.tf("tax", "doc1") == 2
        assert idx.doc_len["doc2"] == 4

    def test_df_equals_postings_length(self, three_docs):
        for term, plist in three_docs.postings.items():
            assert three_docs.df[term] == len(plist)

    def test_postings_sorted_by_doc_id(self, three_docs):
        for plist in three_docs.postings.values():
            ids = [d for d, _ in plist]
            assert ids == sorted(ids)

    def test_duplicate_text_under_two_ids(self):
        idx = build_index(corpus_of({"x": "same words", "y": "same words"}), tokenize)
        assert idx.df["same"] == 2

    def test_empty_corpus_is_error(self):
        with pytest.raises(ValueError):
            build_index(AnswerCorpus([]), tokenize)

    def test_tokenless_document_is_error(self):
        corpus = AnswerCorpus([Answer("d1", "placeholder")])
        with pytest.raises(ValueError):
            build_index(corpus, lambda text: [])


class TestBm25Score:
    def test_worked_example(self, three_docs):
        # hand-evaluated RSV: idf = ln(3/1); saturation = (1.82*2)/(0.82*(0.32+0.68*1)+2)
        expected = math.log(3.0) * (1.82 * 2) / (0.82 * (0.32 + 0.68) + 2)
        got = bm25_score(three_docs, ["tax"], "doc1", Bm25Params(0.82, 0.68))
        assert got == pytest.approx(expected, abs=1e-12)
        assert got == pytest.approx(1.4181, abs=5e-4)

    def test_disjoint_query_scores_zero(self, three_docs):
        assert bm25_score(three_docs, ["unseen", "words"], "doc1") == 0.0

    def test_term_in_every_doc_contributes_zero(self, three_docs):
        # df("fund") == n_docs, so its idf is ln(1) == 0
        assert bm25_score(three_docs, ["fund"], "doc2") == 0.0

    def test_repeated_query_terms_add_up(self, three_docs):
        one = bm25_score(three_docs, ["tax"], "doc1")
        two = bm25_score(three_docs, ["tax", "tax"], "doc1")
        assert two == pytest.approx(2 * one, rel=1e-12)

    def test_unknown_doc_is_error(self, three_docs):
        with pytest.raises(KeyError):
            bm25_score(three_docs, ["tax"], "nope")

    def test_tf_monotonicity(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            k1 = float(rng.uniform(0, 3))
            b = float(rng.uniform(0, 1))
            n, df = 10, int(rng.integers(1, 9))
            l_d, l_ave = float(rng.integers(3, 30)), float(rng.uniform(3, 30))
            idf = math.log(n / df)
            norm = k1 * ((1 - b) + b * l_d / l_ave)
            scores = [idf * ((k1 + 1) * tf) / (norm + tf) for tf in range(1, 12)]
            assert all(s2 >= s1 for s1, s2 in zip(scores, scores[1:]))

    def test_b_zero_ignores_length(self):
        idx = build_index(corpus_of({
            "short": "tax fund",
            "long": "tax " + " ".join(f"w{i}" for i in range(20)),
        }), tokenize)
        p = Bm25Params(k1=0.82, b=0.0)
        assert bm25_score(idx, ["tax"], "short", p) == \
            pytest.approx(bm25_score(idx, ["tax"], "long", p), rel=1e-12)

    def test_k1_zero_reduces_to_idf(self, three_docs):
        p = Bm25Params(k1=0.0, b=0.68)
        # (0+1)*tf / (0 + tf) == 1 whenever tf >= 1
        assert bm25_score(three_docs, ["tax"], "doc1", p) == \
            pytest.approx(math.log(3.0), rel=1e-12)

    def test_param_validation(self):
        with pytest.raises(ValueError):
            Bm25Params(k1=-0.1)
        with pytest.raises(ValueError):
            Bm25Params(b=1.5)


class TestRetrieve:
    def test_single_match(self, three_docs):
        out = retrieve(three_docs, ["tax"], 5)
        assert [d for d, _ in out] == ["doc1"]
        assert out[0][1] == pytest.approx(1.4181, abs=5e-4)

    def test_k_larger_than_matches(self, three_docs):
        assert len(retrieve(three_docs, ["tax"], 50)) == 1

    def test_tie_broken_by_id(self):
        idx = build_index(corpus_of({
            "b": "tax fund", "a": "tax fund", "c": "bond fund"}), tokenize)
        out = retrieve(idx, ["tax"], 5)
        assert [d for d, _ in out] == ["a", "b"]

    def test_zero_score_docs_omitted(self, three_docs):
        # "fund" matches everything with idf 0, so nothing comes back
        assert retrieve(three_docs, ["fund"], 5) == []

    def test_oracle_equivalence_random_corpora(self):
        rng = np.random.default_rng(42)
        vocab = ["t0", "t1", "t2", "t3", "t4", "t5"]
        for trial in range(200):
            n_docs = int(rng.integers(1, 11))
            texts = {}
            for d in range(n_docs):
                length = int(rng.integers(1, 9))
                texts[f"d{d:02d}"] = " ".join(
                    vocab[i] for i in rng.integers(0, len(vocab), length))
            idx = build_index(corpus_of(texts), tokenize)
            params = Bm25Params(k1=float(rng.uniform(0, 2)), b=float(rng.uniform(0, 1)))
            query = [vocab[i] for i in rng.integers(0, len(vocab), rng.integers(1, 5))]
            got = retrieve(idx, query, n_docs, params)
            want = sorted(
                ((d, bm25_score(idx, query, d, params)) for d in texts),
                key=lambda p: (-p[1], p[0]))
            want = [(d, s) for d, s in want if s > 0]
            assert [d for d, _ in got] == [d for d, _ in want]
            for (_, s1), (_, s2) in zip(got, want):
                assert abs(s1 - s2) <= 1e-9


class TestIndexPersistence:
    def test_round_trip_bit_exact(self, three_docs, tmp_path):
        path = tmp_path / "i.frix"
        save_index(three_docs, path)
        first = path.read_bytes()
        reloaded = load_index(path)
        assert reloaded.postings == three_docs.postings
        assert reloaded.doc_len == three_docs.doc_len
        assert reloaded.avg_len == three_docs.avg_len
        save_index(reloaded, path)
        assert path.read_bytes() == first

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.frix"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(BadMagicError):
            load_index(path)

    def test_unsupported_version(self, three_docs, tmp_path):
        path = tmp_path / "i.frix"
        save_index(three_docs, path)
        raw = bytearray(path.read_bytes())
        raw[4:8] = (99).to_bytes(4, "little")
        path.write_bytes(bytes(raw))
        with pytest.raises(UnsupportedVersionError):
            load_index(path)

    def test_truncation(self, three_docs, tmp_path):
        path = tmp_path / "i.frix"
        save_index(three_docs, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:len(raw) // 2])
        with pytest.raises(TruncatedFileError):
            load_index(path)
