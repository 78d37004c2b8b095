"""Dataset ingestion, cleaning, splitting, and sample construction."""

import random

import pytest

from finrank.corpus import (
    LabeledSample,
    Question,
    TripleSample,
    build_samples,
    clean_text,
    ingest,
    split_questions,
    write_answers,
    write_qrels,
    write_questions,
)
from finrank.errors import DanglingIdError, DataFormatError


class TestCleanText:
    def test_strips_punctuation_and_lowercases(self):
        assert clean_text("Yes. But once you chose...") == "yes but once you chose"

    def test_empty_input(self):
        assert clean_text("") == ""

    def test_collapses_whitespace(self):
        assert clean_text("IRA   approval!!") == "ira approval"

    def test_unicode_punctuation(self):
        assert clean_text("don’t — stop") == "don t stop"

    def test_idempotent(self):
        for raw in ("Hello, World!", "a\tb\nc", "already clean text"):
            once = clean_text(raw)
            assert clean_text(once) == once


def _write(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


@pytest.fixture
def toy_files(tmp_path):
    _write(tmp_path / "questions.tsv", [
        "q1\tWhat is accrual accounting?",
        "q2\tHow to open an IRA?",
    ])
    _write(tmp_path / "answers.tsv", [
        "a1\tAccrual accounting records revenue when earned.",
        "a2\tVisit any broker; open the account!",
        "a3\tUnrelated noise answer.",
        "a4\tCash basis differs from accrual.",
        "a5\tIRA contributions have limits.",
    ])
    _write(tmp_path / "qrels.tsv", ["q1\ta1", "q1\ta4", "q2\ta5"])
    return tmp_path


class TestIngest:
    def test_toy_counts(self, toy_files):
        corpus, questions, report = ingest(
            toy_files / "questions.tsv", toy_files / "answers.tsv",
            toy_files / "qrels.tsv")
        assert len(corpus) == 5
        assert len(questions) == 2
        assert report.retained_answers == 5
        assert report.retained_questions == 2

    def test_relevant_ids_resolve(self, toy_files):
        corpus, questions, _ = ingest(
            toy_files / "questions.tsv", toy_files / "answers.tsv",
            toy_files / "qrels.tsv")
        for q in questions:
            assert q.relevant_ids
            for aid in q.relevant_ids:
                assert aid in corpus

    def test_dangling_qrel_lists_offender(self, toy_files):
        _write(toy_files / "qrels.tsv", ["q1\ta1", "q2\taXX"])
        with pytest.raises(DanglingIdError) as exc:
            ingest(toy_files / "questions.tsv", toy_files / "answers.tsv",
                   toy_files / "qrels.tsv")
        assert "aXX" in str(exc.value)

    def test_malformed_line_names_file_and_line(self, toy_files):
        _write(toy_files / "answers.tsv", ["a1\tok text", "brokenline"])
        with pytest.raises(DataFormatError) as exc:
            ingest(toy_files / "questions.tsv", toy_files / "answers.tsv",
                   toy_files / "qrels.tsv")
        assert "answers.tsv" in str(exc.value)
        assert ":2" in str(exc.value)

    def test_empty_answer_dropped_and_question_pruned(self, toy_files):
        _write(toy_files / "answers.tsv", [
            "a1\t...!!!",  # cleans to empty
            "a2\tsomething real",
            "a4\tmore text",
            "a5\tira answer",
        ])
        corpus, questions, report = ingest(
            toy_files / "questions.tsv", toy_files / "answers.tsv",
            toy_files / "qrels.tsv")
        assert "a1" not in corpus
        q1 = [q for q in questions if q.id == "q1"]
        assert q1 and q1[0].relevant_ids == {"a4"}
        assert report.retained_answers == 3

    def test_question_without_judgments_dropped(self, toy_files):
        _write(toy_files / "qrels.tsv", ["q1\ta1"])
        _, questions, _ = ingest(
            toy_files / "questions.tsv", toy_files / "answers.tsv",
            toy_files / "qrels.tsv")
        assert [q.id for q in questions] == ["q1"]

    def test_duplicate_answer_id_rejected(self, toy_files):
        _write(toy_files / "answers.tsv", ["a1\tfirst", "a1\tsecond"])
        with pytest.raises(DataFormatError):
            ingest(toy_files / "questions.tsv", toy_files / "answers.tsv",
                   toy_files / "qrels.tsv")

    def test_json_inputs(self, tmp_path):
        (tmp_path / "q.json").write_text(
            '[{"qid": "q1", "text": "Is Tax due?"}]', encoding="utf-8")
        (tmp_path / "a.json").write_text(
            '[{"aid": "a1", "text": "Yes, in April."}]', encoding="utf-8")
        (tmp_path / "r.json").write_text(
            '[{"qid": "q1", "aid": "a1"}]', encoding="utf-8")
        corpus, questions, _ = ingest(tmp_path / "q.json", tmp_path / "a.json",
                                      tmp_path / "r.json")
        assert corpus.text("a1") == "yes in april"
        assert questions[0].text == "is tax due"

    def test_write_ingest_round_trip(self, toy_files, tmp_path):
        corpus, questions, _ = ingest(
            toy_files / "questions.tsv", toy_files / "answers.tsv",
            toy_files / "qrels.tsv")
        out = tmp_path / "out"
        out.mkdir()
        write_answers(corpus, out / "answers.tsv")
        write_questions(questions, out / "questions.tsv")
        write_qrels(questions, out / "qrels.tsv")
        corpus2, questions2, _ = ingest(
            out / "questions.tsv", out / "answers.tsv", out / "qrels.tsv")
        assert {a.id: a.text for a in corpus} == {a.id: a.text for a in corpus2}
        assert {(q.id, q.text, q.relevant_ids) for q in questions} == \
               {(q.id, q.text, q.relevant_ids) for q in questions2}


def _questions(n):
    return [Question(f"q{i}", f"text {i}", frozenset({f"a{i}"})) for i in range(n)]


class TestSplitQuestions:
    def test_all_in_train(self):
        qs = _questions(10)
        split = split_questions(qs, (10, 0, 0), seed=3)
        assert len(split.train) == 10 and not split.valid and not split.test

    def test_counts_must_sum(self):
        with pytest.raises(ValueError):
            split_questions(_questions(5), (4, 2, 1), seed=0)

    def test_same_seed_same_membership(self):
        qs = _questions(6)
        a = split_questions(qs, (4, 1, 1), seed=42)
        b = split_questions(qs, (4, 1, 1), seed=42)
        assert [q.id for q in a.train] == [q.id for q in b.train]
        assert [q.id for q in a.valid] == [q.id for q in b.valid]
        assert [q.id for q in a.test] == [q.id for q in b.test]

    def test_partition_property(self):
        rng = random.Random(0)
        for _ in range(25):
            n = rng.randint(1, 40)
            n_train = rng.randint(0, n)
            n_valid = rng.randint(0, n - n_train)
            qs = _questions(n)
            split = split_questions(qs, (n_train, n_valid, n - n_train - n_valid),
                                    seed=rng.randint(0, 999))
            ids = [q.id for q in split.train + split.valid + split.test]
            assert sorted(ids) == sorted(q.id for q in qs)
            assert len(set(ids)) == len(ids)

    def test_input_order_does_not_matter(self):
        qs = _questions(8)
        shuffled = list(reversed(qs))
        a = split_questions(qs, (5, 2, 1), seed=9)
        b = split_questions(shuffled, (5, 2, 1), seed=9)
        assert [q.id for q in a.train] == [q.id for q in b.train]


class TestBuildSamples:
    def test_pointwise_labels_pool(self):
        q = Question("q1", "t", frozenset({"a5"}))
        cands = {"q1": [("a5", 3.0), ("a9", 2.0), ("a7", 1.0)]}
        samples = build_samples([q], cands, "pointwise")
        assert {(s.answer_id, s.label) for s in samples} == {
            ("a5", 1), ("a9", 0), ("a7", 0)}

    def test_pointwise_force_includes_missed_truth(self):
        q = Question("q1", "t", frozenset({"a1", "a2"}))
        cands = {"q1": [("a3", 2.0), ("a1", 1.0)]}
        samples = build_samples([q], cands, "pointwise")
        assert LabeledSample("q1", "a2", 1) in samples
        assert LabeledSample("q1", "a1", 1) in samples
        assert LabeledSample("q1", "a3", 0) in samples

    def test_pairwise_cross_product(self):
        q = Question("q1", "t", frozenset({"a1", "a2"}))
        cands = {"q1": [("a3", 2.0), ("a4", 1.0)]}
        samples = build_samples([q], cands, "pairwise")
        assert set(samples) == {
            TripleSample("q1", "a1", "a3"), TripleSample("q1", "a1", "a4"),
            TripleSample("q1", "a2", "a3"), TripleSample("q1", "a2", "a4")}

    def test_pairwise_cap(self):
        q = Question("q1", "t", frozenset({"a1"}))
        cands = {"q1": [(f"n{i}", float(9 - i)) for i in range(9)]}
        samples = build_samples([q], cands, "pairwise", per_question_cap=4)
        assert len(samples) == 4

    def test_missing_pool_names_question(self):
        q = Question("q1", "t", frozenset({"a1"}))
        with pytest.raises(KeyError, match="q1"):
            build_samples([q], {}, "pointwise")

    def test_labels_match_membership_property(self):
        rng = random.Random(1)
        for _ in range(30):
            truth = frozenset(f"a{i}" for i in rng.sample(range(20), rng.randint(1, 5)))
            pool = [(f"a{i}", float(30 - i)) for i in rng.sample(range(20), 8)]
            q = Question("q", "t", truth)
            for s in build_samples([q], {"q": pool}, "pointwise"):
                assert s.label == int(s.answer_id in truth)
            for t in build_samples([q], {"q": pool}, "pairwise"):
                assert t.positive_id in truth
                assert t.negative_id not in truth
                assert t.positive_id != t.negative_id
