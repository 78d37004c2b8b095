"""Question/answer dataset ingestion, cleaning, splitting, and sample construction.

File formats (UTF-8, LF):
    questions.tsv  qid<TAB>question text
    answers.tsv    aid<TAB>answer text
    qrels.tsv      qid<TAB>aid

A ``.json`` extension switches to a JSON list of objects with the same
field names (``qid``/``text``, ``aid``/``text``, ``qid``/``aid``).
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path

from .errors import DanglingIdError, DataFormatError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Answer:
    """An identified, cleaned answer passage."""

    id: str
    text: str


@dataclass(frozen=True)
class Question:
    """A cleaned question with its ground-truth answer ids."""

    id: str
    text: str
    relevant_ids: frozenset[str]


class AnswerCorpus:
    """Immutable id -> Answer collection."""

    def __init__(self, answers: list[Answer]):
        self._by_id: dict[str, Answer] = {}
        for a in answers:
            if a.id in self._by_id:
                raise DataFormatError(f"duplicate answer id {a.id!r}")
            self._by_id[a.id] = a

    def __len__(self) -> int:
        return len(self._by_id)

    def __contains__(self, answer_id: str) -> bool:
        return answer_id in self._by_id

    def __iter__(self):
        return iter(self._by_id.values())

    def ids(self) -> list[str]:
        return list(self._by_id)

    def get(self, answer_id: str) -> Answer:
        try:
            return self._by_id[answer_id]
        except KeyError:
            raise KeyError(f"unknown answer id {answer_id!r}") from None

    def text(self, answer_id: str) -> str:
        return self.get(answer_id).text


@dataclass
class DatasetSplit:
    """Disjoint train/valid/test question lists."""

    train: list[Question]
    valid: list[Question]
    test: list[Question]


@dataclass(frozen=True)
class LabeledSample:
    question_id: str
    answer_id: str
    label: int


@dataclass(frozen=True)
class TripleSample:
    question_id: str
    positive_id: str
    negative_id: str


@dataclass
class IngestReport:
    """Counts of raw vs retained records, reported by ingest."""

    raw_answers: int = 0
    retained_answers: int = 0
    raw_questions: int = 0
    retained_questions: int = 0
    qrel_pairs: int = 0
    retained_pairs: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


# Candidate pools: question_id -> ranked [(answer_id, score), ...]
CandidateLists = dict[str, list[tuple[str, float]]]


def clean_text(raw: str) -> str:
    """Lowercase, strip non-alphanumerics to spaces, collapse whitespace."""
    lowered = raw.lower()
    kept = [ch if ch.isalnum() or ch.isspace() else " " for ch in lowered]
    return " ".join("".join(kept).split())


def read_records(path: Path, n_fields: int, what: str) -> list[tuple]:
    """Read TSV (or JSON) records with exactly ``n_fields`` columns."""
    path = Path(path)
    if path.suffix == ".json":
        keys = {
            "question": ("qid", "text"),
            "answer": ("aid", "text"),
            "qrel": ("qid", "aid"),
        }[what]
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
        records = []
        for i, obj in enumerate(data, start=1):
            try:
                records.append(tuple(str(obj[k]) for k in keys))
            except (KeyError, TypeError):
                raise DataFormatError(
                    f"{what} record missing fields {keys}", path=path, line_no=i
                ) from None
        return records
    records = []
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != n_fields:
                raise DataFormatError(
                    f"expected {n_fields} tab-separated fields, got {len(parts)}",
                    path=path,
                    line_no=i,
                )
            records.append(tuple(parts))
    return records


def ingest(
    questions_file: str | Path,
    answers_file: str | Path,
    qrels_file: str | Path,
) -> tuple[AnswerCorpus, list[Question], IngestReport]:
    """Load, clean, and cross-link the dataset.

    Answers that clean to empty text are dropped; qrel pairs pointing at
    dropped answers are dropped with them; questions left without any
    relevant answer are dropped. Qrel ids that never existed in the raw
    files are an error.
    """
    report = IngestReport()

    raw_answers = read_records(Path(answers_file), 2, "answer")
    report.raw_answers = len(raw_answers)
    seen_aids: set[str] = set()
    answers: list[Answer] = []
    for aid, text in raw_answers:
        if aid in seen_aids:
            raise DataFormatError(f"duplicate answer id {aid!r}", path=answers_file)
        seen_aids.add(aid)
        cleaned = clean_text(text)
        if cleaned:
            answers.append(Answer(aid, cleaned))
    corpus = AnswerCorpus(answers)
    report.retained_answers = len(corpus)

    raw_questions = read_records(Path(questions_file), 2, "question")
    report.raw_questions = len(raw_questions)
    q_text: dict[str, str] = {}
    for qid, text in raw_questions:
        if qid in q_text:
            raise DataFormatError(f"duplicate question id {qid!r}", path=questions_file)
        q_text[qid] = clean_text(text)

    pairs = read_records(Path(qrels_file), 2, "qrel")
    report.qrel_pairs = len(pairs)
    dangling = {aid for _, aid in pairs if aid not in seen_aids}
    if dangling:
        raise DanglingIdError("qrels reference unknown answer ids", dangling, path=qrels_file)
    unknown_q = {qid for qid, _ in pairs if qid not in q_text}
    if unknown_q:
        raise DanglingIdError("qrels reference unknown question ids", unknown_q, path=qrels_file)

    relevant: dict[str, set[str]] = {}
    for qid, aid in pairs:
        if aid in corpus:
            relevant.setdefault(qid, set()).add(aid)
            report.retained_pairs += 1

    questions = [
        Question(qid, q_text[qid], frozenset(relevant[qid]))
        for qid in q_text
        if relevant.get(qid)
    ]
    report.retained_questions = len(questions)
    log.info(
        "ingest: %d/%d answers, %d/%d questions, %d/%d qrel pairs retained",
        report.retained_answers, report.raw_answers,
        report.retained_questions, report.raw_questions,
        report.retained_pairs, report.qrel_pairs,
    )
    return corpus, questions, report


def write_questions(questions: list[Question], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for q in questions:
            f.write(f"{q.id}\t{q.text}\n")


def write_answers(corpus: AnswerCorpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for a in corpus:
            f.write(f"{a.id}\t{a.text}\n")


def write_qrels(questions: list[Question], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for q in questions:
            for aid in sorted(q.relevant_ids):
                f.write(f"{q.id}\t{aid}\n")


def read_qrels(path: str | Path) -> dict[str, set[str]]:
    """qid -> set of relevant answer ids, without corpus cross-checks."""
    relevant: dict[str, set[str]] = {}
    for qid, aid in read_records(Path(path), 2, "qrel"):
        relevant.setdefault(qid, set()).add(aid)
    return relevant


def split_questions(
    questions: list[Question],
    counts: tuple[int, int, int],
    seed: int,
) -> DatasetSplit:
    """Seeded shuffle, then contiguous assignment into train/valid/test."""
    n_train, n_valid, n_test = counts
    if n_train + n_valid + n_test != len(questions):
        raise ValueError(
            f"split counts {counts} sum to {n_train + n_valid + n_test}, "
            f"but there are {len(questions)} questions"
        )
    order = sorted(questions, key=lambda q: q.id)
    random.Random(seed).shuffle(order)
    return DatasetSplit(
        train=order[:n_train],
        valid=order[n_train:n_train + n_valid],
        test=order[n_train + n_valid:],
    )


def build_samples(
    split_part: list[Question],
    candidates: CandidateLists,
    mode: str,
    per_question_cap: int | None = None,
):
    """Turn retrieved candidate pools into labeled training samples.

    Negatives are the candidate pool minus the ground-truth set. Pointwise
    mode labels every pool member and force-includes ground-truth answers
    the retriever missed (label 1). Pairwise mode emits positives x
    negatives per question, optionally capped.
    """
    if mode not in ("pointwise", "pairwise"):
        raise ValueError(f"unknown sample mode {mode!r}")
    samples: list = []
    for q in split_part:
        if q.id not in candidates:
            raise KeyError(f"no candidate pool for question id {q.id!r}")
        pool = [aid for aid, _ in candidates[q.id]]
        if mode == "pointwise":
            for aid in pool:
                samples.append(LabeledSample(q.id, aid, int(aid in q.relevant_ids)))
            for aid in sorted(q.relevant_ids):
                if aid not in pool:
                    samples.append(LabeledSample(q.id, aid, 1))
        else:
            negatives = [aid for aid in pool if aid not in q.relevant_ids]
            triples = [
                TripleSample(q.id, pos, neg)
                for pos in sorted(q.relevant_ids)
                for neg in negatives
            ]
            if per_question_cap is not None:
                triples = triples[:per_question_cap]
            samples.extend(triples)
    return samples
