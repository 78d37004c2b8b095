"""Ranking metrics (MRR@k, NDCG@k, Precision@k) and run-file round trips.

Run files use the community format ``qid Q0 aid rank score tag`` with
ranks from 1 and scores printed to six decimals.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Question
from .errors import DataFormatError

Run = dict[str, list[tuple[str, float]]]


def reciprocal_rank(ranked_ids, relevant_set, k: int) -> float:
    """1/position of the first relevant id within the top k, else 0."""
    if k < 1:
        raise ValueError("k must be >= 1")
    for pos, aid in enumerate(ranked_ids[:k], start=1):
        if aid in relevant_set:
            return 1.0 / pos
    return 0.0


def ndcg(ranked_ids, relevant_set, k: int) -> float:
    """Binary-relevance DCG@k over the ideal DCG@k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    dcg = 0.0
    for pos, aid in enumerate(ranked_ids[:k], start=1):
        if aid in relevant_set:
            dcg += 1.0 if pos == 1 else 1.0 / math.log2(pos + 1)
    n_ideal = min(len(relevant_set), k)
    if n_ideal == 0:
        return 0.0
    idcg = sum(1.0 if pos == 1 else 1.0 / math.log2(pos + 1)
               for pos in range(1, n_ideal + 1))
    return dcg / idcg


def precision_at_k(ranked_ids, relevant_set, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = sum(1 for aid in ranked_ids[:k] if aid in relevant_set)
    return hits / k


@dataclass
class EvalReport:
    mrr_at_k: dict[int, float]
    ndcg_at_k: dict[int, float]
    precision_at_1: float
    k_values: list[int]
    n_questions: int
    per_question: dict[str, dict] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "mrr_at_k": {str(k): v for k, v in self.mrr_at_k.items()},
            "ndcg_at_k": {str(k): v for k, v in self.ndcg_at_k.items()},
            "precision_at_1": self.precision_at_1,
            "k_values": self.k_values,
            "n_questions": self.n_questions,
            "per_question": self.per_question,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2)

    def table(self) -> str:
        lines = [f"{'metric':<12} {'k':>4} {'value':>10}"]
        for k in self.k_values:
            lines.append(f"{'MRR':<12} {k:>4} {self.mrr_at_k[k]:>10.4f}")
        for k in self.k_values:
            lines.append(f"{'NDCG':<12} {k:>4} {self.ndcg_at_k[k]:>10.4f}")
        lines.append(f"{'Precision':<12} {1:>4} {self.precision_at_1:>10.4f}")
        lines.append(f"{'questions':<12} {'':>4} {self.n_questions:>10d}")
        return "\n".join(lines)


def evaluate(run: Run, questions: list[Question], k_list=(10,)) -> EvalReport:
    """Unweighted per-question means; questions missing from the run score 0.

    Every question id appearing in the run must have judgments.
    """
    k_list = list(k_list)
    judged = {q.id: q.relevant_ids for q in questions}
    unjudged = set(run) - set(judged)
    if unjudged:
        raise ValueError(f"run contains unjudged question ids: {sorted(unjudged)}")
    per_question: dict[str, dict] = {}
    for q in questions:
        ranked = [aid for aid, _ in run.get(q.id, [])]
        entry = {f"mrr@{k}": reciprocal_rank(ranked, judged[q.id], k) for k in k_list}
        entry.update({f"ndcg@{k}": ndcg(ranked, judged[q.id], k) for k in k_list})
        entry["p@1"] = precision_at_k(ranked, judged[q.id], 1)
        per_question[q.id] = entry
    n = len(questions)
    if n == 0:
        raise ValueError("no questions to evaluate")
    return EvalReport(
        mrr_at_k={k: sum(e[f"mrr@{k}"] for e in per_question.values()) / n
                  for k in k_list},
        ndcg_at_k={k: sum(e[f"ndcg@{k}"] for e in per_question.values()) / n
                   for k in k_list},
        precision_at_1=sum(e["p@1"] for e in per_question.values()) / n,
        k_values=k_list,
        n_questions=n,
        per_question=per_question,
    )


def write_run(run: Run, path: str | Path, tag: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for qid in sorted(run):
            for rank, (aid, score) in enumerate(run[qid], start=1):
                f.write(f"{qid} Q0 {aid} {rank} {score:.6f} {tag}\n")


def read_run(path: str | Path) -> Run:
    """Parse a run file, checking rank contiguity and score monotonicity."""
    run: Run = {}
    last_rank: dict[str, int] = {}
    last_score: dict[str, float] = {}
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f, start=1):
            parts = line.split()
            if len(parts) != 6:
                raise DataFormatError(
                    f"expected 6 whitespace-separated fields, got {len(parts)}",
                    path=path, line_no=i,
                )
            qid, _, aid, rank_s, score_s, _ = parts
            try:
                rank = int(rank_s)
                score = float(score_s)
            except ValueError:
                raise DataFormatError(
                    "rank must be an integer and score a decimal",
                    path=path, line_no=i,
                ) from None
            if rank != last_rank.get(qid, 0) + 1:
                raise DataFormatError(
                    f"rank {rank} out of sequence for question {qid!r}",
                    path=path, line_no=i,
                )
            if qid in last_score and score > last_score[qid]:
                raise DataFormatError(
                    f"score increases at rank {rank} for question {qid!r}",
                    path=path, line_no=i,
                )
            seen = run.setdefault(qid, [])
            if any(a == aid for a, _ in seen):
                raise DataFormatError(
                    f"duplicate answer id {aid!r} for question {qid!r}",
                    path=path, line_no=i,
                )
            seen.append((aid, score))
            last_rank[qid] = rank
            last_score[qid] = score
    return run
