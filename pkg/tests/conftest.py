"""Shared fixtures: a small on-disk dataset built from the synthetic benchmark."""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from _synth import make_benchmark  # noqa: E402


def write_dataset(root: Path, n_questions: int, seed: int, prefix: str = "d"):
    corpus, questions = make_benchmark(n_questions, seed=seed, prefix=prefix)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "questions.tsv", "w", encoding="utf-8") as f:
        for q in questions:
            f.write(f"{q.id}\t{q.text}\n")
    with open(root / "answers.tsv", "w", encoding="utf-8") as f:
        for a in corpus:
            f.write(f"{a.id}\t{a.text}\n")
    with open(root / "qrels.tsv", "w", encoding="utf-8") as f:
        for q in questions:
            for aid in sorted(q.relevant_ids):
                f.write(f"{q.id}\t{aid}\n")
    return corpus, questions


@pytest.fixture
def dataset_dir(tmp_path):
    """12 questions / 60 answers of separable synthetic data on disk."""
    root = tmp_path / "data"
    write_dataset(root, 12, seed=5)
    return root
