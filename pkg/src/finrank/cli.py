"""Command-line entry point wiring corpus -> index -> training -> evaluation.

Subcommands: ingest, index, retrieve, build-samples, train, pretrain-mlm,
tanda, rerank, pipeline, eval, query. Exit codes: 0 success, 1 usage
error, 2 data error, 3 numerical failure. ``FINRANK_DATA_DIR`` is used as
a fallback root for relative input paths, and ``--config`` supplies
``key = value`` defaults for any flag.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import random
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import corpus as corpus_mod
from . import evaluation as eval_mod
from .corpus import (
    AnswerCorpus,
    Question,
    build_samples,
    clean_text,
    ingest,
    read_qrels,
    split_questions,
)
from .errors import FinrankError, NumericalError
from .index import Bm25Params, build_index, load_index, retrieve, save_index
from .neural import CrossEncoderModel, EncoderConfig, QaLstmConfig, QaLstmModel
from .rankers import Bm25Scorer, answer_pipeline, rerank, scorer_from_checkpoint
from .textenc import Vocabulary, build_vocab, load_embeddings, tokenize
from .training import (
    TrainConfig,
    TrainData,
    load_checkpoint,
    mlm_defaults,
    pretrain_mlm,
    qalstm_defaults,
    save_checkpoint,
    train,
    transfer_and_adapt,
)

DATA_DIR_ENV = "FINRANK_DATA_DIR"
DEFAULT_TAG = "finrank"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunManifest:
    """Reproducibility record written beside every produced output."""

    command: str
    config: dict
    seed: int
    input_hashes: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    started: float = 0.0
    elapsed_seconds: float = 0.0

    def write(self, path: Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.__dict__, f, indent=2, sort_keys=True)
            f.write("\n")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _resolve(path: str | None) -> Path | None:
    """Fall back to FINRANK_DATA_DIR for relative inputs that do not exist."""
    if path is None:
        return None
    p = Path(path)
    if p.is_absolute() or p.exists():
        return p
    root = os.environ.get(DATA_DIR_ENV)
    if root and (Path(root) / p).exists():
        return Path(root) / p
    return p


def _read_questions_file(path: Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for qid, text in corpus_mod.read_records(path, 2, "question"):
        out[qid] = clean_text(text)
    return out


def _read_answers_file(path: Path) -> AnswerCorpus:
    answers = []
    for aid, text in corpus_mod.read_records(path, 2, "answer"):
        cleaned = clean_text(text)
        if cleaned:
            answers.append(corpus_mod.Answer(aid, cleaned))
    return AnswerCorpus(answers)


def _questions_with_judgments(q_text: dict[str, str],
                              qrels: dict[str, set[str]]) -> list[Question]:
    return [
        Question(qid, text, frozenset(qrels[qid]))
        for qid, text in q_text.items()
        if qrels.get(qid)
    ]


def _load_config_file(path: Path) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise UsageError(f"{path}:{i}: expected 'key = value'")
            key, value = stripped.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _coerce(value: str):
    low = value.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            continue
    return value


def _apply_config_defaults(args: argparse.Namespace, argv: list[str]) -> None:
    if not getattr(args, "config", None):
        return
    explicit = {a.split("=", 1)[0].lstrip("-").replace("-", "_")
                for a in argv if a.startswith("--")}
    for key, value in _load_config_file(_resolve(args.config)).items():
        if key in explicit or not hasattr(args, key):
            continue
        setattr(args, key, _coerce(value))


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="key = value defaults file")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-len", type=int, default=128)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=3e-6)
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--warmup-steps", type=int, default=10_000)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--n-layers", type=int, default=2)
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--n-heads", type=int, default=4)
    p.add_argument("--d-ff", type=int, default=128)
    p.add_argument("--embed-dim", type=int, default=100)
    p.add_argument("--hidden-size", type=int, default=256)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--margin", type=float, default=0.2)


def build_parser() -> _Parser:
    parser = _Parser(prog="finrank", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="clean and cross-link the dataset")
    _add_common(p)
    p.add_argument("--questions", required=True)
    p.add_argument("--answers", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--split", help="train,valid,test question counts")

    p = sub.add_parser("index", help="build and persist the inverted index")
    _add_common(p)
    p.add_argument("--answers", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("retrieve", help="BM25 candidate pools to a run file")
    _add_common(p)
    p.add_argument("--index", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pool-size", type=int, default=50)
    p.add_argument("--k1", type=float, default=0.82)
    p.add_argument("--b", type=float, default=0.68)
    p.add_argument("--tag", default=DEFAULT_TAG)

    p = sub.add_parser("build-samples", help="turn candidate pools into samples")
    _add_common(p)
    p.add_argument("--questions", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--candidates", required=True, help="run file of pools")
    p.add_argument("--mode", choices=["pointwise", "pairwise"], required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cap", type=int, help="per-question pairwise cap")

    p = sub.add_parser("train", help="train a re-ranker")
    _add_common(p)
    _add_model_flags(p)
    p.add_argument("--objective", choices=["pointwise", "pairwise", "hinge"],
                   required=True)
    p.add_argument("--questions", required=True, help="training questions")
    p.add_argument("--valid-questions", help="validation questions")
    p.add_argument("--answers", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--embeddings", help="pretrained embedding text file (hinge)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("pretrain-mlm", help="masked-LM further pre-training")
    _add_common(p)
    _add_model_flags(p)
    p.add_argument("--answers", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("tanda", help="transfer on general data, adapt on target")
    _add_common(p)
    _add_model_flags(p)
    p.add_argument("--general", required=True,
                   help="dir with questions/answers/qrels[.tsv] and optional candidates.run")
    p.add_argument("--target", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--objective", choices=["pointwise", "pairwise"],
                   default="pointwise")
    p.add_argument("--adapt-lr", type=float)
    p.add_argument("--adapt-epochs", type=int)
    p.add_argument("--pool-size", type=int, default=50)

    p = sub.add_parser("rerank", help="rescore candidate pools with a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--answers", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--tag", default=DEFAULT_TAG)

    p = sub.add_parser("pipeline", help="retrieve then rerank end to end")
    _add_common(p)
    p.add_argument("--index", required=True)
    p.add_argument("--answers", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--checkpoint", help="re-ranker checkpoint; BM25-only if absent")
    p.add_argument("--vocab")
    p.add_argument("--out", required=True)
    p.add_argument("--pool-size", type=int, default=50)
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--k1", type=float, default=0.82)
    p.add_argument("--b", type=float, default=0.68)
    p.add_argument("--tag", default=DEFAULT_TAG)

    p = sub.add_parser("eval", help="score a run file against judgments")
    _add_common(p)
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--k", type=int, action="append",
                   help="metric cutoff; repeatable (default 10)")
    p.add_argument("--out", help="write the JSON report here")

    p = sub.add_parser("query", help="interactive retrieval loop")
    _add_common(p)
    p.add_argument("--index", required=True)
    p.add_argument("--answers", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--vocab")
    p.add_argument("--pool-size", type=int, default=50)
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--k1", type=float, default=0.82)
    p.add_argument("--b", type=float, default=0.68)

    return parser


# ---------------------------------------------------------------------------
# command bodies


def _manifest(args, command: str, inputs: list, outputs: list,
              started: float) -> RunManifest:
    skip = {"config", "command", "func"}
    config = {k: v for k, v in vars(args).items()
              if k not in skip and not callable(v)}
    hashes = {}
    for p in inputs:
        p = Path(p)
        if p.is_file():
            hashes[str(p)] = _sha256(p)
    return RunManifest(
        command=command,
        config=config,
        seed=getattr(args, "seed", 0),
        input_hashes=hashes,
        outputs=[str(o) for o in outputs],
        started=started,
        elapsed_seconds=time.time() - started,
    )


def _write_manifest(manifest: RunManifest, primary_output: Path | None) -> None:
    """Beside the primary output; on stderr for commands with no file output."""
    if primary_output is None:
        print("manifest: " + json.dumps(manifest.__dict__, sort_keys=True),
              file=sys.stderr)
    else:
        manifest.write(Path(str(primary_output) + ".manifest.json"))


def _cmd_ingest(args) -> int:
    started = time.time()
    q, a, r = (_resolve(args.questions), _resolve(args.answers), _resolve(args.qrels))
    corpus, questions, report = ingest(q, a, r)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus_mod.write_answers(corpus, out_dir / "answers.tsv")
    corpus_mod.write_questions(questions, out_dir / "questions.tsv")
    corpus_mod.write_qrels(questions, out_dir / "qrels.tsv")
    outputs = [out_dir / "answers.tsv", out_dir / "questions.tsv", out_dir / "qrels.tsv"]
    if args.split:
        counts = tuple(int(c) for c in args.split.split(","))
        if len(counts) != 3:
            raise UsageError("--split needs three comma-separated counts")
        split = split_questions(questions, counts, args.seed)
        for name, part in (("train", split.train), ("valid", split.valid),
                           ("test", split.test)):
            path = out_dir / f"questions_{name}.tsv"
            corpus_mod.write_questions(part, path)
            outputs.append(path)
    for key, value in report.as_dict().items():
        print(f"{key}: {value}")
    manifest = _manifest(args, "ingest", [q, a, r], outputs, started)
    manifest.config["ingest_report"] = report.as_dict()
    _write_manifest(manifest, out_dir / "ingest")
    return 0


def _cmd_index(args) -> int:
    started = time.time()
    answers = _resolve(args.answers)
    corpus = _read_answers_file(answers)
    idx = build_index(corpus, tokenize)
    out = Path(args.out)
    save_index(idx, out)
    print(f"indexed {idx.n_docs} documents, {len(idx.postings)} terms")
    _write_manifest(_manifest(args, "index", [answers], [out], started), out)
    return 0


def _cmd_retrieve(args) -> int:
    started = time.time()
    index_path, q_path = _resolve(args.index), _resolve(args.questions)
    idx = load_index(index_path)
    params = Bm25Params(k1=args.k1, b=args.b)
    run = {}
    for qid, text in _read_questions_file(q_path).items():
        pool = retrieve(idx, tokenize(text), args.pool_size, params)
        if pool:
            run[qid] = pool
    out = Path(args.out)
    eval_mod.write_run(run, out, args.tag)
    print(f"retrieved pools for {len(run)} questions")
    _write_manifest(_manifest(args, "retrieve", [index_path, q_path], [out], started), out)
    return 0


def _cmd_build_samples(args) -> int:
    started = time.time()
    q_path, r_path, c_path = (_resolve(args.questions), _resolve(args.qrels),
                              _resolve(args.candidates))
    q_text = _read_questions_file(q_path)
    qrels = read_qrels(r_path)
    questions = _questions_with_judgments(q_text, qrels)
    candidates = eval_mod.read_run(c_path)
    samples = build_samples(questions, candidates, args.mode,
                            per_question_cap=args.cap)
    out = Path(args.out)
    with open(out, "w", encoding="utf-8", newline="\n") as f:
        for s in samples:
            if args.mode == "pointwise":
                f.write(f"{s.question_id}\t{s.answer_id}\t{s.label}\n")
            else:
                f.write(f"{s.question_id}\t{s.positive_id}\t{s.negative_id}\n")
    print(f"wrote {len(samples)} {args.mode} samples")
    _write_manifest(
        _manifest(args, "build-samples", [q_path, r_path, c_path], [out], started), out
    )
    return 0


def _train_questions(args):
    """Shared loading for train: questions, corpus, qrels, candidate pools."""
    corpus = _read_answers_file(_resolve(args.answers))
    qrels = read_qrels(_resolve(args.qrels))
    train_q = _questions_with_judgments(
        _read_questions_file(_resolve(args.questions)), qrels
    )
    if args.valid_questions:
        valid_q = _questions_with_judgments(
            _read_questions_file(_resolve(args.valid_questions)), qrels
        )
    else:
        # hold out a seeded tenth when no validation file is given
        order = sorted(train_q, key=lambda q: q.id)
        random.Random(args.seed + 0x517).shuffle(order)
        n_valid = max(1, len(order) // 10) if len(order) > 1 else 0
        valid_q, train_q = order[:n_valid], order[n_valid:]
    candidates = eval_mod.read_run(_resolve(args.candidates))
    return corpus, train_q, valid_q, candidates


def _build_shared_vocab(corpus, question_sets, min_count):
    streams = [tokenize(a.text) for a in corpus]
    for qs in question_sets:
        streams.extend(tokenize(q.text) for q in qs)
    return build_vocab(streams, min_count)


def _cmd_train(args) -> int:
    started = time.time()
    corpus, train_q, valid_q, candidates = _train_questions(args)
    vocab = _build_shared_vocab(corpus, [train_q, valid_q], args.min_count)
    sample_mode = "pointwise" if args.objective == "pointwise" else "pairwise"
    train_samples = build_samples(train_q, candidates, sample_mode)
    valid_samples = build_samples(
        [q for q in valid_q if q.id in candidates], candidates, sample_mode
    )
    data = TrainData.from_corpus(train_samples, valid_samples,
                                 train_q + valid_q, corpus, vocab)
    if args.objective == "hinge":
        model = QaLstmModel(QaLstmConfig(
            vocab_size=len(vocab), embed_dim=args.embed_dim,
            hidden_size=args.hidden_size, max_len=args.max_len,
            dropout=args.dropout), seed=args.seed)
        if args.embeddings:
            model.set_embeddings(load_embeddings(
                _resolve(args.embeddings), vocab, args.embed_dim, seed=args.seed))
        config = qalstm_defaults(
            batch_size=args.batch_size, base_lr=args.lr, epochs=args.epochs,
            max_len=args.max_len, margin=args.margin, seed=args.seed)
    else:
        model = CrossEncoderModel(EncoderConfig(
            vocab_size=len(vocab), n_layers=args.n_layers, d_model=args.d_model,
            n_heads=args.n_heads, d_ff=args.d_ff, max_len=args.max_len,
            dropout=args.dropout), seed=args.seed)
        config = TrainConfig(
            objective=args.objective, batch_size=args.batch_size,
            base_lr=args.lr, epochs=args.epochs, max_len=args.max_len,
            weight_decay=args.weight_decay, warmup_steps=args.warmup_steps,
            margin=args.margin, seed=args.seed)
    ckpt, history = train(model, data, config)
    out = Path(args.out)
    save_checkpoint(ckpt, out)
    vocab.save(Path(str(out) + ".vocab.tsv"))
    for h in history:
        print(f"epoch {h['epoch']}: train {h['train_loss']:.6f} "
              f"valid {h['valid_loss']:.6f}")
    inputs = [_resolve(args.questions), _resolve(args.answers),
              _resolve(args.qrels), _resolve(args.candidates)]
    _write_manifest(_manifest(args, "train", inputs,
                              [out, str(out) + ".vocab.tsv"], started), out)
    return 0


def _cmd_pretrain_mlm(args) -> int:
    started = time.time()
    answers = _resolve(args.answers)
    corpus = _read_answers_file(answers)
    vocab = _build_shared_vocab(corpus, [], args.min_count)
    model = CrossEncoderModel(EncoderConfig(
        vocab_size=len(vocab), n_layers=args.n_layers, d_model=args.d_model,
        n_heads=args.n_heads, d_ff=args.d_ff, max_len=args.max_len,
        dropout=args.dropout), seed=args.seed)
    config = mlm_defaults(batch_size=args.batch_size, base_lr=args.lr,
                          epochs=args.epochs, max_len=args.max_len,
                          seed=args.seed)
    ckpt = pretrain_mlm(model, corpus, config, vocab=vocab)
    out = Path(args.out)
    save_checkpoint(ckpt, out)
    vocab.save(Path(str(out) + ".vocab.tsv"))
    print(f"pre-trained on {len(corpus)} passages")
    _write_manifest(_manifest(args, "pretrain-mlm", [answers],
                              [out, str(out) + ".vocab.tsv"], started), out)
    return 0


def _load_domain(root: Path, args, idx_params: Bm25Params):
    """questions/answers/qrels[. tsv] plus candidates.run (built if missing)."""
    corpus = _read_answers_file(root / "answers.tsv")
    qrels = read_qrels(root / "qrels.tsv")
    questions = _questions_with_judgments(
        _read_questions_file(root / "questions.tsv"), qrels)
    run_path = root / "candidates.run"
    if run_path.exists():
        candidates = eval_mod.read_run(run_path)
    else:
        idx = build_index(corpus, tokenize)
        candidates = {}
        for q in questions:
            pool = retrieve(idx, tokenize(q.text), args.pool_size, idx_params)
            if pool:
                candidates[q.id] = pool
    return corpus, questions, candidates


def _cmd_tanda(args) -> int:
    started = time.time()
    params = Bm25Params()
    general_root, target_root = Path(_resolve(args.general)), Path(_resolve(args.target))
    g_corpus, g_questions, g_cands = _load_domain(general_root, args, params)
    t_corpus, t_questions, t_cands = _load_domain(target_root, args, params)
    vocab = _build_shared_vocab(
        list(g_corpus) + list(t_corpus), [g_questions, t_questions], args.min_count
    )
    mode = args.objective

    def _data(questions, candidates, corpus):
        usable = [q for q in questions if q.id in candidates]
        samples = build_samples(usable, candidates, mode)
        n_valid = max(1, len(samples) // 10) if len(samples) > 1 else 0
        return TrainData.from_corpus(samples[n_valid:], samples[:n_valid],
                                     questions, corpus, vocab)

    model = CrossEncoderModel(EncoderConfig(
        vocab_size=len(vocab), n_layers=args.n_layers, d_model=args.d_model,
        n_heads=args.n_heads, d_ff=args.d_ff, max_len=args.max_len,
        dropout=args.dropout), seed=args.seed)
    cfg_transfer = TrainConfig(
        objective=mode, batch_size=args.batch_size, base_lr=args.lr,
        epochs=args.epochs, max_len=args.max_len,
        weight_decay=args.weight_decay, warmup_steps=args.warmup_steps,
        seed=args.seed)
    cfg_adapt = TrainConfig(
        objective=mode, batch_size=args.batch_size,
        base_lr=args.adapt_lr if args.adapt_lr is not None else args.lr,
        epochs=args.adapt_epochs if args.adapt_epochs is not None else args.epochs,
        max_len=args.max_len, weight_decay=args.weight_decay,
        warmup_steps=args.warmup_steps, seed=args.seed)
    out_dir = Path(args.out_dir)
    stage1, stage2 = transfer_and_adapt(
        model, _data(g_questions, g_cands, g_corpus),
        _data(t_questions, t_cands, t_corpus),
        cfg_transfer, cfg_adapt, out_dir=out_dir)
    vocab.save(out_dir / "vocab.tsv")
    print(f"stage 1 best valid loss: "
          f"{min(h['valid_loss'] for h in stage1.history):.6f}")
    print(f"stage 2 best valid loss: "
          f"{min(h['valid_loss'] for h in stage2.history):.6f}")
    outputs = [out_dir / "stage1.ckpt", out_dir / "stage2.ckpt", out_dir / "vocab.tsv"]
    _write_manifest(_manifest(args, "tanda", [general_root, target_root],
                              outputs, started), out_dir / "tanda")
    return 0


def _cmd_rerank(args) -> int:
    started = time.time()
    ckpt_path, vocab_path = _resolve(args.checkpoint), _resolve(args.vocab)
    q_path, a_path, c_path = (_resolve(args.questions), _resolve(args.answers),
                              _resolve(args.candidates))
    ckpt = load_checkpoint(ckpt_path)
    vocab = Vocabulary.load(vocab_path)
    scorer = scorer_from_checkpoint(ckpt, vocab)
    corpus = _read_answers_file(a_path)
    candidates = eval_mod.read_run(c_path)
    run = {}
    for qid, text in _read_questions_file(q_path).items():
        if qid not in candidates:
            continue
        question = Question(qid, text, frozenset())
        pool_ids = [aid for aid, _ in candidates[qid]]
        ranked = rerank(scorer, question, pool_ids, corpus, args.top_k)
        if ranked.ranked:
            run[qid] = ranked.ranked
    out = Path(args.out)
    eval_mod.write_run(run, out, args.tag)
    print(f"reranked {len(run)} questions")
    _write_manifest(_manifest(args, "rerank",
                              [ckpt_path, vocab_path, q_path, a_path, c_path],
                              [out], started), out)
    return 0


def _cmd_pipeline(args) -> int:
    started = time.time()
    index_path, a_path, q_path = (_resolve(args.index), _resolve(args.answers),
                                  _resolve(args.questions))
    idx = load_index(index_path)
    corpus = _read_answers_file(a_path)
    params = Bm25Params(k1=args.k1, b=args.b)
    inputs = [index_path, a_path, q_path]
    if args.checkpoint:
        if not args.vocab:
            raise UsageError("--checkpoint needs --vocab")
        ckpt_path, vocab_path = _resolve(args.checkpoint), _resolve(args.vocab)
        scorer = scorer_from_checkpoint(load_checkpoint(ckpt_path),
                                        Vocabulary.load(vocab_path))
        inputs += [ckpt_path, vocab_path]
    else:
        scorer = Bm25Scorer(idx, params)
    run = {}
    for qid, text in _read_questions_file(q_path).items():
        question = Question(qid, text, frozenset())
        ranked = answer_pipeline(question, idx, scorer, corpus,
                                 pool_size=args.pool_size, top_k=args.top_k,
                                 bm25_params=params)
        if ranked.ranked:
            run[qid] = ranked.ranked
    out = Path(args.out)
    eval_mod.write_run(run, out, args.tag)
    print(f"pipeline answered {len(run)} questions "
          f"(pool {args.pool_size}, top {args.top_k})")
    _write_manifest(_manifest(args, "pipeline", inputs, [out], started), out)
    return 0


def _cmd_eval(args) -> int:
    started = time.time()
    run_path, qrels_path = _resolve(args.run), _resolve(args.qrels)
    run = eval_mod.read_run(run_path)
    qrels = read_qrels(qrels_path)
    questions = [Question(qid, "", frozenset(aids))
                 for qid, aids in sorted(qrels.items())]
    report = eval_mod.evaluate(run, questions, k_list=args.k or [10])
    print(report.table())
    if args.out:
        out = Path(args.out)
        with open(out, "w", encoding="utf-8") as f:
            f.write(report.to_json())
            f.write("\n")
        _write_manifest(_manifest(args, "eval", [run_path, qrels_path],
                                  [out], started), out)
    else:
        _write_manifest(_manifest(args, "eval", [run_path, qrels_path],
                                  [], started), None)
    return 0


def _cmd_query(args) -> int:
    started = time.time()
    idx = load_index(_resolve(args.index))
    corpus = _read_answers_file(_resolve(args.answers))
    params = Bm25Params(k1=args.k1, b=args.b)
    if args.checkpoint:
        if not args.vocab:
            raise UsageError("--checkpoint needs --vocab")
        scorer = scorer_from_checkpoint(load_checkpoint(_resolve(args.checkpoint)),
                                        Vocabulary.load(_resolve(args.vocab)))
    else:
        scorer = Bm25Scorer(idx, params)
    print("enter a question per line (:quit to exit)")
    for line in sys.stdin:
        line = line.strip()
        if line == ":quit":
            _write_manifest(_manifest(args, "query",
                                      [_resolve(args.index), _resolve(args.answers)],
                                      [], started), None)
            return 0
        if not line:
            continue
        text = clean_text(line)
        ranked = answer_pipeline(text, idx, scorer, corpus,
                                 pool_size=args.pool_size, top_k=args.top_k,
                                 bm25_params=params)
        if not ranked.ranked:
            print("no matching answers")
            continue
        for rank, (aid, score) in enumerate(ranked.ranked, start=1):
            snippet = corpus.text(aid)
            if len(snippet) > 100:
                snippet = snippet[:97] + "..."
            print(f"{rank:2d}. {score:10.6f}  {aid}  {snippet}")
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "index": _cmd_index,
    "retrieve": _cmd_retrieve,
    "build-samples": _cmd_build_samples,
    "train": _cmd_train,
    "pretrain-mlm": _cmd_pretrain_mlm,
    "tanda": _cmd_tanda,
    "rerank": _cmd_rerank,
    "pipeline": _cmd_pipeline,
    "eval": _cmd_eval,
    "query": _cmd_query,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config_defaults(args, argv)
        return _COMMANDS[args.command](args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3
    except (FinrankError, FileNotFoundError, KeyError, ValueError, TypeError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
