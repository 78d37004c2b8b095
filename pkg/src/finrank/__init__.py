"""finrank: non-factoid answer selection by BM25 retrieval and neural re-ranking."""

from .corpus import (
    Answer,
    AnswerCorpus,
    DatasetSplit,
    LabeledSample,
    Question,
    TripleSample,
    build_samples,
    clean_text,
    ingest,
    split_questions,
)
from .estimators import BM25Retriever, CrossEncoderRanker, QaLstmRanker
from .evaluation import EvalReport, evaluate, ndcg, precision_at_k, reciprocal_rank
from .index import Bm25Params, InvertedIndex, bm25_score, build_index, retrieve
from .neural import CrossEncoderModel, EncoderConfig, QaLstmConfig, QaLstmModel
from .rankers import (
    Bm25Scorer,
    CrossEncoderScorer,
    QaLstmScorer,
    RankedAnswers,
    answer_pipeline,
    rerank,
    scorer_from_checkpoint,
)
from .textenc import Vocabulary, build_vocab, encode_pair, encode_single, tokenize
from .training import (
    Checkpoint,
    TrainConfig,
    TrainData,
    load_checkpoint,
    pretrain_mlm,
    save_checkpoint,
    train,
    train_qalstm,
    transfer_and_adapt,
)

__version__ = "0.1.0"

__all__ = [
    "Answer", "AnswerCorpus", "DatasetSplit", "LabeledSample", "Question",
    "TripleSample", "build_samples", "clean_text", "ingest", "split_questions",
    "BM25Retriever", "CrossEncoderRanker", "QaLstmRanker",
    "EvalReport", "evaluate", "ndcg", "precision_at_k", "reciprocal_rank",
    "Bm25Params", "InvertedIndex", "bm25_score", "build_index", "retrieve",
    "CrossEncoderModel", "EncoderConfig", "QaLstmConfig", "QaLstmModel",
    "Bm25Scorer", "CrossEncoderScorer", "QaLstmScorer", "RankedAnswers",
    "answer_pipeline", "rerank", "scorer_from_checkpoint",
    "Vocabulary", "build_vocab", "encode_pair", "encode_single", "tokenize",
    "Checkpoint", "TrainConfig", "TrainData", "load_checkpoint", "pretrain_mlm",
    "save_checkpoint", "train", "train_qalstm", "transfer_and_adapt",
    "__version__",
]
