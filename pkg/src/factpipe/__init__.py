"""Sentence-level factuality feedback pipeline for summarization.

Generate diverse summaries from a pool of LLM endpoints, collect
fine-grained per-sentence error feedback from a verifier model, turn the
feedback into fine-tuning conversations, and score predictions against
human judgments at sentence, summary, and system level.
"""

from .corpus import (
    DocType,
    Document,
    Domain,
    HumanAnnotation,
    OriginalSplit,
    SentenceAnnotation,
    SourceDataset,
    SummaryRecord,
    ingest_human_dataset,
    load_annotations,
    load_corpus,
    load_summaries,
    segment_sentences,
    split_train_test,
    write_annotations,
    write_corpus,
    write_summaries,
)
from .errors import FactpipeError
from .exporter import SftExample, build_example, export_sft, read_sft, subsample
from .feedback import (
    CANONICAL_NAMES,
    LOCALIZABLE_CATEGORIES,
    ErrorCategory,
    FeedbackRecord,
    FeedbackSource,
    SentenceFeedback,
    consolidate,
    consolidate_annotation,
    extract_json_block,
    load_feedback,
    normalize_category,
    parse_feedback,
    serialize_feedback,
    to_binary,
    write_feedback,
)
from .gateway import ChatResult, EndpointConfig, UsageStats, chat
from .metrics import (
    BinaryAgreement,
    Correlation,
    EvalReport,
    balanced_accuracy,
    evaluate,
    faithfulness_score,
    localization_accuracy,
    pearson,
    spearman,
    spearman_system,
)
from .prompts import Granularity, PromptText, build_prompt

__version__ = "0.1.0"

__all__ = [
    "CANONICAL_NAMES",
    "LOCALIZABLE_CATEGORIES",
    "BinaryAgreement",
    "ChatResult",
    "Correlation",
    "DocType",
    "Document",
    "Domain",
    "EndpointConfig",
    "ErrorCategory",
    "EvalReport",
    "FactpipeError",
    "FeedbackRecord",
    "FeedbackSource",
    "Granularity",
    "HumanAnnotation",
    "OriginalSplit",
    "PromptText",
    "SentenceAnnotation",
    "SentenceFeedback",
    "SftExample",
    "SourceDataset",
    "SummaryRecord",
    "UsageStats",
    "balanced_accuracy",
    "build_example",
    "build_prompt",
    "chat",
    "consolidate",
    "consolidate_annotation",
    "evaluate",
    "export_sft",
    "extract_json_block",
    "faithfulness_score",
    "ingest_human_dataset",
    "load_annotations",
    "load_corpus",
    "load_feedback",
    "load_summaries",
    "localization_accuracy",
    "normalize_category",
    "parse_feedback",
    "pearson",
    "read_sft",
    "segment_sentences",
    "serialize_feedback",
    "spearman",
    "spearman_system",
    "split_train_test",
    "subsample",
    "to_binary",
    "write_annotations",
    "write_corpus",
    "write_feedback",
    "write_summaries",
    "__version__",
]
