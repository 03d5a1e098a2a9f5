"""Error taxonomy, robust parsing of verifier JSON, and label consolidation.

Everything downstream hangs off this module: sentence-level feedback is
parsed from raw LLM output into aligned, category-checked records whose
faithfulness score (fraction of clean sentences) feeds the summary- and
system-level metrics.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .corpus import HumanAnnotation, normalize_ws
from .errors import (
    Exhausted,
    FeedbackParseError,
    InvalidLabel,
    MissingKey,
    NoJsonFound,
    SchemaMismatch,
    UnbalancedBrackets,
    UnknownCategory,
    WrongArity,
)
from .jsonl import read_jsonl, write_jsonl
from .prompts import TEMPLATE_VERSION, Granularity


class ErrorCategory(str, Enum):
    """The nine-way verdict a verifier assigns to a summary sentence."""

    no_error = "no_error"
    out_of_context = "out_of_context"
    entity = "entity"
    predicate = "predicate"
    circumstantial = "circumstantial"
    grammatical = "grammatical"
    coreference = "coreference"
    linking = "linking"
    other = "other"


# Names as they appear in the localization prompt's category list.
CANONICAL_NAMES: dict[ErrorCategory, str] = {
    ErrorCategory.no_error: "no error",
    ErrorCategory.out_of_context: "out-of-context error",
    ErrorCategory.entity: "entity error",
    ErrorCategory.predicate: "predicate error",
    ErrorCategory.circumstantial: "circumstantial error",
    ErrorCategory.grammatical: "grammatical error",
    ErrorCategory.coreference: "coreference error",
    ErrorCategory.linking: "linking error",
    ErrorCategory.other: "other error",
}

# The seven categories that localize a concrete error; excludes the clean
# verdict and the catch-all.
LOCALIZABLE_CATEGORIES: tuple[ErrorCategory, ...] = (
    ErrorCategory.out_of_context,
    ErrorCategory.entity,
    ErrorCategory.predicate,
    ErrorCategory.circumstantial,
    ErrorCategory.grammatical,
    ErrorCategory.coreference,
    ErrorCategory.linking,
)


def _category_key(s: str) -> str:
    """Lowercase, then collapse hyphens/underscores and whitespace runs to single spaces."""
    return re.sub(r"[\s_\-]+", " ", s.strip().lower()).strip()


def _build_alias_table() -> dict[str, ErrorCategory]:
    table: dict[str, ErrorCategory] = {}
    for cat, name in CANONICAL_NAMES.items():
        table[_category_key(name)] = cat
        table[_category_key(cat.value)] = cat
    # Bare names without the "error" suffix, as some sources abbreviate.
    for cat in LOCALIZABLE_CATEGORIES:
        table[_category_key(CANONICAL_NAMES[cat]).removesuffix(" error")] = cat
    table.update({
        # Short codes used by the fine-grained annotation sources.
        "noe": ErrorCategory.no_error,
        "oute": ErrorCategory.out_of_context,
        "ente": ErrorCategory.entity,
        "prede": ErrorCategory.predicate,
        "cire": ErrorCategory.circumstantial,
        "grame": ErrorCategory.grammatical,
        "corefe": ErrorCategory.coreference,
        "linke": ErrorCategory.linking,
        # Alternate long forms.
        "circumstance error": ErrorCategory.circumstantial,
        "circumstance": ErrorCategory.circumstantial,
        "discourse link error": ErrorCategory.linking,
        "discourse link": ErrorCategory.linking,
        "corefernce error": ErrorCategory.coreference,  # widespread misspelling
        "other": ErrorCategory.other,
        "others": ErrorCategory.other,
    })
    return table


_CATEGORY_ALIASES = _build_alias_table()


def normalize_category(s: str) -> ErrorCategory:
    """Map a category string onto the taxonomy; unknown strings are an error,
    never coerced to `other`."""
    try:
        return _CATEGORY_ALIASES[_category_key(s)]
    except KeyError:
        raise UnknownCategory(f"unrecognized category {s!r}") from None


def to_binary(category: ErrorCategory) -> int:
    """0 for a clean sentence, 1 for any error category."""
    return 0 if category is ErrorCategory.no_error else 1


class FeedbackSource(str, Enum):
    llm = "llm"
    human = "human"


@dataclass(frozen=True)
class SentenceFeedback:
    """One sentence's verdict: binary label plus optional reasoning/category."""

    sentence_index: int  # 1-based position in the summary
    sentence_text: str
    binary_label: int
    reasoning: str | None = None
    category: ErrorCategory | None = None

    def __post_init__(self):
        if self.sentence_index < 1:
            raise ValueError("sentence_index is 1-based")
        if self.binary_label not in (0, 1):
            raise ValueError(f"binary_label must be 0 or 1, got {self.binary_label!r}")
        if self.category is not None and to_binary(self.category) != self.binary_label:
            raise ValueError(
                f"label {self.binary_label} contradicts category {self.category.value}"
            )


@dataclass(frozen=True)
class FeedbackRecord:
    """All sentence feedback for one document-summary pair.

    `faithfulness` is the fraction of sentences labeled clean and is
    recomputed on construction, never trusted from serialized input.
    """

    doc_id: str
    summarizer_id: str
    granularity: Granularity
    feedback: tuple[SentenceFeedback, ...]
    source: FeedbackSource = FeedbackSource.llm
    template_version: str = TEMPLATE_VERSION
    defaulted: bool = False
    faithfulness: float = field(init=False, default=0.0)

    def __post_init__(self):
        if not self.feedback:
            raise ValueError(f"record {self.key} has no feedback entries")
        indices = [f.sentence_index for f in self.feedback]
        if indices != sorted(set(indices)):
            raise ValueError(f"record {self.key} has repeated or unordered sentence indices")
        if not self.defaulted:
            self._check_granularity_shape()
        zeros = sum(1 for f in self.feedback if f.binary_label == 0)
        object.__setattr__(self, "faithfulness", zeros / len(self.feedback))

    def _check_granularity_shape(self):
        wants_category = self.granularity is Granularity.full_localization
        wants_reason = self.granularity in (
            Granularity.binary_reasoning, Granularity.full_localization
        )
        for f in self.feedback:
            if (f.category is not None) != wants_category:
                raise ValueError(
                    f"record {self.key}: category presence does not match "
                    f"granularity {self.granularity.value}"
                )
            if f.reasoning is not None and not wants_reason:
                raise ValueError(
                    f"record {self.key}: reasoning not allowed at granularity "
                    f"{self.granularity.value}"
                )
            # Human feedback carries no reasoning even at rich granularities.
            if f.reasoning is None and wants_reason and self.source is FeedbackSource.llm:
                raise ValueError(
                    f"record {self.key}: LLM feedback at granularity "
                    f"{self.granularity.value} requires reasoning"
                )

    @property
    def key(self) -> tuple[str, str]:
        return (self.doc_id, self.summarizer_id)

    @property
    def binary_labels(self) -> list[int]:
        return [f.binary_label for f in self.feedback]


# --- JSON block extraction -------------------------------------------------

_FENCE = re.compile(r"```[a-zA-Z]*\s*(.*?)```", re.DOTALL)
_TRAILING_COMMA = re.compile(r",\s*([\]}])")
_CURLY_QUOTES = str.maketrans({"“": '"', "”": '"', "‘": "'", "’": "'"})


def extract_json_block(raw: str) -> str:
    """Cut the first balanced JSON array (or lone object) out of raw model output.

    Strips code fences, normalizes curly quotes, and removes trailing
    commas; no further repair is attempted.
    """
    text = raw
    m = _FENCE.search(text)
    if m:
        text = m.group(1)
    elif "```" in text:
        text = text.replace("```json", "").replace("```", "")
    text = text.translate(_CURLY_QUOTES)

    start = text.find("[")
    if start < 0:
        # Models sometimes answer a one-sentence summary with a bare object.
        start = text.find("{")
    if start < 0:
        raise NoJsonFound("no JSON array in output")
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif ch in "[{":
            depth += 1
        elif ch in "]}":
            depth -= 1
            if depth == 0:
                return _TRAILING_COMMA.sub(r"\1", text[start:i + 1])
    raise UnbalancedBrackets("JSON array never closes")


# --- parsing ---------------------------------------------------------------

_CONSISTENT = {"consistent", "0", 0, False}
_INCONSISTENT = {"inconsistent", "1", 1, True}


def _parse_verdict(value) -> int:
    if isinstance(value, str):
        value = value.strip().lower()
    if value in _CONSISTENT:
        return 0
    if value in _INCONSISTENT:
        return 1
    raise InvalidLabel(f"unrecognized consistency verdict {value!r}")


def _item_reason(item: dict) -> str:
    # "reason" is canonical; "reasoning" appears in the wild.
    for k in ("reason", "reasoning"):
        if k in item and isinstance(item[k], str):
            return item[k]
    raise MissingKey("item lacks a 'reason' key")


def _align(items: list[dict], expected: Sequence[str]) -> list[dict]:
    """Pair each parsed item with a summary sentence slot.

    Exact normalized-text matches are honored first (this also repairs
    reordered output); leftovers fill the remaining slots positionally.
    Anything other than a one-to-one pairing is a WrongArity error.
    """
    n = len(expected)
    if len(items) != n:
        raise WrongArity(f"got {len(items)} items for {n} sentences")
    expected_norm = [normalize_ws(s).casefold() for s in expected]
    slots: list[dict | None] = [None] * n
    remaining = list(range(n))
    leftovers: list[dict] = []
    for item in items:
        returned = item.get("sentence")
        norm = normalize_ws(returned).casefold() if isinstance(returned, str) else None
        hit = next((i for i in remaining if expected_norm[i] == norm), None)
        if hit is None:
            leftovers.append(item)
        else:
            slots[hit] = item
            remaining.remove(hit)
    for i, item in zip(remaining, leftovers):
        slots[i] = item
    return slots  # type: ignore[return-value]


def parse_feedback(
    raw: str, expected_sentences: Sequence[str], granularity: Granularity
) -> list[SentenceFeedback]:
    """Parse raw verifier output into one SentenceFeedback per summary sentence.

    The output list is aligned to `expected_sentences`: entry k carries
    sentence index k+1 and the expected sentence text. Categories are
    normalized against the taxonomy; the binary label is derived from the
    category at full granularity and from the verdict field otherwise.
    """
    if not expected_sentences:
        raise ValueError("expected_sentences must be non-empty")
    block = extract_json_block(raw)
    try:
        data = json.loads(block)
    except json.JSONDecodeError as exc:
        raise NoJsonFound(f"bracketed block is not valid JSON: {exc}") from None
    if isinstance(data, dict):
        data = [data]
    if not isinstance(data, list) or not all(isinstance(x, dict) for x in data):
        raise NoJsonFound("JSON is not a list of objects")

    aligned = _align(data, expected_sentences)
    out: list[SentenceFeedback] = []
    for i, (item, sentence) in enumerate(zip(aligned, expected_sentences)):
        reasoning = None
        category = None
        if granularity is Granularity.full_localization:
            reasoning = _item_reason(item)
            if "category" not in item:
                raise MissingKey("item lacks a 'category' key")
            category = normalize_category(str(item["category"]))
            label = to_binary(category)
        else:
            if granularity is Granularity.binary_reasoning:
                reasoning = _item_reason(item)
            if "label" not in item:
                raise MissingKey("item lacks a 'label' key")
            label = _parse_verdict(item["label"])
        out.append(SentenceFeedback(i + 1, sentence, label, reasoning, category))
    return out


def serialize_feedback(
    feedback: Iterable[SentenceFeedback], granularity: Granularity
) -> str:
    """Render feedback as the canonical assistant-message JSON for its granularity.

    Key order is fixed (sentence, reason, category/label) so output is
    byte-deterministic; `parse_feedback` inverts this exactly.
    """
    items = []
    for f in feedback:
        obj: dict[str, object] = {"sentence": f.sentence_text}
        if granularity in (Granularity.binary_reasoning, Granularity.full_localization):
            obj["reason"] = f.reasoning if f.reasoning is not None else ""
        if granularity is Granularity.full_localization:
            if f.category is None:
                raise ValueError("full_localization serialization requires categories")
            obj["category"] = CANONICAL_NAMES[f.category]
        else:
            obj["label"] = "consistent" if f.binary_label == 0 else "inconsistent"
        items.append(obj)
    return json.dumps(items, ensure_ascii=False)


# --- consolidation ---------------------------------------------------------

def consolidate(label_a: int, label_b: int) -> int | None:
    """Two-annotator agreement: the agreed label, or None on disagreement
    (the caller drops that sentence)."""
    return label_a if label_a == label_b else None


@dataclass(frozen=True)
class ConsolidatedAnnotation:
    """Per-sentence labels surviving consolidation; dropped indices kept for accounting."""

    doc_id: str
    summarizer_id: str
    kept: tuple[tuple[int, int], ...]     # (1-based sentence index, label)
    dropped: tuple[int, ...]
    original_split: str = "unassigned"

    @property
    def key(self) -> tuple[str, str]:
        return (self.doc_id, self.summarizer_id)


def consolidate_annotation(annotation: HumanAnnotation) -> ConsolidatedAnnotation:
    """Resolve multi-annotator labels to one label per sentence.

    Single-annotator sources pass through unchanged. Two-annotator sources
    keep agreed sentences and drop disagreements. Three-annotator sources
    take the majority.
    """
    kept: list[tuple[int, int]] = []
    dropped: list[int] = []
    for idx, entry in enumerate(annotation.per_sentence, start=1):
        labels = entry.annotator_labels
        if len(labels) == 1:
            kept.append((idx, labels[0]))
        elif len(labels) == 2:
            agreed = consolidate(labels[0], labels[1])
            if agreed is None:
                dropped.append(idx)
            else:
                kept.append((idx, agreed))
        else:
            kept.append((idx, 1 if sum(labels) >= 2 else 0))
    return ConsolidatedAnnotation(
        annotation.doc_id,
        annotation.summarizer_id,
        tuple(kept),
        tuple(dropped),
        annotation.original_split.value,
    )


def consolidated_to_record(
    consolidated: ConsolidatedAnnotation, sentences: Sequence[str]
) -> FeedbackRecord | None:
    """Turn surviving labels into a human-source binary FeedbackRecord.

    Returns None when every sentence was dropped. Sentence indices keep
    their original 1-based positions, so records may be sparse.
    """
    if not consolidated.kept:
        return None
    entries = tuple(
        SentenceFeedback(idx, sentences[idx - 1], label)
        for idx, label in consolidated.kept
    )
    return FeedbackRecord(
        consolidated.doc_id,
        consolidated.summarizer_id,
        Granularity.binary,
        entries,
        FeedbackSource.human,
        template_version="human",
    )


# --- generation with parse retry -------------------------------------------

def defaulted_record(
    doc_id: str,
    summarizer_id: str,
    granularity: Granularity,
    sentences: Sequence[str],
    source: FeedbackSource = FeedbackSource.llm,
) -> FeedbackRecord:
    """All-clean fallback used when evaluation predictions never parse."""
    entries = tuple(
        SentenceFeedback(i + 1, s, 0) for i, s in enumerate(sentences)
    )
    return FeedbackRecord(
        doc_id, summarizer_id, granularity, entries, source, defaulted=True
    )


def feedback_with_retry(
    generate: Callable[[], str],
    doc_id: str,
    summarizer_id: str,
    sentences: Sequence[str],
    granularity: Granularity,
    max_attempts: int = 3,
) -> tuple[FeedbackRecord, int]:
    """Call `generate` until its output parses, up to max_attempts.

    Returns (record, attempts used). Raises Exhausted carrying the last
    parse error once the budget is spent; transport errors from `generate`
    propagate untouched.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    last_error: FeedbackParseError | None = None
    for attempt in range(1, max_attempts + 1):
        raw = generate()
        try:
            parsed = parse_feedback(raw, sentences, granularity)
        except FeedbackParseError as exc:
            last_error = exc
            continue
        record = FeedbackRecord(
            doc_id, summarizer_id, granularity, tuple(parsed), FeedbackSource.llm
        )
        return record, attempt
    assert last_error is not None
    raise Exhausted(max_attempts, last_error)


# --- feedback JSONL interface ----------------------------------------------

def feedback_to_row(record: FeedbackRecord) -> dict:
    entries = []
    for f in record.feedback:
        obj: dict[str, object] = {"index": f.sentence_index, "sentence": f.sentence_text}
        if f.reasoning is not None:
            obj["reason"] = f.reasoning
        if f.category is not None:
            obj["category"] = CANONICAL_NAMES[f.category]
        obj["label"] = f.binary_label
        entries.append(obj)
    return {
        "doc_id": record.doc_id,
        "summarizer_id": record.summarizer_id,
        "granularity": record.granularity.value,
        "source": record.source.value,
        "template_version": record.template_version,
        "feedback": entries,
        "defaulted": record.defaulted,
    }


def row_to_feedback(row: dict, lineno: int = 0) -> FeedbackRecord:
    try:
        granularity = Granularity(row["granularity"])
        source = FeedbackSource(row["source"])
        entries = []
        for e in row["feedback"]:
            category = normalize_category(e["category"]) if "category" in e else None
            entries.append(SentenceFeedback(
                int(e["index"]), e["sentence"], int(e["label"]), e.get("reason"), category
            ))
        return FeedbackRecord(
            row["doc_id"], row["summarizer_id"], granularity, tuple(entries),
            source, row.get("template_version", TEMPLATE_VERSION),
            bool(row.get("defaulted", False)),
        )
    except (KeyError, ValueError, UnknownCategory) as exc:
        raise SchemaMismatch(f"bad feedback row: {exc}", lineno or None) from None


def load_feedback(path: str | Path) -> list[FeedbackRecord]:
    return [row_to_feedback(row, lineno) for lineno, row in read_jsonl(path)]


def write_feedback(path: str | Path, records: Iterable[FeedbackRecord]) -> int:
    return write_jsonl(path, (feedback_to_row(r) for r in records))
