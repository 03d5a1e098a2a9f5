"""Turn feedback records into supervised fine-tuning data.

Each training example is a two-message conversation: the verification
prompt as the user turn and the canonical feedback JSON as the assistant
turn. Output is deterministic byte-for-byte for a given input set, and
subsampling is nested: the fraction-0.25 file is a subset of the
fraction-0.5 file under the same seed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import Document
from .errors import InvalidRecord, SchemaMismatch
from .feedback import FeedbackRecord, serialize_feedback
from .jsonl import read_jsonl, write_jsonl
from .prompts import Granularity, build_prompt


@dataclass(frozen=True)
class SftExample:
    """One conversation pair plus provenance metadata."""

    user: str
    assistant: str
    doc_id: str
    summarizer_id: str
    granularity: Granularity
    template_version: str

    def to_row(self) -> dict:
        return {
            "messages": [
                {"role": "user", "content": self.user},
                {"role": "assistant", "content": self.assistant},
            ],
            "meta": {
                "doc_id": self.doc_id,
                "summarizer_id": self.summarizer_id,
                "granularity": self.granularity.value,
                "template_version": self.template_version,
            },
        }

    @classmethod
    def from_row(cls, row: dict, lineno: int = 0) -> SftExample:
        try:
            messages = row["messages"]
            if [m["role"] for m in messages] != ["user", "assistant"]:
                raise ValueError("messages must be exactly [user, assistant]")
            user, assistant = (m["content"] for m in messages)
            if not isinstance(user, str) or not isinstance(assistant, str):
                raise ValueError("message content must be strings")
            if not user or not assistant:
                raise ValueError("message content must be non-empty")
            meta = row["meta"]
            return cls(
                user, assistant, meta["doc_id"], meta["summarizer_id"],
                Granularity(meta["granularity"]), meta["template_version"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaMismatch(f"bad SFT row: {exc}", lineno or None) from None


def build_example(record: FeedbackRecord, document: Document) -> SftExample:
    """Render one feedback record as a training example.

    Defaulted records carry fabricated labels and must not be exported;
    sparse records (sentences dropped in consolidation) cannot reproduce
    the numbering the prompt showed the model, so they are rejected too.
    """
    if record.defaulted:
        raise InvalidRecord(f"record {record.key} is defaulted placeholder feedback")
    indices = [f.sentence_index for f in record.feedback]
    if indices != list(range(1, len(indices) + 1)):
        raise InvalidRecord(f"record {record.key} has gaps in sentence coverage")
    if record.doc_id != document.doc_id:
        raise InvalidRecord(
            f"record {record.key} paired with document {document.doc_id}"
        )
    sentences = [f.sentence_text for f in record.feedback]
    prompt = build_prompt(record.granularity, document, sentences)
    assistant = serialize_feedback(record.feedback, record.granularity)
    return SftExample(
        prompt.body, assistant, record.doc_id, record.summarizer_id,
        record.granularity, record.template_version,
    )


@dataclass(frozen=True)
class ExportStats:
    written: int
    skipped_defaulted: int
    skipped_sparse: int


def export_sft(
    records: Sequence[FeedbackRecord],
    documents: Mapping[str, Document],
    path: str | Path,
) -> ExportStats:
    """Write training examples for every exportable record, sorted by
    (doc_id, summarizer_id) so output bytes are stable."""
    examples: list[SftExample] = []
    skipped_defaulted = skipped_sparse = 0
    for record in sorted(records, key=lambda r: r.key):
        if record.doc_id not in documents:
            raise InvalidRecord(f"no document for feedback record {record.key}")
        if record.defaulted:
            skipped_defaulted += 1
            continue
        try:
            examples.append(build_example(record, documents[record.doc_id]))
        except InvalidRecord:
            skipped_sparse += 1
    write_jsonl(path, (e.to_row() for e in examples))
    return ExportStats(len(examples), skipped_defaulted, skipped_sparse)


def read_sft(path: str | Path) -> list[SftExample]:
    return [SftExample.from_row(row, lineno) for lineno, row in read_jsonl(path)]


def subsample(rows: Sequence[dict], fraction: float, seed: int) -> list[dict]:
    """Pick round(fraction * N) rows, preserving input order.

    Each row gets a random key from a stream seeded once; the smallest
    keys win. Because keys depend only on (seed, position), the selection
    for a smaller fraction is always a subset of a larger one.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    rng = random.Random(seed)
    keys = [(rng.random(), i) for i in range(len(rows))]
    take = round(fraction * len(rows))
    chosen = sorted(i for _, i in sorted(keys)[:take])
    return [rows[i] for i in chosen]


def subsample_file(
    in_path: str | Path, out_path: str | Path, fraction: float, seed: int
) -> int:
    rows = [row for _, row in read_jsonl(in_path)]
    picked = subsample(rows, fraction, seed)
    return write_jsonl(out_path, picked)


def dataset_stats(rows: Iterable[dict]) -> dict:
    """Shape summary of an SFT file: sizes, label balance, coverage."""
    import json as _json

    n = 0
    by_granularity: dict[str, int] = {}
    docs: set[str] = set()
    systems: set[str] = set()
    sentence_total = 0
    clean_total = 0
    for i, row in enumerate(rows, start=1):
        example = SftExample.from_row(row, i)
        n += 1
        by_granularity[example.granularity.value] = (
            by_granularity.get(example.granularity.value, 0) + 1
        )
        docs.add(example.doc_id)
        systems.add(example.summarizer_id)
        items = _json.loads(example.assistant)
        sentence_total += len(items)
        for item in items:
            if item.get("label") == "consistent" or item.get("category") == "no error":
                clean_total += 1
    return {
        "examples": n,
        "by_granularity": dict(sorted(by_granularity.items())),
        "documents": len(docs),
        "summarizers": len(systems),
        "sentences": sentence_total,
        "clean_fraction": round(clean_total / sentence_total, 6) if sentence_total else None,
    }
