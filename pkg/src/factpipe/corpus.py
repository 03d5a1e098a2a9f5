"""Data model for documents, summaries, and human annotations.

Covers ingestion of the four human-labeled source layouts plus a generic
JSONL layout, rule-based sentence segmentation, and the train/test split
in which records pre-assigned to a source's original test partition always
stay in the test set.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from .errors import DuplicateId, EmptyInput, SchemaMismatch
from .jsonl import read_jsonl, write_jsonl


class SourceDataset(str, Enum):
    cnn_dm = "cnn_dm"
    mediasum = "mediasum"
    dialogsum = "dialogsum"
    meetingbank = "meetingbank"
    wikihow = "wikihow"
    govreport = "govreport"
    pubmed = "pubmed"
    aggrefact = "aggrefact"
    diasumfact = "diasumfact"
    tofueval = "tofueval"
    ramprasad24 = "ramprasad24"
    custom = "custom"


class Domain(str, Enum):
    news = "news"
    interview = "interview"
    daily = "daily"
    meeting = "meeting"
    knowledge = "knowledge"
    report = "report"
    medicine = "medicine"
    legal = "legal"
    other = "other"


class DocType(str, Enum):
    dialogue = "dialogue"
    non_dialogue = "non_dialogue"


class OriginalSplit(str, Enum):
    train = "train"
    test = "test"
    unassigned = "unassigned"


_WS = re.compile(r"\s+")


def normalize_ws(text: str) -> str:
    """Collapse all whitespace runs to single spaces and trim."""
    return _WS.sub(" ", text).strip()


@dataclass(frozen=True)
class Document:
    """A source text with domain/type metadata."""

    doc_id: str
    source_dataset: SourceDataset
    domain: Domain
    doc_type: DocType
    text: str
    word_count: int = field(default=-1)
    metadata: tuple[tuple[str, Any], ...] = ()

    def __post_init__(self):
        if not self.text.strip():
            raise EmptyInput(f"document {self.doc_id!r} has empty text")
        expected = len(self.text.split())
        if self.word_count < 0:
            object.__setattr__(self, "word_count", expected)
        elif self.word_count != expected:
            raise ValueError(
                f"document {self.doc_id!r}: word_count {self.word_count} != {expected}"
            )


@dataclass(frozen=True)
class SummaryRecord:
    """Ordered summary sentences tied to a document and a summarizer."""

    doc_id: str
    summarizer_id: str
    sentences: tuple[str, ...]
    raw_text: str

    def __post_init__(self):
        if not self.sentences:
            raise ValueError(f"summary {self.key} has no sentences")
        if any(not s.strip() for s in self.sentences):
            raise ValueError(f"summary {self.key} contains an empty sentence")
        joined = normalize_ws(" ".join(self.sentences))
        if joined != normalize_ws(self.raw_text):
            raise ValueError(f"summary {self.key}: sentences do not reassemble raw_text")

    @property
    def key(self) -> tuple[str, str]:
        return (self.doc_id, self.summarizer_id)

    @classmethod
    def from_text(cls, doc_id: str, summarizer_id: str, text: str) -> "SummaryRecord":
        """Build from raw summary text, segmenting it into sentences."""
        return cls(doc_id, summarizer_id, tuple(segment_sentences(text)), text)

    @classmethod
    def from_sentences(cls, doc_id: str, summarizer_id: str, sentences: Sequence[str]) -> "SummaryRecord":
        """Build from pre-segmented sentences, bypassing the splitter."""
        cleaned = tuple(s.strip() for s in sentences)
        return cls(doc_id, summarizer_id, cleaned, " ".join(cleaned))


@dataclass(frozen=True)
class SentenceAnnotation:
    """Labels (and optional category sets) from 1-3 annotators for one sentence."""

    annotator_labels: tuple[int, ...]
    annotator_categories: tuple[tuple[str, ...], ...] | None = None

    def __post_init__(self):
        if not 1 <= len(self.annotator_labels) <= 3:
            raise ValueError(f"expected 1-3 annotator labels, got {len(self.annotator_labels)}")
        if any(lab not in (0, 1) for lab in self.annotator_labels):
            raise ValueError(f"labels must be 0 or 1, got {self.annotator_labels}")
        if self.annotator_categories is not None and not 1 <= len(self.annotator_categories) <= 3:
            raise ValueError("expected 1-3 annotator category sets")


@dataclass(frozen=True)
class HumanAnnotation:
    """Per-sentence human labels for one document-summary pair."""

    doc_id: str
    summarizer_id: str
    per_sentence: tuple[SentenceAnnotation, ...]
    original_split: OriginalSplit = OriginalSplit.unassigned

    @property
    def key(self) -> tuple[str, str]:
        return (self.doc_id, self.summarizer_id)


@dataclass(frozen=True)
class CorpusTriple:
    """One ingested (document, summary, annotation) unit."""

    document: Document
    summary: SummaryRecord
    annotation: HumanAnnotation

    def __post_init__(self):
        if self.summary.doc_id != self.document.doc_id:
            raise ValueError("summary does not reference its document")
        if self.annotation.key != self.summary.key:
            raise ValueError("annotation does not reference its summary")
        if len(self.annotation.per_sentence) != len(self.summary.sentences):
            raise SchemaMismatch(
                f"{self.summary.key}: {len(self.annotation.per_sentence)} annotated "
                f"sentences for a {len(self.summary.sentences)}-sentence summary"
            )

    @property
    def key(self) -> tuple[str, str]:
        return self.summary.key


# --- sentence segmentation ------------------------------------------------

# Tokens ending in '.' that do not terminate a sentence.
ABBREVIATIONS = frozenset({
    "dr.", "mr.", "mrs.", "ms.", "prof.", "sr.", "jr.", "st.", "gen.", "rep.",
    "sen.", "gov.", "capt.", "sgt.", "col.", "lt.", "cmdr.", "rev.",
    "vs.", "etc.", "e.g.", "i.e.", "cf.", "al.", "approx.", "dept.", "est.",
    "u.s.", "u.k.", "u.n.", "d.c.", "a.m.", "p.m.",
    "fig.", "figs.", "no.", "vol.", "inc.", "ltd.", "co.", "corp.",
    "jan.", "feb.", "mar.", "apr.", "jun.", "jul.", "aug.", "sep.", "sept.",
    "oct.", "nov.", "dec.", "mon.", "tue.", "wed.", "thu.", "fri.", "sat.", "sun.",
})

_TERMINALS = ".!?"
_CLOSERS = "\"'”’)]}"
_OPENERS = "\"'“‘([{"


def _is_abbreviation(text: str, dot_index: int) -> bool:
    """True when the token ending at text[dot_index] is a known abbreviation or initial."""
    start = dot_index
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    token = text[start:dot_index + 1].lower()
    if token in ABBREVIATIONS:
        return True
    # Single-letter initials like the F. in John F. Kennedy.
    return len(token) == 2 and token[0].isalpha()


def segment_sentences(text: str) -> list[str]:
    """Split text into sentences on terminal punctuation.

    A cut happens after '.', '!' or '?' (plus any closing quotes/brackets)
    when it is followed by whitespace and an uppercase or opening character,
    unless the token before a '.' is on the abbreviation list. Joining the
    result with single spaces reproduces the input up to whitespace
    normalization.
    """
    if not text.strip():
        raise EmptyInput("cannot segment whitespace-only text")

    sentences: list[str] = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in _TERMINALS:
            if ch == "." and _is_abbreviation(text, i):
                i += 1
                continue
            end = i + 1
            while end < n and text[end] in _CLOSERS:
                end += 1
            j = end
            while j < n and text[j].isspace():
                j += 1
            if j > end and j < n and (text[j].isupper() or text[j] in _OPENERS):
                piece = text[start:end].strip()
                if piece:
                    sentences.append(piece)
                start = j
                i = j
                continue
        i += 1
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


# --- ingestion ------------------------------------------------------------

@dataclass(frozen=True)
class SourceLayout:
    """Declared shape of one human-labeled source."""

    name: str
    annotator_arity: tuple[int, ...]            # accepted label counts per sentence
    default_source: SourceDataset | None = None
    default_domain: Domain | None = None
    default_doc_type: DocType | None = None
    allowed_domains: tuple[Domain, ...] | None = None


INGEST_SCHEMAS: dict[str, SourceLayout] = {
    # Generic layout: any arity, all metadata fields explicit in the file.
    "generic": SourceLayout("generic", (1, 2, 3)),
    # News-domain aggregation with majority-agreed single binary labels.
    "aggrefact": SourceLayout(
        "aggrefact", (1,), SourceDataset.aggrefact, Domain.news, DocType.non_dialogue
    ),
    # Dialogue summaries with two annotators carrying fine-grained categories.
    "diasumfact": SourceLayout(
        "diasumfact", (2,), SourceDataset.diasumfact, Domain.daily, DocType.dialogue,
        (Domain.daily, Domain.meeting),
    ),
    # Topic summaries over interview/meeting transcripts, majority-agreed labels.
    "tofueval": SourceLayout(
        "tofueval", (1,), SourceDataset.tofueval, Domain.interview, DocType.dialogue,
        (Domain.interview, Domain.meeting),
    ),
    # Expert two-annotator labels in specialized written domains.
    "ramprasad24": SourceLayout(
        "ramprasad24", (2,), SourceDataset.ramprasad24, Domain.medicine, DocType.non_dialogue,
        (Domain.medicine, Domain.legal, Domain.news),
    ),
}

_KNOWN_ROW_KEYS = {
    "doc_id", "source_dataset", "domain", "doc_type", "text",
    "summarizer_id", "sentences", "summary", "per_sentence", "original_split",
}


def _parse_enum(enum_cls, value, fieldname: str, lineno: int):
    try:
        return enum_cls(value)
    except ValueError:
        raise SchemaMismatch(f"bad {fieldname} {value!r}", lineno) from None


def ingest_human_dataset(path: str | Path, schema: str = "generic") -> list[CorpusTriple]:
    """Read one human-labeled JSONL file into validated triples.

    Each line holds one document-summary pair:
        {doc_id, text, summarizer_id, sentences (or summary),
         per_sentence: [{labels: [0|1, ...], categories: [[...], ...]?}],
         original_split?, source_dataset?, domain?, doc_type?}

    The declared schema fixes defaults and the accepted annotator arity;
    unknown fields are preserved in the document's metadata map.
    """
    try:
        layout = INGEST_SCHEMAS[schema]
    except KeyError:
        raise SchemaMismatch(f"unknown ingestion schema {schema!r}") from None

    triples: list[CorpusTriple] = []
    docs_seen: dict[str, str] = {}
    pairs_seen: set[tuple[str, str]] = set()
    for lineno, row in read_jsonl(path):
        for fieldname in ("doc_id", "text", "summarizer_id"):
            if fieldname not in row:
                raise SchemaMismatch(f"missing field {fieldname!r}", lineno)

        source = row.get("source_dataset", layout.default_source)
        domain = row.get("domain", layout.default_domain)
        doc_type = row.get("doc_type", layout.default_doc_type)
        if source is None or domain is None or doc_type is None:
            raise SchemaMismatch("generic schema requires explicit source/domain/doc_type", lineno)
        source = _parse_enum(SourceDataset, source, "source_dataset", lineno)
        domain = _parse_enum(Domain, domain, "domain", lineno)
        doc_type = _parse_enum(DocType, doc_type, "doc_type", lineno)
        if layout.allowed_domains and domain not in layout.allowed_domains:
            raise SchemaMismatch(f"domain {domain.value!r} not valid for {layout.name}", lineno)

        extra = tuple(sorted((k, v) for k, v in row.items() if k not in _KNOWN_ROW_KEYS))
        doc_id = str(row["doc_id"])
        if doc_id in docs_seen:
            if docs_seen[doc_id] != row["text"]:
                raise DuplicateId(f"doc_id {doc_id!r} repeats with different text (line {lineno})")
        else:
            docs_seen[doc_id] = row["text"]
        document = Document(doc_id, source, domain, doc_type, row["text"], metadata=extra)

        summarizer_id = str(row["summarizer_id"])
        if (doc_id, summarizer_id) in pairs_seen:
            raise DuplicateId(f"pair ({doc_id!r}, {summarizer_id!r}) repeats (line {lineno})")
        pairs_seen.add((doc_id, summarizer_id))
        if "sentences" in row:
            summary = SummaryRecord.from_sentences(doc_id, summarizer_id, row["sentences"])
        elif "summary" in row:
            summary = SummaryRecord.from_text(doc_id, summarizer_id, row["summary"])
        else:
            raise SchemaMismatch("missing field 'sentences' (or 'summary')", lineno)

        if "per_sentence" not in row:
            raise SchemaMismatch("missing field 'per_sentence'", lineno)
        per_sentence = []
        for entry in row["per_sentence"]:
            labels = entry.get("labels")
            if not labels:
                raise SchemaMismatch("per_sentence entry without labels", lineno)
            if len(labels) not in layout.annotator_arity:
                raise SchemaMismatch(
                    f"{layout.name} expects {layout.annotator_arity} labels per sentence, "
                    f"got {len(labels)}", lineno,
                )
            categories = entry.get("categories")
            if categories is not None:
                categories = tuple(tuple(str(c) for c in cats) for cats in categories)
            try:
                per_sentence.append(SentenceAnnotation(tuple(int(x) for x in labels), categories))
            except ValueError as exc:
                raise SchemaMismatch(str(exc), lineno) from None
        split = _parse_enum(
            OriginalSplit, row.get("original_split", "unassigned"), "original_split", lineno
        )
        annotation = HumanAnnotation(doc_id, summarizer_id, tuple(per_sentence), split)
        try:
            triples.append(CorpusTriple(document, summary, annotation))
        except SchemaMismatch as exc:
            raise SchemaMismatch(str(exc), lineno) from None
    return triples


# --- train/test split -----------------------------------------------------

def split_train_test(
    records: Sequence,
    test_fraction: float,
    seed: int,
    *,
    is_test_flagged: Callable[[Any], bool] | None = None,
    sort_key: Callable[[Any], Any] | None = None,
) -> tuple[list, list]:
    """Partition records into (train, test).

    Records whose source already assigned them to a test partition always
    land in the test set. The remaining slots up to round(test_fraction * N)
    are filled by a seeded shuffle of the unflagged records; when the flagged
    records alone meet or exceed that target, the test set is exactly the
    flagged records. Deterministic for a fixed seed regardless of input order.
    """
    if not records:
        raise ValueError("cannot split an empty record list")
    if not 0.0 <= test_fraction <= 1.0:
        raise ValueError(f"test_fraction must be in [0, 1], got {test_fraction}")
    if is_test_flagged is None:
        is_test_flagged = lambda t: t.annotation.original_split == OriginalSplit.test
    if sort_key is None:
        sort_key = lambda t: t.key

    flagged = [r for r in records if is_test_flagged(r)]
    rest = sorted((r for r in records if not is_test_flagged(r)), key=sort_key)
    target = round(test_fraction * len(records))
    extra = max(0, target - len(flagged))
    rng = random.Random(seed)
    rng.shuffle(rest)
    test = flagged + rest[:extra]
    train = rest[extra:]
    return sorted(train, key=sort_key), sorted(test, key=sort_key)


# --- external JSONL interfaces --------------------------------------------

def load_corpus(path: str | Path) -> dict[str, Document]:
    """Read the corpus JSONL (doc_id, source_dataset, domain, doc_type, text)."""
    docs: dict[str, Document] = {}
    for lineno, row in read_jsonl(path):
        for fieldname in ("doc_id", "source_dataset", "domain", "doc_type", "text"):
            if fieldname not in row:
                raise SchemaMismatch(f"missing field {fieldname!r}", lineno)
        doc_id = str(row["doc_id"])
        if doc_id in docs:
            raise DuplicateId(f"doc_id {doc_id!r} repeats (line {lineno})")
        extra = tuple(sorted(
            (k, v) for k, v in row.items()
            if k not in {"doc_id", "source_dataset", "domain", "doc_type", "text", "word_count"}
        ))
        docs[doc_id] = Document(
            doc_id,
            _parse_enum(SourceDataset, row["source_dataset"], "source_dataset", lineno),
            _parse_enum(Domain, row["domain"], "domain", lineno),
            _parse_enum(DocType, row["doc_type"], "doc_type", lineno),
            row["text"],
            metadata=extra,
        )
    return docs


def write_corpus(path: str | Path, documents: Iterable[Document]) -> int:
    return write_jsonl(path, (
        {
            "doc_id": d.doc_id,
            "source_dataset": d.source_dataset.value,
            "domain": d.domain.value,
            "doc_type": d.doc_type.value,
            "text": d.text,
        }
        for d in documents
    ))


def load_summaries(path: str | Path) -> list[SummaryRecord]:
    """Read the summaries JSONL (doc_id, summarizer_id, sentences)."""
    out = []
    seen: set[tuple[str, str]] = set()
    for lineno, row in read_jsonl(path):
        for fieldname in ("doc_id", "summarizer_id", "sentences"):
            if fieldname not in row:
                raise SchemaMismatch(f"missing field {fieldname!r}", lineno)
        record = SummaryRecord.from_sentences(
            str(row["doc_id"]), str(row["summarizer_id"]), row["sentences"]
        )
        if record.key in seen:
            raise DuplicateId(f"pair {record.key} repeats (line {lineno})")
        seen.add(record.key)
        out.append(record)
    return out


def write_summaries(path: str | Path, summaries: Iterable[SummaryRecord]) -> int:
    return write_jsonl(path, (
        {"doc_id": s.doc_id, "summarizer_id": s.summarizer_id, "sentences": list(s.sentences)}
        for s in summaries
    ))


def load_annotations(path: str | Path) -> list[HumanAnnotation]:
    """Read the human-annotation JSONL."""
    out = []
    for lineno, row in read_jsonl(path):
        for fieldname in ("doc_id", "summarizer_id", "per_sentence"):
            if fieldname not in row:
                raise SchemaMismatch(f"missing field {fieldname!r}", lineno)
        per_sentence = []
        for entry in row["per_sentence"]:
            categories = entry.get("categories")
            if categories is not None:
                categories = tuple(tuple(str(c) for c in cats) for cats in categories)
            try:
                per_sentence.append(
                    SentenceAnnotation(tuple(int(x) for x in entry["labels"]), categories)
                )
            except (KeyError, ValueError) as exc:
                raise SchemaMismatch(f"bad per_sentence entry: {exc}", lineno) from None
        out.append(HumanAnnotation(
            str(row["doc_id"]),
            str(row["summarizer_id"]),
            tuple(per_sentence),
            _parse_enum(OriginalSplit, row.get("original_split", "unassigned"),
                        "original_split", lineno),
        ))
    return out


def write_annotations(path: str | Path, annotations: Iterable[HumanAnnotation]) -> int:
    def row(a: HumanAnnotation) -> dict:
        per_sentence = []
        for entry in a.per_sentence:
            obj: dict[str, Any] = {"labels": list(entry.annotator_labels)}
            if entry.annotator_categories is not None:
                obj["categories"] = [list(c) for c in entry.annotator_categories]
            per_sentence.append(obj)
        return {
            "doc_id": a.doc_id,
            "summarizer_id": a.summarizer_id,
            "per_sentence": per_sentence,
            "original_split": a.original_split.value,
        }

    return write_jsonl(path, (row(a) for a in annotations))
