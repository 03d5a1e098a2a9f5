"""Deterministic construction of the fact-verification prompts.

Three granularities exist, each strictly extending the previous one's
instructions: a bare per-sentence consistency verdict, verdict plus a
one-sentence explanation, and full error localization over the
nine-category taxonomy. The full-localization user prompt doubles as the
user side of exported fine-tuning records.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from importlib import resources

from .errors import EmptySentences

TEMPLATE_VERSION = "v1"


class Granularity(str, Enum):
    binary = "binary"
    binary_reasoning = "binary_reasoning"
    full_localization = "full_localization"


# CLI spelling -> canonical variant.
GRANULARITY_ALIASES = {
    "binary": Granularity.binary,
    "reasoning": Granularity.binary_reasoning,
    "binary_reasoning": Granularity.binary_reasoning,
    "localization": Granularity.full_localization,
    "full_localization": Granularity.full_localization,
}

# Instruction fragments each template must contain; the sets are nested so
# each granularity's instructions are a superset of the previous one's.
_F_COMPARE = "First, compare each summary sentence with the document."
_F_REASON = "provide a single sentence explaining"
_F_CATEGORY = "answer the classified error category for each sentence"

GRANULARITY_FRAGMENTS: dict[Granularity, frozenset[str]] = {
    Granularity.binary: frozenset({_F_COMPARE}),
    Granularity.binary_reasoning: frozenset({_F_COMPARE, _F_REASON}),
    Granularity.full_localization: frozenset({_F_COMPARE, _F_REASON, _F_CATEGORY}),
}

# Template wording is part of the data contract: exported conversations embed
# it verbatim, so any edit to a template body must bump TEMPLATE_VERSION.
_PLACEHOLDERS = ("{document}", "{sentence_count}", "{numbered_sentences}")


@dataclass(frozen=True)
class PromptText:
    """A fully rendered prompt body plus the metadata downstream records keep."""

    body: str
    granularity: Granularity
    sentence_count: int
    template_version: str = TEMPLATE_VERSION


def load_template(granularity: Granularity) -> str:
    text = (
        resources.files("factpipe")
        .joinpath("templates", f"{granularity.value}.txt")
        .read_text(encoding="utf-8")
    )
    for placeholder in _PLACEHOLDERS:
        if text.count(placeholder) != 1:
            raise ValueError(f"template {granularity.value} must contain {placeholder} exactly once")
    return text


def number_sentences(sentences: list[str] | tuple[str, ...]) -> str:
    """Render sentences as bracketed 1-based index lines: '[1] ...' per line."""
    return "\n".join(f"[{k}] {s}" for k, s in enumerate(sentences, start=1))


def build_prompt(granularity: Granularity, document, sentences) -> PromptText:
    """Render the prompt for one document-summary pair.

    Byte-identical output for identical inputs. `document` may be a
    corpus.Document or a plain string.
    """
    sentences = list(sentences)
    if not sentences:
        raise EmptySentences("cannot build a prompt for zero sentences")
    text = getattr(document, "text", document)
    body = (
        load_template(granularity)
        .replace("{document}", text)
        .replace("{sentence_count}", str(len(sentences)))
        .replace("{numbered_sentences}", number_sentences(sentences))
    )
    return PromptText(body, granularity, len(sentences))
