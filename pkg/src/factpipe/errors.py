"""Exception hierarchy shared across the pipeline stages."""

from __future__ import annotations


class FactpipeError(Exception):
    """Base class for all errors raised by this package."""


# --- corpus ---------------------------------------------------------------

class EmptyInput(FactpipeError):
    """Input text is empty or whitespace-only."""


class SchemaMismatch(FactpipeError):
    """An ingested record does not match the declared source layout."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class DuplicateId(FactpipeError):
    """A document or (doc_id, summarizer_id) pair occurs more than once."""


# --- prompts --------------------------------------------------------------

class EmptySentences(FactpipeError):
    """A prompt was requested for an empty sentence list."""


# --- llm gateway ----------------------------------------------------------

class GatewayError(FactpipeError):
    """Base class for chat-endpoint transport failures."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class EndpointUnavailable(GatewayError):
    """The endpoint kept failing after exhausting the retry budget."""


class Timeout(GatewayError):
    """Every attempt timed out."""


class MalformedResponse(GatewayError):
    """The endpoint answered but not in chat-completion shape."""


# --- feedback parsing -----------------------------------------------------

class FeedbackParseError(FactpipeError):
    """Base class for errors while interpreting verifier output."""


class NoJsonFound(FeedbackParseError):
    """No JSON array could be located in the raw output."""


class UnbalancedBrackets(FeedbackParseError):
    """A JSON array starts but never closes."""


class WrongArity(FeedbackParseError):
    """Parsed items cannot be aligned one-to-one with the summary sentences."""


class UnknownCategory(FeedbackParseError):
    """A category string is outside the taxonomy and its documented aliases."""


class MissingKey(FeedbackParseError):
    """A parsed item lacks a key required at the requested granularity."""


class InvalidLabel(FeedbackParseError):
    """A consistency verdict is neither consistent/inconsistent nor 0/1."""


class Exhausted(FactpipeError):
    """Feedback generation kept failing to parse; carries the last error."""

    def __init__(self, attempts: int, last_error: FeedbackParseError):
        super().__init__(f"unparseable after {attempts} attempts: {last_error}")
        self.attempts = attempts
        self.last_error = last_error


# --- metrics --------------------------------------------------------------

class MetricError(FactpipeError):
    """Base class for metric preconditions."""


class DegenerateGroundTruth(MetricError):
    """Ground truth is single-class, so balanced accuracy is undefined."""


class ConstantVector(MetricError):
    """Correlation is undefined for a constant input vector."""


class TooFewPoints(MetricError):
    """Fewer data points than the correlation requires."""


class TooFewSystems(MetricError):
    """Fewer than three systems for the rank correlation."""


class KeyMismatch(MetricError):
    """Ground-truth and prediction system sets differ."""


class MisalignedInputs(MetricError):
    """Localization inputs have different lengths."""


class CoverageMismatch(MetricError):
    """Ground-truth and prediction files cover different pairs or sentences."""

    def __init__(self, message: str, missing: list | None = None, extra: list | None = None):
        super().__init__(message)
        self.missing = missing or []
        self.extra = extra or []


# --- exporter -------------------------------------------------------------

class InvalidRecord(FactpipeError):
    """A feedback record is unfit for export (defaulted, non-LLM, or inconsistent)."""
