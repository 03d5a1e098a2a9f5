"""Exception hierarchy for the trainer. Everything user-facing derives from TrainerError."""

from __future__ import annotations


class TrainerError(Exception):
    """Base class for all trainer failures."""


class InvalidSftLine(TrainerError):
    """A line of the SFT file does not match the documented schema."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class EmptyFixture(TrainerError):
    """The SFT file contains no examples."""


class MixedTemplateVersions(TrainerError):
    """The SFT file mixes prompt template versions; training on a blend is almost certainly a mistake."""


class UnknownBaseModel(TrainerError):
    """The base model identifier is not in the local registry."""


class AdapterMismatch(TrainerError):
    """Saved adapter weights do not line up with the model they are loaded into."""


class ResourceExhausted(TrainerError):
    """The run hit a memory limit; carries guidance on how to shrink it."""


class EndpointUnavailable(TrainerError):
    """The serving endpoint could not be reached or returned an unusable response."""
