"""Parse-rate validation of a served model against an SFT fixture.

Sends each fixture prompt to a chat endpoint and checks whether the response
parses as structured feedback — the operative question after training being
"does the model still emit JSON the rest of the pipeline can read?". The
expected sentence list is recovered from the fixture's gold assistant turn.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import requests

from factpipe.errors import FeedbackParseError
from factpipe.feedback import parse_feedback
from factpipe.prompts import Granularity

from .errors import EmptyFixture, EndpointUnavailable
from .sft_data import TrainExample, load_sft

Transport = Callable[[str], str]


@dataclass(frozen=True)
class ParseRateReport:
    n_prompts: int
    n_parsed: int
    failures: tuple[tuple[int, str], ...]

    @property
    def parse_rate(self) -> float:
        return self.n_parsed / self.n_prompts

    def to_dict(self) -> dict:
        return {
            "n_prompts": self.n_prompts,
            "n_parsed": self.n_parsed,
            "parse_rate": self.parse_rate,
            "failures": [list(f) for f in self.failures],
        }


def http_transport(base_url: str, model: str, timeout_s: float = 60.0) -> Transport:
    """Build a transport that POSTs one user message to {base_url}/chat/completions."""

    def send(prompt: str) -> str:
        payload = {"model": model, "messages": [{"role": "user", "content": prompt}]}
        try:
            response = requests.post(
                f"{base_url.rstrip('/')}/chat/completions", json=payload, timeout=timeout_s
            )
        except requests.RequestException as exc:
            raise EndpointUnavailable(f"{base_url}: {exc}") from None
        if response.status_code != 200:
            raise EndpointUnavailable(f"{base_url}: HTTP {response.status_code}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise EndpointUnavailable(f"{base_url}: unusable response body ({exc})") from None

    return send


def expected_sentences(example: TrainExample) -> list[str]:
    """Pull the sentence list out of the gold assistant JSON."""
    items = json.loads(example.assistant)
    return [item["sentence"] for item in items]


def validate_outputs(sft_path: str | Path, transport: Transport) -> ParseRateReport:
    """Fraction of fixture prompts whose endpoint responses parse as feedback."""
    examples = load_sft(sft_path)
    if not examples:
        raise EmptyFixture(f"{sft_path}: nothing to validate against")
    parsed = 0
    failures: list[tuple[int, str]] = []
    for index, example in enumerate(examples):
        raw = transport(example.user)
        try:
            parse_feedback(raw, expected_sentences(example), Granularity(example.granularity))
        except FeedbackParseError as exc:
            failures.append((index, f"{type(exc).__name__}: {exc}"))
            continue
        parsed += 1
    return ParseRateReport(
        n_prompts=len(examples), n_parsed=parsed, failures=tuple(failures)
    )
