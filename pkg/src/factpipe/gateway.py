"""Chat-completion client for OpenAI-compatible endpoints.

Handles retries with exponential backoff and full jitter, bounded
per-endpoint concurrency, and usage/cost accounting. Transports are
injectable; `mock://` base URLs route to deterministic in-process
endpoints so the whole pipeline runs offline.
"""

from __future__ import annotations

import logging
import math
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import requests

from .corpus import Document, SummaryRecord
from .errors import (
    EndpointUnavailable,
    Exhausted,
    GatewayError,
    MalformedResponse,
    Timeout,
)
from .feedback import FeedbackRecord, feedback_with_retry
from .prompts import Granularity, build_prompt

log = logging.getLogger(__name__)

BACKOFF_BASE_S = 1.0
BACKOFF_FACTOR = 2.0
BACKOFF_CAP_S = 60.0

# Errors worth retrying; plain GatewayError (config problems, 4xx) is not.
_RETRYABLE = (EndpointUnavailable, Timeout, MalformedResponse)

Transport = Callable[["EndpointConfig", dict], dict]


@dataclass(frozen=True)
class EndpointConfig:
    """One chat-completion endpoint plus its local limits and pricing."""

    name: str
    base_url: str
    model: str
    api_key_env: str | None = None
    max_concurrency: int = 4
    timeout_s: float = 60.0
    max_attempts: int = 5
    temperature: float = 0.7
    price_per_1k_prompt: float = 0.0
    price_per_1k_completion: float = 0.0

    def __post_init__(self):
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> EndpointConfig:
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


def estimate_tokens(text: str) -> int:
    """Character-count fallback when an endpoint omits usage numbers."""
    return math.ceil(len(text) / 4)


@dataclass
class UsageStats:
    """Mutable accumulator; thread-safe so batch workers can share one."""

    requests: int = 0
    retries: int = 0
    failures: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    cost: float = 0.0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def record(self, config: EndpointConfig, usage: dict, attempts: int) -> None:
        with self._lock:
            self.requests += 1
            self.retries += attempts - 1
            self.prompt_tokens += usage["prompt_tokens"]
            self.completion_tokens += usage["completion_tokens"]
            self.cost += estimate_cost(config, usage)

    def record_failure(self, attempts: int) -> None:
        with self._lock:
            self.failures += 1
            self.retries += max(0, attempts - 1)

    def to_dict(self) -> dict:
        return {
            "requests": self.requests,
            "retries": self.retries,
            "failures": self.failures,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "cost": round(self.cost, 6),
        }


def estimate_cost(config: EndpointConfig, usage: dict) -> float:
    return (
        usage["prompt_tokens"] / 1000.0 * config.price_per_1k_prompt
        + usage["completion_tokens"] / 1000.0 * config.price_per_1k_completion
    )


@dataclass(frozen=True)
class ChatResult:
    text: str
    usage: dict
    attempts: int


@dataclass(frozen=True)
class FailureRecord:
    """A request given up on after exhausting its retry budget."""

    endpoint: str
    doc_id: str
    error_type: str
    message: str
    attempts: int

    def to_dict(self) -> dict:
        return {
            "endpoint": self.endpoint,
            "doc_id": self.doc_id,
            "error_type": self.error_type,
            "message": self.message,
            "attempts": self.attempts,
        }


def _resolve_api_key(config: EndpointConfig) -> str | None:
    if config.api_key_env is None:
        return None
    key = os.environ.get(config.api_key_env)
    if not key:
        raise GatewayError(
            f"endpoint {config.name}: environment variable "
            f"{config.api_key_env} is not set"
        )
    return key


def http_transport(config: EndpointConfig, payload: dict) -> dict:
    url = config.base_url.rstrip("/") + "/chat/completions"
    headers = {"Content-Type": "application/json"}
    key = _resolve_api_key(config)
    if key:
        headers["Authorization"] = f"Bearer {key}"
    try:
        resp = requests.post(url, json=payload, headers=headers, timeout=config.timeout_s)
    except requests.Timeout as exc:
        raise Timeout(f"endpoint {config.name}: {exc}") from None
    except requests.RequestException as exc:
        raise EndpointUnavailable(f"endpoint {config.name}: {exc}") from None
    if resp.status_code == 429 or resp.status_code >= 500:
        raise EndpointUnavailable(
            f"endpoint {config.name}: HTTP {resp.status_code}"
        )
    if resp.status_code >= 400:
        raise GatewayError(
            f"endpoint {config.name}: HTTP {resp.status_code}: {resp.text[:200]}"
        )
    try:
        return resp.json()
    except ValueError as exc:
        raise MalformedResponse(f"endpoint {config.name}: body is not JSON: {exc}") from None


def _pick_transport(config: EndpointConfig) -> Transport:
    if config.base_url.startswith("mock://"):
        from . import mocks

        return mocks.mock_transport
    return http_transport


def _extract(config: EndpointConfig, payload: dict, response: dict) -> tuple[str, dict]:
    try:
        text = response["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise MalformedResponse(
            f"endpoint {config.name}: response lacks choices[0].message.content"
        ) from None
    if not isinstance(text, str):
        raise MalformedResponse(f"endpoint {config.name}: content is not text")
    usage = response.get("usage")
    if not isinstance(usage, dict) or "prompt_tokens" not in usage:
        prompt_chars = "".join(m["content"] for m in payload["messages"])
        usage = {
            "prompt_tokens": estimate_tokens(prompt_chars),
            "completion_tokens": estimate_tokens(text),
        }
    return text, usage


def chat(
    config: EndpointConfig,
    messages: Sequence[dict],
    *,
    transport: Transport | None = None,
    sleep: Callable[[float], None] = time.sleep,
    rng: random.Random | None = None,
    stats: UsageStats | None = None,
) -> ChatResult:
    """Send one chat request, retrying transient failures with jittered backoff.

    Sleeps `uniform(0, min(cap, base * factor**k))` before retry k+1. The
    `transport`, `sleep`, and `rng` seams exist for tests; production code
    passes none of them.
    """
    send = transport or _pick_transport(config)
    rng = rng or random.Random()
    payload = {
        "model": config.model,
        "messages": list(messages),
        "temperature": config.temperature,
    }
    last: GatewayError | None = None
    for attempt in range(1, config.max_attempts + 1):
        try:
            response = send(config, payload)
            text, usage = _extract(config, payload, response)
        except _RETRYABLE as exc:
            last = exc
            exc.attempts = attempt
            if attempt < config.max_attempts:
                backoff = min(
                    BACKOFF_CAP_S, BACKOFF_BASE_S * BACKOFF_FACTOR ** (attempt - 1)
                )
                delay = rng.uniform(0.0, backoff)
                log.warning(
                    "endpoint %s attempt %d/%d failed (%s); retrying in %.2fs",
                    config.name, attempt, config.max_attempts, exc, delay,
                )
                sleep(delay)
            continue
        if stats is not None:
            stats.record(config, usage, attempt)
        return ChatResult(text, usage, attempt)
    assert last is not None
    if stats is not None:
        stats.record_failure(config.max_attempts)
    raise last


def batch_chat(
    config: EndpointConfig,
    message_lists: Sequence[Sequence[dict]],
    *,
    transport: Transport | None = None,
    sleep: Callable[[float], None] = time.sleep,
    rng_seed: int | None = None,
    stats: UsageStats | None = None,
) -> list[ChatResult | GatewayError]:
    """Run many requests against one endpoint, never exceeding its
    concurrency limit. Results keep input order; failures are returned in
    place rather than raised so one bad request cannot sink a batch."""

    def run_one(i: int, msgs: Sequence[dict]) -> ChatResult | GatewayError:
        rng = random.Random(None if rng_seed is None else f"{rng_seed}:{i}")
        try:
            return chat(
                config, msgs, transport=transport, sleep=sleep, rng=rng, stats=stats
            )
        except GatewayError as exc:
            return exc

    with ThreadPoolExecutor(max_workers=config.max_concurrency) as pool:
        futures = [
            pool.submit(run_one, i, msgs) for i, msgs in enumerate(message_lists)
        ]
        return [f.result() for f in futures]


# --- pipeline stages -------------------------------------------------------

SUMMARY_INSTRUCTION = (
    "Summarize the following document faithfully in a few sentences. "
    "Return only the summary text.\n\nDocument:\n{document}"
)


def generate_summaries(
    documents: Sequence[Document],
    endpoints: Sequence[EndpointConfig],
    *,
    transport: Transport | None = None,
    sleep: Callable[[float], None] = time.sleep,
    rng_seed: int | None = None,
    stats: UsageStats | None = None,
) -> tuple[list[SummaryRecord], list[FailureRecord]]:
    """Ask every endpoint to summarize every document.

    Endpoints run sequentially; requests within an endpoint run under its
    own concurrency bound. Failed requests become FailureRecords and the
    rest of the batch proceeds.
    """
    records: list[SummaryRecord] = []
    failures: list[FailureRecord] = []
    for endpoint in endpoints:
        message_lists = [
            [{"role": "user", "content": SUMMARY_INSTRUCTION.format(document=d.text)}]
            for d in documents
        ]
        results = batch_chat(
            endpoint, message_lists,
            transport=transport, sleep=sleep, rng_seed=rng_seed, stats=stats,
        )
        for doc, result in zip(documents, results):
            if isinstance(result, GatewayError):
                failures.append(FailureRecord(
                    endpoint.name, doc.doc_id, type(result).__name__,
                    str(result), result.attempts,
                ))
                continue
            text = result.text.strip()
            if not text:
                failures.append(FailureRecord(
                    endpoint.name, doc.doc_id, "EmptySummary",
                    "endpoint returned empty text", result.attempts,
                ))
                continue
            records.append(SummaryRecord.from_text(doc.doc_id, endpoint.name, text))
    return records, failures


def generate_feedback(
    document: Document,
    summary: SummaryRecord,
    endpoint: EndpointConfig,
    granularity: Granularity,
    *,
    transport: Transport | None = None,
    sleep: Callable[[float], None] = time.sleep,
    rng: random.Random | None = None,
    stats: UsageStats | None = None,
    max_parse_attempts: int = 3,
) -> FeedbackRecord:
    """Request sentence-level feedback for one summary, re-asking on
    unparseable output. Raises Exhausted when every attempt fails to parse."""
    prompt = build_prompt(granularity, document, summary.sentences)

    def generate() -> str:
        result = chat(
            endpoint,
            [{"role": "user", "content": prompt.body}],
            transport=transport, sleep=sleep, rng=rng, stats=stats,
        )
        return result.text

    record, _ = feedback_with_retry(
        generate,
        document.doc_id,
        summary.summarizer_id,
        summary.sentences,
        granularity,
        max_attempts=max_parse_attempts,
    )
    return record


def generate_feedback_batch(
    documents: dict[str, Document],
    summaries: Sequence[SummaryRecord],
    endpoint: EndpointConfig,
    granularity: Granularity,
    *,
    transport: Transport | None = None,
    sleep: Callable[[float], None] = time.sleep,
    rng_seed: int | None = None,
    stats: UsageStats | None = None,
    max_parse_attempts: int = 3,
) -> tuple[list[FeedbackRecord], list[FailureRecord]]:
    """Feedback for many summaries under the endpoint's concurrency bound."""

    def run_one(i: int, summary: SummaryRecord) -> FeedbackRecord | FailureRecord:
        rng = random.Random(None if rng_seed is None else f"{rng_seed}:{i}")
        try:
            return generate_feedback(
                documents[summary.doc_id], summary, endpoint, granularity,
                transport=transport, sleep=sleep, rng=rng, stats=stats,
                max_parse_attempts=max_parse_attempts,
            )
        except (GatewayError, Exhausted) as exc:
            attempts = getattr(exc, "attempts", 0)
            return FailureRecord(
                endpoint.name, summary.doc_id, type(exc).__name__, str(exc), attempts
            )

    with ThreadPoolExecutor(max_workers=endpoint.max_concurrency) as pool:
        futures = [pool.submit(run_one, i, s) for i, s in enumerate(summaries)]
        results = [f.result() for f in futures]
    records = [r for r in results if isinstance(r, FeedbackRecord)]
    failures = [r for r in results if isinstance(r, FailureRecord)]
    return records, failures
