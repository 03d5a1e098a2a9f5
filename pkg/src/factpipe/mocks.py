"""Deterministic in-process endpoints behind the mock:// URL scheme.

These let the full pipeline (and its tests) run with no network and no
nondeterminism: every response is a pure function of model name and
prompt. The verifier deliberately emits the messy shapes real models
produce — code fences, trailing commas — so the repair path gets
exercised end to end.
"""

from __future__ import annotations

import json
import re
import threading
from urllib.parse import parse_qs, urlsplit
from zlib import crc32

from .errors import EndpointUnavailable
from .feedback import CANONICAL_NAMES, LOCALIZABLE_CATEGORIES
from .gateway import EndpointConfig, estimate_tokens
from .prompts import GRANULARITY_FRAGMENTS, Granularity

_NUMBERED = re.compile(r"^\[(\d+)\]\s+(.*)$", re.MULTILINE)

_flaky_lock = threading.Lock()
_flaky_calls: dict[tuple[str, str], int] = {}


def reset_mock_state() -> None:
    """Forget flaky-endpoint call counts (tests call this between cases)."""
    with _flaky_lock:
        _flaky_calls.clear()


def _response(model: str, prompt_chars: int, text: str) -> dict:
    return {
        "model": model,
        "choices": [{"index": 0, "message": {"role": "assistant", "content": text}}],
        "usage": {
            "prompt_tokens": max(1, prompt_chars // 4),
            "completion_tokens": max(1, len(text) // 4),
            "total_tokens": max(1, prompt_chars // 4) + max(1, len(text) // 4),
        },
    }


def _detect_granularity(prompt: str) -> Granularity:
    for granularity in (
        Granularity.full_localization,
        Granularity.binary_reasoning,
        Granularity.binary,
    ):
        if all(frag in prompt for frag in GRANULARITY_FRAGMENTS[granularity]):
            return granularity
    return Granularity.binary


def _summarize(model: str, prompt: str) -> str:
    # The summary instruction ends with the document body.
    marker = "Document:\n"
    document = prompt[prompt.index(marker) + len(marker):] if marker in prompt else prompt
    # Crude sentence cut that needs no corpus import: split on terminators.
    sentences = [s.strip() for s in re.split(r"(?<=[.!?])\s+", document.strip()) if s.strip()]
    take = 1 + crc32(model.encode()) % 3
    return " ".join(sentences[:take]) if sentences else "No content."


def _verify(model: str, prompt: str) -> str:
    sentences = [m.group(2) for m in _NUMBERED.finditer(prompt)]
    granularity = _detect_granularity(prompt)
    items = []
    for sentence in sentences:
        h = crc32(f"{model}|{sentence}".encode())
        has_error = h % 10 >= 6
        item: dict[str, object] = {"sentence": sentence}
        if granularity in (Granularity.binary_reasoning, Granularity.full_localization):
            item["reason"] = (
                "The sentence contradicts or goes beyond the document."
                if has_error
                else "The sentence is supported by the document."
            )
        if granularity is Granularity.full_localization:
            category = (
                LOCALIZABLE_CATEGORIES[(h // 10) % len(LOCALIZABLE_CATEGORIES)]
                if has_error
                else None
            )
            item["category"] = (
                CANONICAL_NAMES[category] if category else "no error"
            )
        else:
            item["label"] = "inconsistent" if has_error else "consistent"
        items.append(item)
    text = json.dumps(items, ensure_ascii=False)
    hp = crc32(prompt.encode())
    if hp % 3 == 0:
        text = text[:-1] + ", ]"  # trailing comma, as real models love to emit
    if hp % 2 == 0:
        text = f"Here is the sentence-by-sentence analysis:\n```json\n{text}\n```"
    return text


def mock_transport(config: EndpointConfig, payload: dict) -> dict:
    """Serve a chat completion for a mock:// endpoint.

    Hosts: `echo` (returns the prompt), `summarizer` (first 1-3 document
    sentences, count keyed on model name), `verifier` (deterministic
    per-sentence verdicts), `flaky?fail=N` (N failures then echo), `fail`,
    `refuse`, `empty`.
    """
    parts = urlsplit(config.base_url)
    host = parts.netloc or parts.path.lstrip("/")
    model = payload["model"]
    prompt = "".join(m["content"] for m in payload["messages"])

    if host == "fail":
        raise EndpointUnavailable(f"mock endpoint {config.name} is down")
    if host == "flaky":
        allowed = int(parse_qs(parts.query).get("fail", ["1"])[0])
        key = (config.name, model)
        with _flaky_lock:
            _flaky_calls[key] = _flaky_calls.get(key, 0) + 1
            calls = _flaky_calls[key]
        if calls <= allowed:
            raise EndpointUnavailable(
                f"mock endpoint {config.name}: transient failure {calls}/{allowed}"
            )
        return _response(model, len(prompt), prompt)
    if host == "echo":
        return _response(model, len(prompt), prompt)
    if host == "refuse":
        return _response(model, len(prompt), "I cannot answer.")
    if host == "empty":
        return _response(model, len(prompt), "")
    if host == "summarizer":
        return _response(model, len(prompt), _summarize(model, prompt))
    if host == "verifier":
        return _response(model, len(prompt), _verify(model, prompt))
    raise EndpointUnavailable(f"unknown mock endpoint host {host!r}")
