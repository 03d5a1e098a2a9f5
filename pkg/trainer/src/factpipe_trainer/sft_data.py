"""SFT file loading and byte-level encoding.

The JSONL schema here is validated independently of the exporter that wrote
the file: each line must be {"messages": [user, assistant], "meta": {...}}.
Keeping a second reader honest is the point — if either side drifts, the
schema tests on this side fail rather than silently re-agreeing.

Token space is raw UTF-8 bytes (0-255) plus three specials, so no external
vocabulary is ever downloaded.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import torch

from .errors import EmptyFixture, InvalidSftLine

PAD_ID = 256
SEP_ID = 257
EOS_ID = 258
VOCAB_SIZE = 259
IGNORE_INDEX = -100

GRANULARITIES = ("binary", "binary_reasoning", "full_localization")


@dataclass(frozen=True)
class TrainExample:
    """One user/assistant conversation with its provenance metadata."""

    user: str
    assistant: str
    doc_id: str
    summarizer_id: str
    granularity: str
    template_version: str


def _require(condition: bool, message: str, line: int) -> None:
    if not condition:
        raise InvalidSftLine(message, line)


def parse_sft_line(obj: object, line: int) -> TrainExample:
    """Validate one parsed JSONL object against the conversation schema."""
    _require(isinstance(obj, dict), "expected a JSON object", line)
    messages = obj.get("messages")
    _require(isinstance(messages, list) and len(messages) == 2,
             "expected exactly two messages", line)
    roles = []
    contents = []
    for message in messages:
        _require(isinstance(message, dict), "message must be an object", line)
        roles.append(message.get("role"))
        contents.append(message.get("content"))
    _require(roles == ["user", "assistant"],
             f"expected roles ['user', 'assistant'], got {roles}", line)
    for content in contents:
        _require(isinstance(content, str) and bool(content.strip()),
                 "message content must be a non-empty string", line)
    meta = obj.get("meta")
    _require(isinstance(meta, dict), "expected a 'meta' object", line)
    for key in ("doc_id", "summarizer_id", "granularity", "template_version"):
        value = meta.get(key)
        _require(isinstance(value, str) and bool(value),
                 f"meta.{key} must be a non-empty string", line)
    _require(meta["granularity"] in GRANULARITIES,
             f"unknown granularity {meta['granularity']!r}", line)
    return TrainExample(
        user=contents[0],
        assistant=contents[1],
        doc_id=meta["doc_id"],
        summarizer_id=meta["summarizer_id"],
        granularity=meta["granularity"],
        template_version=meta["template_version"],
    )


def load_sft(path: str | Path) -> list[TrainExample]:
    """Read and validate an SFT JSONL file. Blank lines are skipped; numbering is 1-based."""
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise InvalidSftLine(f"invalid JSON ({exc.msg})", lineno) from None
            examples.append(parse_sft_line(obj, lineno))
    return examples


# --- byte-level tokenization ------------------------------------------------


def encode(text: str) -> list[int]:
    return list(text.encode("utf-8"))


def decode(ids: Sequence[int]) -> str:
    return bytes(i for i in ids if i < 256).decode("utf-8", errors="replace")


def encode_example(example: TrainExample, max_seq_len: int) -> tuple[list[int], list[int]]:
    """Build (input_ids, labels) for one conversation.

    Layout: user bytes, SEP, assistant bytes, EOS. Loss applies to the
    assistant bytes and EOS only; the user portion and SEP are masked out.
    Overlong sequences are truncated from the left so the assistant tail —
    the part carrying the training signal — survives first.
    """
    user_ids = encode(example.user)
    assistant_ids = encode(example.assistant)
    input_ids = user_ids + [SEP_ID] + assistant_ids + [EOS_ID]
    labels = [IGNORE_INDEX] * (len(user_ids) + 1) + assistant_ids + [EOS_ID]
    return input_ids[-max_seq_len:], labels[-max_seq_len:]


def collate(encoded: Sequence[tuple[list[int], list[int]]]) -> dict[str, torch.Tensor]:
    """Right-pad a batch to a common length; padding is masked in both attention and loss."""
    width = max(len(ids) for ids, _ in encoded)
    input_ids = torch.full((len(encoded), width), PAD_ID, dtype=torch.long)
    labels = torch.full((len(encoded), width), IGNORE_INDEX, dtype=torch.long)
    attention_mask = torch.zeros((len(encoded), width), dtype=torch.long)
    for row, (ids, labs) in enumerate(encoded):
        input_ids[row, : len(ids)] = torch.tensor(ids, dtype=torch.long)
        labels[row, : len(labs)] = torch.tensor(labs, dtype=torch.long)
        attention_mask[row, : len(ids)] = 1
    return {"input_ids": input_ids, "labels": labels, "attention_mask": attention_mask}


def batch_order(n_examples: int, batch_size: int, iterations: int, seed: int) -> list[tuple[int, ...]]:
    """Deterministic batch schedule: shuffled epochs concatenated, then chunked.

    Every epoch in the stream is a full permutation of the dataset, so example
    visit counts stay balanced regardless of how iterations and dataset size
    divide each other.
    """
    if n_examples <= 0:
        raise EmptyFixture("cannot schedule batches over an empty dataset")
    rng = random.Random(seed)
    stream: list[int] = []
    while len(stream) < iterations * batch_size:
        epoch = list(range(n_examples))
        rng.shuffle(epoch)
        stream.extend(epoch)
    return [tuple(stream[i * batch_size : (i + 1) * batch_size]) for i in range(iterations)]


def iter_batches(
    encoded: Sequence[tuple[list[int], list[int]]],
    batch_size: int,
    iterations: int,
    seed: int,
) -> Iterator[dict[str, torch.Tensor]]:
    for picks in batch_order(len(encoded), batch_size, iterations, seed):
        yield collate([encoded[i] for i in picks])
