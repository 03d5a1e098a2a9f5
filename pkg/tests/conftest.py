import json
import random
from pathlib import Path

import pytest

from factpipe.corpus import DocType, Document, Domain, SourceDataset
from factpipe.feedback import (
    LOCALIZABLE_CATEGORIES,
    ErrorCategory,
    FeedbackRecord,
    FeedbackSource,
    SentenceFeedback,
)
from factpipe.prompts import Granularity

DATA = Path(__file__).parent / "data"


@pytest.fixture
def chronic_document() -> str:
    return (DATA / "chronic_care_document.txt").read_text(encoding="utf-8").strip()


@pytest.fixture
def chronic_sentences() -> list[str]:
    return json.loads((DATA / "chronic_care_sentences.json").read_text(encoding="utf-8"))


@pytest.fixture
def chronic_output() -> str:
    return (DATA / "chronic_care_output.txt").read_text(encoding="utf-8")


def make_document(i: int, n_sentences: int = 4) -> Document:
    sentences = " ".join(
        f"Fact {i}-{k} describes event number {i * 10 + k} in detail."
        for k in range(n_sentences)
    )
    return Document(
        f"doc-{i:03d}", SourceDataset.custom, Domain.news, DocType.non_dialogue, sentences
    )


_WORDS = (
    "report", "council", "river", "treaty", "engine", "harvest", "signal",
    "market", "bridge", "archive", "tribunal", "voyage",
)


def random_feedback_record(
    rng: random.Random,
    granularity: Granularity,
    doc_id: str,
    summarizer_id: str = "sys-a",
) -> FeedbackRecord:
    n = rng.randint(1, 6)
    entries = []
    for k in range(1, n + 1):
        text = (
            f"The {rng.choice(_WORDS)} mentioned the {rng.choice(_WORDS)} "
            f"near item {rng.randint(1, 99)}"
        )
        if rng.random() < 0.2:
            text += " with a \"quoted\" clause and café accents"
        text += "."
        category = None
        reasoning = None
        if granularity is Granularity.full_localization:
            category = (
                ErrorCategory.no_error
                if rng.random() < 0.6
                else rng.choice(LOCALIZABLE_CATEGORIES)
            )
            label = 0 if category is ErrorCategory.no_error else 1
            reasoning = f"Checked claim {k} against the source text."
        else:
            label = 0 if rng.random() < 0.6 else 1
            if granularity is Granularity.binary_reasoning:
                reasoning = f"Checked claim {k} against the source text."
        entries.append(SentenceFeedback(k, text, label, reasoning, category))
    return FeedbackRecord(
        doc_id, summarizer_id, granularity, tuple(entries), FeedbackSource.llm
    )


@pytest.fixture
def mock_config_path(tmp_path: Path) -> Path:
    config = {
        "summarizers": [
            {
                "name": f"summarizer-{c}",
                "base_url": "mock://summarizer",
                "model": f"mock-model-{c}",
            }
            for c in "abcde"
        ],
        "verifier": {
            "name": "verifier",
            "base_url": "mock://verifier",
            "model": "mock-verifier",
            "max_concurrency": 4,
        },
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    return path
