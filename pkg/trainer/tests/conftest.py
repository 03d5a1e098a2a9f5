import os

# Fail loudly if anything tries to reach a model hub; the whole suite must
# run without downloading a single artifact.
os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")

import random
from pathlib import Path

import pytest

from factpipe.corpus import DocType, Document, Domain, SourceDataset
from factpipe.exporter import export_sft
from factpipe.feedback import FeedbackRecord, SentenceFeedback
from factpipe.prompts import Granularity


def build_sft_fixture(path: Path, n: int = 50) -> Path:
    """Write an n-example SFT file through the pipeline's own exporter.

    Using the real exporter here is deliberate: the file format is the
    contract between the two packages, so the trainer's reader is always
    exercised against freshly produced output, not a hand-copied snapshot.
    """
    rng = random.Random("trainer-fixture")
    records, documents = [], {}
    for i in range(n):
        doc_id = f"tr-{i:03d}"
        documents[doc_id] = Document(
            doc_id, SourceDataset.custom, Domain.news, DocType.non_dialogue,
            f"Report {i} covers a council meeting about project {i * 3}. "
            f"Members voted on motion {i + 1} after a short debate.",
        )
        n_sentences = rng.randint(1, 3)
        feedback = tuple(
            SentenceFeedback(k, f"Claim {i}-{k} about motion {i + 1}.", rng.randint(0, 1))
            for k in range(1, n_sentences + 1)
        )
        records.append(FeedbackRecord(doc_id, "sys-toy", Granularity.binary, feedback))
    export_sft(records, documents, path)
    return path


@pytest.fixture(scope="session")
def sft_fixture(tmp_path_factory) -> Path:
    return build_sft_fixture(tmp_path_factory.mktemp("fixture") / "sft.jsonl")
