import json
import random

import pytest

from factpipe.errors import InvalidRecord, SchemaMismatch
from factpipe.exporter import (
    SftExample,
    build_example,
    dataset_stats,
    export_sft,
    read_sft,
    subsample,
    subsample_file,
)
from factpipe.feedback import (
    FeedbackRecord,
    FeedbackSource,
    SentenceFeedback,
    defaulted_record,
    parse_feedback,
)
from factpipe.jsonl import read_jsonl, write_jsonl
from factpipe.prompts import Granularity

from conftest import make_document, random_feedback_record


def simple_record(doc_id="doc-000", labels=(0, 1)):
    entries = tuple(
        SentenceFeedback(i, f"Sentence number {i} stands here.", lab)
        for i, lab in enumerate(labels, start=1)
    )
    return FeedbackRecord(doc_id, "sys-a", Granularity.binary, entries)


class TestBuildExample:
    def test_prompt_and_answer_shape(self):
        doc = make_document(0)
        record = simple_record()
        example = build_example(record, doc)
        assert doc.text in example.user
        assert "[1] Sentence number 1 stands here." in example.user
        assert "Summary with 2 sentences" in example.user
        parsed = json.loads(example.assistant)
        assert [item["label"] for item in parsed] == ["consistent", "inconsistent"]

    def test_defaulted_rejected(self):
        doc = make_document(0)
        record = defaulted_record("doc-000", "sys-a", Granularity.binary, ["One."])
        with pytest.raises(InvalidRecord):
            build_example(record, doc)

    def test_sparse_rejected(self):
        doc = make_document(0)
        sparse = FeedbackRecord(
            "doc-000", "sys-a", Granularity.binary,
            (SentenceFeedback(2, "Second.", 0),), FeedbackSource.human,
        )
        with pytest.raises(InvalidRecord):
            build_example(sparse, doc)

    def test_document_mismatch_rejected(self):
        with pytest.raises(InvalidRecord):
            build_example(simple_record(), make_document(5))


class TestExport:
    def test_sorted_deterministic_bytes(self, tmp_path):
        rng = random.Random(0)
        records = [
            random_feedback_record(rng, Granularity.full_localization,
                                   f"doc-{i:03d}", f"sys-{c}")
            for i in range(4) for c in "ba"
        ]
        documents = {f"doc-{i:03d}": make_document(i) for i in range(4)}
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        stats = export_sft(records, documents, a)
        export_sft(list(reversed(records)), documents, b)
        assert stats.written == 8
        assert a.read_bytes() == b.read_bytes()
        metas = [row["meta"] for _, row in read_jsonl(a)]
        keys = [(m["doc_id"], m["summarizer_id"]) for m in metas]
        assert keys == sorted(keys)

    def test_skips_are_counted(self, tmp_path):
        documents = {"doc-000": make_document(0)}
        records = [
            simple_record(),
            defaulted_record("doc-000", "sys-b", Granularity.binary, ["One."]),
            FeedbackRecord("doc-000", "sys-c", Granularity.binary,
                           (SentenceFeedback(3, "Third.", 0),), FeedbackSource.human),
        ]
        stats = export_sft(records, documents, tmp_path / "out.jsonl")
        assert stats.written == 1
        assert stats.skipped_defaulted == 1
        assert stats.skipped_sparse == 1

    def test_unknown_document_raises(self, tmp_path):
        with pytest.raises(InvalidRecord):
            export_sft([simple_record("ghost")], {}, tmp_path / "out.jsonl")

    @pytest.mark.parametrize("granularity", list(Granularity))
    def test_assistant_json_parses_back(self, tmp_path, granularity):
        rng = random.Random(f"export-{granularity.value}")
        records = [
            random_feedback_record(rng, granularity, f"doc-{i:03d}")
            for i in range(20)
        ]
        documents = {r.doc_id: make_document(i) for i, r in enumerate(records)}
        path = tmp_path / "sft.jsonl"
        export_sft(records, documents, path)
        for example, record in zip(read_sft(path), sorted(records, key=lambda r: r.key)):
            sentences = [f.sentence_text for f in record.feedback]
            parsed = parse_feedback(example.assistant, sentences, granularity)
            assert tuple(parsed) == record.feedback


class TestReadValidation:
    def good_row(self):
        return {
            "messages": [
                {"role": "user", "content": "prompt"},
                {"role": "assistant", "content": "[]"},
            ],
            "meta": {
                "doc_id": "d", "summarizer_id": "s",
                "granularity": "binary", "template_version": "v1",
            },
        }

    def test_good_row_loads(self, tmp_path):
        path = tmp_path / "sft.jsonl"
        write_jsonl(path, [self.good_row()])
        examples = read_sft(path)
        assert examples[0].granularity is Granularity.binary

    @pytest.mark.parametrize("mutate", [
        lambda r: r["messages"].pop(),
        lambda r: r["messages"].__setitem__(0, {"role": "system", "content": "x"}),
        lambda r: r["messages"][1].__setitem__("content", ""),
        lambda r: r.pop("meta"),
        lambda r: r["meta"].pop("doc_id"),
        lambda r: r["meta"].__setitem__("granularity", "verbose"),
    ])
    def test_bad_rows_name_their_line(self, tmp_path, mutate):
        row = self.good_row()
        mutate(row)
        path = tmp_path / "sft.jsonl"
        write_jsonl(path, [self.good_row(), row])
        with pytest.raises(SchemaMismatch) as err:
            read_sft(path)
        assert err.value.line == 2


class TestSubsample:
    def rows(self, n=100):
        return [{"meta": {"doc_id": f"d{i:04d}"}} for i in range(n)]

    def test_cardinality_uses_round(self):
        rows = self.rows(10)
        assert len(subsample(rows, 1.0, 0)) == 10
        assert len(subsample(rows, 0.5, 0)) == 5
        assert len(subsample(rows, 0.25, 0)) == 2  # round(2.5) banker's
        assert len(subsample(rows, 0.0, 0)) == 0

    def test_preserves_input_order(self):
        rows = self.rows(50)
        picked = subsample(rows, 0.3, seed=4)
        ids = [r["meta"]["doc_id"] for r in picked]
        assert ids == sorted(ids)

    def test_deterministic_per_seed(self):
        rows = self.rows(60)
        assert subsample(rows, 0.4, 9) == subsample(rows, 0.4, 9)
        a = {r["meta"]["doc_id"] for r in subsample(rows, 0.4, 1)}
        b = {r["meta"]["doc_id"] for r in subsample(rows, 0.4, 2)}
        assert a != b

    def test_nested_across_fractions(self):
        rows = self.rows(200)
        for seed in range(3):
            picks = {
                f: {r["meta"]["doc_id"] for r in subsample(rows, f, seed)}
                for f in (0.125, 0.25, 0.5, 1.0)
            }
            assert picks[0.125] <= picks[0.25] <= picks[0.5] <= picks[1.0]

    def test_fraction_bounds(self):
        with pytest.raises(ValueError):
            subsample(self.rows(5), 1.5, 0)

    def test_file_variant(self, tmp_path):
        src = tmp_path / "in.jsonl"
        dst = tmp_path / "out.jsonl"
        write_jsonl(src, self.rows(40))
        assert subsample_file(src, dst, 0.25, seed=2) == 10
        assert len(list(read_jsonl(dst))) == 10


def test_dataset_stats(tmp_path):
    rng = random.Random(21)
    records = [
        random_feedback_record(rng, g, f"doc-{i:03d}", f"sys-{i % 2}")
        for g in (Granularity.binary, Granularity.full_localization)
        for i in range(5)
    ]
    documents = {f"doc-{i:03d}": make_document(i) for i in range(5)}
    path = tmp_path / "sft.jsonl"
    export_sft(records, documents, path)
    stats = dataset_stats(row for _, row in read_jsonl(path))
    assert stats["examples"] == 10
    assert stats["by_granularity"] == {"binary": 5, "full_localization": 5}
    assert stats["documents"] == 5
    assert stats["summarizers"] == 2
    total_clean = sum(
        1 for r in records for f in r.feedback if f.binary_label == 0
    )
    total = sum(len(r.feedback) for r in records)
    assert stats["clean_fraction"] == pytest.approx(total_clean / total, abs=1e-6)
