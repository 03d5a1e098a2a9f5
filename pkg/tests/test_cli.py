import json
from pathlib import Path

import pytest

from factpipe.cli import main
from factpipe.corpus import (
    HumanAnnotation,
    OriginalSplit,
    SentenceAnnotation,
    write_annotations,
    write_corpus,
    write_summaries,
)
from factpipe.exporter import read_sft
from factpipe.feedback import load_feedback
from factpipe.mocks import reset_mock_state

from conftest import make_document


@pytest.fixture(autouse=True)
def clean_mock_state():
    reset_mock_state()
    yield
    reset_mock_state()


@pytest.fixture
def corpus_path(tmp_path):
    path = tmp_path / "corpus.jsonl"
    write_corpus(path, [make_document(i) for i in range(4)])
    return path


def run(capsys, *argv) -> tuple[int, dict]:
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out.strip().splitlines()
    return code, json.loads(out[-1]) if out else {}


class TestSummarize:
    def test_writes_summaries_and_provenance(self, capsys, tmp_path,
                                             corpus_path, mock_config_path):
        out = tmp_path / "summaries.jsonl"
        code, payload = run(
            capsys, "summarize", "--config", mock_config_path,
            "--docs", corpus_path, "--out", out,
        )
        assert code == 0
        assert payload["summaries"] == 20  # 5 endpoints x 4 documents
        assert payload["failures"] == 0
        assert payload["usage"]["requests"] == 20
        assert out.exists()
        provenance = json.loads((tmp_path / "run_config.json").read_text())
        assert provenance["command"] == "summarize"
        assert provenance["seed"] == 0

    def test_missing_config_exits_1(self, capsys, tmp_path, corpus_path):
        code, _ = run(
            capsys, "summarize", "--config", tmp_path / "ghost.json",
            "--docs", corpus_path, "--out", tmp_path / "s.jsonl",
        )
        assert code == 1

    def test_unknown_flag_exits_2(self, corpus_path):
        with pytest.raises(SystemExit) as err:
            main(["summarize", "--nope"])
        assert err.value.code == 2


class TestFeedback:
    @pytest.fixture
    def summaries_path(self, capsys, tmp_path, corpus_path, mock_config_path):
        out = tmp_path / "summaries.jsonl"
        assert run(capsys, "summarize", "--config", mock_config_path,
                   "--docs", corpus_path, "--out", out)[0] == 0
        return out

    @pytest.mark.parametrize("granularity", ["binary", "reasoning", "localization"])
    def test_each_granularity(self, capsys, tmp_path, corpus_path,
                              mock_config_path, summaries_path, granularity):
        out = tmp_path / f"feedback-{granularity}.jsonl"
        code, payload = run(
            capsys, "feedback", "--config", mock_config_path,
            "--docs", corpus_path, "--summaries", summaries_path,
            "--granularity", granularity, "--out", out,
        )
        assert code == 0
        assert payload["feedback_records"] == 20
        records = load_feedback(out)
        assert len(records) == 20
        keys = [r.key for r in records]
        assert keys == sorted(keys)

    def test_summary_for_unknown_document_fails(self, capsys, tmp_path,
                                                mock_config_path, corpus_path):
        summaries = tmp_path / "bad_summaries.jsonl"
        from factpipe.corpus import SummaryRecord

        write_summaries(summaries, [
            SummaryRecord.from_text("ghost-doc", "sys", "A claim.")
        ])
        code, _ = run(
            capsys, "feedback", "--config", mock_config_path,
            "--docs", corpus_path, "--summaries", summaries,
            "--out", tmp_path / "f.jsonl",
        )
        assert code == 1


class TestConsolidateSplit:
    @pytest.fixture
    def annotated(self, tmp_path):
        docs = [make_document(i) for i in range(6)]
        corpus = tmp_path / "corpus.jsonl"
        write_corpus(corpus, docs)
        summaries, annotations = [], []
        from factpipe.corpus import SummaryRecord

        for i, doc in enumerate(docs):
            summary = SummaryRecord.from_sentences(
                doc.doc_id, "sys-a", ["Kept claim one.", "Dropped claim.", "Kept claim two."]
            )
            summaries.append(summary)
            annotations.append(HumanAnnotation(
                doc.doc_id, "sys-a",
                (
                    SentenceAnnotation((0, 0)),
                    SentenceAnnotation((0, 1)),   # disagreement: dropped
                    SentenceAnnotation((1, 1)),
                ),
                OriginalSplit.test if i < 2 else OriginalSplit.unassigned,
            ))
        summaries_path = tmp_path / "summaries.jsonl"
        annotations_path = tmp_path / "annotations.jsonl"
        write_summaries(summaries_path, summaries)
        write_annotations(annotations_path, annotations)
        return corpus, summaries_path, annotations_path

    def test_consolidate_counts_drops(self, capsys, tmp_path, annotated):
        _, summaries_path, annotations_path = annotated
        out = tmp_path / "human.jsonl"
        code, payload = run(
            capsys, "consolidate", "--annotations", annotations_path,
            "--summaries", summaries_path, "--out", out,
        )
        assert code == 0
        assert payload == {"records": 6, "dropped_records": 0, "dropped_sentences": 6}
        records = load_feedback(out)
        assert all([f.sentence_index for f in r.feedback] == [1, 3] for r in records)
        assert all(r.source.value == "human" for r in records)

    def test_split_honors_original_flags(self, capsys, tmp_path, annotated):
        _, summaries_path, annotations_path = annotated
        consolidated = tmp_path / "human.jsonl"
        run(capsys, "consolidate", "--annotations", annotations_path,
            "--summaries", summaries_path, "--out", consolidated)
        code, payload = run(
            capsys, "split", "--records", consolidated,
            "--annotations", annotations_path,
            "--test-fraction", "0.5", "--seed", "3",
            "--train-out", tmp_path / "train.jsonl",
            "--test-out", tmp_path / "test.jsonl",
        )
        assert code == 0
        assert payload == {"train": 3, "test": 3}
        test_ids = {r.doc_id for r in load_feedback(tmp_path / "test.jsonl")}
        assert {"doc-000", "doc-001"} <= test_ids


class TestExportEvaluateReport:
    @pytest.fixture
    def pipeline(self, capsys, tmp_path, corpus_path, mock_config_path):
        summaries = tmp_path / "summaries.jsonl"
        feedback = tmp_path / "feedback.jsonl"
        run(capsys, "summarize", "--config", mock_config_path,
            "--docs", corpus_path, "--out", summaries)
        run(capsys, "feedback", "--config", mock_config_path,
            "--docs", corpus_path, "--summaries", summaries,
            "--granularity", "localization", "--out", feedback)
        return corpus_path, summaries, feedback

    def test_export_with_subsample(self, capsys, tmp_path, pipeline):
        corpus_path, _, feedback = pipeline
        out = tmp_path / "sft.jsonl"
        code, payload = run(
            capsys, "export-sft", "--feedback", feedback, "--docs", corpus_path,
            "--out", out, "--fraction", "0.5", "--seed", "1",
        )
        assert code == 0
        assert payload["written"] == 20
        assert payload["final"] == 10
        assert len(read_sft(out)) == 10

    def test_evaluate_self_is_perfect(self, capsys, tmp_path, pipeline):
        corpus_path, _, feedback = pipeline
        report_path = tmp_path / "report.json"
        code, payload = run(
            capsys, "evaluate", "--gt", feedback, "--pred", feedback,
            "--docs", corpus_path, "--out", report_path,
        )
        assert code == 0
        assert payload["balanced_accuracy"] == 1.0
        assert payload["pearson_r"] == pytest.approx(1.0)
        assert payload["spearman_rho"] == pytest.approx(1.0)
        report = json.loads(report_path.read_text())
        assert report["n_pairs"] == 20

    def test_report_renders_tables_and_figures(self, capsys, tmp_path, pipeline):
        corpus_path, _, feedback = pipeline
        report_path = tmp_path / "report.json"
        run(capsys, "evaluate", "--gt", feedback, "--pred", feedback,
            "--docs", corpus_path, "--out", report_path)
        out_dir = tmp_path / "report"
        code, payload = run(
            capsys, "report", "--eval", report_path, "--feedback", feedback,
            "--out-dir", out_dir,
        )
        assert code == 0
        names = {Path(p).name for p in payload["artifacts"]}
        assert {"eval_report.json", "metrics.csv", "system_ranking.csv",
                "system_faithfulness.png", "error_distribution.csv",
                "error_distribution.png", "faithfulness_histogram.csv",
                "faithfulness_histogram.png"} <= names
        for p in payload["artifacts"]:
            assert Path(p).stat().st_size > 0

    def test_report_requires_some_input(self, capsys, tmp_path):
        code, _ = run(capsys, "report", "--out-dir", tmp_path / "r")
        assert code == 1

    def test_stats(self, capsys, tmp_path, pipeline):
        corpus_path, _, feedback = pipeline
        sft = tmp_path / "sft.jsonl"
        run(capsys, "export-sft", "--feedback", feedback,
            "--docs", corpus_path, "--out", sft)
        code, payload = run(capsys, "stats", "--sft", sft)
        assert code == 0
        assert payload["examples"] == 20
        assert payload["by_granularity"] == {"full_localization": 20}
        assert payload["documents"] == 4
        assert payload["summarizers"] == 5
