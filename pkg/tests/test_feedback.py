import json
import random

import pytest

from factpipe.corpus import HumanAnnotation, OriginalSplit, SentenceAnnotation
from factpipe.errors import (
    Exhausted,
    InvalidLabel,
    MissingKey,
    NoJsonFound,
    SchemaMismatch,
    UnbalancedBrackets,
    UnknownCategory,
    WrongArity,
)
from factpipe.feedback import (
    ErrorCategory,
    FeedbackRecord,
    FeedbackSource,
    SentenceFeedback,
    consolidate,
    consolidate_annotation,
    consolidated_to_record,
    defaulted_record,
    extract_json_block,
    feedback_with_retry,
    load_feedback,
    normalize_category,
    parse_feedback,
    serialize_feedback,
    to_binary,
    write_feedback,
)
from factpipe.prompts import Granularity

from conftest import random_feedback_record


class TestCategories:
    @pytest.mark.parametrize("raw,expected", [
        ("no error", ErrorCategory.no_error),
        ("No Error", ErrorCategory.no_error),
        ("out-of-context error", ErrorCategory.out_of_context),
        ("Out of context error", ErrorCategory.out_of_context),
        ("out_of_context", ErrorCategory.out_of_context),
        ("entity error", ErrorCategory.entity),
        ("  entity  ", ErrorCategory.entity),
        ("predicate error", ErrorCategory.predicate),
        ("circumstantial error", ErrorCategory.circumstantial),
        ("circumstance error", ErrorCategory.circumstantial),
        ("grammatical error", ErrorCategory.grammatical),
        ("coreference error", ErrorCategory.coreference),
        ("CorefE", ErrorCategory.coreference),
        ("linking error", ErrorCategory.linking),
        ("discourse link error", ErrorCategory.linking),
        ("LinkE", ErrorCategory.linking),
        ("other error", ErrorCategory.other),
        ("Others", ErrorCategory.other),
    ])
    def test_normalization(self, raw, expected):
        assert normalize_category(raw) is expected

    def test_unknown_category_raises_never_coerces(self):
        for bad in ("style error", "hallucination", "", "errors"):
            with pytest.raises(UnknownCategory):
                normalize_category(bad)

    def test_binary_projection(self):
        assert to_binary(ErrorCategory.no_error) == 0
        for cat in ErrorCategory:
            if cat is not ErrorCategory.no_error:
                assert to_binary(cat) == 1


class TestRecords:
    def test_label_category_coherence(self):
        with pytest.raises(ValueError):
            SentenceFeedback(1, "A claim.", 0, None, ErrorCategory.entity)
        with pytest.raises(ValueError):
            SentenceFeedback(1, "A claim.", 1, None, ErrorCategory.no_error)

    def test_faithfulness_is_recomputed(self):
        entries = tuple(
            SentenceFeedback(i, f"Claim {i}.", lab)
            for i, lab in enumerate([0, 1, 0, 0], start=1)
        )
        record = FeedbackRecord("d", "s", Granularity.binary, entries)
        assert record.faithfulness == pytest.approx(3 / 4)

    def test_granularity_shape_enforced(self):
        bare = (SentenceFeedback(1, "Claim.", 0),)
        with pytest.raises(ValueError, match="requires reasoning"):
            FeedbackRecord("d", "s", Granularity.binary_reasoning, bare)
        with_cat = (SentenceFeedback(1, "Claim.", 1, "Why.", ErrorCategory.entity),)
        with pytest.raises(ValueError, match="category"):
            FeedbackRecord("d", "s", Granularity.binary, with_cat)

    def test_human_records_need_no_reasoning(self):
        bare = (SentenceFeedback(1, "Claim.", 0),)
        record = FeedbackRecord(
            "d", "s", Granularity.binary, bare, FeedbackSource.human
        )
        assert record.source is FeedbackSource.human

    def test_indices_must_increase(self):
        entries = (SentenceFeedback(2, "B.", 0), SentenceFeedback(1, "A.", 0))
        with pytest.raises(ValueError):
            FeedbackRecord("d", "s", Granularity.binary, entries)

    def test_sparse_indices_allowed(self):
        entries = (SentenceFeedback(1, "A.", 0), SentenceFeedback(3, "C.", 1))
        record = FeedbackRecord("d", "s", Granularity.binary, entries)
        assert record.faithfulness == 0.5

    def test_defaulted_record_is_all_clean(self):
        record = defaulted_record("d", "s", Granularity.full_localization,
                                  ["One.", "Two."])
        assert record.defaulted
        assert record.binary_labels == [0, 0]
        assert record.faithfulness == 1.0


class TestExtraction:
    def test_plain_array_passes_through(self):
        raw = '[{"sentence": "A.", "label": "consistent"}]'
        assert json.loads(extract_json_block(raw)) == [
            {"sentence": "A.", "label": "consistent"}
        ]

    def test_code_fence_stripped(self):
        raw = 'Sure!\n```json\n[{"a": 1}]\n```\nHope that helps.'
        assert json.loads(extract_json_block(raw)) == [{"a": 1}]

    def test_bare_fence_stripped(self):
        raw = '```\n[{"a": 1}]\n```'
        assert json.loads(extract_json_block(raw)) == [{"a": 1}]

    def test_chatter_around_array_ignored(self):
        raw = 'Here is my analysis: [{"a": 1}, {"a": 2}] Let me know!'
        assert json.loads(extract_json_block(raw)) == [{"a": 1}, {"a": 2}]

    def test_trailing_commas_removed(self):
        raw = '[{"a": 1,}, {"a": 2}, ]'
        assert json.loads(extract_json_block(raw)) == [{"a": 1}, {"a": 2}]

    def test_curly_quotes_normalized(self):
        raw = '[{“sentence”: “A claim.”, “label”: “consistent”}]'
        assert json.loads(extract_json_block(raw)) == [
            {"sentence": "A claim.", "label": "consistent"}
        ]

    def test_brackets_inside_strings_do_not_confuse_scan(self):
        raw = '[{"sentence": "List [1] and ] bracket.", "label": "consistent"}] trailing ]'
        parsed = json.loads(extract_json_block(raw))
        assert parsed[0]["sentence"] == "List [1] and ] bracket."

    def test_refusal_has_no_json(self):
        with pytest.raises(NoJsonFound):
            extract_json_block("I cannot answer.")

    def test_unclosed_array_raises(self):
        with pytest.raises(UnbalancedBrackets):
            extract_json_block('[{"a": 1}, {"b": 2}')


FULL = Granularity.full_localization
REASON = Granularity.binary_reasoning
BINARY = Granularity.binary


def full_item(sentence, category="no error", reason="Because."):
    return {"sentence": sentence, "reason": reason, "category": category}


class TestParsing:
    def test_full_granularity_happy_path(self):
        sentences = ["First claim.", "Second claim."]
        raw = json.dumps([
            full_item("First claim."),
            full_item("Second claim.", "entity error"),
        ])
        parsed = parse_feedback(raw, sentences, FULL)
        assert [p.binary_label for p in parsed] == [0, 1]
        assert [p.category for p in parsed] == [ErrorCategory.no_error, ErrorCategory.entity]
        assert [p.sentence_index for p in parsed] == [1, 2]

    def test_reordered_items_realigned_by_text(self):
        sentences = ["First claim.", "Second claim."]
        raw = json.dumps([
            full_item("Second claim.", "entity error"),
            full_item("First claim."),
        ])
        parsed = parse_feedback(raw, sentences, FULL)
        assert parsed[0].sentence_text == "First claim."
        assert parsed[0].binary_label == 0
        assert parsed[1].binary_label == 1

    def test_paraphrased_sentences_fall_back_to_position(self):
        sentences = ["The first claim.", "The second claim."]
        raw = json.dumps([
            full_item("First claim, slightly rephrased."),
            full_item("Second claim, reworded.", "predicate error"),
        ])
        parsed = parse_feedback(raw, sentences, FULL)
        # Canonical text is kept even when the model rewrote the sentence.
        assert parsed[0].sentence_text == "The first claim."
        assert [p.binary_label for p in parsed] == [0, 1]

    def test_wrong_arity(self):
        raw = json.dumps([full_item("Only one.")])
        with pytest.raises(WrongArity):
            parse_feedback(raw, ["One.", "Two."], FULL)
        raw = json.dumps([full_item("A."), full_item("B."), full_item("C.")])
        with pytest.raises(WrongArity):
            parse_feedback(raw, ["A.", "B."], FULL)

    def test_single_bare_object_wrapped(self):
        # No array brackets at all: a lone object for a 1-sentence summary.
        parsed = parse_feedback(json.dumps(full_item("A.")), ["A."], FULL)
        assert len(parsed) == 1
        assert parsed[0].category is ErrorCategory.no_error

    def test_missing_keys(self):
        item = {"sentence": "A.", "category": "no error"}
        with pytest.raises(MissingKey, match="reason"):
            parse_feedback(json.dumps([item]), ["A."], FULL)
        item = {"sentence": "A.", "reason": "Because."}
        with pytest.raises(MissingKey, match="category"):
            parse_feedback(json.dumps([item]), ["A."], FULL)
        item = {"sentence": "A."}
        with pytest.raises(MissingKey, match="label"):
            parse_feedback(json.dumps([item]), ["A."], BINARY)

    def test_reasoning_key_alias(self):
        item = {"sentence": "A.", "reasoning": "Due to X.", "category": "no error"}
        parsed = parse_feedback(json.dumps([item]), ["A."], FULL)
        assert parsed[0].reasoning == "Due to X."

    def test_unknown_category_propagates(self):
        item = full_item("A.", category="vibes error")
        with pytest.raises(UnknownCategory):
            parse_feedback(json.dumps([item]), ["A."], FULL)

    @pytest.mark.parametrize("verdict,expected", [
        ("consistent", 0), ("Consistent", 0), ("inconsistent", 1),
        ("INCONSISTENT", 1), (0, 0), (1, 1), ("0", 0), ("1", 1),
    ])
    def test_verdict_forms(self, verdict, expected):
        item = {"sentence": "A.", "label": verdict}
        parsed = parse_feedback(json.dumps([item]), ["A."], BINARY)
        assert parsed[0].binary_label == expected

    def test_bad_verdict(self):
        item = {"sentence": "A.", "label": "maybe"}
        with pytest.raises(InvalidLabel):
            parse_feedback(json.dumps([item]), ["A."], BINARY)

    def test_invalid_json_inside_brackets(self):
        with pytest.raises(NoJsonFound):
            parse_feedback('[not json at all]', ["A."], BINARY)

    def test_non_object_items_rejected(self):
        with pytest.raises(NoJsonFound):
            parse_feedback('[1, 2]', ["A.", "B."], BINARY)


class TestSerializeRoundTrip:
    @pytest.mark.parametrize("granularity", [BINARY, REASON, FULL])
    def test_serialize_then_parse_recovers_record(self, granularity):
        rng = random.Random(f"roundtrip-{granularity.value}")
        for i in range(50):
            record = random_feedback_record(rng, granularity, f"d{i}")
            text = serialize_feedback(record.feedback, granularity)
            parsed = parse_feedback(
                text, [f.sentence_text for f in record.feedback], granularity
            )
            assert tuple(parsed) == record.feedback

    def test_serialized_key_order_is_stable(self):
        entries = (SentenceFeedback(1, "A.", 1, "Why.", ErrorCategory.entity),)
        text = serialize_feedback(entries, FULL)
        assert text.index('"sentence"') < text.index('"reason"') < text.index('"category"')


class TestConsolidation:
    def test_truth_table(self):
        assert consolidate(0, 0) == 0
        assert consolidate(1, 1) == 1
        assert consolidate(0, 1) is None
        assert consolidate(1, 0) is None

    def test_two_annotator_annotation(self):
        ann = HumanAnnotation("d", "s", (
            SentenceAnnotation((0, 0)),
            SentenceAnnotation((1, 1)),
            SentenceAnnotation((0, 1)),
            SentenceAnnotation((1, 0)),
        ), OriginalSplit.test)
        result = consolidate_annotation(ann)
        assert result.kept == ((1, 0), (2, 1))
        assert result.dropped == (3, 4)
        assert result.original_split == "test"

    def test_single_annotator_passthrough(self):
        ann = HumanAnnotation("d", "s", (SentenceAnnotation((1,)),))
        assert consolidate_annotation(ann).kept == ((1, 1),)

    def test_three_annotator_majority(self):
        ann = HumanAnnotation("d", "s", (
            SentenceAnnotation((1, 1, 0)),
            SentenceAnnotation((0, 0, 1)),
        ))
        assert consolidate_annotation(ann).kept == ((1, 1), (2, 0))

    def test_record_building_keeps_sparse_indices(self):
        ann = HumanAnnotation("d", "s", (
            SentenceAnnotation((0, 1)),
            SentenceAnnotation((1, 1)),
        ))
        record = consolidated_to_record(consolidate_annotation(ann), ["One.", "Two."])
        assert record is not None
        assert [f.sentence_index for f in record.feedback] == [2]
        assert record.source is FeedbackSource.human

    def test_fully_dropped_annotation_yields_none(self):
        ann = HumanAnnotation("d", "s", (SentenceAnnotation((0, 1)),))
        assert consolidated_to_record(consolidate_annotation(ann), ["One."]) is None


class TestRetry:
    def test_retries_until_parse_succeeds(self):
        outputs = iter(["garbage", "also garbage",
                        '[{"sentence": "A.", "label": "consistent"}]'])
        record, attempts = feedback_with_retry(
            lambda: next(outputs), "d", "s", ["A."], BINARY, max_attempts=3
        )
        assert attempts == 3
        assert record.binary_labels == [0]

    def test_exhausted_carries_last_error(self):
        with pytest.raises(Exhausted) as err:
            feedback_with_retry(lambda: "nope", "d", "s", ["A."], BINARY, max_attempts=2)
        assert err.value.attempts == 2
        assert isinstance(err.value.last_error, NoJsonFound)

    def test_transport_errors_propagate(self):
        def generate():
            raise RuntimeError("socket closed")

        with pytest.raises(RuntimeError):
            feedback_with_retry(generate, "d", "s", ["A."], BINARY)


class TestFeedbackJsonl:
    def test_roundtrip_all_granularities(self, tmp_path):
        rng = random.Random(11)
        records = [
            random_feedback_record(rng, g, f"d{i}-{g.value}")
            for g in Granularity for i in range(10)
        ]
        path = tmp_path / "feedback.jsonl"
        assert write_feedback(path, records) == len(records)
        assert load_feedback(path) == records

    def test_bad_row_reports_line(self, tmp_path):
        path = tmp_path / "feedback.jsonl"
        path.write_text(
            '{"doc_id": "d", "summarizer_id": "s", "granularity": "nope", '
            '"source": "llm", "feedback": [], "defaulted": false}\n',
            encoding="utf-8",
        )
        with pytest.raises(SchemaMismatch) as err:
            load_feedback(path)
        assert err.value.line == 1
