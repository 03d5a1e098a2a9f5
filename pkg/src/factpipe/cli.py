"""Command-line pipeline driver.

Subcommands mirror the pipeline stages: summarize -> feedback ->
consolidate/split -> export-sft -> evaluate -> report, plus stats for
quick dataset inspection. Every command that writes outputs also drops a
run_config.json beside them recording exactly how it was invoked.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .corpus import (
    load_annotations,
    load_corpus,
    load_summaries,
    split_train_test,
    write_summaries,
)
from .errors import FactpipeError, SchemaMismatch
from .exporter import dataset_stats, export_sft, subsample
from .feedback import (
    consolidate_annotation,
    consolidated_to_record,
    load_feedback,
    write_feedback,
)
from .gateway import (
    EndpointConfig,
    UsageStats,
    generate_feedback_batch,
    generate_summaries,
)
from .jsonl import dump_json, read_jsonl, write_jsonl
from .metrics import evaluate, eval_report_from_dict
from .prompts import GRANULARITY_ALIASES, TEMPLATE_VERSION
from .reporting import write_eval_outputs, write_feedback_outputs

log = logging.getLogger(__name__)


def _load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaMismatch(f"cannot read config {path}: {exc}") from None


def _endpoint(d: dict, role: str) -> EndpointConfig:
    try:
        return EndpointConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise SchemaMismatch(f"bad {role} endpoint config: {exc}") from None


def _summarizer_endpoints(config: dict) -> list[EndpointConfig]:
    entries = config.get("summarizers")
    if not entries:
        raise SchemaMismatch("config has no 'summarizers' list")
    return [_endpoint(e, "summarizer") for e in entries]


def _verifier_endpoint(config: dict, concurrency: int | None) -> EndpointConfig:
    entry = config.get("verifier")
    if not entry:
        raise SchemaMismatch("config has no 'verifier' entry")
    endpoint = _endpoint(entry, "verifier")
    if concurrency is not None:
        endpoint = dataclasses.replace(endpoint, max_concurrency=concurrency)
    return endpoint


def _write_run_config(target: Path, args: argparse.Namespace, command: str) -> None:
    out_dir = target if target.is_dir() else target.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_json(out_dir / "run_config.json", {
        "command": command,
        "argv": getattr(args, "_argv", []),
        "seed": getattr(args, "seed", None),
        "template_version": TEMPLATE_VERSION,
        "package_version": __version__,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    })


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


# --- subcommand handlers ---------------------------------------------------


def cmd_summarize(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    documents = load_corpus(args.docs)
    endpoints = _summarizer_endpoints(config)
    stats = UsageStats()
    ordered = [documents[k] for k in sorted(documents)]
    records, failures = generate_summaries(
        ordered, endpoints, rng_seed=args.seed, stats=stats
    )
    out = Path(args.out)
    write_summaries(out, sorted(records, key=lambda r: r.key))
    if args.failures:
        write_jsonl(args.failures, (f.to_dict() for f in failures))
    _write_run_config(out, args, "summarize")
    _emit({
        "summaries": len(records),
        "failures": len(failures),
        "usage": stats.to_dict(),
    })
    return 0 if records else 1


def cmd_feedback(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    documents = load_corpus(args.docs)
    summaries = load_summaries(args.summaries)
    endpoint = _verifier_endpoint(config, args.concurrency)
    granularity = GRANULARITY_ALIASES[args.granularity]
    missing_docs = sorted({s.doc_id for s in summaries} - set(documents))
    if missing_docs:
        raise SchemaMismatch(
            f"summaries reference unknown documents: {missing_docs[:5]}"
        )
    stats = UsageStats()
    records, failures = generate_feedback_batch(
        documents, summaries, endpoint, granularity,
        rng_seed=args.seed, stats=stats,
    )
    out = Path(args.out)
    write_feedback(out, sorted(records, key=lambda r: r.key))
    if args.failures:
        write_jsonl(args.failures, (f.to_dict() for f in failures))
    _write_run_config(out, args, "feedback")
    _emit({
        "feedback_records": len(records),
        "failures": len(failures),
        "granularity": granularity.value,
        "usage": stats.to_dict(),
    })
    return 0 if records else 1


def cmd_consolidate(args: argparse.Namespace) -> int:
    annotations = load_annotations(args.annotations)
    summaries = {s.key: s for s in load_summaries(args.summaries)}
    records = []
    dropped_sentences = 0
    dropped_records = 0
    for annotation in annotations:
        if annotation.key not in summaries:
            raise SchemaMismatch(
                f"annotation {annotation.key} has no matching summary"
            )
        consolidated = consolidate_annotation(annotation)
        dropped_sentences += len(consolidated.dropped)
        record = consolidated_to_record(
            consolidated, summaries[annotation.key].sentences
        )
        if record is None:
            dropped_records += 1
        else:
            records.append(record)
    out = Path(args.out)
    write_feedback(out, sorted(records, key=lambda r: r.key))
    _write_run_config(out, args, "consolidate")
    _emit({
        "records": len(records),
        "dropped_records": dropped_records,
        "dropped_sentences": dropped_sentences,
    })
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    records = load_feedback(args.records)
    is_test_flagged = None
    if args.annotations:
        flags = {
            a.key: a.original_split.value == "test"
            for a in load_annotations(args.annotations)
        }
        is_test_flagged = lambda r: flags.get(r.key, False)  # noqa: E731
    train, test = split_train_test(
        records, args.test_fraction, args.seed,
        is_test_flagged=is_test_flagged, sort_key=lambda r: r.key,
    )
    write_feedback(args.train_out, train)
    write_feedback(args.test_out, test)
    _write_run_config(Path(args.train_out), args, "split")
    _emit({"train": len(train), "test": len(test)})
    return 0


def cmd_export_sft(args: argparse.Namespace) -> int:
    records = load_feedback(args.feedback)
    documents = load_corpus(args.docs)
    out = Path(args.out)
    stats = export_sft(records, documents, out)
    final = stats.written
    if args.fraction is not None:
        rows = [row for _, row in read_jsonl(out)]
        picked = subsample(rows, args.fraction, args.seed)
        final = write_jsonl(out, picked)
    _write_run_config(out, args, "export-sft")
    _emit({
        "written": stats.written,
        "skipped_defaulted": stats.skipped_defaulted,
        "skipped_sparse": stats.skipped_sparse,
        "final": final,
    })
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    gt = load_feedback(args.gt)
    pred = load_feedback(args.pred)
    doc_domains = None
    if args.docs:
        documents = load_corpus(args.docs)
        doc_domains = {d.doc_id: d.domain.value for d in documents.values()}
    report = evaluate(gt, pred, doc_domains)
    out = Path(args.out)
    dump_json(out, report.to_dict())
    _write_run_config(out, args, "evaluate")
    _emit({
        "n_pairs": report.n_pairs,
        "balanced_accuracy": report.balanced_accuracy,
        "pearson_r": report.pearson_r,
        "spearman_rho": report.spearman_rho,
        "defaulted_fraction": report.defaulted_fraction,
    })
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    if not args.eval and not args.feedback:
        raise SchemaMismatch("report needs --eval and/or --feedback input")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if args.eval:
        with open(args.eval, encoding="utf-8") as fh:
            report = eval_report_from_dict(json.load(fh))
        written.extend(write_eval_outputs(report, out_dir))
    if args.feedback:
        written.extend(write_feedback_outputs(load_feedback(args.feedback), out_dir))
    _write_run_config(out_dir, args, "report")
    _emit({"artifacts": [str(p) for p in written]})
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    rows = (row for _, row in read_jsonl(args.sft))
    _emit(dataset_stats(rows))
    return 0


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="factpipe",
        description="Sentence-level factuality feedback pipeline for summarization.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="enable debug logging"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("summarize", help="generate summaries from every endpoint")
    p.add_argument("--config", required=True, help="endpoint config JSON")
    p.add_argument("--docs", required=True, help="document corpus JSONL")
    p.add_argument("--out", required=True, help="summaries JSONL to write")
    p.add_argument("--failures", help="optional failure report JSONL")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("feedback", help="collect sentence-level feedback")
    p.add_argument("--config", required=True)
    p.add_argument("--docs", required=True)
    p.add_argument("--summaries", required=True)
    p.add_argument(
        "--granularity", default="localization",
        choices=sorted(GRANULARITY_ALIASES),
    )
    p.add_argument("--out", required=True)
    p.add_argument("--failures")
    p.add_argument("--concurrency", type=int, help="override endpoint concurrency")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_feedback)

    p = sub.add_parser("consolidate", help="resolve multi-annotator labels")
    p.add_argument("--annotations", required=True)
    p.add_argument("--summaries", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_consolidate)

    p = sub.add_parser("split", help="train/test split honoring original test flags")
    p.add_argument("--records", required=True, help="feedback JSONL to split")
    p.add_argument("--annotations", help="annotations JSONL carrying original splits")
    p.add_argument("--test-fraction", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-out", required=True)
    p.add_argument("--test-out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("export-sft", help="write fine-tuning conversations")
    p.add_argument("--feedback", required=True)
    p.add_argument("--docs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fraction", type=float, help="subsample to this fraction")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_export_sft)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("--gt", required=True, help="ground-truth feedback JSONL")
    p.add_argument("--pred", required=True, help="predicted feedback JSONL")
    p.add_argument("--docs", help="corpus JSONL, enables per-domain slices")
    p.add_argument("--out", required=True, help="evaluation report JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="render CSV tables and figures")
    p.add_argument("--eval", help="evaluation report JSON")
    p.add_argument("--feedback", help="feedback JSONL for distribution charts")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("stats", help="summarize an SFT file")
    p.add_argument("--sft", required=True)
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = argv
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (FactpipeError, OSError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
