"""Render evaluation results as CSV tables and matplotlib figures.

Everything lands in one output directory: machine-readable CSVs next to
PNG charts for the same numbers, plus the raw report JSON.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .feedback import CANONICAL_NAMES, FeedbackRecord
from .jsonl import dump_json
from .metrics import EvalReport, average_ranks, error_distribution

log = logging.getLogger(__name__)


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_eval_outputs(report: EvalReport, out_dir: str | Path) -> list[Path]:
    """Write report JSON, metric/ranking/domain CSVs, and charts."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    json_path = out / "eval_report.json"
    dump_json(json_path, report.to_dict())
    written.append(json_path)

    headline = [
        ("n_pairs", report.n_pairs),
        ("n_sentences", report.n_sentences),
        ("balanced_accuracy", report.balanced_accuracy),
        ("tpr", report.tpr),
        ("tnr", report.tnr),
        ("bacc_degenerate", report.bacc_degenerate),
        ("pearson_r", report.pearson_r),
        ("pearson_p", report.pearson_p),
        ("spearman_rho", report.spearman_rho),
        ("spearman_p", report.spearman_p),
        ("n_systems", report.n_systems),
        ("defaulted_fraction", report.defaulted_fraction),
    ]
    written.append(_write_csv(
        out / "metrics.csv", ["metric", "value"],
        [(k, _fmt(v)) for k, v in headline],
    ))

    systems = sorted(report.system_faithfulness_gt)
    if systems:
        gt_vals = [report.system_faithfulness_gt[s] for s in systems]
        pred_vals = [report.system_faithfulness_pred[s] for s in systems]
        gt_ranks = average_ranks(gt_vals)
        pred_ranks = average_ranks(pred_vals)
        written.append(_write_csv(
            out / "system_ranking.csv",
            ["summarizer_id", "faithfulness_gt", "faithfulness_pred",
             "rank_gt", "rank_pred"],
            [
                (s, _fmt(g), _fmt(p), _fmt(rg), _fmt(rp))
                for s, g, p, rg, rp in zip(
                    systems, gt_vals, pred_vals, gt_ranks, pred_ranks
                )
            ],
        ))
        written.append(_plot_system_bars(out, systems, gt_vals, pred_vals))

    if report.per_domain:
        written.append(_write_csv(
            out / "per_domain.csv",
            ["domain", "n_pairs", "n_sentences", "balanced_accuracy", "tpr", "tnr",
             "pearson_r", "pearson_p", "spearman_rho", "spearman_p"],
            [
                (d, s.n_pairs, s.n_sentences, _fmt(s.balanced_accuracy),
                 _fmt(s.tpr), _fmt(s.tnr), _fmt(s.pearson_r), _fmt(s.pearson_p),
                 _fmt(s.spearman_rho), _fmt(s.spearman_p))
                for d, s in sorted(report.per_domain.items())
            ],
        ))
        written.append(_plot_domain_bars(out, report))

    log.info("wrote %d evaluation artifacts to %s", len(written), out)
    return written


def _plot_system_bars(
    out: Path, systems: list[str], gt_vals: list[float], pred_vals: list[float]
) -> Path:
    fig, ax = plt.subplots(figsize=(max(6, len(systems) * 0.9), 4))
    xs = range(len(systems))
    width = 0.4
    ax.bar([x - width / 2 for x in xs], gt_vals, width, label="human")
    ax.bar([x + width / 2 for x in xs], pred_vals, width, label="predicted")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(systems, rotation=45, ha="right")
    ax.set_ylabel("mean faithfulness")
    ax.set_ylim(0, 1.05)
    ax.set_title("Per-summarizer faithfulness")
    ax.legend()
    fig.tight_layout()
    path = out / "system_faithfulness.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _plot_domain_bars(out: Path, report: EvalReport) -> Path:
    domains = sorted(report.per_domain)
    values = [report.per_domain[d].balanced_accuracy or 0.0 for d in domains]
    fig, ax = plt.subplots(figsize=(max(6, len(domains) * 0.9), 4))
    ax.bar(range(len(domains)), values)
    ax.set_xticks(range(len(domains)))
    ax.set_xticklabels(domains, rotation=45, ha="right")
    ax.set_ylabel("balanced accuracy")
    ax.set_ylim(0, 1.05)
    ax.set_title("Sentence-level agreement by domain")
    fig.tight_layout()
    path = out / "domain_balanced_accuracy.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_feedback_outputs(
    records: Sequence[FeedbackRecord], out_dir: str | Path
) -> list[Path]:
    """Distribution tables and charts for a feedback file: category counts
    and a faithfulness histogram."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    counts = error_distribution(records)
    total = sum(counts.values())
    if counts:
        written.append(_write_csv(
            out / "error_distribution.csv",
            ["category", "count", "fraction"],
            [
                (CANONICAL_NAMES[cat], n, _fmt(n / total))
                for cat, n in counts.items()
            ],
        ))
        fig, ax = plt.subplots(figsize=(7, 4))
        names = [CANONICAL_NAMES[c] for c in counts]
        ax.bar(range(len(counts)), list(counts.values()))
        ax.set_xticks(range(len(counts)))
        ax.set_xticklabels(names, rotation=45, ha="right")
        ax.set_ylabel("sentences")
        ax.set_title("Error category distribution")
        fig.tight_layout()
        path = out / "error_distribution.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    scores = [r.faithfulness for r in records]
    bins = [i / 10 for i in range(11)]
    hist = [0] * 10
    for s in scores:
        hist[min(9, int(s * 10))] += 1
    written.append(_write_csv(
        out / "faithfulness_histogram.csv",
        ["bin_low", "bin_high", "count"],
        [(f"{bins[i]:.1f}", f"{bins[i + 1]:.1f}", hist[i]) for i in range(10)],
    ))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(scores, bins=bins, edgecolor="black")
    ax.set_xlabel("faithfulness")
    ax.set_ylabel("summaries")
    ax.set_title("Summary faithfulness distribution")
    fig.tight_layout()
    path = out / "faithfulness_histogram.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    log.info("wrote %d feedback artifacts to %s", len(written), out)
    return written
