"""Evaluation metrics: balanced accuracy, correlations, and localization accuracy.

All statistics are computed from first principles (two-pass moments,
tie-averaged ranks, Student-t tail probabilities via the regularized
incomplete beta function) so the test suite can check them against
independent reference implementations.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Collection, Iterable, Mapping, Sequence

from .errors import (
    ConstantVector,
    CoverageMismatch,
    DegenerateGroundTruth,
    KeyMismatch,
    MisalignedInputs,
    TooFewPoints,
    TooFewSystems,
)
from .feedback import (
    LOCALIZABLE_CATEGORIES,
    ErrorCategory,
    FeedbackRecord,
)

# --- binary agreement ------------------------------------------------------


@dataclass(frozen=True)
class BinaryAgreement:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def tpr(self) -> float:
        return self.tp / (self.tp + self.fn)

    @property
    def tnr(self) -> float:
        return self.tn / (self.tn + self.fp)

    @property
    def balanced_accuracy(self) -> float:
        return (self.tpr + self.tnr) / 2.0

    @property
    def accuracy(self) -> float:
        n = self.tp + self.fp + self.tn + self.fn
        return (self.tp + self.tn) / n


def balanced_accuracy(gt: Sequence[int], pred: Sequence[int]) -> BinaryAgreement:
    """Mean of true-positive and true-negative rates, treating 1 (error) as positive.

    Ground truth must contain both classes; otherwise one rate is undefined
    and DegenerateGroundTruth is raised so callers can flag it instead of
    reporting a half-blind number.
    """
    if len(gt) != len(pred) or not gt:
        raise MisalignedInputs(
            f"label vectors must be non-empty and equal length, got {len(gt)} and {len(pred)}"
        )
    for v in (*gt, *pred):
        if v not in (0, 1):
            raise ValueError(f"labels must be 0 or 1, got {v!r}")
    tp = sum(1 for g, p in zip(gt, pred) if g == 1 and p == 1)
    fn = sum(1 for g, p in zip(gt, pred) if g == 1 and p == 0)
    tn = sum(1 for g, p in zip(gt, pred) if g == 0 and p == 0)
    fp = sum(1 for g, p in zip(gt, pred) if g == 0 and p == 1)
    if tp + fn == 0 or tn + fp == 0:
        raise DegenerateGroundTruth("ground truth contains a single class")
    return BinaryAgreement(tp, fp, tn, fn)


def faithfulness_score(labels: Sequence[int]) -> float:
    """Fraction of sentences labeled clean (0)."""
    if not labels:
        raise ValueError("cannot score an empty label vector")
    return sum(1 for v in labels if v == 0) / len(labels)


# --- special functions for p-values ----------------------------------------


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """Lentz's modified continued fraction for the incomplete beta integral."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        numer = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + numer * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numer / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        numer = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + numer * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numer / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 3e-16:
            break
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b), accurate to ~1e-12 over the parameter ranges used here."""
    if a <= 0 or b <= 0:
        raise ValueError("beta parameters must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    # Use the expansion on whichever side converges fast, mirror the other.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def correlation_p_value(r: float, n: int) -> float:
    """Two-sided p for a correlation of r over n points, via the exact
    Student-t relation t = r * sqrt((n - 2) / (1 - r^2))."""
    if n < 3:
        raise TooFewPoints(f"p-value needs at least 3 points, got {n}")
    denom = 1.0 - r * r
    if denom <= 0.0:
        return 0.0
    df = n - 2
    t_sq = r * r * df / denom
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t_sq))


# --- correlations ----------------------------------------------------------


@dataclass(frozen=True)
class Correlation:
    r: float
    p: float
    n: int


def pearson(x: Sequence[float], y: Sequence[float]) -> Correlation:
    """Pearson correlation via two-pass centered moments, with exact-t p-value."""
    if len(x) != len(y):
        raise MisalignedInputs(f"vector lengths differ: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 3:
        raise TooFewPoints(f"correlation needs at least 3 points, got {n}")
    mx = sum(x) / n
    my = sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
    var_x = sum((a - mx) ** 2 for a in x)
    var_y = sum((b - my) ** 2 for b in y)
    if var_x == 0.0 or var_y == 0.0:
        raise ConstantVector("correlation is undefined for a constant vector")
    r = cov / math.sqrt(var_x * var_y)
    r = max(-1.0, min(1.0, r))
    return Correlation(r, correlation_p_value(r, n), n)


def average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ascending ranks; tied values share the mean of their positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        shared = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = shared
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> Correlation:
    """Spearman rank correlation: Pearson over tie-averaged ranks."""
    if len(x) != len(y):
        raise MisalignedInputs(f"vector lengths differ: {len(x)} vs {len(y)}")
    if len(x) < 3:
        raise TooFewSystems(f"rank correlation needs at least 3 points, got {len(x)}")
    return pearson(average_ranks(x), average_ranks(y))


def spearman_system(
    gt_scores: Mapping[str, Sequence[float]],
    pred_scores: Mapping[str, Sequence[float]],
) -> Correlation:
    """Rank agreement between two system orderings.

    Each system's scores are averaged, systems are ranked by mean, and the
    two rankings are correlated. Both maps must cover the same systems.
    """
    if set(gt_scores) != set(pred_scores):
        only_gt = sorted(set(gt_scores) - set(pred_scores))
        only_pred = sorted(set(pred_scores) - set(gt_scores))
        raise KeyMismatch(
            f"system sets differ: only in gt {only_gt}, only in pred {only_pred}"
        )
    if len(gt_scores) < 3:
        raise TooFewSystems(f"need at least 3 systems, got {len(gt_scores)}")
    systems = sorted(gt_scores)
    for name, scores in (("gt", gt_scores), ("pred", pred_scores)):
        for system in systems:
            if not scores[system]:
                raise MisalignedInputs(f"{name} scores for system {system!r} are empty")
    gt_means = [sum(gt_scores[s]) / len(gt_scores[s]) for s in systems]
    pred_means = [sum(pred_scores[s]) / len(pred_scores[s]) for s in systems]
    return spearman(pred_means, gt_means)


# --- localization ----------------------------------------------------------


@dataclass(frozen=True)
class LocalizationReport:
    per_category: dict[ErrorCategory, float]
    predicted_counts: dict[ErrorCategory, int]
    correct_counts: dict[ErrorCategory, int]
    mean_accuracy: float


def localization_accuracy(
    items: Iterable[tuple[ErrorCategory, Collection[ErrorCategory]]],
) -> LocalizationReport:
    """Per-category precision of error localization.

    Each item is (predicted category, set of categories any annotator
    assigned); a prediction counts as correct if any annotator agrees.
    Accuracy for a category is correct / predicted over sentences where
    that category was predicted. The headline number is the unweighted
    mean over the seven localizable categories; categories never predicted
    are left out of the mean.
    """
    predicted: Counter[ErrorCategory] = Counter()
    correct: Counter[ErrorCategory] = Counter()
    for pred_cat, acceptable in items:
        if pred_cat not in LOCALIZABLE_CATEGORIES:
            continue
        predicted[pred_cat] += 1
        if pred_cat in acceptable:
            correct[pred_cat] += 1
    per_category = {
        cat: correct[cat] / predicted[cat]
        for cat in LOCALIZABLE_CATEGORIES
        if predicted[cat] > 0
    }
    if not per_category:
        raise MisalignedInputs("no localizable predictions to score")
    mean = sum(per_category.values()) / len(per_category)
    return LocalizationReport(per_category, dict(predicted), dict(correct), mean)


def error_distribution(records: Iterable[FeedbackRecord]) -> dict[ErrorCategory, int]:
    """Count sentence verdicts by category across records that carry categories."""
    counts: Counter[ErrorCategory] = Counter()
    for record in records:
        for f in record.feedback:
            if f.category is not None:
                counts[f.category] += 1
    return {cat: counts[cat] for cat in ErrorCategory if counts[cat]}


# --- end-to-end evaluation --------------------------------------------------


@dataclass(frozen=True)
class DomainSlice:
    n_pairs: int
    n_sentences: int
    balanced_accuracy: float | None
    tpr: float | None
    tnr: float | None
    pearson_r: float | None = None
    pearson_p: float | None = None
    spearman_rho: float | None = None
    spearman_p: float | None = None


@dataclass(frozen=True)
class EvalReport:
    n_pairs: int
    n_sentences: int
    balanced_accuracy: float | None
    tpr: float | None
    tnr: float | None
    bacc_degenerate: bool
    pearson_r: float | None
    pearson_p: float | None
    spearman_rho: float | None
    spearman_p: float | None
    n_systems: int
    system_faithfulness_pred: dict[str, float]
    system_faithfulness_gt: dict[str, float]
    per_domain: dict[str, DomainSlice] = field(default_factory=dict)
    defaulted_fraction: float = 0.0

    def to_dict(self) -> dict:
        out = {
            "n_pairs": self.n_pairs,
            "n_sentences": self.n_sentences,
            "balanced_accuracy": self.balanced_accuracy,
            "tpr": self.tpr,
            "tnr": self.tnr,
            "bacc_degenerate": self.bacc_degenerate,
            "pearson_r": self.pearson_r,
            "pearson_p": self.pearson_p,
            "spearman_rho": self.spearman_rho,
            "spearman_p": self.spearman_p,
            "n_systems": self.n_systems,
            "system_faithfulness_pred": self.system_faithfulness_pred,
            "system_faithfulness_gt": self.system_faithfulness_gt,
            "defaulted_fraction": self.defaulted_fraction,
            "per_domain": {
                d: vars(s).copy() for d, s in sorted(self.per_domain.items())
            },
        }
        return out


def eval_report_from_dict(d: dict) -> EvalReport:
    """Rebuild an EvalReport from its to_dict() form (e.g. a report JSON file)."""
    per_domain = {
        name: DomainSlice(**slice_dict)
        for name, slice_dict in d.get("per_domain", {}).items()
    }
    return EvalReport(
        n_pairs=d["n_pairs"],
        n_sentences=d["n_sentences"],
        balanced_accuracy=d.get("balanced_accuracy"),
        tpr=d.get("tpr"),
        tnr=d.get("tnr"),
        bacc_degenerate=d.get("bacc_degenerate", False),
        pearson_r=d.get("pearson_r"),
        pearson_p=d.get("pearson_p"),
        spearman_rho=d.get("spearman_rho"),
        spearman_p=d.get("spearman_p"),
        n_systems=d.get("n_systems", 0),
        system_faithfulness_pred=d.get("system_faithfulness_pred", {}),
        system_faithfulness_gt=d.get("system_faithfulness_gt", {}),
        per_domain=per_domain,
        defaulted_fraction=d.get("defaulted_fraction", 0.0),
    )


# Domain slices below this many pairs are dropped as statistically flimsy.
MIN_DOMAIN_PAIRS = 21


class _DomainAccumulator:
    """Collects one domain's labels and scores during evaluation."""

    def __init__(self):
        self.gt_labels: list[int] = []
        self.pred_labels: list[int] = []
        self.faith_gt: list[float] = []
        self.faith_pred: list[float] = []
        self.by_system_gt: defaultdict[str, list[float]] = defaultdict(list)
        self.by_system_pred: defaultdict[str, list[float]] = defaultdict(list)

    @property
    def n_pairs(self) -> int:
        return len(self.faith_gt)

    def add(self, system, gt_labels, pred_labels, faith_gt, faith_pred) -> None:
        self.gt_labels.extend(gt_labels)
        self.pred_labels.extend(pred_labels)
        self.faith_gt.append(faith_gt)
        self.faith_pred.append(faith_pred)
        self.by_system_gt[system].append(faith_gt)
        self.by_system_pred[system].append(faith_pred)

    def to_slice(self) -> DomainSlice:
        bacc = tpr = tnr = None
        try:
            agreement = balanced_accuracy(self.gt_labels, self.pred_labels)
            bacc, tpr, tnr = agreement.balanced_accuracy, agreement.tpr, agreement.tnr
        except DegenerateGroundTruth:
            pass
        r = p = None
        try:
            corr = pearson(self.faith_pred, self.faith_gt)
            r, p = corr.r, corr.p
        except (ConstantVector, TooFewPoints):
            pass
        rho = rho_p = None
        try:
            rank_corr = spearman_system(self.by_system_gt, self.by_system_pred)
            rho, rho_p = rank_corr.r, rank_corr.p
        except (ConstantVector, TooFewPoints, TooFewSystems):
            pass
        return DomainSlice(
            self.n_pairs, len(self.gt_labels), bacc, tpr, tnr, r, p, rho, rho_p
        )


def _pair_labels(
    gt: FeedbackRecord, pred: FeedbackRecord
) -> tuple[list[int], list[int]]:
    """Align one pair on the ground truth's (possibly sparse) sentence indices."""
    pred_by_index = {f.sentence_index: f.binary_label for f in pred.feedback}
    gt_labels: list[int] = []
    pred_labels: list[int] = []
    for f in gt.feedback:
        if f.sentence_index not in pred_by_index:
            raise KeyMismatch(
                f"pair {gt.key}: prediction lacks sentence {f.sentence_index}"
            )
        gt_labels.append(f.binary_label)
        pred_labels.append(pred_by_index[f.sentence_index])
    return gt_labels, pred_labels


def evaluate(
    gt_records: Sequence[FeedbackRecord],
    pred_records: Sequence[FeedbackRecord],
    doc_domains: Mapping[str, str] | None = None,
) -> EvalReport:
    """Score predictions against ground truth at three granularities.

    Sentence level: balanced accuracy over the pooled binary labels.
    Summary level: Pearson between per-pair faithfulness scores.
    System level: Spearman between mean-faithfulness rankings of the
    summarizers (requires at least 3 systems; otherwise left unset).

    Every ground-truth pair must have a prediction; extra predictions are
    ignored. Correlations that are undefined (constant vectors, too few
    points) are reported as None rather than raised, since a degenerate
    slice of a real evaluation should not abort the run.
    """
    gt_by_key = {r.key: r for r in gt_records}
    pred_by_key = {r.key: r for r in pred_records}
    if len(gt_by_key) != len(gt_records):
        raise MisalignedInputs("duplicate (doc_id, summarizer_id) keys in ground truth")
    missing = sorted(k for k in gt_by_key if k not in pred_by_key)
    if missing:
        extra = sorted(k for k in pred_by_key if k not in gt_by_key)
        raise CoverageMismatch(
            f"predictions missing for {len(missing)} ground-truth pairs",
            missing=[f"{d}/{s}" for d, s in missing],
            extra=[f"{d}/{s}" for d, s in extra],
        )
    if not gt_by_key:
        raise MisalignedInputs("no ground-truth records to evaluate")

    all_gt: list[int] = []
    all_pred: list[int] = []
    faith_gt: list[float] = []
    faith_pred: list[float] = []
    by_system_gt: defaultdict[str, list[float]] = defaultdict(list)
    by_system_pred: defaultdict[str, list[float]] = defaultdict(list)
    by_domain: defaultdict[str, _DomainAccumulator] = defaultdict(_DomainAccumulator)
    defaulted = 0

    for key in sorted(gt_by_key):
        gt = gt_by_key[key]
        pred = pred_by_key[key]
        gt_labels, pred_labels = _pair_labels(gt, pred)
        all_gt.extend(gt_labels)
        all_pred.extend(pred_labels)
        faith_gt.append(faithfulness_score(gt_labels))
        faith_pred.append(faithfulness_score(pred_labels))
        by_system_gt[gt.summarizer_id].append(faith_gt[-1])
        by_system_pred[gt.summarizer_id].append(faith_pred[-1])
        if pred.defaulted:
            defaulted += 1
        if doc_domains and gt.doc_id in doc_domains:
            by_domain[doc_domains[gt.doc_id]].add(
                gt.summarizer_id, gt_labels, pred_labels, faith_gt[-1], faith_pred[-1]
            )

    bacc = tpr = tnr = None
    degenerate = False
    try:
        agreement = balanced_accuracy(all_gt, all_pred)
        bacc, tpr, tnr = agreement.balanced_accuracy, agreement.tpr, agreement.tnr
    except DegenerateGroundTruth:
        degenerate = True

    pearson_r = pearson_p = None
    try:
        corr = pearson(faith_pred, faith_gt)
        pearson_r, pearson_p = corr.r, corr.p
    except (ConstantVector, TooFewPoints):
        pass

    systems = sorted(by_system_gt)
    mean_gt = {s: sum(v) / len(v) for s, v in by_system_gt.items()}
    mean_pred = {s: sum(v) / len(v) for s, v in by_system_pred.items()}
    spearman_rho = spearman_p = None
    try:
        rank_corr = spearman_system(by_system_gt, by_system_pred)
        spearman_rho, spearman_p = rank_corr.r, rank_corr.p
    except (ConstantVector, TooFewPoints, TooFewSystems):
        pass

    per_domain = {
        domain: acc.to_slice()
        for domain, acc in by_domain.items()
        if acc.n_pairs >= MIN_DOMAIN_PAIRS
    }

    return EvalReport(
        n_pairs=len(gt_by_key),
        n_sentences=len(all_gt),
        balanced_accuracy=bacc,
        tpr=tpr,
        tnr=tnr,
        bacc_degenerate=degenerate,
        pearson_r=pearson_r,
        pearson_p=pearson_p,
        spearman_rho=spearman_rho,
        spearman_p=spearman_p,
        n_systems=len(systems),
        system_faithfulness_pred=mean_pred,
        system_faithfulness_gt=mean_gt,
        per_domain=per_domain,
        defaulted_fraction=defaulted / len(gt_by_key),
    )
