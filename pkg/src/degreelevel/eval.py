"""Metrics, stratified k-fold cross-validation and report serialization."""

from __future__ import annotations

import csv
import json
import logging
from copy import deepcopy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import DegreeRecord
from .errors import GradeMismatch, LengthMismatch, TooFewSamples
from .pipeline import DegreeClassifier, PipelineConfig, Resources
from .taxonomy import LabelSet, Taxonomy, default_taxonomy

log = logging.getLogger(__name__)

REPORT_VERSION = 1


def _check(preds: Sequence[LabelSet], golds: Sequence[LabelSet]):
    if len(preds) != len(golds):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(golds)} gold sets")
    for p, g in zip(preds, golds):
        if p.grade != g.grade:
            raise GradeMismatch(f"prediction grade {p.grade} vs gold grade {g.grade}")


def subset_accuracy(preds: Sequence[LabelSet], golds: Sequence[LabelSet]) -> float:
    """Fraction of samples whose predicted set equals the gold set exactly."""
    _check(preds, golds)
    if not preds:
        return 0.0
    return sum(p.members == g.members for p, g in zip(preds, golds)) / len(preds)


@dataclass
class CategoryStats:
    precision: float
    recall: float
    accuracy: float
    support: int


@dataclass
class EvalReport:
    grade: int
    categories: list[str]
    subset_accuracy: float
    projected_accuracy: float
    per_category: dict[str, CategoryStats]
    confusion: np.ndarray
    n_samples: int
    fold_results: list[float] = field(default_factory=list)
    scenario: str = ""
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "scenario": self.scenario,
            "grade": self.grade,
            "seed": self.seed,
            "n_samples": self.n_samples,
            "subset_accuracy": self.subset_accuracy,
            "projected_accuracy": self.projected_accuracy,
            "fold_results": list(self.fold_results),
            "categories": list(self.categories),
            "per_category": {c: vars(s) for c, s in self.per_category.items()},
            "confusion": self.confusion.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    def write_confusion_csv(self, path: str | Path) -> None:
        """Rows are gold highest levels, columns predicted highest levels."""
        with open(path, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["gold\\predicted"] + self.categories)
            for name, row in zip(self.categories, self.confusion):
                w.writerow([name] + [int(x) for x in row])


def per_category(preds: Sequence[LabelSet], golds: Sequence[LabelSet], k: int) -> list[CategoryStats]:
    """A sample supports every category in its gold set. ``accuracy`` is the
    share of supporting samples whose prediction contains the category,
    i.e. the same quantity as recall."""
    out = []
    for c in range(k):
        tp = sum(c in p and c in g for p, g in zip(preds, golds))
        pred_pos = sum(c in p for p in preds)
        support = sum(c in g for g in golds)
        precision = tp / pred_pos if pred_pos else 0.0
        recall = tp / support if support else 0.0
        out.append(CategoryStats(precision, recall, recall, support))
    return out


def confusion_matrix(preds, golds, taxonomy: Taxonomy, grade: int) -> np.ndarray:
    k = taxonomy.category_count(grade)
    m = np.zeros((k, k), dtype=np.int64)
    for p, g in zip(preds, golds):
        m[taxonomy.highest_level(g), taxonomy.highest_level(p)] += 1
    return m


def evaluate(preds: Sequence[LabelSet], golds: Sequence[LabelSet], grade: int,
             taxonomy: Taxonomy | None = None, scenario: str = "") -> EvalReport:
    taxonomy = taxonomy or default_taxonomy()
    _check(preds, golds)
    for g in golds:
        if g.grade != grade:
            raise GradeMismatch(f"gold labels are grade {g.grade}, expected {grade}")
    conf = confusion_matrix(preds, golds, taxonomy, grade)
    names = list(taxonomy.category_names(grade))
    stats = per_category(preds, golds, len(names))
    n = len(golds)
    return EvalReport(grade, names, subset_accuracy(preds, golds),
                      float(np.trace(conf) / n) if n else 0.0,
                      dict(zip(names, stats)), conf, n, scenario=scenario)


def evaluate_classifier(clf: DegreeClassifier, records: Sequence[DegreeRecord], scenario: str = "") -> EvalReport:
    records = [r for r in records if r.usable]
    preds = [row.labels for row in clf.predict_records(records)]
    golds = [clf.target(r.gold) for r in records]
    return evaluate(preds, golds, clf.config.grade, clf.res.taxonomy, scenario or clf.config.scenario)


def stratified_folds(strata: Sequence[int], k: int, seed: int) -> list[np.ndarray]:
    """Disjoint folds covering all indices. Within each stratum (visited in
    sorted order) a seeded shuffle is dealt round-robin, continuing where the
    previous stratum stopped, so per-fold stratum counts differ by at most one
    and fold sizes differ by at most one."""
    if k < 2:
        raise TooFewSamples("k must be at least 2")
    if len(strata) < k:
        raise TooFewSamples(f"{len(strata)} samples cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    strata = np.asarray(strata)
    folds = [[] for _ in range(k)]
    slot = 0
    for s in np.unique(strata):
        idx = np.flatnonzero(strata == s)
        idx = idx[rng.permutation(len(idx))]
        for i in idx:
            folds[slot % k].append(int(i))
            slot += 1
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


def kfold_cv(records: Sequence[DegreeRecord], k: int = 10, config: PipelineConfig | None = None,
             seed: int = 0, resources: Resources | None = None) -> EvalReport:
    """Stratified k-fold CV of the full pipeline (preprocessing is fit per fold).

    Folds depend only on (gold highest levels, k, seed), so scenarios run
    with the same seed share the same partition. Per-fold model and shuffle
    seeds are derived from ``seed`` and the fold index.
    """
    config = config or PipelineConfig()
    resources = resources or Resources.default()
    tx = resources.taxonomy
    records = [r for r in records if r.usable]
    if len(records) < max(k, 1):
        raise TooFewSamples(f"{len(records)} usable samples cannot fill {k} folds")
    strata = [tx.highest_level(r.gold) for r in records]
    folds = stratified_folds(strata, k, seed)
    fold_acc, preds, golds = [], [], []
    for i, test_idx in enumerate(folds):
        train_mask = np.ones(len(records), dtype=bool)
        train_mask[test_idx] = False
        cfg = deepcopy(config)
        cfg.model.seed = seed * 1000 + i
        cfg.train.seed = seed * 1000 + i
        clf = DegreeClassifier(cfg, resources)
        clf.fit([r for r, m in zip(records, train_mask) if m])
        test = [records[j] for j in test_idx]
        p = [row.labels for row in clf.predict_records(test)]
        g = [clf.target(r.gold) for r in test]
        acc = subset_accuracy(p, g)
        log.info("fold %d/%d: subset accuracy %.4f", i + 1, k, acc)
        fold_acc.append(acc)
        preds += p
        golds += g
    report = evaluate(preds, golds, config.grade, tx, config.scenario)
    report.fold_results = fold_acc
    report.subset_accuracy = float(np.mean(fold_acc))
    report.seed = seed
    return report


def write_comparison_csv(reports: Sequence[EvalReport], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["scenario", "grade", "subset_accuracy", "projected_accuracy", "n_samples"])
        for r in reports:
            w.writerow([r.scenario, r.grade, f"{r.subset_accuracy:.6f}", f"{r.projected_accuracy:.6f}",
                        r.n_samples])
