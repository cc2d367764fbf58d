"""Model analysis: metrics, pruning attribution, threshold tuning,
boolean-equivalence checking, and repeated-run statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import boolexpr, data as data_mod, lsp_tree, training
from .data import Dataset, RawTable
from .errors import DataError, DomainError, TrainingFailure
from .graded_logic import andness_to_code
from .lsp_tree import LspTree
from .training import TrainedModel, TrainingConfig


@dataclass(frozen=True)
class MetricsResult:
    accuracy: float
    precision: float
    recall: float
    threshold: float
    predicted_positives: int
    precision_defaulted: bool = False  # no predicted positives
    recall_defaulted: bool = False  # no actual positives

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "predicted_positives": self.predicted_positives,
            "precision_defaulted": self.precision_defaulted,
            "recall_defaulted": self.recall_defaulted,
        }


def metrics(scores, labels, threshold: float = 0.5) -> MetricsResult:
    """Binary metrics with prediction = score >= threshold.

    Precision with zero predicted positives (and recall with zero actual
    positives) is defined as 1.0 and flagged rather than NaN.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.size == 0:
        raise DataError("metrics need at least one score")
    if scores.shape != labels.shape:
        raise DataError("scores and labels must have equal length")
    truth = labels.astype(np.float64) >= 0.5
    preds = scores >= threshold
    tp = int(np.sum(preds & truth))
    fp = int(np.sum(preds & ~truth))
    fn = int(np.sum(~preds & truth))
    accuracy = float(np.mean(preds == truth))
    precision_defaulted = (tp + fp) == 0
    recall_defaulted = (tp + fn) == 0
    precision = 1.0 if precision_defaulted else tp / (tp + fp)
    recall = 1.0 if recall_defaulted else tp / (tp + fn)
    return MetricsResult(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        threshold=threshold,
        predicted_positives=tp + fp,
        precision_defaulted=precision_defaulted,
        recall_defaulted=recall_defaulted,
    )


# ---------------------------------------------------------------------------
# Pruning-based attribution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttributionRow:
    pruned_count: int
    retained: int
    pruned_feature: str | None  # feature removed at this step; None for k=0
    accuracy: float

    def to_dict(self) -> dict:
        return {
            "pruned_count": self.pruned_count,
            "retained": self.retained,
            "pruned_feature": self.pruned_feature,
            "accuracy": self.accuracy,
        }


@dataclass(frozen=True)
class AttributionReport:
    rows: tuple[AttributionRow, ...]
    ranking: tuple[str, ...]  # most important (top of tree) first

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "ranking": list(self.ranking),
        }


def attribution(model: TrainedModel, dataset: Dataset) -> AttributionReport:
    """Accuracy of prune(tree, k) for k = 0..n-2 at threshold 0.5.

    Row k names the feature that pruning step removed; the implicit
    importance ranking is simply tree order read top-down.
    """
    tree = model.tree()
    index = {name: i for i, name in enumerate(dataset.feature_names)}
    try:
        cols = [index[name] for name in tree.features]
    except KeyError as exc:
        raise DataError(f"dataset is missing model feature {exc.args[0]!r}") from None
    X_tree = dataset.X[:, cols]
    rows = []
    for k in range(tree.n_features - 1):
        scores = lsp_tree.prune(tree, k).evaluate_many(X_tree[:, k:])
        rows.append(
            AttributionRow(
                pruned_count=k,
                retained=tree.n_features - k,
                pruned_feature=None if k == 0 else tree.features[k - 1],
                accuracy=metrics(scores, dataset.y, 0.5).accuracy,
            )
        )
    return AttributionReport(tuple(rows), tuple(reversed(tree.features)))


# ---------------------------------------------------------------------------
# Threshold sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdReport:
    rows: tuple[MetricsResult, ...]
    max_recall: MetricsResult
    max_accuracy: MetricsResult
    max_precision: MetricsResult

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "picks": {
                "max_recall": self.max_recall.to_dict(),
                "max_accuracy": self.max_accuracy.to_dict(),
                "max_precision": self.max_precision.to_dict(),
            },
        }


def threshold_sweep(scores, labels, grid_step: float = 0.01) -> ThresholdReport:
    """Metrics over thresholds {0, step, ..., 1} plus scenario picks.

    max-recall: smallest threshold achieving maximal recall.
    max-accuracy: accuracy argmax, smallest threshold on ties.
    max-precision: largest threshold with maximal precision among
    thresholds that still predict at least one positive.
    """
    if not (0.0 < grid_step <= 0.5):
        raise DomainError("grid_step must lie in (0, 0.5]")
    n_steps = int(math.floor(1.0 / grid_step + 1e-9))
    thresholds = [round(i * grid_step, 12) for i in range(n_steps + 1)]
    if thresholds[-1] < 1.0:
        thresholds.append(1.0)
    rows = tuple(metrics(scores, labels, t) for t in thresholds)

    best_recall = max(r.recall for r in rows)
    max_recall = next(r for r in rows if r.recall == best_recall)

    best_accuracy = max(r.accuracy for r in rows)
    max_accuracy = next(r for r in rows if r.accuracy == best_accuracy)

    with_positives = [r for r in rows if r.predicted_positives > 0]
    pool = with_positives or list(rows)
    best_precision = max(r.precision for r in pool)
    max_precision = [r for r in pool if r.precision == best_precision][-1]

    return ThresholdReport(rows, max_recall, max_accuracy, max_precision)


def sweep_model(model: TrainedModel, dataset: Dataset, grid_step: float = 0.01):
    return threshold_sweep(model.predict(dataset.X), dataset.y, grid_step)


# ---------------------------------------------------------------------------
# Boolean equivalence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EquivalenceReport:
    equivalent: bool
    mismatches: tuple[dict, ...]
    operator_chain: tuple[str, ...]  # snapped code per tree node, bottom-up

    def to_dict(self) -> dict:
        return {
            "equivalent": self.equivalent,
            "mismatches": list(self.mismatches),
            "operator_chain": list(self.operator_chain),
        }


def bool_equivalence(tree: LspTree, expr_text: str) -> EquivalenceReport:
    """Compare the thresholded tree to an expression on all assignments.

    The tree's features must be exactly the expression's variables (any
    order).  A mismatch row records the assignment, both outputs, and
    the tree's raw score.
    """
    node = boolexpr.parse(expr_text)
    names = boolexpr.variables(node)
    if set(names) != set(tree.features):
        raise DataError(
            f"tree features {sorted(tree.features)} do not match expression "
            f"variables {sorted(names)}"
        )
    mismatches = []
    for assignment in boolexpr.assignments(names):
        sample = [float(assignment[f]) for f in tree.features]
        score = tree.evaluate(sample)
        tree_out = int(score >= 0.5)
        expr_out = int(boolexpr.evaluate(node, assignment))
        if tree_out != expr_out:
            mismatches.append(
                {
                    "assignment": {k: int(v) for k, v in assignment.items()},
                    "tree": tree_out,
                    "expression": expr_out,
                    "score": score,
                }
            )
    chain = tuple(andness_to_code(a).code for _, a in tree.nodes)
    return EquivalenceReport(not mismatches, tuple(mismatches), chain)


# ---------------------------------------------------------------------------
# Repeated-run statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunResult:
    seed: int
    accuracy: float | None
    top_features: tuple[str, ...]
    error: str | None = None


@dataclass(frozen=True)
class RepeatedEvalReport:
    runs: tuple[RunResult, ...]
    mean_accuracy: float
    ci_low: float
    ci_high: float
    failures: int

    def to_dict(self) -> dict:
        return {
            "mean_accuracy": self.mean_accuracy,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "failures": self.failures,
            "runs": [
                {
                    "seed": r.seed,
                    "accuracy": r.accuracy,
                    "top_features": list(r.top_features),
                    "error": r.error,
                }
                for r in self.runs
            ],
        }


def repeated_eval(
    table: RawTable,
    cfg: TrainingConfig,
    runs: int,
    normalizer: str = data_mod.ROBUST_SIGMOID,
    test_fraction: float = 0.2,
    top_k: int = 5,
    reversed_columns=(),
) -> RepeatedEvalReport:
    """Train ``runs`` models on distinct seeded splits and summarize.

    Each run re-splits the raw table, fits its normalizer on that train
    split only, trains, and scores test accuracy at threshold 0.5.  The
    95% confidence interval uses the normal approximation over run
    accuracies.  Per-run failures are recorded and counted, not fatal
    (unless every run fails).
    """
    if runs < 2:
        raise DomainError("repeated_eval needs runs >= 2")
    results = []
    for r in range(runs):
        seed = cfg.seed + r
        run_cfg = TrainingConfig(**{**cfg.__dict__, "seed": seed})
        train_raw, test_raw = data_mod.split_raw(table, test_fraction, seed)
        spec = data_mod.fit(train_raw, normalizer)
        if reversed_columns:
            spec = spec.with_reversed(reversed_columns)
        train_set = data_mod.apply(spec, train_raw)
        test_set = data_mod.apply(spec, test_raw)
        try:
            model = training.train(train_set, run_cfg)
        except TrainingFailure as exc:
            results.append(RunResult(seed, None, (), error=str(exc)))
            continue
        model.normalizer = spec
        accuracy = metrics(model.predict(test_set.X), test_set.y, 0.5).accuracy
        top = tuple(reversed(model.tree().features))[:top_k]
        results.append(RunResult(seed, accuracy, top))

    accuracies = np.array([r.accuracy for r in results if r.accuracy is not None])
    failures = sum(1 for r in results if r.accuracy is None)
    if accuracies.size == 0:
        raise TrainingFailure(
            f"all {runs} repeated runs failed", [r.error for r in results]
        )
    mean = float(accuracies.mean())
    if accuracies.size > 1:
        half = 1.96 * float(accuracies.std(ddof=1)) / math.sqrt(accuracies.size)
    else:
        half = 0.0
    return RepeatedEvalReport(
        runs=tuple(results),
        mean_accuracy=mean,
        ci_low=mean - half,
        ci_high=mean + half,
        failures=failures,
    )
