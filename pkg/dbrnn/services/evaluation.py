"""Piecewise accuracy, TPR and FPR as a function of time-to-event."""
from typing import List, Optional, Sequence
import logging
import math

import numpy as np
import pandas as pd

from dbrnn.models.schemas import BinDelta, CurveComparison, PiecewiseBin, PiecewiseMetrics
from dbrnn.services.datapipe import Example, stack_examples
from dbrnn.services.network import ModelParameters, dbrnn_forward
from dbrnn.services.numeric_core import DbrnnError

logger = logging.getLogger("dbrnn")

METRIC_COLUMNS = ["scope", "bin_start_s", "bin_end_s", "n_pos", "n_neg", "accuracy", "tpr", "fpr"]


class EvaluationError(DbrnnError):
    """Invalid evaluation input."""
    pass


def classify(probs) -> int:
    """Argmax class; ties go to the lowest index."""
    return int(np.argmax(np.asarray(probs).reshape(-1)))


def predict_classes(model: ModelParameters, examples: Sequence[Example], batch_size: int = 256) -> np.ndarray:
    predictions = []
    for start in range(0, len(examples), batch_size):
        X, _ = stack_examples(examples[start:start + batch_size])
        probs, _ = dbrnn_forward(model, X)
        predictions.append(np.argmax(probs, axis=0))
    return np.concatenate(predictions) if predictions else np.zeros(0, dtype=np.int64)


def _rate(numerator: int, denominator: int) -> Optional[float]:
    return numerator / denominator if denominator else None


def _positive_rates(labels: np.ndarray, preds: np.ndarray, num_classes: int) -> Optional[float]:
    """Mean over the positive classes present of each class's hit rate."""
    rates = [
        float(np.mean(preds[labels == c] == c))
        for c in range(1, num_classes)
        if np.any(labels == c)
    ]
    return float(np.mean(rates)) if rates else None


def piecewise_metrics(
    labels: Sequence[int],
    preds: Sequence[int],
    times_to_event: Sequence[Optional[float]],
    num_classes: int,
    horizon_s: float = 5.0,
    bin_width_s: float = 0.5,
    class_names: Optional[Sequence[str]] = None,
) -> PiecewiseMetrics:
    """Bin positives by time-to-event over (0, d]; negatives are shared by every bin.

    A positive counts as a hit only when predicted as its own class. Per bin,
    TPR is the mean hit rate of the positive classes present, FPR is the
    share of negatives predicted as any positive class, and accuracy is taken
    over the bin's positives plus all negatives.

    Raises:
        EvaluationError: On an empty set or a bin width that does not divide d
    """
    labels = np.asarray(labels, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    if labels.size == 0:
        raise EvaluationError("Cannot evaluate an empty test set")
    if labels.shape != preds.shape or len(times_to_event) != labels.size:
        raise EvaluationError("labels, predictions and times-to-event must have equal lengths")
    if bin_width_s <= 0:
        raise EvaluationError(f"Bin width must be positive, got {bin_width_s}")
    num_bins = int(round(horizon_s / bin_width_s))
    if num_bins < 1 or abs(num_bins * bin_width_s - horizon_s) > 1e-9:
        raise EvaluationError(f"Bin width {bin_width_s} s does not divide the horizon {horizon_s} s evenly")
    class_names = list(class_names) if class_names else [str(c) for c in range(num_classes)]

    negative = labels == 0
    n_neg = int(negative.sum())
    fp = int(np.sum(preds[negative] != 0))
    tn = n_neg - fp
    hits = preds == labels

    bin_index = np.full(labels.size, -1, dtype=np.int64)
    for i in np.flatnonzero(~negative):
        tte = times_to_event[i]
        if tte is None or not 0 < tte <= horizon_s + 1e-9:
            raise EvaluationError(f"Positive example {i} has time-to-event {tte} outside (0, {horizon_s}]")
        bin_index[i] = min(max(math.ceil(tte / bin_width_s - 1e-9) - 1, 0), num_bins - 1)

    bins: List[PiecewiseBin] = []
    for b in range(num_bins):
        members = bin_index == b
        n_pos = int(members.sum())
        tp = int(np.sum(hits & members))
        bins.append(PiecewiseBin(
            start_s=round(b * bin_width_s, 9),
            end_s=round((b + 1) * bin_width_s, 9),
            n_pos=n_pos,
            n_neg=n_neg,
            tp=tp,
            fn=n_pos - tp,
            tn=tn,
            fp=fp,
            accuracy=_rate(tp + tn, n_pos + n_neg),
            tpr=_positive_rates(labels[members], preds[members], num_classes),
            fpr=_rate(fp, n_neg),
        ))

    positive = ~negative
    class_tpr = {
        class_names[c]: _rate(int(np.sum(hits & (labels == c))), int(np.sum(labels == c)))
        for c in range(1, num_classes)
    }
    return PiecewiseMetrics(
        horizon_s=horizon_s,
        bin_width_s=bin_width_s,
        bins=bins,
        n_examples=int(labels.size),
        accuracy=float(np.mean(hits)),
        class_tpr=class_tpr,
        tpr=_positive_rates(labels[positive], preds[positive], num_classes),
        fpr=_rate(fp, n_neg),
    )


def piecewise_eval(
    model: ModelParameters,
    examples: Sequence[Example],
    bin_width_s: float = 0.5,
    horizon_s: float = 5.0,
    class_names: Optional[Sequence[str]] = None,
) -> PiecewiseMetrics:
    """Run the model over a test set and bin its decisions by time-to-event."""
    if not examples:
        raise EvaluationError("Cannot evaluate an empty test set")
    preds = predict_classes(model, examples)
    metrics = piecewise_metrics(
        [example.label for example in examples],
        preds,
        [example.time_to_event for example in examples],
        model.config.num_classes,
        horizon_s,
        bin_width_s,
        class_names,
    )
    logger.info(
        f"[Eval] {metrics.n_examples} examples: accuracy {metrics.accuracy:.3f}, "
        f"TPR {_fmt(metrics.tpr)}, FPR {_fmt(metrics.fpr)}"
    )
    return metrics


def _fmt(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.3f}"


def _delta(a: Optional[float], b: Optional[float]) -> Optional[float]:
    return None if a is None or b is None else a - b


def compare_curves(
    a: PiecewiseMetrics,
    b: PiecewiseMetrics,
    margin: float = 0.0,
    label_a: str = "a",
    label_b: str = "b",
) -> CurveComparison:
    """Per-bin differences a - b and the earliest bin where a leads by more than margin.

    Earliest means the largest time-to-event.

    Raises:
        EvaluationError: If the curves are binned differently
    """
    edges_a = [(x.start_s, x.end_s) for x in a.bins]
    edges_b = [(x.start_s, x.end_s) for x in b.bins]
    if edges_a != edges_b:
        raise EvaluationError("Curves have different binning")
    deltas = [
        BinDelta(
            start_s=x.start_s,
            end_s=x.end_s,
            accuracy_delta=_delta(x.accuracy, y.accuracy),
            tpr_delta=_delta(x.tpr, y.tpr),
            fpr_delta=_delta(x.fpr, y.fpr),
        )
        for x, y in zip(a.bins, b.bins)
    ]
    known = [d.accuracy_delta for d in deltas if d.accuracy_delta is not None]
    leading = [d.end_s for d in deltas if d.accuracy_delta is not None and d.accuracy_delta > margin]
    return CurveComparison(
        label_a=label_a,
        label_b=label_b,
        margin=margin,
        deltas=deltas,
        mean_accuracy_delta=float(np.mean(known)) if known else None,
        earliest_advantage_s=max(leading) if leading else None,
    )


def mean_accuracy_from(metrics: PiecewiseMetrics, min_tte_s: float) -> Optional[float]:
    """Mean per-bin accuracy over bins starting at or beyond min_tte_s."""
    values = [b.accuracy for b in metrics.bins if b.start_s >= min_tte_s - 1e-9 and b.accuracy is not None]
    return float(np.mean(values)) if values else None


def metrics_table(metrics: PiecewiseMetrics) -> pd.DataFrame:
    """Per-bin rows followed by one aggregate row."""
    rows = [
        ("bin", b.start_s, b.end_s, b.n_pos, b.n_neg, b.accuracy, b.tpr, b.fpr)
        for b in metrics.bins
    ]
    n_pos = sum(b.n_pos for b in metrics.bins)
    n_neg = metrics.bins[0].n_neg if metrics.bins else 0
    rows.append(("aggregate", 0.0, metrics.horizon_s, n_pos, n_neg, metrics.accuracy, metrics.tpr, metrics.fpr))
    return pd.DataFrame(rows, columns=METRIC_COLUMNS)


def write_metrics_csv(metrics: PiecewiseMetrics, path: str):
    metrics_table(metrics).to_csv(path, index=False, lineterminator="\n")


def write_comparison_csv(comparison: CurveComparison, path: str):
    table = pd.DataFrame(
        [(d.start_s, d.end_s, d.accuracy_delta, d.tpr_delta, d.fpr_delta) for d in comparison.deltas],
        columns=["bin_start_s", "bin_end_s", "accuracy_delta", "tpr_delta", "fpr_delta"],
    )
    table.to_csv(path, index=False, lineterminator="\n")
