"""Confusion matrices and per-class / overall classification metrics.

Per class ``c`` with counts TP, FN, FP, TN taken from the confusion matrix:

* sensitivity = single accuracy = TP / (TP + FN)
* specificity = TN / (TN + FP), fpr = FP / (FP + TN)
* precision = TP / (TP + FP), 0 when the class is never predicted
* total accuracy = TP / N, error total = FP / N

Overall sensitivity, specificity, precision and fpr are unweighted means of
the per-class values; overall accuracy is trace / N.
"""

from __future__ import annotations

import csv
import io
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionError, EmptyError, IoError, LabelError, ParseError

CSV_COLUMNS = (
    "class",
    "single_accuracy",
    "error_single",
    "total_accuracy",
    "error_total",
    "sensitivity",
    "specificity",
    "precision",
    "fpr",
)


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows = actual, columns = predicted

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise DimensionError(f"confusion matrix must be square, got {counts.shape}")
        if np.any(counts < 0):
            raise ValueError("confusion counts must be nonnegative")
        object.__setattr__(self, "counts", counts.astype(np.int64))

    @property
    def classes(self) -> int:
        return self.counts.shape[0]

    @property
    def n_total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ClassMetrics:
    single_accuracy: float
    error_single: float
    total_accuracy: float
    error_total: float
    sensitivity: float
    specificity: float
    precision: float
    fpr: float
    degenerate: bool = False


@dataclass(frozen=True)
class OverallMetrics:
    accuracy: float
    error: float
    sensitivity: float
    specificity: float
    precision: float
    fpr: float


def confusion_matrix(actual, predicted, classes: int) -> ConfusionMatrix:
    actual = np.asarray(actual).reshape(-1)
    predicted = np.asarray(predicted).reshape(-1)
    if actual.shape != predicted.shape:
        raise DimensionError(f"{actual.size} actual labels vs {predicted.size} predictions")
    for lab in (actual, predicted):
        if lab.size and (lab.min() < 0 or lab.max() >= classes):
            raise LabelError(f"labels must lie in 0..{classes - 1}")
    counts = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(counts, (actual.astype(np.int64), predicted.astype(np.int64)), 1)
    return ConfusionMatrix(counts)


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def per_class_metrics(cm: ConfusionMatrix) -> list[ClassMetrics]:
    n = cm.n_total
    if n == 0:
        raise EmptyError("confusion matrix has no samples")
    counts = cm.counts
    out = []
    for c in range(cm.classes):
        tp = int(counts[c, c])
        fn = int(counts[c].sum()) - tp
        fp = int(counts[:, c].sum()) - tp
        tn = n - tp - fn - fp
        sens = _ratio(tp, tp + fn)
        fpr = _ratio(fp, fp + tn)
        spec = 1.0 - fpr  # also covers a class with no negatives
        out.append(
            ClassMetrics(
                single_accuracy=sens,
                error_single=1.0 - sens,
                total_accuracy=tp / n,
                error_total=fp / n,
                sensitivity=sens,
                specificity=spec,
                precision=_ratio(tp, tp + fp),
                fpr=fpr,
                degenerate=(tp + fp) == 0,
            )
        )
    return out


def aggregate(per_class: Sequence[ClassMetrics], accuracy: float | None = None) -> OverallMetrics:
    """Macro-average per-class metrics.

    Without an explicit ``accuracy`` the total-accuracy column is summed, which
    equals trace / N for metrics computed from a confusion matrix.
    """
    if not per_class:
        raise EmptyError("no per-class metrics to aggregate")
    col = lambda name: float(np.mean([getattr(m, name) for m in per_class]))  # noqa: E731
    if accuracy is None:
        accuracy = float(sum(m.total_accuracy for m in per_class))
    return OverallMetrics(
        accuracy=accuracy,
        error=1.0 - accuracy,
        sensitivity=col("sensitivity"),
        specificity=col("specificity"),
        precision=col("precision"),
        fpr=col("fpr"),
    )


def overall_metrics(cm: ConfusionMatrix) -> OverallMetrics:
    per_class = per_class_metrics(cm)
    return aggregate(per_class, accuracy=float(np.trace(cm.counts)) / cm.n_total)


@dataclass(frozen=True)
class MetricsReport:
    class_names: tuple[str, ...]
    per_class: tuple[ClassMetrics, ...]
    overall: OverallMetrics
    confusion: ConfusionMatrix | None = None

    def rows(self) -> list[list]:
        out = []
        for name, m in zip(self.class_names, self.per_class):
            out.append([name, *astuple(m)[:8]])
        o = self.overall
        out.append(
            ["OVERALL", o.accuracy, o.error, o.accuracy, o.error, o.sensitivity, o.specificity,
             o.precision, o.fpr]
        )
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows():
            writer.writerow([row[0], *(f"{v:.17g}" for v in row[1:])])
        return buf.getvalue()

    def to_text(self) -> str:
        width = max(len("OVERALL"), *(len(n) for n in self.class_names))
        head = f"{'class':<{width}}" + "".join(f"{c:>16}" for c in CSV_COLUMNS[1:])
        lines = [head, "-" * len(head)]
        for row in self.rows():
            lines.append(f"{row[0]:<{width}}" + "".join(f"{v:>16.6g}" for v in row[1:]))
        return "\n".join(lines) + "\n"

    def write(self, directory, stem: str = "report") -> tuple[Path, Path]:
        directory = Path(directory)
        csv_path, txt_path = directory / f"{stem}.csv", directory / f"{stem}.txt"
        try:
            csv_path.write_text(self.to_csv())
            txt_path.write_text(self.to_text())
        except OSError as exc:
            raise IoError(f"cannot write report in {directory}: {exc}") from None
        return csv_path, txt_path


def report(cm: ConfusionMatrix, class_names: Sequence[str] | None = None) -> MetricsReport:
    if class_names is None:
        class_names = [str(c) for c in range(cm.classes)]
    if len(class_names) != cm.classes:
        raise DimensionError(f"{len(class_names)} class names for {cm.classes} classes")
    return MetricsReport(tuple(class_names), tuple(per_class_metrics(cm)), overall_metrics(cm), cm)


def parse_report_csv(text: str) -> tuple[list[tuple[str, ClassMetrics]], OverallMetrics]:
    """Inverse of :meth:`MetricsReport.to_csv`."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != CSV_COLUMNS:
        raise ParseError(f"unexpected report header {header!r}")
    classes, overall = [], None
    names = [f.name for f in fields(ClassMetrics)][:8]
    for row in reader:
        try:
            vals = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise ParseError(str(exc)) from None
        if row[0] == "OVERALL":
            overall = OverallMetrics(vals[0], vals[1], *vals[4:8])
        else:
            classes.append((row[0], ClassMetrics(**dict(zip(names, vals)))))
    if overall is None:
        raise ParseError("report has no OVERALL row")
    return classes, overall
