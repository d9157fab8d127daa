"""Tampering score, classification metrics and ROC/AUC.

The positive class is ``tampered``. A record with no prediction (parse
failure or transport error) counts against accuracy but stays out of the
confusion cells that F1 is built from.
"""

from __future__ import annotations

import csv
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from itertools import groupby
from pathlib import Path

from .domain import GroundTruth, HolisticVerdict
from .errors import DegenerateRocError

TAMPERED = GroundTruth.TAMPERED
AUTHENTIC = GroundTruth.AUTHENTIC


def tampering_score_from_scores(scores: Sequence[int]) -> float:
    """``(mean - 1) / 4`` of eight Likert scores.

    Computed as ``(sum - 8) / 32``. The numerator is an integer and the
    divisor a power of two, so the float result is exact.
    """
    if len(scores) != 8:
        raise ValueError(f"expected 8 factor scores, got {len(scores)}")
    if any(not 1 <= int(s) <= 5 for s in scores):
        raise ValueError(f"scores must be in 1..5: {list(scores)}")
    return (sum(int(s) for s in scores) - 8) / 32


def tampering_score(verdict: HolisticVerdict) -> float:
    """Map the mean factor score onto [0, 1]: 0 = every factor authentic, 1 = every factor tampered."""
    return tampering_score_from_scores(verdict.scores())


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    unparsed: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn + self.unparsed

    def __add__(self, other: ConfusionCounts) -> ConfusionCounts:
        return ConfusionCounts(
            self.tp + other.tp,
            self.fp + other.fp,
            self.tn + other.tn,
            self.fn + other.fn,
            self.unparsed + other.unparsed,
        )

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 0.0


def confusion_counts(records: Iterable[tuple[GroundTruth, GroundTruth | None]]) -> ConfusionCounts:
    tp = fp = tn = fn = unparsed = 0
    for truth, predicted in records:
        truth = GroundTruth(truth)
        if predicted is None:
            unparsed += 1
        elif GroundTruth(predicted) is TAMPERED:
            if truth is TAMPERED:
                tp += 1
            else:
                fp += 1
        elif truth is TAMPERED:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, tn, fn, unparsed)


def classification_metrics(
    records: Sequence[tuple[GroundTruth, GroundTruth | None]],
) -> tuple[ConfusionCounts, float, float]:
    """Confusion counts, accuracy and F1 over ``(ground truth, prediction or None)`` pairs."""
    if not records:
        raise ValueError("classification_metrics needs at least one record")
    counts = confusion_counts(records)
    return counts, counts.accuracy, counts.f1


@dataclass(frozen=True)
class RocCurve:
    points: tuple[tuple[float, float], ...]
    auc: float
    thresholds: tuple[float, ...] = ()

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["fpr", "tpr"])
            for fpr, tpr in self.points:
                writer.writerow([repr(fpr), repr(tpr)])


def trapezoid_area(points: Sequence[tuple[float, float]]) -> float:
    return sum((x1 - x0) * (y0 + y1) / 2 for (x0, y0), (x1, y1) in zip(points, points[1:]))


def roc_curve(scored: Iterable[tuple[GroundTruth, float]]) -> RocCurve:
    """Threshold sweep over the distinct scores, highest first.

    Tied scores move together, so each tie group becomes one diagonal
    segment and the trapezoid area equals the tie-corrected concordance
    ``P(s_tampered > s_authentic) + 0.5 * P(equal)``.
    """
    pairs = sorted(((float(s), GroundTruth(t)) for t, s in scored), key=lambda p: -p[0])
    positives = sum(1 for _, t in pairs if t is TAMPERED)
    negatives = len(pairs) - positives
    if positives == 0 or negatives == 0:
        raise DegenerateRocError(
            f"ROC needs both classes; got {positives} tampered and {negatives} authentic"
        )
    tp = fp = 0
    points = [(0.0, 0.0)]
    thresholds = [float("inf")]
    for score, group in groupby(pairs, key=lambda p: p[0]):
        for _, truth in group:
            if truth is TAMPERED:
                tp += 1
            else:
                fp += 1
        points.append((fp / negatives, tp / positives))
        thresholds.append(score)
    return RocCurve(tuple(points), trapezoid_area(points), tuple(thresholds))
