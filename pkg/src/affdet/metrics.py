"""Detection metrics: ROC curve, AUC, EER, accuracy, per-tag breakdowns.

Convention: the positive class is fake (label 1) and scores are
probabilities that a clip is fake, so TPR is the fraction of fakes caught
and FPR the fraction of real clips wrongly flagged. A clip is accepted
(treated as real) when its score falls below the threshold, so the false
acceptance rate equals the false negative rate of this positive-fake
convention; EER is where that rate crosses the false positive rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LABEL_REAL = 0
LABEL_FAKE = 1


class DegenerateInputError(ValueError):
    """Metric undefined on this input (e.g. only one class present)."""


@dataclass
class ScoredSample:
    score: float
    label: int
    source_tag: str = ""


@dataclass
class EvalReport:
    accuracy: float
    auc: float
    eer: float
    eer_threshold: float
    threshold: float
    n_samples: int
    roc: np.ndarray = field(repr=False)  # (n_points, 2) columns fpr, tpr
    per_tag: dict[str, tuple[int, float]] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [
            "Acc(%)   AUC      EER",
            f"{self.accuracy * 100:<8.2f} {self.auc:<8.4f} {self.eer:.4f}",
            f"decision threshold: {self.threshold:g}",
            f"eer threshold: {self.eer_threshold:.6f}",
            f"samples: {self.n_samples}",
        ]
        if self.per_tag:
            lines.append("")
            lines.append("per-source accuracy:")
            lines.append("tag                n      Acc(%)")
            for tag in sorted(self.per_tag):
                count, acc = self.per_tag[tag]
                lines.append(f"{tag:<18} {count:<6d} {acc * 100:.2f}")
        return "\n".join(lines) + "\n"

    def to_kv(self) -> str:
        lines = [
            f"accuracy={self.accuracy:.6f}",
            f"auc={self.auc:.6f}",
            f"eer={self.eer:.6f}",
            f"eer_threshold={self.eer_threshold:.6f}",
            f"threshold={self.threshold:g}",
            f"n_samples={self.n_samples}",
        ]
        for tag in sorted(self.per_tag):
            count, acc = self.per_tag[tag]
            lines.append(f"tag_accuracy.{tag}={acc:.6f}")
            lines.append(f"tag_count.{tag}={count}")
        return "\n".join(lines) + "\n"

    def roc_text(self) -> str:
        """Two-column fpr/tpr dump for external plotting."""
        return "".join(f"{fpr:.9f} {tpr:.9f}\n" for fpr, tpr in self.roc)


def _validate(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError(f"scores {scores.shape} and labels {labels.shape} must be equal 1-D")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    n_fake = int((labels == LABEL_FAKE).sum())
    n_real = int((labels == LABEL_REAL).sum())
    if n_fake + n_real != labels.size:
        raise ValueError("labels must be 0 (real) or 1 (fake)")
    if n_fake == 0 or n_real == 0:
        raise DegenerateInputError(
            f"need both classes, got {n_fake} fake and {n_real} real samples"
        )
    return scores, labels


def roc_curve(scores, labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ROC points swept over distinct scores, descending; ties grouped.

    Returns (fpr, tpr, thresholds). The leading point (0, 0) carries a
    sentinel threshold of max(score) + 1; the curve always ends at (1, 1).
    """
    scores, labels = _validate(scores, labels)
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]

    # indices where a run of tied scores ends
    distinct = np.nonzero(np.diff(sorted_scores))[0]
    boundaries = np.concatenate([distinct, [scores.size - 1]])

    tp = np.cumsum(sorted_labels == LABEL_FAKE)[boundaries]
    fp = np.cumsum(sorted_labels == LABEL_REAL)[boundaries]
    tpr = np.concatenate([[0.0], tp / tp[-1]])
    fpr = np.concatenate([[0.0], fp / fp[-1]])
    thresholds = np.concatenate([[sorted_scores[0] + 1.0], sorted_scores[boundaries]])
    return fpr, tpr, thresholds


def auc(fpr: np.ndarray, tpr: np.ndarray) -> float:
    """Trapezoidal area under the ROC curve."""
    return float(np.trapezoid(tpr, fpr))


def eer(fpr: np.ndarray, tpr: np.ndarray, thresholds: np.ndarray) -> tuple[float, float]:
    """Equal error rate and its threshold by linear interpolation.

    FNR = 1 - TPR; the difference FPR - FNR runs from -1 at (0,0) to +1
    at (1,1), so a crossing always exists between adjacent curve points.
    """
    fnr = 1.0 - tpr
    diff = fpr - fnr
    exact = np.nonzero(diff == 0)[0]
    if exact.size:
        i = exact[0]
        return float(fpr[i]), float(thresholds[i])
    i = int(np.nonzero(diff > 0)[0][0])  # first point past the crossing
    t = -diff[i - 1] / (diff[i] - diff[i - 1])
    value = fpr[i - 1] + t * (fpr[i] - fpr[i - 1])
    threshold = thresholds[i - 1] + t * (thresholds[i] - thresholds[i - 1])
    return float(value), float(threshold)


def evaluate(samples: list[ScoredSample], threshold: float = 0.5) -> EvalReport:
    """Full report: accuracy at the threshold, AUC, EER, per-tag accuracy."""
    if not samples:
        raise DegenerateInputError("no samples to evaluate")
    scores = np.array([s.score for s in samples])
    labels = np.array([s.label for s in samples])
    fpr, tpr, thresholds = roc_curve(scores, labels)
    eer_value, eer_thr = eer(fpr, tpr, thresholds)

    predicted = (scores >= threshold).astype(int)
    correct = predicted == labels
    per_tag: dict[str, tuple[int, float]] = {}
    tags = np.array([s.source_tag for s in samples])
    for tag in sorted(set(tags)):
        mask = tags == tag
        per_tag[tag] = (int(mask.sum()), float(correct[mask].mean()))

    return EvalReport(
        accuracy=float(correct.mean()),
        auc=auc(fpr, tpr),
        eer=eer_value,
        eer_threshold=eer_thr,
        threshold=threshold,
        n_samples=len(samples),
        roc=np.column_stack([fpr, tpr]),
        per_tag=per_tag,
    )
