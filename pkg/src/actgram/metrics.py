"""Frame-wise evaluation: confusion matrix and the standard metric suite
(micro accuracy, macro precision/recall/F1, weighted F1)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class MetricsError(Exception):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[g][p] = number of frames with ground truth g predicted as p."""

    counts: np.ndarray
    class_names: tuple[str, ...]

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    micro_pr: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    weighted_f1: float
    per_class: tuple[ClassScores, ...]
    class_names: tuple[str, ...]
    # mean of per-class F1 scores, the common alternative to the harmonic
    # macro F1 reported above
    macro_f1_class_mean: float

    def to_dict(self) -> dict:
        return {
            "micro_pr": self.micro_pr,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
            "macro_f1_class_mean": self.macro_f1_class_mean,
            "per_class": [
                {
                    "class": name,
                    "precision": c.precision,
                    "recall": c.recall,
                    "f1": c.f1,
                    "support": c.support,
                }
                for name, c in zip(self.class_names, self.per_class)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self) -> str:
        rows = [
            ("class", "precision", "recall", "f1", "support"),
        ]
        for name, c in zip(self.class_names, self.per_class):
            rows.append(
                (name, f"{c.precision:.4f}", f"{c.recall:.4f}", f"{c.f1:.4f}", str(c.support))
            )
        widths = [max(len(r[i]) for r in rows) for i in range(5)]
        lines = ["  ".join(s.ljust(w) for s, w in zip(r, widths)).rstrip() for r in rows]
        lines.append("")
        lines.append(f"micro P/R        {self.micro_pr:.4f}")
        lines.append(f"macro precision  {self.macro_precision:.4f}")
        lines.append(f"macro recall     {self.macro_recall:.4f}")
        lines.append(f"macro F1         {self.macro_f1:.4f}")
        lines.append(f"weighted F1      {self.weighted_f1:.4f}")
        return "\n".join(lines) + "\n"


def confusion(
    pred: Sequence[int],
    gt: Sequence[int],
    k: int,
    class_names: Sequence[str] | None = None,
) -> ConfusionMatrix:
    """Count per-frame (ground truth, prediction) pairs into a K x K matrix."""
    if len(pred) != len(gt):
        raise MetricsError(f"length mismatch: pred {len(pred)} vs gt {len(gt)}")
    counts = np.zeros((k, k), dtype=np.int64)
    for p, g in zip(pred, gt):
        if not (0 <= p < k and 0 <= g < k):
            raise MetricsError(f"label out of range for K={k}: pred={p}, gt={g}")
        counts[g, p] += 1
    names = tuple(class_names) if class_names else tuple(f"PI{i}" for i in range(k))
    if len(names) != k:
        raise MetricsError("class name table size does not match K")
    counts.setflags(write=False)
    return ConfusionMatrix(counts=counts, class_names=names)


def evaluate(cm: ConfusionMatrix) -> EvalReport:
    """Compute the metric suite from a confusion matrix.

    Per-class precision is 0 when the class is never predicted, recall 0
    when it never occurs, and F1 0 when both are 0.  Macro averages run
    over classes that appear in the ground truth or the predictions; the
    macro F1 is the harmonic mean of macro precision and macro recall.
    The weighted F1 weights per-class F1 by ground-truth support.
    """
    if cm.total == 0:
        raise MetricsError("empty confusion matrix")
    counts = cm.counts.astype(float)
    diag = np.diag(counts)
    row = counts.sum(axis=1)  # ground-truth support
    col = counts.sum(axis=0)  # prediction counts

    precision = np.divide(diag, col, out=np.zeros_like(diag, dtype=float), where=col > 0)
    recall = np.divide(diag, row, out=np.zeros_like(diag, dtype=float), where=row > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(diag, dtype=float), where=denom > 0)

    present = (row > 0) | (col > 0)
    macro_p = float(precision[present].mean()) if present.any() else 0.0
    macro_r = float(recall[present].mean()) if present.any() else 0.0
    macro_f1 = 2 * macro_p * macro_r / (macro_p + macro_r) if (macro_p + macro_r) > 0 else 0.0
    support_total = row.sum()
    weighted_f1 = float((row * f1).sum() / support_total)
    micro = float(diag.sum() / cm.total)
    macro_f1_mean = float(f1[present].mean()) if present.any() else 0.0

    per_class = tuple(
        ClassScores(float(precision[i]), float(recall[i]), float(f1[i]), int(row[i]))
        for i in range(cm.k)
    )
    return EvalReport(
        micro_pr=micro,
        macro_precision=macro_p,
        macro_recall=macro_r,
        macro_f1=macro_f1,
        weighted_f1=weighted_f1,
        per_class=per_class,
        class_names=cm.class_names,
        macro_f1_class_mean=macro_f1_mean,
    )
