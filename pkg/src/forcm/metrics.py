"""Pixel-wise evaluation: confusion counts, IoU/OA/P/R/F1, run comparison.

Forest (value 1) is the positive class. Undefined 0/0 ratios resolve to 1.0
when the class is absent from both prediction and truth (nothing to get
wrong), otherwise to 0.0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, EmptyMaskError, InvalidArgumentError
from .raster_io import LabelMask

_METRIC_COLUMNS = ("mean_iou", "oa", "precision", "recall", "f1")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise InvalidArgumentError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricsReport:
    confusion: ConfusionMatrix
    iou_forest: float
    iou_nonforest: float
    mean_iou: float
    oa: float
    precision: float
    recall: float
    f1: float
    mode: str = ""
    seed: int = 0
    config_hash: str = ""

    def to_dict(self) -> dict:
        cm = self.confusion
        return {
            "mode": self.mode,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "tp": cm.tp, "fp": cm.fp, "fn": cm.fn, "tn": cm.tn,
            "iou_forest": self.iou_forest,
            "iou_nonforest": self.iou_nonforest,
            "mean_iou": self.mean_iou,
            "oa": self.oa,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        cm = ConfusionMatrix(int(d["tp"]), int(d["fp"]), int(d["fn"]), int(d["tn"]))
        return cls(cm, float(d["iou_forest"]), float(d["iou_nonforest"]),
                   float(d["mean_iou"]), float(d["oa"]), float(d["precision"]),
                   float(d["recall"]), float(d["f1"]), mode=str(d.get("mode", "")),
                   seed=int(d.get("seed", 0)), config_hash=str(d.get("config_hash", "")))


def confusion(pred: LabelMask, truth: LabelMask) -> ConfusionMatrix:
    """Count pixel agreements with forest as the positive class."""
    if (pred.height, pred.width) != (truth.height, truth.width):
        raise DimensionMismatchError(
            f"prediction {pred.height}x{pred.width} vs truth {truth.height}x{truth.width}"
        )
    p = pred.labels.astype(bool)
    t = truth.labels.astype(bool)
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    tn = int(np.count_nonzero(~p & ~t))
    return ConfusionMatrix(tp, fp, fn, tn)


def _ratio(num: int, den: int, absent: bool) -> float:
    if den > 0:
        return num / den
    return 1.0 if absent else 0.0


def compute_metrics(cm: ConfusionMatrix, mode: str = "", seed: int = 0,
                    config_hash: str = "") -> MetricsReport:
    """Derive the five headline metrics from confusion counts."""
    if cm.total == 0:
        raise EmptyMaskError("confusion matrix has no pixels")
    forest_absent = cm.tp == 0 and cm.fp == 0 and cm.fn == 0
    nonforest_absent = cm.tn == 0 and cm.fp == 0 and cm.fn == 0
    iou_f = _ratio(cm.tp, cm.tp + cm.fp + cm.fn, forest_absent)
    iou_n = _ratio(cm.tn, cm.tn + cm.fn + cm.fp, nonforest_absent)
    oa = (cm.tp + cm.tn) / cm.total
    precision = _ratio(cm.tp, cm.tp + cm.fp, forest_absent)
    recall = _ratio(cm.tp, cm.tp + cm.fn, forest_absent)
    if precision + recall > 0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1 = 1.0 if forest_absent else 0.0
    return MetricsReport(cm, iou_f, iou_n, (iou_f + iou_n) / 2.0, oa,
                         precision, recall, f1, mode=mode, seed=seed,
                         config_hash=config_hash)


def compare_runs(reports: list[MetricsReport],
                 names: list[str] | None = None) -> tuple[str, dict]:
    """Side-by-side comparison; the best value per metric is flagged.

    Returns (aligned text table, JSON-ready dict). Ties flag every holder of
    the best value.
    """
    if len(reports) < 2:
        raise InvalidArgumentError("comparison needs at least 2 reports")
    if names is None:
        names = []
        for i, r in enumerate(reports):
            names.append(f"{r.mode or 'run'}-{i}")
    elif len(names) != len(reports):
        raise InvalidArgumentError("one name per report required")

    values = {m: [getattr(r, m) for r in reports] for m in _METRIC_COLUMNS}
    best = {m: [i for i, v in enumerate(vals) if v == max(vals)]
            for m, vals in values.items()}

    name_w = max(len(n) for n in names + ["run"])
    header = "run".ljust(name_w) + "".join(f"  {m:>10}" for m in _METRIC_COLUMNS)
    rows = [header]
    for i, n in enumerate(names):
        cells = []
        for m in _METRIC_COLUMNS:
            flag = "*" if i in best[m] else " "
            cells.append(f"  {values[m][i]:9.4f}{flag}")
        rows.append(n.ljust(name_w) + "".join(cells))
    table = "\n".join(rows)

    payload = {
        "runs": [dict(r.to_dict(), name=n) for r, n in zip(reports, names)],
        "best": {m: [names[i] for i in idx] for m, idx in best.items()},
    }
    return table, payload
