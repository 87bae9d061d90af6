"""End-to-end classification flow for both plain-OBIA and fusion (forcm) modes.

A run segments the image, extracts per-segment features (heatmap statistics
joined in only in forcm mode), derives training labels from the ground-truth
mask for a stratified random sample of segments, trains the linear SVM on
that sample alone, scores every segment, thresholds the scores into a binary
forest map and evaluates it pixel-wise against the full truth. Everything
downstream of the inputs is deterministic for a fixed config.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    InvalidArgumentError,
    MissingHeatmapError,
    SingleClassSceneError,
)
from .features import FeatureSpec, extract_features, standardize
from .meanshift import MeanShiftParams, SegmentMap, segment
from .metrics import MetricsReport, compute_metrics, confusion
from .raster_io import Heatmap, LabelMask, Raster
from .svm import SvmModel, SvmParams, decision_values, train

MODE_OBIA = "obia"
MODE_FORCM = "forcm"


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = MODE_OBIA
    train_fraction: float = 0.10
    min_train_segments: int = 50
    seed: int = 0
    threshold: float = 0.0
    meanshift: MeanShiftParams = field(default_factory=MeanShiftParams)
    svm: SvmParams = field(default_factory=SvmParams)
    features: FeatureSpec = field(default_factory=FeatureSpec)

    def __post_init__(self) -> None:
        if self.mode not in (MODE_OBIA, MODE_FORCM):
            raise InvalidArgumentError(f"mode must be obia or forcm, got {self.mode!r}")
        if not 0.0 < self.train_fraction <= 1.0:
            raise InvalidArgumentError("train_fraction must lie in (0, 1]")
        if self.min_train_segments < 1:
            raise InvalidArgumentError("min_train_segments must be >= 1")
        if not math.isfinite(self.threshold):
            raise InvalidArgumentError("threshold must be finite")


@dataclass(frozen=True)
class ClassifiedSegments:
    """Per-segment SVM scores, their thresholded classes (1 = forest), and
    the model that produced them."""

    decision_values: np.ndarray
    classes: np.ndarray
    threshold: float
    training_segment_ids: np.ndarray
    model: SvmModel | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        dv = np.ascontiguousarray(self.decision_values, dtype=np.float64)
        cls = np.ascontiguousarray(self.classes, dtype=np.uint8)
        ids = np.ascontiguousarray(self.training_segment_ids, dtype=np.int64)
        if dv.shape != cls.shape:
            raise InvalidArgumentError("one class per decision value required")
        for arr in (dv, cls, ids):
            arr.setflags(write=False)
        object.__setattr__(self, "decision_values", dv)
        object.__setattr__(self, "classes", cls)
        object.__setattr__(self, "training_segment_ids", ids)


def config_hash(cfg: PipelineConfig) -> str:
    """Stable digest of the resolved configuration (key order independent)."""
    items = {
        "mode": cfg.mode,
        "train_fraction": repr(cfg.train_fraction),
        "min_train_segments": cfg.min_train_segments,
        "seed": cfg.seed,
        "threshold": repr(cfg.threshold),
        "ms_spatial_radius": repr(cfg.meanshift.spatial_radius),
        "ms_range_radius": repr(cfg.meanshift.range_radius),
        "ms_min_segment_size": cfg.meanshift.min_segment_size,
        "ms_max_iterations": cfg.meanshift.max_iterations,
        "ms_convergence_eps": repr(cfg.meanshift.convergence_eps),
        "svm_c": repr(cfg.svm.C),
        "svm_max_epochs": cfg.svm.max_epochs,
        "svm_tol": repr(cfg.svm.tol),
        "svm_seed": cfg.svm.seed,
        "use_ndvi": "auto" if cfg.features.use_ndvi is None else cfg.features.use_ndvi,
        "use_heatmap": cfg.mode == MODE_FORCM,
    }
    canon = "\n".join(f"{k}={items[k]}" for k in sorted(items))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def derive_segment_labels(seg: SegmentMap, truth: LabelMask) -> np.ndarray:
    """Majority-vote labels in {-1, +1}: forest iff strictly over half the pixels.

    An exact 50/50 split resolves to non-forest.
    """
    if (seg.height, seg.width) != (truth.height, truth.width):
        raise DimensionMismatchError(
            f"segments {seg.height}x{seg.width} vs truth {truth.height}x{truth.width}"
        )
    lab = seg.labels.ravel()
    forest = np.bincount(lab[truth.labels.ravel() == 1], minlength=seg.segment_count)
    return np.where(2 * forest > seg.segment_sizes, 1, -1).astype(np.int8)


def sample_training_segments(seg: SegmentMap, labels: np.ndarray,
                             cfg: PipelineConfig) -> np.ndarray:
    """Stratified uniform sample of segment ids, without replacement.

    Takes max(min_train_segments, ceil(train_fraction * segment_count))
    segments, capped at the population, keeping class proportions within one
    segment and at least one segment per class. Seeded and deterministic:
    positives are drawn first, then negatives, each via a Philox permutation.
    """
    labels = np.asarray(labels)
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == -1)
    if pos.size == 0 or neg.size == 0:
        raise SingleClassSceneError("both classes must appear among segment labels")
    s = seg.segment_count
    target = max(cfg.min_train_segments, math.ceil(cfg.train_fraction * s))
    target = min(max(target, 2), s)

    share_pos = target * pos.size / s
    n_pos = math.floor(share_pos)
    n_neg = math.floor(target * neg.size / s)
    if n_pos + n_neg < target:  # give the leftover to the larger remainder
        if share_pos - n_pos >= (target * neg.size / s) - n_neg:
            n_pos += 1
        else:
            n_neg += 1
    # at least one segment per class, without exceeding the target
    if n_pos == 0:
        n_pos = 1
    elif n_pos >= target:
        n_pos = target - 1
    n_neg = target - n_pos
    # respect per-class populations, spilling the shortfall to the other class
    if n_pos > pos.size:
        n_neg = min(n_neg + (n_pos - pos.size), neg.size)
        n_pos = pos.size
    if n_neg > neg.size:
        n_pos = min(n_pos + (n_neg - neg.size), pos.size)
        n_neg = neg.size

    rng = np.random.Generator(np.random.Philox(key=cfg.seed))
    chosen_pos = rng.permutation(pos)[:n_pos]
    chosen_neg = rng.permutation(neg)[:n_neg]
    return np.sort(np.concatenate([chosen_pos, chosen_neg]))


def paint_segments(seg: SegmentMap, classes: np.ndarray,
                   geotransform: tuple[float, ...] = (0.0, 1.0, 0.0, 0.0, 0.0, -1.0),
                   ) -> LabelMask:
    """Expand per-segment classes to a per-pixel binary map."""
    classes = np.asarray(classes, dtype=np.uint8)
    if classes.shape != (seg.segment_count,):
        raise DimensionMismatchError("one class per segment required")
    return LabelMask(classes[seg.labels], geotransform=geotransform)


def run_pipeline(img: Raster, heat: Heatmap | None, truth: LabelMask,
                 cfg: PipelineConfig, threads: int = 1,
                 stage_timings: dict | None = None,
                 ) -> tuple[LabelMask, ClassifiedSegments, MetricsReport]:
    """Run one scene end to end; returns (prediction, scores, metrics).

    forcm mode requires a heatmap whose size matches the image. When
    ``stage_timings`` is a dict it receives per-stage wall times in ms.
    """
    if (img.height, img.width) != (truth.height, truth.width):
        raise DimensionMismatchError(
            f"image {img.height}x{img.width} vs truth {truth.height}x{truth.width}"
        )
    fusion = cfg.mode == MODE_FORCM
    if fusion and heat is None:
        raise MissingHeatmapError("forcm mode needs a probability heatmap")
    if fusion and (heat.height, heat.width) != (img.height, img.width):
        raise DimensionMismatchError(
            f"heatmap {heat.height}x{heat.width} vs image {img.height}x{img.width}"
        )

    timings = stage_timings if stage_timings is not None else {}

    t0 = time.perf_counter()
    seg = segment(img, cfg.meanshift, threads=threads)
    timings["segment_ms"] = (time.perf_counter() - t0) * 1000.0

    t0 = time.perf_counter()
    fspec = FeatureSpec(use_ndvi=cfg.features.use_ndvi, use_heatmap=fusion)
    table = extract_features(img, seg, heat if fusion else None, fspec)
    timings["features_ms"] = (time.perf_counter() - t0) * 1000.0

    t0 = time.perf_counter()
    all_labels = derive_segment_labels(seg, truth)
    train_ids = sample_training_segments(seg, all_labels, cfg)
    train_table, scaler = standardize(table.take(train_ids))
    model = train(train_table, all_labels[train_ids], cfg.svm, scaler)
    timings["train_ms"] = (time.perf_counter() - t0) * 1000.0

    t0 = time.perf_counter()
    scores = decision_values(model, table.vectors)
    classes = (scores >= cfg.threshold).astype(np.uint8)  # ties go to forest
    prediction = paint_segments(seg, classes, geotransform=img.geotransform)
    timings["classify_ms"] = (time.perf_counter() - t0) * 1000.0

    t0 = time.perf_counter()
    report = compute_metrics(confusion(prediction, truth), mode=cfg.mode,
                             seed=cfg.seed, config_hash=config_hash(cfg))
    timings["evaluate_ms"] = (time.perf_counter() - t0) * 1000.0

    classified = ClassifiedSegments(scores, classes, cfg.threshold, train_ids, model=model)
    return prediction, classified, report
