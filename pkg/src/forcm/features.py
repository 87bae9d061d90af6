"""Per-segment feature vectors: spectral stats, NDVI, optional heatmap weights.

Feature layout, in order: mean and population stddev of every band, then
``ndvi_mean`` for 4-band inputs, then ``heat_mean``/``heat_std`` when a
probability heatmap participates (fusion mode). Per-segment sums use exactly
rounded summation (math.fsum), so the result is bit-identical no matter how
pixel values are ordered within a segment.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatchError,
    InvalidArgumentError,
    MissingHeatmapError,
    TooFewRowsError,
)
from .meanshift import SegmentMap
from .raster_io import Heatmap, Raster

NDVI_EPS = 1e-9
_DEGENERATE_STD = 1e-12


@dataclass(frozen=True)
class FeatureSpec:
    """Which features to compute. ``use_ndvi=None`` means on iff 4 bands."""

    use_ndvi: bool | None = None
    use_heatmap: bool = False

    def resolve_ndvi(self, bands: int) -> bool:
        if self.use_ndvi is None:
            return bands == 4
        if self.use_ndvi and bands != 4:
            raise InvalidArgumentError("NDVI needs a 4-band (R,G,B,NIR) raster")
        return self.use_ndvi


@dataclass(frozen=True)
class FeatureTable:
    """One row of features per segment, rows ordered by segment id."""

    segment_ids: np.ndarray
    vectors: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self) -> None:
        ids = np.ascontiguousarray(self.segment_ids, dtype=np.int64)
        vec = np.ascontiguousarray(self.vectors, dtype=np.float64)
        if vec.ndim != 2 or ids.shape != (vec.shape[0],):
            raise InvalidArgumentError("vectors must be (rows, F) with one id per row")
        if vec.shape[1] != len(self.feature_names):
            raise InvalidArgumentError("feature_names length must equal feature count")
        if not np.isfinite(vec).all():
            raise InvalidArgumentError("feature vectors must be finite")
        ids.setflags(write=False)
        vec.setflags(write=False)
        object.__setattr__(self, "segment_ids", ids)
        object.__setattr__(self, "vectors", vec)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def feature_count(self) -> int:
        return self.vectors.shape[1]

    def take(self, ids: np.ndarray) -> "FeatureTable":
        """Subset of rows by position (segment id order preserved)."""
        return FeatureTable(self.segment_ids[ids], self.vectors[ids], self.feature_names)


@dataclass(frozen=True)
class FeatureScaler:
    """Per-feature standardization parameters; degenerate columns map to 0."""

    mean: np.ndarray
    std: np.ndarray
    degenerate: np.ndarray

    @classmethod
    def identity(cls, n_features: int) -> "FeatureScaler":
        return cls(np.zeros(n_features), np.ones(n_features),
                   np.zeros(n_features, dtype=bool))

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Standardize a (F,) vector or (n, F) matrix."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.mean.shape[0]:
            raise DimensionMismatchError(
                f"expected {self.mean.shape[0]} features, got {x.shape[-1]}"
            )
        safe = np.where(self.degenerate, 1.0, self.std)
        z = (x - self.mean) / safe
        return np.where(self.degenerate, 0.0, z)


def _segment_slices(labels: np.ndarray, count: int) -> list[np.ndarray]:
    """Pixel-index arrays per segment, ascending segment id."""
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(count + 1))
    return [order[bounds[i]:bounds[i + 1]] for i in range(count)]


def _mean_std(values: np.ndarray) -> tuple[float, float]:
    n = values.size
    mean = math.fsum(values) / n
    var = math.fsum((values - mean) ** 2) / n
    return mean, math.sqrt(var)


def extract_features(img: Raster, seg: SegmentMap, heat: Heatmap | None,
                     spec: FeatureSpec) -> FeatureTable:
    """Compute the feature row of every segment.

    Heatmap statistics are appended only when ``spec.use_heatmap`` is set;
    requesting them without supplying a heatmap is an error.
    """
    if (img.height, img.width) != (seg.height, seg.width):
        raise DimensionMismatchError(
            f"image {img.height}x{img.width} vs segments {seg.height}x{seg.width}"
        )
    if spec.use_heatmap and heat is None:
        raise MissingHeatmapError("fusion features requested but no heatmap given")
    if heat is not None and (heat.height, heat.width) != (img.height, img.width):
        raise DimensionMismatchError(
            f"heatmap {heat.height}x{heat.width} vs image {img.height}x{img.width}"
        )

    use_ndvi = spec.resolve_ndvi(img.bands)
    names: list[str] = []
    for b in range(img.bands):
        names += [f"band{b + 1}_mean", f"band{b + 1}_std"]
    if use_ndvi:
        names.append("ndvi_mean")
    if spec.use_heatmap:
        names += ["heat_mean", "heat_std"]

    n = seg.height * seg.width
    labels = seg.labels.ravel()
    slices = _segment_slices(labels, seg.segment_count)
    bands = [img.band(b).reshape(n).astype(np.float64) for b in range(img.bands)]

    if use_ndvi:
        red, nir = bands[0], bands[3]
        ndvi = (nir - red) / (nir + red + NDVI_EPS)
    heat_flat = heat.prob.reshape(n).astype(np.float64) if spec.use_heatmap else None

    vectors = np.empty((seg.segment_count, len(names)), dtype=np.float64)
    for sid, px in enumerate(slices):
        row: list[float] = []
        for band in bands:
            row += _mean_std(band[px])
        if use_ndvi:
            row.append(math.fsum(ndvi[px]) / px.size)
        if heat_flat is not None:
            row += _mean_std(heat_flat[px])
        vectors[sid] = row

    return FeatureTable(np.arange(seg.segment_count), vectors, tuple(names))


def standardize(table: FeatureTable) -> tuple[FeatureTable, FeatureScaler]:
    """Zero-mean unit-variance columns; near-constant columns become all zero.

    Returns the transformed table and the scaler to apply to rows that were
    not part of the fit.
    """
    if table.vectors.shape[0] < 2:
        raise TooFewRowsError("standardization needs at least 2 rows")
    mean = table.vectors.mean(axis=0)
    std = table.vectors.std(axis=0)  # population std
    degenerate = std < _DEGENERATE_STD
    scaler = FeatureScaler(mean, std, degenerate)
    return (
        FeatureTable(table.segment_ids, scaler.apply(table.vectors), table.feature_names),
        scaler,
    )


def write_csv(table: FeatureTable, path: str | Path) -> None:
    """Dump the table for offline inspection; header carries the feature names."""
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("segment_id",) + table.feature_names)
        for sid, row in zip(table.segment_ids.tolist(), table.vectors.tolist()):
            writer.writerow([sid] + [repr(x) for x in row])
