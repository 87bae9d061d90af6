"""Raster artifacts exchanged by the pipeline and their file I/O.

Three array containers cover everything the pipeline touches: multispectral
imagery (:class:`Raster`), binary forest/non-forest masks (:class:`LabelMask`)
and per-pixel forest probabilities (:class:`Heatmap`). Files are GeoTIFF
(uncompressed or deflate, striped or tiled; uint8/uint16/float32 samples) plus
8-bit grayscale PNG for masks. The six-number geotransform
(origin x, pixel width, row rotation, origin y, column rotation, pixel height)
is copied between file tags and containers verbatim; it is never interpreted.

All containers are immutable after construction (arrays are marked read-only)
and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tifffile
from PIL import Image, UnidentifiedImageError

from .errors import (
    CorruptRasterError,
    InvalidArgumentError,
    InvalidLabelsError,
    IoError,
    OutOfRangeError,
    UnsupportedFormatError,
)

DEFAULT_GEOTRANSFORM = (0.0, 1.0, 0.0, 0.0, 0.0, -1.0)

# GeoTIFF / GDAL tag ids
_TAG_MODEL_PIXEL_SCALE = 33550
_TAG_MODEL_TIEPOINT = 33922
_TAG_MODEL_TRANSFORMATION = 34264
_TAG_GDAL_NODATA = 42113

_SUPPORTED_DTYPES = (np.uint8, np.uint16, np.float32)


@dataclass(frozen=True)
class Raster:
    """Width x height x bands grid of float32 samples plus carry-through metadata.

    ``samples`` has shape (height, width, bands), C-order. ``nodata`` is an
    optional sentinel value; every sample that is not the sentinel must be
    finite. ``geotransform`` is opaque georeferencing metadata.
    """

    samples: np.ndarray
    nodata: float | None = None
    geotransform: tuple[float, ...] = DEFAULT_GEOTRANSFORM

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.samples, dtype=np.float32)
        if arr.ndim != 3:
            raise InvalidArgumentError(f"samples must be 3-D (h, w, bands), got {arr.shape}")
        h, w, b = arr.shape
        if h <= 0 or w <= 0 or b < 1:
            raise InvalidArgumentError(f"empty raster shape {arr.shape}")
        finite = np.isfinite(arr)
        if self.nodata is not None and math.isfinite(self.nodata):
            finite |= arr == np.float32(self.nodata)
        if not finite.all():
            raise InvalidArgumentError("non-nodata samples must be finite")
        if len(self.geotransform) != 6:
            raise InvalidArgumentError("geotransform must hold 6 values")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "geotransform", tuple(float(g) for g in self.geotransform))

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def bands(self) -> int:
        return self.samples.shape[2]

    def band(self, index: int) -> np.ndarray:
        """Read-only (height, width) view of one band, 0-based."""
        return self.samples[:, :, index]


@dataclass(frozen=True)
class LabelMask:
    """Binary per-pixel mask; 1 = forest, 0 = non-forest."""

    labels: np.ndarray
    geotransform: tuple[float, ...] = field(default=DEFAULT_GEOTRANSFORM, compare=False)

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if arr.ndim != 2 or arr.size == 0:
            raise InvalidArgumentError(f"mask must be non-empty 2-D, got {arr.shape}")
        if arr.max() > 1:
            raise InvalidLabelsError("mask values must be 0 or 1")
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)
        object.__setattr__(self, "geotransform", tuple(float(g) for g in self.geotransform))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


@dataclass(frozen=True)
class Heatmap:
    """Per-pixel forest probability in [0, 1]."""

    prob: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.prob, dtype=np.float32)
        if arr.ndim != 2 or arr.size == 0:
            raise InvalidArgumentError(f"heatmap must be non-empty 2-D, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise OutOfRangeError("heatmap contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise OutOfRangeError("heatmap probabilities must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "prob", arr)

    @property
    def height(self) -> int:
        return self.prob.shape[0]

    @property
    def width(self) -> int:
        return self.prob.shape[1]


def _geotransform_from_tags(tags) -> tuple[float, ...]:
    if _TAG_MODEL_TRANSFORMATION in tags:
        m = tags[_TAG_MODEL_TRANSFORMATION].value
        return (float(m[3]), float(m[0]), float(m[1]), float(m[7]), float(m[4]), float(m[5]))
    if _TAG_MODEL_PIXEL_SCALE in tags and _TAG_MODEL_TIEPOINT in tags:
        sx, sy = tags[_TAG_MODEL_PIXEL_SCALE].value[:2]
        ti, tj, _, tx, ty, _ = tags[_TAG_MODEL_TIEPOINT].value[:6]
        return (float(tx - ti * sx), float(sx), 0.0, float(ty + tj * sy), 0.0, float(-sy))
    return DEFAULT_GEOTRANSFORM


def _geotransform_tags(gt: tuple[float, ...]) -> list[tuple]:
    # North-up transforms use the compact scale+tiepoint encoding (what GDAL
    # emits); anything rotated falls back to the 4x4 model transformation.
    if gt[2] == 0.0 and gt[4] == 0.0 and gt[5] < 0.0:
        return [
            (_TAG_MODEL_PIXEL_SCALE, "d", 3, (gt[1], -gt[5], 0.0)),
            (_TAG_MODEL_TIEPOINT, "d", 6, (0.0, 0.0, 0.0, gt[0], gt[3], 0.0)),
        ]
    matrix = (gt[1], gt[2], 0.0, gt[0],
              gt[4], gt[5], 0.0, gt[3],
              0.0, 0.0, 0.0, 0.0,
              0.0, 0.0, 0.0, 1.0)
    return [(_TAG_MODEL_TRANSFORMATION, "d", 16, matrix)]


def _nodata_from_tags(tags) -> float | None:
    if _TAG_GDAL_NODATA not in tags:
        return None
    try:
        return float(str(tags[_TAG_GDAL_NODATA].value).strip())
    except ValueError:
        return None


def _open_tiff(path: Path) -> tifffile.TiffFile:
    if not path.exists():
        raise FileNotFoundError(str(path))
    try:
        return tifffile.TiffFile(path)
    except (tifffile.TiffFileError, ValueError) as exc:
        raise UnsupportedFormatError(f"{path}: not a readable TIFF ({exc})") from exc


def _read_tiff_array(path: Path) -> tuple[np.ndarray, tuple[float, ...], float | None]:
    """Decode the first series to an (h, w, bands) array plus metadata."""
    with _open_tiff(path) as tif:
        page = tif.pages[0]
        gt = _geotransform_from_tags(page.tags)
        nodata = _nodata_from_tags(page.tags)
        try:
            arr = tif.series[0].asarray()
        except Exception as exc:  # noqa: BLE001 - decoder failures mean truncation
            raise CorruptRasterError(f"{path}: failed to decode samples ({exc})") from exc
        axes = tif.series[0].axes
    if arr.ndim == 2:
        arr = arr[:, :, None]
    elif arr.ndim == 3 and axes == "SYX":
        arr = np.moveaxis(arr, 0, -1)
    elif arr.ndim != 3:
        raise UnsupportedFormatError(f"{path}: unsupported layout with axes {axes!r}")
    return arr, gt, nodata


def sample_dtype(path: str | Path) -> np.dtype:
    """Sample type as stored in the file (before the float32 conversion)."""
    with _open_tiff(Path(path)) as tif:
        return np.dtype(tif.series[0].dtype)


def read_image(path: str | Path) -> Raster:
    """Read a 1-, 3- or 4-band GeoTIFF into a float32 Raster.

    Band order is preserved exactly as stored (R,G,B[,NIR] for the satellite
    tiles). Samples must be uint8, uint16 or float32 and are converted to
    float32 without scaling; geotransform and nodata are carried through.
    """
    path = Path(path)
    arr, gt, nodata = _read_tiff_array(path)
    if arr.shape[2] not in (1, 3, 4):
        raise UnsupportedFormatError(f"{path}: band count {arr.shape[2]} not in {{1,3,4}}")
    if arr.dtype not in _SUPPORTED_DTYPES:
        raise UnsupportedFormatError(f"{path}: unsupported sample type {arr.dtype}")
    return Raster(arr.astype(np.float32), nodata=nodata, geotransform=gt)


def normalize_image(img: Raster, max_value: float) -> Raster:
    """Divide every sample by ``max_value`` (the 8-bit rule is /255).

    Nodata samples are left untouched so the sentinel survives normalization.
    """
    if not math.isfinite(max_value) or max_value <= 0:
        raise InvalidArgumentError(f"max_value must be positive, got {max_value}")
    scaled = img.samples.astype(np.float32) / np.float32(max_value)
    if img.nodata is not None:
        keep = img.samples == np.float32(img.nodata)
        scaled = np.where(keep, img.samples, scaled)
    return Raster(scaled, nodata=img.nodata, geotransform=img.geotransform)


def _mask_from_values(arr: np.ndarray, gt: tuple[float, ...], origin: str) -> LabelMask:
    distinct = np.unique(arr)
    if distinct.size and (distinct.min() < 0 or distinct.max() > 2):
        raise InvalidLabelsError(f"{origin}: mask values outside {{0,1,2}}: {distinct.tolist()}")
    values = set(int(v) for v in distinct)
    # {0,1} passes through; {1,2} shifts down so the larger stored value maps
    # to forest. An all-ones mask is ambiguous between the two conventions and
    # resolves as already-binary (kept as forest).
    if values <= {0, 1}:
        labels = arr.astype(np.uint8)
    elif values <= {1, 2}:
        labels = (arr - 1).astype(np.uint8)
    else:
        raise InvalidLabelsError(f"{origin}: mixed label conventions: {sorted(values)}")
    return LabelMask(labels, geotransform=gt)


def read_mask(path: str | Path) -> LabelMask:
    """Read a ground-truth mask from single-band PNG or GeoTIFF.

    Accepts stored values that are a subset of {0,1} or of {1,2}; the latter
    are remapped to {0,1}. PNG masks must be 8-bit single-channel grayscale;
    paletted or RGB PNGs are rejected.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    with open(path, "rb") as fh:
        magic = fh.read(8)
    if magic.startswith(b"\x89PNG"):
        try:
            with Image.open(path) as im:
                if im.mode != "L":
                    raise UnsupportedFormatError(
                        f"{path}: PNG masks must be 8-bit grayscale, got mode {im.mode!r}"
                    )
                arr = np.asarray(im, dtype=np.int64)
        except UnidentifiedImageError as exc:
            raise CorruptRasterError(f"{path}: undecodable PNG") from exc
        return _mask_from_values(arr, DEFAULT_GEOTRANSFORM, str(path))
    arr, gt, _ = _read_tiff_array(path)
    if arr.shape[2] != 1:
        raise UnsupportedFormatError(f"{path}: masks must be single-band, got {arr.shape[2]}")
    if arr.dtype not in (np.uint8, np.uint16):
        raise UnsupportedFormatError(f"{path}: masks must be unsigned integer, got {arr.dtype}")
    return _mask_from_values(arr[:, :, 0].astype(np.int64), gt, str(path))


def read_heatmap(path: str | Path) -> Heatmap:
    """Read a single-band probability raster, clamping float noise into [0,1].

    Values outside [-0.001, 1.001] are treated as data errors rather than
    clamped silently.
    """
    path = Path(path)
    arr, _, _ = _read_tiff_array(path)
    if arr.shape[2] != 1:
        raise UnsupportedFormatError(f"{path}: heatmaps must be single-band, got {arr.shape[2]}")
    if arr.dtype not in _SUPPORTED_DTYPES and arr.dtype != np.float64:
        raise UnsupportedFormatError(f"{path}: unsupported sample type {arr.dtype}")
    prob = arr[:, :, 0].astype(np.float64)
    if not np.isfinite(prob).all():
        raise OutOfRangeError(f"{path}: heatmap contains non-finite values")
    if prob.min() < -0.001 or prob.max() > 1.001:
        raise OutOfRangeError(
            f"{path}: probabilities span [{prob.min():g}, {prob.max():g}], expected [0, 1]"
        )
    return Heatmap(np.clip(prob, 0.0, 1.0).astype(np.float32))


def _write_tiff(path: Path, arr: np.ndarray, gt: tuple[float, ...],
                nodata: float | None = None, compress: bool = False) -> None:
    extratags = _geotransform_tags(gt)
    if nodata is not None:
        extratags.append((_TAG_GDAL_NODATA, "s", 0, repr(float(nodata))))
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    kwargs = {}
    if arr.ndim == 3:
        kwargs["planarconfig"] = "contig"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tifffile.imwrite(
            path,
            arr,
            photometric="minisblack",
            compression="deflate" if compress else None,
            extratags=extratags,
            **kwargs,
        )
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc


def write_image(img: Raster, path: str | Path, compress: bool = False) -> None:
    """Write a multispectral raster as float32 GeoTIFF."""
    _write_tiff(Path(path), np.asarray(img.samples), img.geotransform,
                nodata=img.nodata, compress=compress)


def write_binary_map(mask: LabelMask, geotransform: tuple[float, ...],
                     path: str | Path) -> None:
    """Write a {0,1} mask as single-band uint8 GeoTIFF (read_mask round-trips it)."""
    _write_tiff(Path(path), np.asarray(mask.labels), tuple(geotransform))


def write_heatmap(heat: Heatmap, geotransform: tuple[float, ...],
                  path: str | Path) -> None:
    """Write a probability heatmap as single-band float32 GeoTIFF."""
    _write_tiff(Path(path), np.asarray(heat.prob), tuple(geotransform))


def write_mask_png(mask: LabelMask, path: str | Path) -> None:
    """Write a {0,1} mask as 8-bit grayscale PNG."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(np.asarray(mask.labels), mode="L").save(path, format="PNG")
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc


def write_label_raster(labels: np.ndarray, geotransform: tuple[float, ...],
                       path: str | Path) -> None:
    """Write integer segment labels as single-band uint32 GeoTIFF."""
    arr = np.ascontiguousarray(labels)
    if arr.min() < 0 or arr.max() > np.iinfo(np.uint32).max:
        raise InvalidArgumentError("labels do not fit in uint32")
    _write_tiff(Path(path), arr.astype(np.uint32), tuple(geotransform))
