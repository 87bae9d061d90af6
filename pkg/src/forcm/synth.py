"""Seeded synthetic scenes with exact ground truth, plus stand-in heatmaps.

Reproducibility contract: all randomness comes from numpy's Philox 4x64-10
counter-based generator keyed directly by the scene seed, with a fixed draw
order (per blob: kind, center x, center y, radius x, radius y; then the noise
field). Identical seeds therefore produce bit-identical scenes across runs
and platforms.

The default spectra give forest a strong NIR response and low visible
reflectance, so NDVI separates the classes and the NDVI pseudo-heatmap is
informative without any trained model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, InvalidSpecError, RequiresNirError
from .raster_io import Heatmap, LabelMask, Raster

FOREST_SPECTRUM = (0.05, 0.15, 0.05, 0.6)
NONFOREST_SPECTRUM = (0.3, 0.3, 0.25, 0.3)


@dataclass(frozen=True)
class SceneSpec:
    """Geometry and radiometry of a synthetic forest/non-forest scene."""

    width: int = 128
    height: int = 128
    bands: int = 4
    n_blobs: int = 4
    blob_scale: float = 24.0
    forest_spectrum: tuple[float, ...] | None = None
    nonforest_spectrum: tuple[float, ...] | None = None
    noise_sigma: float = 0.0
    boundary_blur: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise InvalidSpecError("scene dimensions must be positive")
        if self.bands not in (3, 4):
            raise InvalidSpecError("bands must be 3 or 4")
        if self.n_blobs < 0:
            raise InvalidSpecError("n_blobs must be >= 0")
        if self.n_blobs > 0 and self.blob_scale <= 0:
            raise InvalidSpecError("blob_scale must be > 0")
        if self.noise_sigma < 0:
            raise InvalidSpecError("noise_sigma must be >= 0")
        if self.boundary_blur < 0:
            raise InvalidSpecError("boundary_blur must be >= 0")
        for name in ("forest_spectrum", "nonforest_spectrum"):
            spec = getattr(self, name)
            if spec is None:
                default = FOREST_SPECTRUM if name == "forest_spectrum" else NONFOREST_SPECTRUM
                spec = default[:self.bands]
                object.__setattr__(self, name, spec)
            else:
                spec = tuple(float(v) for v in spec)
                object.__setattr__(self, name, spec)
            if len(spec) != self.bands:
                raise InvalidSpecError(f"{name} must have one value per band")
            if any(not 0.0 <= v <= 1.0 for v in spec):
                raise InvalidSpecError(f"{name} values must lie in [0, 1]")


def box_blur(arr: np.ndarray, radius: int) -> np.ndarray:
    """Separable box mean; windows are truncated and renormalized at borders."""
    if radius <= 0:
        return np.asarray(arr, dtype=np.float64)
    out = np.asarray(arr, dtype=np.float64)
    for axis in (0, 1):
        n = out.shape[axis]
        csum = np.cumsum(out, axis=axis)
        zero = np.zeros_like(np.take(csum, [0], axis=axis))
        csum = np.concatenate([zero, csum], axis=axis)  # csum[i] = sum of first i
        lo = np.maximum(np.arange(n) - radius, 0)
        hi = np.minimum(np.arange(n) + radius, n - 1) + 1
        sums = np.take(csum, hi, axis=axis) - np.take(csum, lo, axis=axis)
        shape = [1] * out.ndim
        shape[axis] = n
        out = sums / (hi - lo).astype(np.float64).reshape(shape)
    return out


def generate_scene(spec: SceneSpec) -> tuple[Raster, LabelMask]:
    """Rasterize seeded random rectangles/ellipses as forest over background.

    The mask records the exact pre-noise geometry; noise and blur only touch
    the image, so the mask is independent of ``noise_sigma``/``boundary_blur``.
    """
    rng = np.random.Generator(np.random.Philox(key=spec.seed))
    h, w, b = spec.height, spec.width, spec.bands
    jj, ii = np.meshgrid(np.arange(w, dtype=np.float64) + 0.5,
                         np.arange(h, dtype=np.float64) + 0.5)
    mask = np.zeros((h, w), dtype=bool)
    for _ in range(spec.n_blobs):
        kind = int(rng.integers(0, 2))
        cx = rng.uniform(0.0, w)
        cy = rng.uniform(0.0, h)
        rx = rng.uniform(0.4, 1.0) * spec.blob_scale
        ry = rng.uniform(0.4, 1.0) * spec.blob_scale
        if kind == 0:
            inside = (np.abs(jj - cx) <= rx) & (np.abs(ii - cy) <= ry)
        else:
            inside = ((jj - cx) / rx) ** 2 + ((ii - cy) / ry) ** 2 <= 1.0
        mask |= inside

    forest = np.asarray(spec.forest_spectrum, dtype=np.float64)
    nonforest = np.asarray(spec.nonforest_spectrum, dtype=np.float64)
    img = np.where(mask[:, :, None], forest, nonforest)
    if spec.boundary_blur > 0:
        img = box_blur(img, spec.boundary_blur)
    if spec.noise_sigma > 0:
        img = img + rng.normal(0.0, spec.noise_sigma, size=(h, w, b))
    img = np.clip(img, 0.0, 1.0).astype(np.float32)
    return Raster(img), LabelMask(mask.astype(np.uint8))


def oracle_heatmap(truth: LabelMask, error_rate: float, blur: int,
                   seed: int = 0) -> Heatmap:
    """Ground truth corrupted into a plausible prediction map.

    Exactly round(error_rate * pixel_count) seeded pixels are flipped toward
    the wrong class, then the map is box-blurred. error_rate 0 with blur 0
    reproduces the truth exactly; error_rate 1 inverts it.
    """
    if not 0.0 <= error_rate <= 1.0:
        raise InvalidArgumentError("error_rate must lie in [0, 1]")
    if blur < 0:
        raise InvalidArgumentError("blur must be >= 0")
    prob = truth.labels.astype(np.float64)
    n = prob.size
    n_flip = int(math.floor(error_rate * n + 0.5))
    if n_flip > 0:
        rng = np.random.Generator(np.random.Philox(key=seed))
        idx = rng.permutation(n)[:n_flip]
        flat = prob.ravel()
        flat[idx] = 1.0 - flat[idx]
        prob = flat.reshape(truth.labels.shape)
    if blur > 0:
        prob = box_blur(prob, blur)
    return Heatmap(np.clip(prob, 0.0, 1.0).astype(np.float32))


def ndvi_pseudo_heatmap(img: Raster) -> Heatmap:
    """Model-free heatmap: per-pixel NDVI rescaled from [-1, 1] to [0, 1]."""
    if img.bands != 4:
        raise RequiresNirError("NDVI pseudo-heatmap needs a 4-band (R,G,B,NIR) raster")
    red = img.band(0).astype(np.float64)
    nir = img.band(3).astype(np.float64)
    ndvi = (nir - red) / (nir + red + 1e-9)
    return Heatmap(np.clip((ndvi + 1.0) / 2.0, 0.0, 1.0).astype(np.float32))
