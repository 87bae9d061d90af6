"""Mean-shift object segmentation: filter, mode labeling, small-segment merge.

The filter runs joint spatial-range mode seeking with a flat kernel: each
pixel's point starts at (row, col, spectrum) and repeatedly jumps to the mean
of the image samples inside a square spatial window of radius ``spatial_radius``
around its current position whose spectra lie within Euclidean distance
``range_radius`` of its current spectrum. Iteration stops when the spectral
displacement drops below ``convergence_eps``, when the window holds no samples,
or after ``max_iterations`` steps. Only the converged spectrum is kept, at the
original pixel location.

Note on units: ``range_radius`` is expressed in normalized reflectance. The
conventional raw 8-bit radius of 5 becomes 5/255 after images are divided by
255, which is the default here.

Segments are then 4-connected components of pixels whose converged spectra
differ by at most ``range_radius``, and components smaller than
``min_segment_size`` are merged into their spectrally closest 4-adjacent
neighbor until none remain. Every stage is deterministic; the filter may run
its independent per-pixel work on multiple threads without changing a bit of
the output.
"""

from __future__ import annotations

import heapq
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DimensionMismatchError, InvalidArgumentError
from .raster_io import Raster

_CHUNK = 4096  # pixels per vectorized mode-seeking block (memory bound)


@dataclass(frozen=True)
class MeanShiftParams:
    """Knobs for the segmentation stack.

    ``spatial_radius`` and ``range_radius`` define the flat mode-seeking
    kernel; ``min_segment_size`` is the post-merge floor on segment pixel
    counts (no principled value exists, 100 is the documented default).
    """

    spatial_radius: float = 5.0
    range_radius: float = 5.0 / 255.0
    min_segment_size: int = 100
    max_iterations: int = 100
    convergence_eps: float = 1e-3

    def __post_init__(self) -> None:
        if self.spatial_radius <= 0:
            raise InvalidArgumentError("spatial_radius must be > 0")
        if self.range_radius <= 0:
            raise InvalidArgumentError("range_radius must be > 0")
        if self.min_segment_size < 1:
            raise InvalidArgumentError("min_segment_size must be >= 1")
        if self.max_iterations < 1:
            raise InvalidArgumentError("max_iterations must be >= 1")
        if self.convergence_eps <= 0:
            raise InvalidArgumentError("convergence_eps must be > 0")


@dataclass(frozen=True)
class SegmentMap:
    """Dense per-pixel segment labels plus per-segment pixel counts."""

    labels: np.ndarray
    segment_count: int
    segment_sizes: np.ndarray

    def __post_init__(self) -> None:
        lab = np.ascontiguousarray(self.labels, dtype=np.int32)
        sizes = np.ascontiguousarray(self.segment_sizes, dtype=np.int64)
        if lab.ndim != 2 or lab.size == 0:
            raise InvalidArgumentError(f"labels must be non-empty 2-D, got {lab.shape}")
        if self.segment_count < 1 or sizes.shape != (self.segment_count,):
            raise InvalidArgumentError("segment_sizes must have one entry per segment")
        if lab.min() < 0 or lab.max() >= self.segment_count:
            raise InvalidArgumentError("labels must be dense in [0, segment_count)")
        if sizes.sum() != lab.size:
            raise InvalidArgumentError("segment sizes must sum to the pixel count")
        lab.setflags(write=False)
        sizes.setflags(write=False)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "segment_sizes", sizes)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


def _mode_seek_block(flat: np.ndarray, h: int, w: int, oy: np.ndarray, ox: np.ndarray,
                     hs: float, hr2: float, y: np.ndarray, x: np.ndarray,
                     v: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """One mean-shift jump for a block of points; returns (y, x, v, displacement)."""
    ni = np.floor(y).astype(np.int64)[:, None] + oy[None, :]
    nj = np.floor(x).astype(np.int64)[:, None] + ox[None, :]
    ok = (ni >= 0) & (ni < h) & (nj >= 0) & (nj < w)
    ok &= (np.abs(ni - y[:, None]) <= hs) & (np.abs(nj - x[:, None]) <= hs)
    nv = flat[np.clip(ni, 0, h - 1) * w + np.clip(nj, 0, w - 1)]
    diff = nv - v[:, None, :]
    ok &= np.einsum("pkb,pkb->pk", diff, diff) <= hr2
    cnt = ok.sum(axis=1).astype(np.float64)
    empty = cnt == 0
    cnt[empty] = 1.0  # avoid 0/0; empty windows freeze the point below
    okf = ok.astype(np.float64)
    ny = (okf * ni).sum(axis=1) / cnt
    nx = (okf * nj).sum(axis=1) / cnt
    nvv = np.einsum("pk,pkb->pb", okf, nv) / cnt[:, None]
    ny = np.where(empty, y, ny)
    nx = np.where(empty, x, nx)
    nvv = np.where(empty[:, None], v, nvv)
    disp = np.sqrt(np.einsum("pb,pb->p", nvv - v, nvv - v))
    disp[empty] = 0.0
    return ny, nx, nvv, disp


def mean_shift_filter(img: Raster, params: MeanShiftParams, threads: int = 1) -> Raster:
    """Replace every pixel's spectrum with its converged mean-shift mode.

    The input must already be normalized; samples above 1 + 1e-6 are
    rejected. Output values are means of input samples, so each band stays
    within its input range.
    """
    samples = img.samples
    if float(samples.max()) > 1.0 + 1e-6:
        raise InvalidArgumentError(
            "image is not normalized to [0, 1]; divide by the sensor max first"
        )
    h, w, b = samples.shape
    n = h * w
    flat = samples.reshape(n, b).astype(np.float64)

    r = int(math.ceil(params.spatial_radius))
    off = np.arange(-r, r + 2, dtype=np.int64)  # covers [c-hs, c+hs] for any fractional c
    oy = np.repeat(off, off.size)
    ox = np.tile(off, off.size)

    ys = np.repeat(np.arange(h, dtype=np.float64), w)
    xs = np.tile(np.arange(w, dtype=np.float64), h)
    vs = flat.copy()
    active = np.arange(n)
    hr2 = params.range_radius * params.range_radius

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for _ in range(params.max_iterations):
            if active.size == 0:
                break
            blocks = [active[s:s + _CHUNK] for s in range(0, active.size, _CHUNK)]

            def step(idx: np.ndarray) -> np.ndarray:
                ny, nx, nv, disp = _mode_seek_block(
                    flat, h, w, oy, ox, params.spatial_radius, hr2,
                    ys[idx], xs[idx], vs[idx],
                )
                ys[idx] = ny
                xs[idx] = nx
                vs[idx] = nv
                return disp

            if pool is not None:
                disps = list(pool.map(step, blocks))
            else:
                disps = [step(idx) for idx in blocks]
            disp = np.concatenate(disps)
            active = active[disp >= params.convergence_eps]
    finally:
        if pool is not None:
            pool.shutdown()

    return Raster(vs.reshape(h, w, b).astype(np.float32),
                  nodata=img.nodata, geotransform=img.geotransform)


def _densify_first_seen(comp: np.ndarray, h: int, w: int) -> SegmentMap:
    """Renumber arbitrary component ids to 0.. in raster-scan first-seen order."""
    ncomp = int(comp.max()) + 1
    first = np.full(ncomp, comp.size, dtype=np.int64)
    np.minimum.at(first, comp, np.arange(comp.size, dtype=np.int64))
    rank = np.empty(ncomp, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(ncomp)
    labels = rank[comp].reshape(h, w).astype(np.int32)
    present = int(labels.max()) + 1
    sizes = np.bincount(labels.ravel(), minlength=present)
    return SegmentMap(labels, present, sizes)


def label_modes(filtered: Raster, params: MeanShiftParams) -> SegmentMap:
    """Group 4-connected pixels whose modes lie within range_radius of each other."""
    v = filtered.samples.astype(np.float64)
    h, w, _ = v.shape
    n = h * w
    hr2 = params.range_radius * params.range_radius
    idx = np.arange(n).reshape(h, w)

    rows, cols = [], []
    if w > 1:
        d = v[:, 1:] - v[:, :-1]
        near = (d * d).sum(axis=2) <= hr2
        rows.append(idx[:, :-1][near])
        cols.append(idx[:, 1:][near])
    if h > 1:
        d = v[1:] - v[:-1]
        near = (d * d).sum(axis=2) <= hr2
        rows.append(idx[:-1][near])
        cols.append(idx[1:][near])

    if rows:
        ri = np.concatenate(rows)
        ci = np.concatenate(cols)
    else:
        ri = ci = np.empty(0, dtype=np.int64)
    graph = coo_matrix((np.ones(ri.size, dtype=np.int8), (ri, ci)), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    return _densify_first_seen(comp, h, w)


def merge_small_segments(seg: SegmentMap, filtered: Raster,
                         params: MeanShiftParams) -> SegmentMap:
    """Absorb undersized segments into their spectrally nearest 4-neighbors.

    Processing order: always the smallest undersized segment first (ties by
    lower label); its target is the adjacent segment with the smallest
    Euclidean distance between mean mode spectra (ties by lower label). Sizes
    and means are updated after every merge, so chains of merges accumulate
    until everything reaches ``min_segment_size`` or one segment remains.
    """
    if (seg.height, seg.width) != (filtered.height, filtered.width):
        raise DimensionMismatchError(
            f"segment map {seg.height}x{seg.width} vs raster {filtered.height}x{filtered.width}"
        )
    lab = seg.labels.ravel()
    s = seg.segment_count
    v = filtered.samples.astype(np.float64).reshape(lab.size, filtered.bands)

    sizes = seg.segment_sizes.astype(np.int64).copy()
    sums = np.zeros((s, filtered.bands), dtype=np.float64)
    for band in range(filtered.bands):
        sums[:, band] = np.bincount(lab, weights=v[:, band], minlength=s)

    lab2d = seg.labels
    pairs = set()
    if seg.width > 1:
        a, c = lab2d[:, :-1].ravel(), lab2d[:, 1:].ravel()
        diff = a != c
        pairs.update(zip(a[diff].tolist(), c[diff].tolist()))
    if seg.height > 1:
        a, c = lab2d[:-1].ravel(), lab2d[1:].ravel()
        diff = a != c
        pairs.update(zip(a[diff].tolist(), c[diff].tolist()))
    adj: list[set[int]] = [set() for _ in range(s)]
    for a, c in pairs:
        adj[a].add(c)
        adj[c].add(a)

    alive = np.ones(s, dtype=bool)
    merged_into = np.arange(s, dtype=np.int64)
    alive_count = s
    min_size = params.min_segment_size

    heap = [(int(sizes[i]), i) for i in range(s) if sizes[i] < min_size]
    heapq.heapify(heap)
    while heap and alive_count > 1:
        size, a = heapq.heappop(heap)
        if not alive[a] or sizes[a] != size or sizes[a] >= min_size:
            continue  # stale entry
        if not adj[a]:
            break  # unreachable on a connected grid, defensive only
        mean_a = sums[a] / sizes[a]
        best = -1
        best_d = math.inf
        for c in sorted(adj[a]):
            dvec = sums[c] / sizes[c] - mean_a
            d = float(dvec @ dvec)
            if d < best_d:
                best_d = d
                best = c
        # fold a into best
        sizes[best] += sizes[a]
        sums[best] += sums[a]
        alive[a] = False
        merged_into[a] = best
        alive_count -= 1
        adj[best].discard(a)
        for c in adj[a]:
            adj[c].discard(a)
            if c != best:
                adj[c].add(best)
                adj[best].add(c)
        adj[a] = set()
        if sizes[best] < min_size:
            heapq.heappush(heap, (int(sizes[best]), best))

    # resolve merge chains, then compact to dense first-seen labels
    root = np.arange(s, dtype=np.int64)
    for i in range(s):
        r = i
        while merged_into[r] != r:
            r = merged_into[r]
        root[i] = r
    return _densify_first_seen(root[lab], seg.height, seg.width)


def segment(img: Raster, params: MeanShiftParams, threads: int = 1) -> SegmentMap:
    """Full segmentation: mode-seeking filter, mode labeling, small-segment merge."""
    filtered = mean_shift_filter(img, params, threads=threads)
    labeled = label_modes(filtered, params)
    return merge_small_segments(labeled, filtered, params)
