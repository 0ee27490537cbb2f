"""Tiled, clipped adaptive histogram equalization."""
from __future__ import annotations

import math

import numpy as np


def _tile_map(hist: np.ndarray, clip: float) -> np.ndarray:
    bins = hist.size
    occupied = np.flatnonzero(hist)
    h = hist.astype(np.float64)
    if math.isfinite(clip):
        limit = clip * h.sum() / bins
        excess = np.maximum(h - limit, 0.0).sum()
        h = np.minimum(h, limit) + excess / bins
    cdf = np.cumsum(h)
    lo, hi = occupied[0], occupied[-1]
    if hi == lo:
        return np.full(bins, 0.5)
    out = (cdf - cdf[lo]) / (cdf[hi] - cdf[lo])
    return np.clip(out, 0.0, 1.0)


def _blend_coords(n: int, parts: int):
    """Fractional tile coordinate of every pixel along one axis."""
    groups = np.array_split(np.arange(n), parts)
    centers = np.array([g.mean() for g in groups])
    f = np.interp(np.arange(n), centers, np.arange(parts, dtype=np.float64))
    i0 = np.floor(f).astype(int)
    i1 = np.minimum(i0 + 1, parts - 1)
    return i0, i1, f - i0, groups


def preprocess(image, width: int, height: int, tiles=(2, 2), clip: float = 2.0,
               bins: int = 256) -> np.ndarray:
    """Contrast-normalize a row-major image vector.

    The image is split into ``tiles = (rows, cols)`` tiles.  Each tile gets a
    clipped histogram-equalization mapping (histogram counts above
    ``clip`` times the mean bin count are redistributed evenly; pass
    ``math.inf`` to disable clipping) that sends the tile's lowest occupied
    bin to 0 and its highest to 1.  A pixel's output is the bilinear blend
    of the mappings of the surrounding tile centers.  A constant image maps
    to a constant.
    """
    img = np.asarray(image, dtype=np.float64).ravel()
    if width < 1 or height < 1 or img.size != width * height:
        raise ValueError(f"image of {img.size} values is not {height}x{width}")
    ty, tx = (int(t) for t in tiles)
    if not (1 <= ty <= height and 1 <= tx <= width):
        raise ValueError(f"tile grid {ty}x{tx} does not fit a {height}x{width} image")
    if bins < 2:
        raise ValueError("need at least 2 bins")
    if not clip > 0:
        raise ValueError("clip limit must be positive")
    img = img.reshape(height, width)
    lo, hi = float(img.min()), float(img.max())
    if hi == lo:
        return np.full(width * height, 0.5)
    b = np.minimum(((img - lo) / (hi - lo) * bins).astype(int), bins - 1)

    y0, y1, wy, ygroups = _blend_coords(height, ty)
    x0, x1, wx, xgroups = _blend_coords(width, tx)
    maps = np.empty((ty, tx, bins))
    for i, ys in enumerate(ygroups):
        for j, xs in enumerate(xgroups):
            hist = np.bincount(b[np.ix_(ys, xs)].ravel(), minlength=bins)
            maps[i, j] = _tile_map(hist, clip)

    yy, xx = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    wy2, wx2 = wy[yy], wx[xx]
    out = ((1 - wy2) * (1 - wx2) * maps[y0[yy], x0[xx], b]
           + (1 - wy2) * wx2 * maps[y0[yy], x1[xx], b]
           + wy2 * (1 - wx2) * maps[y1[yy], x0[xx], b]
           + wy2 * wx2 * maps[y1[yy], x1[xx], b])
    return out.ravel()
