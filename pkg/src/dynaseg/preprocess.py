"""Volume preprocessing: normalize, crop to non-zero bounds, resize.

Intensities are normalized as (v - mean) / std with dataset statistics,
the crop box is the non-zero bounding box of the raw volume expanded by a
margin drawn uniformly per side, and resizing is trilinear for volumes,
nearest-neighbor for masks (so masks stay binary).
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import map_coordinates

from .volume import BinaryMask, Dims, Volume


def nonzero_bbox(data: np.ndarray) -> tuple[tuple[int, int], ...]:
    """Inclusive-exclusive (lo, hi) bounds of the non-zero region per axis."""
    if not np.any(data):
        raise ValueError("all-zero volume has no bounding box")
    bounds = []
    for axis in range(data.ndim):
        hit = np.any(data != 0, axis=tuple(i for i in range(data.ndim) if i != axis))
        idx = np.flatnonzero(hit)
        bounds.append((int(idx[0]), int(idx[-1]) + 1))
    return tuple(bounds)


def _expand_bbox(bbox, dims: Dims, margin: tuple[int, int],
                 rng: np.random.Generator | None):
    lo_m, hi_m = margin
    if lo_m < 0 or hi_m < lo_m:
        raise ValueError("margin range must satisfy 0 <= lo <= hi")
    out = []
    for (lo, hi), d in zip(bbox, dims):
        if rng is None:
            pad_lo = pad_hi = lo_m
        else:
            pad_lo = int(rng.integers(lo_m, hi_m + 1))
            pad_hi = int(rng.integers(lo_m, hi_m + 1))
        out.append((max(0, lo - pad_lo), min(d, hi + pad_hi)))
    return tuple(out)


def resize(data: np.ndarray, target_dims: Dims, order: int = 1) -> np.ndarray:
    """Resample to target dims; order=1 trilinear, order=0 nearest."""
    coords = np.meshgrid(
        *[
            (np.arange(t, dtype=np.float64) + 0.5) * s / t - 0.5
            for t, s in zip(target_dims, data.shape)
        ],
        indexing="ij",
    )
    return map_coordinates(
        data.astype(np.float64), np.stack(coords), order=order, mode="nearest"
    )


def preprocess(
    v: Volume,
    mean: float,
    std: float,
    margin: tuple[int, int],
    target_dims: Dims,
    rng: np.random.Generator | None = None,
    mask: BinaryMask | None = None,
) -> Volume | tuple[Volume, BinaryMask]:
    """Normalize, crop with random margin, resize trilinearly.

    The crop box comes from the raw volume's non-zero boundaries. If
    ``rng`` is None the margin is fixed at its lower bound. Passing
    ``mask`` applies the identical crop and a nearest-neighbor resize to
    the paired label.
    """
    if std <= 0:
        raise ValueError("std must be positive")
    if any(d < 1 for d in target_dims):
        raise ValueError("target_dims must be positive")
    bbox = _expand_bbox(nonzero_bbox(v.data), v.dims, margin, rng)
    sl = tuple(slice(lo, hi) for lo, hi in bbox)
    normalized = (v.data.astype(np.float64) - mean) / std
    out = Volume(resize(normalized[sl], target_dims, order=1).astype(np.float32))
    if mask is None:
        return out
    if mask.dims != v.dims:
        raise ValueError("mask dims must match volume dims")
    m = resize(mask.data[sl], target_dims, order=0)
    return out, BinaryMask(m.astype(np.uint8))
