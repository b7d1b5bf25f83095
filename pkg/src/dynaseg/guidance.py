"""Model-guided slice proposal.

A residual field scores each voxel by how much the proxy mask and the
segmenter disagree, blended with a term that favors regions far from the
already labeled slices. Per-axis slice masses are the field summed over
each unlabeled slice, and new slices to label are drawn at random with
probability proportional to mass, trading pure greed for spatial spread.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import _min_slice_distance
from .volume import Dims, SliceSet

D2_FORMS = ("far", "near")


@dataclass(frozen=True)
class GuidanceConfig:
    omega1: float = 0.7  # weight of the disagreement term
    d2_form: str = "far"  # "far": 1 - exp(-dist); "near": exp(-dist)
    tau: int = 1  # new slices per plane per round
    axes: tuple[int, ...] = (0, 1)

    def __post_init__(self):
        if not 0.0 <= self.omega1 <= 1.0:
            raise ValueError("omega1 must lie in [0, 1]")
        if self.d2_form not in D2_FORMS:
            raise ValueError(f"unknown d2 form {self.d2_form!r}")
        if self.tau < 1:
            raise ValueError("tau must be >= 1")


def residual_map(
    proxy: np.ndarray,
    pred: np.ndarray,
    gamma: SliceSet,
    cfg: GuidanceConfig | None = None,
) -> np.ndarray:
    """Per-voxel annotation-need score, non-negative.

    r = omega1 * |proxy - pred| + (1 - omega1) * d2(x, labeled slices).
    The default d2 grows with distance from the labeled planes, so unlabeled
    territory far from any annotation attracts proposals; the "near" form
    keeps the raw exponential decay instead.
    """
    proxy = np.asarray(proxy, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if proxy.shape != pred.shape:
        raise ValueError(f"dimension mismatch: {proxy.shape} vs {pred.shape}")
    cfg = cfg or GuidanceConfig()
    r = cfg.omega1 * np.abs(proxy - pred)
    if cfg.omega1 < 1.0:
        if gamma.count() == 0:
            d = np.full(proxy.shape, np.inf)
        else:
            d = _min_slice_distance(gamma, proxy.shape, cfg.axes)
        if cfg.d2_form == "far":
            d2 = 1.0 - np.exp(-np.where(np.isinf(d), np.inf, d))
            d2 = np.where(np.isinf(d), 1.0, d2)
        else:
            d2 = np.where(np.isinf(d), 0.0, np.exp(-np.where(np.isinf(d), 0.0, d)))
        r = r + (1.0 - cfg.omega1) * d2
    return r


def slice_masses(r: np.ndarray, axis: int) -> np.ndarray:
    """Residual mass per slice along an axis."""
    axes = tuple(a for a in range(r.ndim) if a != axis)
    return r.sum(axis=axes)


def propose_slices(
    r: np.ndarray,
    axis: int,
    labeled: set[int] | list[int],
    tau: int,
    rng: np.random.Generator,
) -> list[int]:
    """Draw up to tau distinct unlabeled slice indices with chance
    proportional to residual mass. Empty when nothing is left to label or
    all remaining mass is zero."""
    if tau < 1:
        raise ValueError("tau must be >= 1")
    labeled = set(int(i) for i in labeled)
    masses = slice_masses(np.asarray(r, dtype=np.float64), axis)
    candidates = np.array([i for i in range(masses.size) if i not in labeled])
    if candidates.size == 0:
        return []
    weights = masses[candidates]
    total = float(weights.sum())
    if total <= 0.0:
        return []
    k = min(tau, int(np.count_nonzero(weights)))
    picks = rng.choice(candidates, size=k, replace=False, p=weights / total)
    return sorted(int(i) for i in np.atleast_1d(picks))


def random_slices(
    volume_data: np.ndarray,
    axis: int,
    labeled: set[int] | list[int],
    tau: int,
    rng: np.random.Generator,
) -> list[int]:
    """Uniform proposal over unlabeled slices with nonzero image variance,
    so blank border slices are never asked of the user."""
    labeled = set(int(i) for i in labeled)
    n = volume_data.shape[axis]
    candidates = [
        i for i in range(n)
        if i not in labeled and float(np.take(volume_data, i, axis=axis).std()) > 0
    ]
    if not candidates:
        candidates = [i for i in range(n) if i not in labeled]
    if not candidates:
        return []
    k = min(tau, len(candidates))
    picks = rng.choice(np.array(candidates), size=k, replace=False)
    return sorted(int(i) for i in np.atleast_1d(picks))
