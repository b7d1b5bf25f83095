"""Proxy-mask propagation: spread sparse 2D slice labels through a volume.

Every unlabeled slice receives the label of its nearest labeled slice,
warped by the transform recovered from registering the two image slices.
Per-plane fields from two planes are merged by voxel-wise agreement
((ux + uy) / 2 with a strict 0.5 cut-off), so a single plane's vote never
creates foreground.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .registration import RegistrationConfig, register, warp_mask
from .volume import BinaryMask, Volume


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("DYNASEG_THREADS", "1")))
    except ValueError:
        return 1


def nearest_labeled(j: int, indices: list[int]) -> int:
    """Nearest labeled index to j; ties break toward the smaller index."""
    if not indices:
        raise ValueError("no labeled indices")
    return min(indices, key=lambda k: (abs(j - k), k))


@dataclass(frozen=True)
class PlaneProxy:
    """Per-plane proxy field with slice provenance."""

    axis: int
    labels: dict[int, np.ndarray]
    field: np.ndarray  # 3D uint8
    provenance: dict[int, tuple]  # j -> ("labeled",) | ("warped", k_star)

    def labeled_indices(self) -> list[int]:
        return sorted(self.labels)


def _slice2d(volume: Volume, axis: int, index: int) -> np.ndarray:
    return np.take(volume.data, index, axis=axis)


def _propagated_slice(volume, axis, j, k_star, labels, cfg):
    fixed = _slice2d(volume, axis, j)
    moving = _slice2d(volume, axis, k_star)
    t = register(fixed, moving, cfg)
    return warp_mask(np.asarray(labels[k_star]), t)


def _assemble(axis: int, n: int, slices: dict[int, np.ndarray]) -> np.ndarray:
    field = np.stack([slices[j] for j in range(n)], axis=axis)
    return field.astype(np.uint8)


def propagate_plane(
    volume: Volume,
    axis: int,
    labels: dict[int, np.ndarray],
    cfg: RegistrationConfig | None = None,
) -> PlaneProxy:
    """Build the full per-plane proxy field from labeled slices."""
    cfg = cfg or RegistrationConfig()
    if not labels:
        raise ValueError("cannot propagate from an empty slice set")
    n = volume.dims[axis]
    indices = sorted(labels)
    for idx in indices:
        if not 0 <= idx < n:
            raise ValueError(f"labeled index {idx} out of range along axis {axis}")
    provenance: dict[int, tuple] = {}
    jobs = []
    slices: dict[int, np.ndarray] = {}
    for j in range(n):
        if j in labels:
            slices[j] = np.asarray(labels[j], dtype=np.uint8)
            provenance[j] = ("labeled",)
        else:
            k = nearest_labeled(j, indices)
            provenance[j] = ("warped", k)
            jobs.append((j, k))

    workers = _thread_count()
    if workers > 1 and jobs:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = pool.map(
                lambda jk: _propagated_slice(volume, axis, jk[0], jk[1], labels, cfg),
                jobs,
            )
            for (j, _), warped in zip(jobs, results):
                slices[j] = warped
    else:
        for j, k in jobs:
            slices[j] = _propagated_slice(volume, axis, j, k, labels, cfg)

    return PlaneProxy(axis, dict(labels), _assemble(axis, n, slices), provenance)


def incremental_update(
    proxy: PlaneProxy,
    volume: Volume,
    new_labels: dict[int, np.ndarray],
    cfg: RegistrationConfig | None = None,
) -> PlaneProxy:
    """Fold newly labeled slices into an existing plane proxy.

    Only slices that are newly labeled, or whose nearest labeled index
    changed, are recomputed; the result is bit-identical to a full
    propagation over the union of the slice sets.
    """
    cfg = cfg or RegistrationConfig()
    overlap = set(proxy.labels) & set(new_labels)
    if overlap:
        raise ValueError(f"indices already labeled: {sorted(overlap)}")
    if not new_labels:
        return proxy
    n = volume.dims[axis := proxy.axis]
    merged_labels = dict(proxy.labels)
    merged_labels.update({int(k): np.asarray(v, dtype=np.uint8) for k, v in new_labels.items()})
    indices = sorted(merged_labels)
    slices: dict[int, np.ndarray] = {}
    provenance: dict[int, tuple] = {}
    for j in range(n):
        if j in merged_labels:
            slices[j] = np.asarray(merged_labels[j], dtype=np.uint8)
            provenance[j] = ("labeled",)
            continue
        k = nearest_labeled(j, indices)
        provenance[j] = ("warped", k)
        if k in new_labels:
            slices[j] = _propagated_slice(volume, axis, j, k, merged_labels, cfg)
        else:
            slices[j] = np.take(proxy.field, j, axis=axis)
    return PlaneProxy(axis, merged_labels, _assemble(axis, n, slices), provenance)


def merge_proxies(ux: np.ndarray | PlaneProxy, uy: np.ndarray | PlaneProxy) -> BinaryMask:
    """Two-plane merge: foreground iff (ux + uy) / 2 > 0.5 (strict)."""
    a = ux.field if isinstance(ux, PlaneProxy) else np.asarray(ux)
    b = uy.field if isinstance(uy, PlaneProxy) else np.asarray(uy)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    avg = (a.astype(np.float64) + b.astype(np.float64)) / 2.0
    return BinaryMask((avg > 0.5).astype(np.uint8))


@dataclass(frozen=True)
class ProxyMask:
    """Two-plane proxy with its merged mask."""

    planes: dict[int, PlaneProxy]
    merged: BinaryMask

    @staticmethod
    def from_planes(planes: dict[int, PlaneProxy]) -> "ProxyMask":
        fields = [p.field for p in planes.values()]
        if len(fields) != 2:
            raise ValueError("proxy merge expects exactly two planes")
        return ProxyMask(dict(planes), merge_proxies(fields[0], fields[1]))
