"""Dense 3D value types, overlap metrics and labor-cost accounting.

Arrays are indexed ``[ix, iy, iz]`` with dims ``(nx, ny, nz)``. All types
are immutable after construction (backing arrays are marked read-only) so
they can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Dims = tuple[int, int, int]


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Volume:
    """Dense scalar intensity field over a 3D domain."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"volume must be 3D, got shape {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise ValueError("volume contains non-finite intensities")
        object.__setattr__(self, "data", _freeze(self.data.astype(np.float32, copy=False)))

    @property
    def dims(self) -> Dims:
        return self.data.shape

    def slice2d(self, axis: int, index: int) -> np.ndarray:
        return np.take(self.data, index, axis=axis)


@dataclass(frozen=True)
class BinaryMask:
    """Per-voxel label in {0, 1}."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"mask must be 3D, got shape {self.data.shape}")
        arr = self.data.astype(np.uint8, copy=False)
        if arr.size and arr.max() > 1:
            raise ValueError("mask values must be strictly binary")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def dims(self) -> Dims:
        return self.data.shape

    def slice2d(self, axis: int, index: int) -> np.ndarray:
        return np.take(self.data, index, axis=axis)


@dataclass(frozen=True)
class ProbabilityMap:
    """Per-voxel foreground likelihood in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"probability map must be 3D, got shape {self.data.shape}")
        arr = self.data.astype(np.float32, copy=False)
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("probability values must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def dims(self) -> Dims:
        return self.data.shape

    def threshold(self, cutoff: float = 0.5) -> BinaryMask:
        return BinaryMask((self.data > cutoff).astype(np.uint8))


@dataclass(frozen=True)
class SliceSet:
    """Per-axis sets of annotated slice indices with their 2D masks.

    ``masks[axis]`` maps a slice index to the drawn 2D binary mask for that
    slice. Instances are value-like: use :meth:`with_added` to grow.
    """

    masks: dict[int, dict[int, np.ndarray]] = field(default_factory=dict)

    def __post_init__(self):
        clean: dict[int, dict[int, np.ndarray]] = {}
        for axis, per_axis in self.masks.items():
            if axis not in (0, 1, 2):
                raise ValueError(f"axis must be 0, 1 or 2, got {axis}")
            clean[axis] = {}
            for idx, m in per_axis.items():
                m = np.asarray(m, dtype=np.uint8)
                if m.ndim != 2:
                    raise ValueError("slice masks must be 2D")
                if m.size and m.max() > 1:
                    raise ValueError("slice masks must be binary")
                clean[axis][int(idx)] = _freeze(m)
        object.__setattr__(self, "masks", clean)

    def indices(self, axis: int) -> list[int]:
        return sorted(self.masks.get(axis, {}))

    def mask(self, axis: int, index: int) -> np.ndarray:
        return self.masks[axis][index]

    def count(self, axis: int | None = None) -> int:
        if axis is not None:
            return len(self.masks.get(axis, {}))
        return sum(len(v) for v in self.masks.values())

    def has(self, axis: int, index: int) -> bool:
        return index in self.masks.get(axis, {})

    def with_added(self, axis: int, index: int, mask: np.ndarray) -> "SliceSet":
        if self.has(axis, index):
            raise ValueError(f"slice {index} along axis {axis} already labeled")
        merged = {a: dict(v) for a, v in self.masks.items()}
        merged.setdefault(axis, {})[int(index)] = np.asarray(mask, dtype=np.uint8)
        return SliceSet(merged)

    def validate_dims(self, dims: Dims) -> None:
        for axis, per_axis in self.masks.items():
            expect = tuple(d for i, d in enumerate(dims) if i != axis)
            for idx, m in per_axis.items():
                if not 0 <= idx < dims[axis]:
                    raise ValueError(f"slice index {idx} out of range along axis {axis}")
                if m.shape != expect:
                    raise ValueError(
                        f"slice mask shape {m.shape} does not match volume dims {dims}"
                    )


def dice(a: BinaryMask | np.ndarray, b: BinaryMask | np.ndarray) -> float:
    """Dice overlap 2|a∩b| / (|a|+|b|); two empty masks score 1.0."""
    da = a.data if isinstance(a, BinaryMask) else np.asarray(a)
    db = b.data if isinstance(b, BinaryMask) else np.asarray(b)
    if da.shape != db.shape:
        raise ValueError(f"dimension mismatch: {da.shape} vs {db.shape}")
    da = da.astype(bool)
    db = db.astype(bool)
    total = int(da.sum()) + int(db.sum())
    if total == 0:
        return 1.0
    inter = int(np.logical_and(da, db).sum())
    return 2.0 * inter / total


def target_slice_counts(mask: BinaryMask) -> Dims:
    """Number of slices intersecting the foreground, per axis."""
    m = mask.data.astype(bool)
    return tuple(
        int(np.any(m, axis=tuple(i for i in range(3) if i != axis)).sum())
        for axis in range(3)
    )


def labor_cost(gamma: SliceSet, dims: Dims, target_mask: BinaryMask | None = None) -> float:
    """Fraction of full-annotation effort spent on the labeled slices.

    Per-axis cost is |Γ_axis| / n_axis under a constant per-slice cost.
    With ``target_mask`` the denominators become the per-axis counts of
    slices that intersect the foreground (the accounting used for labor
    tables); axes with no target slices contribute zero.
    """
    gamma.validate_dims(dims)
    if target_mask is None:
        denoms = dims
    else:
        denoms = target_slice_counts(target_mask)
    total = 0.0
    for axis in range(3):
        n_labeled = gamma.count(axis)
        if n_labeled == 0:
            continue
        if denoms[axis] == 0:
            continue
        total += n_labeled / denoms[axis]
    return total
