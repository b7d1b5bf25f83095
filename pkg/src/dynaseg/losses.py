"""Loss machinery: voxel losses, label smoothing, confidence weighting.

The batch loss over a new sample and m replayed samples is

    L = (1 - lambda_l) / (m + 1) * sum_i <W_i, l_i>  +  lambda_l * <W_new, l_new>

with <,> the voxel inner product. BCE terms are normalized by the weight
total per sample so the weight form does not rescale the effective
learning rate; the dice term folds weights into the soft-dice sums and is
self-normalizing. All gradients are analytic and flow to theta only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .network import ConvNet3D
from .volume import Dims, SliceSet

EPS = 1e-7
DICE_SMOOTH = 1e-6

WEIGHT_FORMS = ("ones", "exp", "indicator", "custom")


@dataclass(frozen=True)
class LossConfig:
    base: str = "bce"  # "bce" | "dice"
    lambda_l: float = 0.5
    lambda_y: float = 1.0
    weight_form: str = "ones"
    omega: float = 2.0
    weight_fn: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.base not in ("bce", "dice"):
            raise ValueError(f"unknown base loss {self.base!r}")
        if not 0.0 <= self.lambda_l <= 1.0:
            raise ValueError("lambda_l must lie in [0, 1]")
        if not 0.0 <= self.lambda_y <= 1.0:
            raise ValueError("lambda_y must lie in [0, 1]")
        if self.weight_form not in WEIGHT_FORMS:
            raise ValueError(f"unknown weight form {self.weight_form!r}")
        if self.omega <= 0:
            raise ValueError("omega must be positive")


@dataclass
class TrainSample:
    """A (volume, target) pair with optional confidence weights."""

    x: np.ndarray
    target: np.ndarray
    weight: np.ndarray | None = None
    gamma: SliceSet | None = None
    step: int = 0


@dataclass(frozen=True)
class ConfidenceMap:
    weights: np.ndarray
    form: str


def smooth_target(prev_pred: np.ndarray, y: np.ndarray, lambda_y: float) -> np.ndarray:
    """Convex blend (1 - lambda_y) * prev_pred + lambda_y * y."""
    prev_pred = np.asarray(prev_pred, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if prev_pred.shape != y.shape:
        raise ValueError(f"dimension mismatch: {prev_pred.shape} vs {y.shape}")
    if not 0.0 <= lambda_y <= 1.0:
        raise ValueError("lambda_y must lie in [0, 1]")
    return (1.0 - lambda_y) * prev_pred + lambda_y * y


def _min_slice_distance(gamma: SliceSet, dims: Dims, axes) -> np.ndarray:
    """Per-voxel distance (in slices) to the nearest labeled slice plane."""
    dmin = np.full(dims, np.inf)
    for axis in axes:
        indices = gamma.indices(axis)
        if not indices:
            continue
        coords = np.arange(dims[axis], dtype=np.float64)
        d_axis = np.min(
            np.abs(coords[:, None] - np.asarray(indices, dtype=np.float64)[None, :]),
            axis=1,
        )
        shape = [1, 1, 1]
        shape[axis] = dims[axis]
        dmin = np.minimum(dmin, d_axis.reshape(shape))
    return dmin


def confidence_weights(
    form: str,
    gamma: SliceSet,
    dims: Dims,
    axes: tuple[int, ...] = (0, 1, 2),
    omega: float = 2.0,
    weight_fn: Callable[[np.ndarray], np.ndarray] | None = None,
) -> ConfidenceMap:
    """Spatial confidence map W(x | Gamma).

    "exp": exp(-min slice distance); "indicator": omega on labeled slices
    plus 1 everywhere; "custom": a caller-supplied non-increasing function
    of the distance; "ones": uniform. An empty Gamma yields uniform
    weights.
    """
    if form == "ones" or gamma.count() == 0:
        return ConfidenceMap(np.ones(dims), form)
    d = _min_slice_distance(gamma, dims, axes)
    if form == "exp":
        w = np.where(np.isinf(d), 0.0, np.exp(-np.where(np.isinf(d), 0.0, d)))
    elif form == "indicator":
        w = 1.0 + omega * (d == 0)
    elif form == "custom":
        if weight_fn is None:
            raise ValueError("custom weight form requires weight_fn")
        w = np.asarray(weight_fn(d), dtype=np.float64)
    else:
        raise ValueError(f"unknown weight form {form!r}")
    if w.shape != tuple(dims):
        raise ValueError("weight map shape must match dims")
    if not (np.isfinite(w).all() and (w >= 0).all()):
        raise ValueError("weights must be finite and non-negative")
    return ConfidenceMap(w, form)


def voxel_loss(kind: str, target: np.ndarray, pred: np.ndarray):
    """Per-voxel loss field and its scalar.

    BCE: field is the voxelwise cross entropy, scalar its mean. Dice:
    scalar is 1 - soft-dice over the volume, field is the analytic
    per-voxel gradient d(scalar)/d(pred).
    """
    target = np.asarray(target, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if target.shape != pred.shape:
        raise ValueError(f"dimension mismatch: {target.shape} vs {pred.shape}")
    p = np.clip(pred, EPS, 1.0 - EPS)
    if kind == "bce":
        field = -(target * np.log(p) + (1.0 - target) * np.log(1.0 - p))
        return field, float(field.mean())
    if kind == "dice":
        num = 2.0 * float((p * target).sum()) + DICE_SMOOTH
        den = float(p.sum()) + float(target.sum()) + DICE_SMOOTH
        scalar = 1.0 - num / den
        grad = -(2.0 * target * den - num) / den**2
        return grad, float(scalar)
    raise ValueError(f"unknown loss kind {kind!r}")


def _weighted_sample_loss(kind, target, pred, w):
    """Scalar weighted loss and dL/dpred for one sample."""
    target = np.asarray(target, dtype=np.float64)
    p = np.clip(np.asarray(pred, dtype=np.float64), EPS, 1.0 - EPS)
    if w is None:
        w = np.ones_like(p)
    if kind == "bce":
        wsum = float(w.sum())
        if wsum == 0:
            return 0.0, np.zeros_like(p)
        field = -(target * np.log(p) + (1.0 - target) * np.log(1.0 - p))
        loss = float((w * field).sum()) / wsum
        dldp = w * (p - target) / (p * (1.0 - p)) / wsum
        return loss, dldp
    # weighted soft dice: weights fold into both sums
    num = 2.0 * float((w * p * target).sum()) + DICE_SMOOTH
    den = float((w * p).sum()) + float((w * target).sum()) + DICE_SMOOTH
    loss = 1.0 - num / den
    dldp = -(2.0 * w * target * den - num * w) / den**2
    return loss, dldp


def weighted_batch_loss(
    net: ConvNet3D,
    new: TrainSample,
    replay: list[TrainSample],
    cfg: LossConfig,
):
    """Batch loss over {new} ∪ replay and its parameter gradients."""
    m = len(replay)
    coeffs = [(1.0 - cfg.lambda_l) / (m + 1)] * m + [cfg.lambda_l]
    samples = list(replay) + [new]
    total = 0.0
    flat_grad = None
    for coeff, sample in zip(coeffs, samples):
        if coeff == 0.0:
            continue
        pred, cache = net.forward(sample.x, want_cache=True)
        loss, dldp = _weighted_sample_loss(cfg.base, sample.target, pred, sample.weight)
        total += coeff * loss
        gw, gb = net.backward(cache, coeff * dldp)
        g = net.flat_grads(gw, gb)
        flat_grad = g if flat_grad is None else flat_grad + g
    if flat_grad is None:
        flat_grad = np.zeros_like(net.get_flat())
    return total, flat_grad


def sgd_step(theta: np.ndarray, grad: np.ndarray, eta: float,
             clip: float | None = None) -> np.ndarray:
    """Plain SGD update with optional gradient-norm clipping."""
    if eta <= 0:
        raise ValueError("learning rate must be positive")
    grad = np.asarray(grad)
    if not np.isfinite(grad).all():
        raise FloatingPointError("non-finite gradient")
    if clip is not None:
        norm = float(np.linalg.norm(grad))
        if norm > clip:
            grad = grad * (clip / norm)
    return theta - eta * grad


def apply_sgd(net: ConvNet3D, flat_grad: np.ndarray, eta: float,
              clip: float | None = None) -> None:
    net.set_flat(sgd_step(net.get_flat(), flat_grad, eta, clip))
    net.step_count += 1
