"""2D intensity-based slice registration.

Finds a transform T minimizing a dissimilarity metric D(fixed, moving∘T)
by coarse-to-fine gradient descent over the transform parameters. The
metric gradient is taken by central differences in parameter space (2-6
parameters), with a backtracking step size so the objective is
non-increasing across accepted steps at every pyramid level.

Coordinates are array indices (row, col); a transform maps fixed-image
coordinates to moving-image sample locations about the slice center.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

FAMILIES = ("translation", "similarity", "affine")
# finite-difference step per parameter kind
_H_TRANSLATION = 0.5
_H_ANGLE = 0.02
_H_LOGSCALE = 0.02
_H_AFFINE = 0.02


@dataclass(frozen=True)
class Transform2D:
    """2D transform y = A (x - c) + c + t about slice center c."""

    family: str
    matrix: np.ndarray  # 2x2
    translation: np.ndarray  # (2,)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown transform family {self.family!r}")
        m = np.asarray(self.matrix, dtype=np.float64).reshape(2, 2)
        t = np.asarray(self.translation, dtype=np.float64).reshape(2)
        if abs(np.linalg.det(m)) <= 1e-8:
            raise ValueError("transform matrix is (near) singular")
        m.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity(family: str = "translation") -> "Transform2D":
        return Transform2D(family, np.eye(2), np.zeros(2))

    @staticmethod
    def translate(tx: float, ty: float) -> "Transform2D":
        return Transform2D("translation", np.eye(2), np.array([tx, ty]))


@dataclass(frozen=True)
class RegistrationConfig:
    metric: str = "mi"  # "mi" | "ssd"
    bins: int = 32
    max_iter: int = 60
    step_size: float = 2.0
    tol: float = 1e-4
    levels: int = 3
    family: str = "similarity"

    def __post_init__(self):
        if self.metric not in ("mi", "ssd"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.bins < 8:
            raise ValueError("bins must be >= 8")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown transform family {self.family!r}")


def _params_to_transform(family: str, p: np.ndarray) -> Transform2D:
    if family == "translation":
        return Transform2D(family, np.eye(2), p[:2])
    if family == "similarity":
        s = float(np.exp(p[3]))
        c, sn = np.cos(p[2]), np.sin(p[2])
        return Transform2D(family, s * np.array([[c, -sn], [sn, c]]), p[:2])
    return Transform2D(family, p[2:].reshape(2, 2), p[:2])


def _initial_params(family: str) -> np.ndarray:
    if family == "translation":
        return np.zeros(2)
    if family == "similarity":
        return np.zeros(4)
    return np.concatenate([np.zeros(2), np.eye(2).ravel()])


def _param_steps(family: str) -> np.ndarray:
    if family == "translation":
        return np.array([_H_TRANSLATION, _H_TRANSLATION])
    if family == "similarity":
        return np.array([_H_TRANSLATION, _H_TRANSLATION, _H_ANGLE, _H_LOGSCALE])
    return np.array([_H_TRANSLATION, _H_TRANSLATION] + [_H_AFFINE] * 4)


def _sample_coords(shape: tuple[int, int], t: Transform2D) -> np.ndarray:
    center = (np.asarray(shape, dtype=np.float64) - 1.0) / 2.0
    rr, cc = np.meshgrid(
        np.arange(shape[0], dtype=np.float64),
        np.arange(shape[1], dtype=np.float64),
        indexing="ij",
    )
    x = np.stack([rr - center[0], cc - center[1]])
    y = np.tensordot(t.matrix, x, axes=1)
    y[0] += center[0] + t.translation[0]
    y[1] += center[1] + t.translation[1]
    return y


def warp_image(moving: np.ndarray, t: Transform2D) -> np.ndarray:
    """Bilinear resampling of an intensity slice under the transform."""
    coords = _sample_coords(moving.shape, t)
    return map_coordinates(moving.astype(np.float64), coords, order=1, mode="nearest")


def warp_mask(mask: np.ndarray, t: Transform2D) -> np.ndarray:
    """Nearest-neighbor resampling; out-of-bounds source reads background."""
    coords = _sample_coords(mask.shape, t)
    out = map_coordinates(
        mask.astype(np.uint8), coords, order=0, mode="constant", cval=0
    )
    return out.astype(np.uint8)


def _hard_bins(img: np.ndarray, bins: int) -> np.ndarray:
    span = img.max() - img.min()
    if span <= 0:
        return np.zeros(img.shape, dtype=np.int64)
    scaled = (img - img.min()) / span * (bins - 1)
    return np.clip(scaled.astype(np.int64), 0, bins - 1)


def _mi_from_hist(hist: np.ndarray) -> float:
    pxy = hist / hist.sum()
    px = pxy.sum(axis=1, keepdims=True)
    py = pxy.sum(axis=0, keepdims=True)
    nz = pxy > 0
    mi = float(np.sum(pxy[nz] * np.log(pxy[nz] / (px @ py)[nz])))
    if not np.isfinite(mi):
        raise ValueError("mutual information is non-finite")
    return mi


def _mutual_information(
    a: np.ndarray, b: np.ndarray, bins: int,
    b_range: tuple[float, float] | None = None,
) -> float:
    """MI from a joint histogram with partial-volume (bilinear) binning,
    so the metric varies smoothly with sub-pixel warps.

    ``b_range`` fixes the bin range of the second image; anchoring it to the
    unwarped moving image keeps the binning independent of the current warp
    (resampling can only shrink the intensity range, which would otherwise
    rescale the bins and bias the optimum away from the true alignment).
    """
    a = a.ravel()
    b = b.ravel()
    a_span = a.max() - a.min()
    if a_span <= 0:
        raise ValueError("constant fixed image: mutual information undefined")
    b_min, b_max = b_range if b_range is not None else (b.min(), b.max())
    b_span = b_max - b_min
    fa = (a - a.min()) / a_span * (bins - 1)
    if b_span > 0:
        fb = np.clip((b - b_min) / b_span, 0.0, 1.0) * (bins - 1)
    else:
        fb = np.zeros_like(b)
    i0 = np.clip(fa.astype(np.int64), 0, bins - 2)
    j0 = np.clip(fb.astype(np.int64), 0, bins - 2)
    wi = fa - i0
    wj = fb - j0
    hist = np.zeros((bins, bins), dtype=np.float64)
    np.add.at(hist, (i0, j0), (1 - wi) * (1 - wj))
    np.add.at(hist, (i0 + 1, j0), wi * (1 - wj))
    np.add.at(hist, (i0, j0 + 1), (1 - wi) * wj)
    np.add.at(hist, (i0 + 1, j0 + 1), wi * wj)
    return _mi_from_hist(hist)


def _metric(fixed: np.ndarray, moving: np.ndarray, t: Transform2D,
            cfg: RegistrationConfig) -> float:
    warped = warp_image(moving, t)
    if cfg.metric == "ssd":
        return float(np.mean((fixed - warped) ** 2))
    return -_mutual_information(
        fixed, warped, cfg.bins, b_range=(float(moving.min()), float(moving.max()))
    )


def _downsample(img: np.ndarray, factor: int) -> np.ndarray:
    if factor == 1:
        return img.astype(np.float64)
    sm = gaussian_filter(img.astype(np.float64), sigma=factor / 2.0)
    return sm[::factor, ::factor]


def _optimize_level(fixed, moving, family, p, cfg, level, trace, min_lr=None):
    steps = _param_steps(family)
    min_lr = cfg.tol if min_lr is None else min_lr
    best = _metric(fixed, moving, _params_to_transform(family, p), cfg)
    lr = cfg.step_size
    if trace is not None:
        trace.append((level, 0, best, p.copy()))
    scale = 1.0  # shrinks the FD step near convergence for sub-step accuracy
    for it in range(1, cfg.max_iter + 1):
        grad = np.zeros_like(p)
        for i, h in enumerate(steps * scale):
            pp = p.copy()
            pp[i] += h
            pm = p.copy()
            pm[i] -= h
            grad[i] = _metric(fixed, moving, _params_to_transform(family, pp), cfg) - _metric(
                fixed, moving, _params_to_transform(family, pm), cfg
            )
        # grad[i] is the central difference per h_i step, i.e. the gradient
        # in h-scaled parameter space up to a constant factor
        norm = np.linalg.norm(grad)
        direction = -grad / norm if norm > 0 else None
        accepted = False
        if direction is not None:
            while lr >= min_lr:
                cand = p + lr * direction * steps * scale
                val = _metric(fixed, moving, _params_to_transform(family, cand), cfg)
                if val < best:
                    p = cand
                    best = val
                    accepted = True
                    if trace is not None:
                        trace.append((level, it, best, p.copy()))
                    lr = min(lr * 1.5, cfg.step_size * 4)
                    break
                lr *= 0.5
        if not accepted:
            if scale <= 1 / 64:
                break
            scale *= 0.5
            lr = max(lr, 1.0)
    return p, best


def _compass_polish(fixed, moving, family, p, cfg, trace):
    """Coordinate-wise pattern search with shrinking step.

    The histogram metric is piecewise smooth; axis-aligned probes descend
    through the kinks where a finite-difference gradient direction stalls.
    """
    steps = _param_steps(family)
    best = _metric(fixed, moving, _params_to_transform(family, p), cfg)
    h = 0.5
    while h >= cfg.tol:
        moved = False
        for i in range(len(p)):
            for sign in (1.0, -1.0):
                cand = p.copy()
                cand[i] += sign * h * steps[i]
                val = _metric(fixed, moving, _params_to_transform(family, cand), cfg)
                if val < best:
                    p, best = cand, val
                    moved = True
                    if trace is not None:
                        trace.append((0, -1, best, p.copy()))
                    break
        if not moved:
            h *= 0.5
    return p, best


def register(
    fixed: np.ndarray,
    moving: np.ndarray,
    cfg: RegistrationConfig | None = None,
    trace: list | None = None,
) -> Transform2D:
    """Recover the transform aligning moving onto fixed.

    Deterministic given (fixed, moving, cfg). ``trace``, when given, is
    appended with (level, iteration, metric, params) rows.
    """
    cfg = cfg or RegistrationConfig()
    fixed = np.asarray(fixed, dtype=np.float64)
    moving = np.asarray(moving, dtype=np.float64)
    if fixed.shape != moving.shape:
        raise ValueError(f"shape mismatch: {fixed.shape} vs {moving.shape}")
    p = _initial_params(cfg.family)
    for level in range(cfg.levels - 1, -1, -1):
        factor = 2**level
        if min(fixed.shape) // factor < 8:
            continue
        f_l = _downsample(fixed, factor)
        m_l = _downsample(moving, factor)
        p_l = p.copy()
        p_l[:2] /= factor
        # keep the step-size floor in full-resolution units so coarse levels
        # cannot leave residuals larger than the tolerance
        p_l, _ = _optimize_level(
            f_l, m_l, cfg.family, p_l, cfg, level, trace, min_lr=cfg.tol / factor
        )
        p = p_l.copy()
        p[:2] *= factor
    p, _ = _compass_polish(fixed, moving, cfg.family, p, cfg, trace)
    return _params_to_transform(cfg.family, p)


def write_trace_csv(path, trace) -> None:
    """Dump a registration trace as CSV (level, iteration, metric, params...)."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        n_params = len(trace[0][3]) if trace else 0
        writer.writerow(
            ["level", "iteration", "metric"] + [f"p{i}" for i in range(n_params)]
        )
        for level, it, metric, params in trace:
            writer.writerow([level, it, repr(metric)] + [repr(float(v)) for v in params])
