"""Synthetic blob phantoms standing in for clinical volumes.

A phantom is a union of (optionally deformed) spheres rendered into an
intensity volume: ``contrast * blob + smooth background + Gaussian noise``.
:class:`PhantomStream` yields a sequence whose blob positions and sizes
drift slowly, emulating distribution shift over a stream of studies.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .volume import BinaryMask, Dims, Volume


@dataclass(frozen=True)
class PhantomConfig:
    dims: Dims = (32, 32, 32)
    n_blobs: int = 1
    radius_range: tuple[float, float] = (5.0, 8.0)
    contrast: float = 1.0
    noise_std: float = 0.05
    deform: float = 0.0
    background: float = 0.2
    smooth_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.radius_range
        if not 0 < lo <= hi:
            raise ValueError("radius_range must satisfy 0 < lo <= hi")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if any(d < 1 for d in self.dims):
            raise ValueError("dims must be positive")
        if 2 * hi >= min(self.dims):
            raise ValueError(
                f"blobs of radius {hi} cannot fit inside dims {self.dims}"
            )


@dataclass(frozen=True)
class Blob:
    center: tuple[float, float, float]
    radius: float
    # deformation: radius modulated by sinusoids along each axis
    deform_amp: float = 0.0
    deform_freq: tuple[float, float, float] = (0.0, 0.0, 0.0)
    deform_phase: tuple[float, float, float] = (0.0, 0.0, 0.0)


def _render_mask(dims: Dims, blobs: list[Blob]) -> np.ndarray:
    grids = np.meshgrid(*[np.arange(d, dtype=np.float64) for d in dims], indexing="ij")
    mask = np.zeros(dims, dtype=bool)
    for b in blobs:
        dist = np.sqrt(sum((g - c) ** 2 for g, c in zip(grids, b.center)))
        r_eff = b.radius
        if b.deform_amp > 0:
            wobble = sum(
                np.sin(f * g + p)
                for g, f, p in zip(grids, b.deform_freq, b.deform_phase)
            ) / 3.0
            r_eff = b.radius * (1.0 + b.deform_amp * wobble)
        mask |= dist <= r_eff
    return mask


def _render(cfg: PhantomConfig, blobs: list[Blob], rng: np.random.Generator):
    mask = _render_mask(cfg.dims, blobs)
    blob_term = mask.astype(np.float64)
    if cfg.smooth_sigma > 0:
        blob_term = gaussian_filter(blob_term, cfg.smooth_sigma)
    vol = cfg.contrast * blob_term
    if cfg.background > 0:
        bg = rng.standard_normal(cfg.dims)
        bg = gaussian_filter(bg, sigma=min(cfg.dims) / 6.0)
        span = bg.max() - bg.min()
        if span > 0:
            bg = (bg - bg.min()) / span
        vol = vol + cfg.background * bg
    if cfg.noise_std > 0:
        vol = vol + cfg.noise_std * rng.standard_normal(cfg.dims)
    return Volume(vol.astype(np.float32)), BinaryMask(mask.astype(np.uint8))


def _sample_blobs(cfg: PhantomConfig, rng: np.random.Generator) -> list[Blob]:
    lo, hi = cfg.radius_range
    blobs = []
    for _ in range(cfg.n_blobs):
        r = float(rng.uniform(lo, hi))
        center = tuple(float(rng.uniform(r, d - 1 - r)) for d in cfg.dims)
        blobs.append(
            Blob(
                center=center,
                radius=r,
                deform_amp=cfg.deform,
                deform_freq=tuple(rng.uniform(0.2, 0.6, size=3)),
                deform_phase=tuple(rng.uniform(0, 2 * np.pi, size=3)),
            )
        )
    return blobs


def phantom(cfg: PhantomConfig) -> tuple[Volume, BinaryMask]:
    """Deterministically generate one phantom from its config (incl. seed)."""
    rng = np.random.default_rng(cfg.seed)
    blobs = _sample_blobs(cfg, rng)
    return _render(cfg, blobs, rng)


@dataclass
class PhantomStream:
    """Seeded stream of phantoms whose blobs drift slowly step to step.

    ``drift`` is the per-step displacement (voxels) of each blob center
    along a fixed random direction, with small jitter; radii wobble within
    the configured range. Fully determined by (config, seed).
    """

    config: PhantomConfig = field(default_factory=PhantomConfig)
    drift: float = 0.5
    seed: int = 0

    def __post_init__(self):
        self._rng = np.random.default_rng(self.seed)
        self._blobs = _sample_blobs(self.config, self._rng)
        direction = self._rng.standard_normal(3)
        self._direction = direction / np.linalg.norm(direction)

    def __iter__(self):
        return self

    def __next__(self) -> tuple[Volume, BinaryMask]:
        cfg = self.config
        vol, mask = _render(cfg, self._blobs, self._rng)
        lo, hi = cfg.radius_range
        moved = []
        for b in self._blobs:
            step = self.drift * self._direction + 0.2 * self.drift * self._rng.standard_normal(3)
            center = np.asarray(b.center) + step
            # bounce off walls so blobs always fit
            new_center = []
            for c, d, r in zip(center, cfg.dims, (b.radius,) * 3):
                low, high = hi, d - 1 - hi
                if c < low:
                    c = low + (low - c)
                elif c > high:
                    c = high - (c - high)
                new_center.append(float(np.clip(c, low, high)))
            radius = float(np.clip(b.radius + 0.1 * self.drift * self._rng.standard_normal(), lo, hi))
            moved.append(replace(b, center=tuple(new_center), radius=radius))
        self._blobs = moved
        return vol, mask

    def take(self, n: int) -> list[tuple[Volume, BinaryMask]]:
        return [next(self) for _ in range(n)]
