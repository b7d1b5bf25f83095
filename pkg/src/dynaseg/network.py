"""Small fully convolutional 3D segmenter with hand-written gradients.

A stack of 3x3x3 same-padded convolutions with ReLU between layers and a
sigmoid head, so output dims always equal input dims. Forward/backward are
implemented as im2col GEMMs in numpy; gradients are exact, which lets the
test suite check them against central finite differences. The backbone is
deliberately replaceable: anything exposing the same forward/backward
surface can be trained by the rest of the framework.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KERNEL = 3
PAD = 1


@dataclass(frozen=True)
class SegmenterSpec:
    """Hidden channel widths; the 1-channel sigmoid head is implicit."""

    channels: tuple[int, ...] = (8, 16, 8)
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if any(c < 1 for c in self.channels):
            raise ValueError("channel counts must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    def layer_channels(self) -> list[tuple[int, int]]:
        widths = (1,) + tuple(self.channels) + (1,)
        return list(zip(widths[:-1], widths[1:]))


def _im2col(x: np.ndarray) -> np.ndarray:
    """(C, nx, ny, nz) -> (nx*ny*nz, C*27) patch matrix with zero padding."""
    c = x.shape[0]
    padded = np.pad(x, ((0, 0), (PAD, PAD), (PAD, PAD), (PAD, PAD)))
    windows = np.lib.stride_tricks.sliding_window_view(
        padded, (KERNEL, KERNEL, KERNEL), axis=(1, 2, 3)
    )  # (C, nx, ny, nz, 3, 3, 3)
    windows = np.moveaxis(windows, 0, 3)  # (nx, ny, nz, C, 3, 3, 3)
    n = windows.shape[0] * windows.shape[1] * windows.shape[2]
    return np.ascontiguousarray(windows).reshape(n, c * KERNEL**3)


def _col2im(dcols: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Adjoint of _im2col: scatter-add patch gradients back to the input."""
    c, nx, ny, nz = shape
    d = dcols.reshape(nx, ny, nz, c, KERNEL, KERNEL, KERNEL)
    dpad = np.zeros((c, nx + 2 * PAD, ny + 2 * PAD, nz + 2 * PAD), dtype=dcols.dtype)
    for a in range(KERNEL):
        for b in range(KERNEL):
            for g in range(KERNEL):
                dpad[:, a : a + nx, b : b + ny, g : g + nz] += np.moveaxis(
                    d[:, :, :, :, a, b, g], 3, 0
                )
    return dpad[:, PAD : PAD + nx, PAD : PAD + ny, PAD : PAD + nz]


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class ConvNet3D:
    """Reference segmenter F(X) = f(X | theta)."""

    def __init__(self, spec: SegmenterSpec | None = None):
        self.spec = spec or SegmenterSpec()
        self.dtype = np.dtype(self.spec.dtype)
        self.step_count = 0
        rng = np.random.default_rng(self.spec.seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for c_in, c_out in self.spec.layer_channels():
            fan_in = c_in * KERNEL**3
            limit = np.sqrt(6.0 / fan_in)  # He-uniform, fan-in
            w = rng.uniform(-limit, limit, size=(c_out, c_in * KERNEL**3))
            self.weights.append(w.astype(self.dtype))
            self.biases.append(np.zeros(c_out, dtype=self.dtype))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def forward(self, x: np.ndarray, want_cache: bool = False):
        """Probability map for a single-channel volume (nx, ny, nz)."""
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 3:
            raise ValueError(f"expected a 3D volume, got shape {x.shape}")
        act = x[None]  # (1, nx, ny, nz)
        cache = {"inputs": [], "cols": []}
        last = self.n_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            cols = _im2col(act)
            z = cols @ w.T + b  # (N, c_out)
            c_out = w.shape[0]
            z = z.T.reshape(c_out, *x.shape)
            if want_cache:
                cache["inputs"].append(act)
                cache["cols"].append(cols)
            act = z if i == last else np.maximum(z, 0.0)
        logits = act[0]
        if not np.isfinite(logits).all():
            raise FloatingPointError("non-finite activation: training diverged")
        prob = _sigmoid(logits)
        if want_cache:
            cache["prob"] = prob
            return prob, cache
        return prob

    def backward(self, cache: dict, dprob: np.ndarray):
        """Gradients of a scalar loss w.r.t. parameters, given dL/dP."""
        prob = cache["prob"]
        dz = (dprob * prob * (1.0 - prob)).astype(self.dtype)[None]
        grads_w = [None] * self.n_layers
        grads_b = [None] * self.n_layers
        for i in range(self.n_layers - 1, -1, -1):
            cols = cache["cols"][i]
            x_in = cache["inputs"][i]
            c_out = self.weights[i].shape[0]
            dflat = dz.reshape(c_out, -1).T  # (N, c_out)
            grads_w[i] = dflat.T @ cols
            grads_b[i] = dflat.sum(axis=0)
            if i > 0:
                dcols = dflat @ self.weights[i]
                dx = _col2im(dcols, x_in.shape)
                # ReLU between layers: zero where the forward input was <= 0
                dz = dx * (x_in > 0)
        return grads_w, grads_b

    # parameter vector helpers (checkpoints, finite-difference checks)

    def get_flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=self.dtype)
        pos = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[pos : pos + w.size].reshape(w.shape).copy()
            pos += w.size
            self.biases[i] = flat[pos : pos + b.size].reshape(b.shape).copy()
            pos += b.size
        if pos != flat.size:
            raise ValueError(f"parameter vector has {flat.size} values, expected {pos}")

    def flat_grads(self, grads_w, grads_b) -> np.ndarray:
        parts = []
        for gw, gb in zip(grads_w, grads_b):
            parts.append(gw.ravel())
            parts.append(gb.ravel())
        return np.concatenate(parts)

    def clone(self) -> "ConvNet3D":
        other = ConvNet3D(self.spec)
        other.set_flat(self.get_flat())
        other.step_count = self.step_count
        return other

    # checkpoint I/O: JSON header + raw little-endian float32 payload

    def save(self, base: str | Path) -> None:
        base = Path(base)
        header = {
            "channels": list(self.spec.channels),
            "seed": self.spec.seed,
            "dtype": "f32",
            "step_count": self.step_count,
        }
        payload = self.get_flat().astype("<f4")
        tmp = base.with_suffix(".ckpt.tmp")
        payload.tofile(tmp)
        os.replace(tmp, base.with_suffix(".ckpt"))
        tmp = base.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(header, sort_keys=True))
        os.replace(tmp, base.with_suffix(".json"))

    @staticmethod
    def load(base: str | Path) -> "ConvNet3D":
        base = Path(base)
        header = json.loads(base.with_suffix(".json").read_text())
        spec = SegmenterSpec(channels=tuple(header["channels"]), seed=header["seed"])
        net = ConvNet3D(spec)
        flat = np.fromfile(base.with_suffix(".ckpt"), dtype="<f4")
        net.set_flat(flat)
        net.step_count = int(header.get("step_count", 0))
        return net
