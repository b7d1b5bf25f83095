"""Online continual learning over a volume stream.

A bounded auxiliary buffer is appended to until full, after which each new
sample overwrites a uniformly random slot, giving older samples a slowly
decaying survival probability (1 - 1/capacity)^age. The active replay set
is redrawn uniformly from the auxiliary buffer at every update. Each
incoming volume triggers label smoothing against the previous segmenter
state, a few SGD steps over the new sample mixed with replayed ones, and a
buffer update.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .losses import LossConfig, TrainSample, apply_sgd, smooth_target, weighted_batch_loss
from .network import ConvNet3D
from .volume import BinaryMask, dice

Schedule = float | Callable[[int], float]


def _at(schedule: Schedule, t: int) -> float:
    val = schedule(t) if callable(schedule) else float(schedule)
    if not 0.0 <= val <= 1.0:
        raise ValueError(f"schedule value {val} at t={t} outside [0, 1]")
    return val


def default_loss_mix(t: int, m: int = 4) -> float:
    """New-sample loss weight: full trust at t=0, then an even split."""
    return max(0.5, 1.0 / (min(t, m) + 1))


@dataclass(frozen=True)
class DynamicConfig:
    buffer_size: int = 8  # active replay set capacity
    aux_size: int = 16  # auxiliary store capacity
    retrieval: int = 4  # replayed samples per update
    loss_mix: Schedule = default_loss_mix  # new-sample weight in the batch loss
    smoothing: Schedule = 0.7  # annotation weight in target smoothing
    eta: float = 0.5
    inner_steps: int = 4  # SGD iterations per consumed sample
    seed: int = 0
    replay: bool = True
    label_smoothing: bool = True
    offline_epochs: int = 20
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if not self.retrieval <= self.buffer_size < self.aux_size:
            raise ValueError("need retrieval <= buffer_size < aux_size")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.inner_steps < 1:
            raise ValueError("inner_steps must be >= 1")


class ReplayBuffer:
    """Bounded sample store with uniform-overwrite eviction.

    ``aux`` grows to ``aux_size`` then stays full; ``active`` is refreshed
    as a uniform subset of ``aux`` (size <= buffer_size) on every insert.
    """

    def __init__(self, buffer_size: int, aux_size: int, seed: int = 0):
        if not 0 < buffer_size < aux_size:
            raise ValueError("need 0 < buffer_size < aux_size")
        self.buffer_size = buffer_size
        self.aux_size = aux_size
        self.aux: list[TrainSample] = []
        self.active: list[TrainSample] = []
        self.rng = np.random.default_rng(seed)
        self._last_step = -1

    def __len__(self) -> int:
        return len(self.active)

    def update(self, sample: TrainSample) -> None:
        if sample.step <= self._last_step:
            raise ValueError("insertion steps must strictly increase")
        self._last_step = sample.step
        if len(self.aux) < self.aux_size:
            self.aux.append(sample)
        else:
            slot = int(self.rng.integers(0, self.aux_size))
            self.aux[slot] = sample
        k = min(self.buffer_size, len(self.aux))
        picks = self.rng.choice(len(self.aux), size=k, replace=False)
        self.active = [self.aux[i] for i in picks]

    def select(self, m: int, rng: np.random.Generator) -> list[TrainSample]:
        """Uniform sample of min(m, len) active entries without replacement."""
        if m < 0:
            raise ValueError("retrieval count must be >= 0")
        k = min(m, len(self.active))
        if k == 0:
            return []
        picks = rng.choice(len(self.active), size=k, replace=False)
        return [self.active[i] for i in picks]


def buffer_update(buf: ReplayBuffer, sample: TrainSample) -> ReplayBuffer:
    buf.update(sample)
    return buf


def select_replay(buf: ReplayBuffer, m: int, rng: np.random.Generator):
    return buf.select(m, rng)


@dataclass
class StreamState:
    net: ConvNet3D
    buffer: ReplayBuffer
    cfg: DynamicConfig
    t: int = 0
    rng: np.random.Generator = None  # type: ignore[assignment]
    log: list[dict] = field(default_factory=list)

    @staticmethod
    def fresh(net: ConvNet3D, cfg: DynamicConfig) -> "StreamState":
        buf = ReplayBuffer(cfg.buffer_size, cfg.aux_size, seed=cfg.seed)
        return StreamState(net=net, buffer=buf, cfg=cfg,
                           rng=np.random.default_rng(cfg.seed + 1))


def dynamic_train_step(state: StreamState, x: np.ndarray, y: np.ndarray) -> StreamState:
    """Consume one stream volume: smooth, train, remember."""
    cfg = state.cfg
    t = state.t
    y = np.asarray(y, dtype=np.float64)
    if cfg.label_smoothing:
        lam_y = _at(cfg.smoothing, t)
        target = smooth_target(state.net.forward(x), y, lam_y)
    else:
        target = y
    replay = state.buffer.select(cfg.retrieval, state.rng) if cfg.replay else []
    lam_l = _at(cfg.loss_mix, t) if replay else 1.0
    loss_cfg = LossConfig(
        base=cfg.loss.base, lambda_l=lam_l, weight_form=cfg.loss.weight_form,
        omega=cfg.loss.omega, weight_fn=cfg.loss.weight_fn,
    )
    new = TrainSample(x=x, target=target, step=t)
    last = None
    for _ in range(cfg.inner_steps):
        last, grad = weighted_batch_loss(state.net, new, replay, loss_cfg)
        apply_sgd(state.net, grad, cfg.eta)
    state.buffer.update(new)
    state.log.append({"t": t, "loss": last, "replayed": len(replay)})
    state.t = t + 1
    return state


def offline_train(
    net: ConvNet3D,
    samples: Sequence[tuple[np.ndarray, np.ndarray]],
    cfg: DynamicConfig,
) -> ConvNet3D:
    """Multi-epoch shuffled SGD over a fixed set: the upper-bound comparator."""
    if not samples:
        raise ValueError("offline training needs at least one sample")
    rng = np.random.default_rng(cfg.seed)
    loss_cfg = LossConfig(base=cfg.loss.base, lambda_l=1.0)
    for _ in range(cfg.offline_epochs):
        for i in rng.permutation(len(samples)):
            x, y = samples[i]
            sample = TrainSample(x=x, target=np.asarray(y, dtype=np.float64))
            _, grad = weighted_batch_loss(net, sample, [], loss_cfg)
            apply_sgd(net, grad, cfg.eta)
    return net


def predict_mask(net: ConvNet3D, x: np.ndarray, threshold: float = 0.5) -> BinaryMask:
    return BinaryMask((net.forward(x) > threshold).astype(np.uint8))


def _dice_stats(net, split):
    scores = [
        dice(predict_mask(net, x), BinaryMask(np.asarray(y, dtype=np.uint8)))
        for x, y in split
    ]
    arr = np.asarray(scores, dtype=np.float64)
    return {
        "dice_mean": float(arr.mean()),
        "dice_std": float(arr.std()),
        "dice_min": float(arr.min()),
        "dice_max": float(arr.max()),
    }


MODES = ("offline", "dynamic", "dynamic+rp", "dynamic+ls", "dynamic+rp+ls")


def _mode_config(mode: str, cfg: DynamicConfig, seed: int) -> DynamicConfig:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    replay = "rp" in mode.split("+")
    smoothing = "ls" in mode.split("+")
    return DynamicConfig(
        buffer_size=cfg.buffer_size, aux_size=cfg.aux_size, retrieval=cfg.retrieval,
        loss_mix=cfg.loss_mix, smoothing=cfg.smoothing, eta=cfg.eta,
        inner_steps=cfg.inner_steps, seed=seed, replay=replay,
        label_smoothing=smoothing, offline_epochs=cfg.offline_epochs, loss=cfg.loss,
    )


def evaluate_protocol(
    train_seq: Sequence[tuple[np.ndarray, np.ndarray]],
    eval_set: Sequence[tuple[np.ndarray, np.ndarray]],
    n_perm: int,
    modes: Sequence[str],
    cfg: DynamicConfig,
    net_factory: Callable[[int], ConvNet3D],
    prefixes: Sequence[int] | None = None,
) -> list[dict]:
    """Train each mode on permuted stream prefixes and score both splits.

    Returns one row per (permutation, mode, prefix, split) with dice stats
    over the split's volumes; the unseen split (stream remainder) is
    reported only when nonempty.
    """
    if not train_seq:
        raise ValueError("empty training sequence")
    prefixes = list(prefixes) if prefixes is not None else [len(train_seq)]
    rows = []
    for perm in range(n_perm):
        order = np.random.default_rng((cfg.seed, perm)).permutation(len(train_seq))
        permuted = [train_seq[i] for i in order]
        for prefix in prefixes:
            seen = permuted[:prefix]
            unseen = permuted[prefix:]
            for mode in modes:
                mode_seed = int(
                    np.random.default_rng((cfg.seed, perm, MODES.index(mode))).integers(2**31)
                )
                mcfg = _mode_config(mode, cfg, mode_seed)
                net = net_factory(mode_seed)
                if mode == "offline":
                    offline_train(net, seen, mcfg)
                else:
                    state = StreamState.fresh(net, mcfg)
                    for x, y in seen:
                        dynamic_train_step(state, x, y)
                    net = state.net
                splits = [("eval", eval_set)] + ([("unseen", unseen)] if unseen else [])
                for split_name, split in splits:
                    row = {"perm": perm, "mode": mode, "prefix_t": prefix,
                           "split": split_name}
                    row.update(_dice_stats(net, split))
                    rows.append(row)
    return rows


def write_metrics_csv(path: str | Path, rows: list[dict]) -> None:
    """Metrics table as CSV with a fixed column order."""
    cols = ["perm", "mode", "prefix_t", "split",
            "dice_mean", "dice_std", "dice_min", "dice_max"]
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for row in rows:
            out = dict(row)
            for k in ("dice_mean", "dice_std", "dice_min", "dice_max"):
                out[k] = repr(float(out[k]))
            writer.writerow(out)
    import os

    os.replace(tmp, path)
