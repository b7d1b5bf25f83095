"""Interactive annotation sessions driving online segmenter training.

Each image is labeled over a handful of rounds. A round proposes a few
slices per plane (randomly at cold start, model-guided afterwards), asks
the user for their 2D masks, refreshes the propagated proxy mask, and runs
a few weighted SGD steps against the smoothed proxy with replayed past
samples mixed in. Across a stream, the previous image's segmenter state
anchors label smoothing, and the replay buffer carries (image, smoothed
target) pairs forward.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .dynamic import ReplayBuffer, default_loss_mix
from .guidance import GuidanceConfig, propose_slices, random_slices, residual_map
from .losses import (
    LossConfig,
    TrainSample,
    apply_sgd,
    confidence_weights,
    smooth_target,
    weighted_batch_loss,
)
from .network import ConvNet3D, SegmenterSpec
from .proxy import PlaneProxy, incremental_update, merge_proxies, propagate_plane
from .registration import RegistrationConfig
from .volume import BinaryMask, SliceSet, Volume, dice, labor_cost


class UserModel(Protocol):
    def draw_label(self, axis: int, index: int) -> np.ndarray: ...


class OracleUser:
    """Simulated expert that reveals ground truth one slice at a time.

    Access is counted so tests can assert the ground truth is never read
    beyond the requested slices.
    """

    def __init__(self, mask: BinaryMask):
        self._mask = mask
        self.queries: list[tuple[int, int]] = []

    def draw_label(self, axis: int, index: int) -> np.ndarray:
        self.queries.append((axis, index))
        return np.take(self._mask.data, index, axis=axis).copy()

    @property
    def query_count(self) -> int:
        return len(self.queries)


@dataclass(frozen=True)
class InteractiveConfig:
    quota: int = 12  # max labeled slices per image
    n_inter: int = 6  # max rounds per image
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    registration: RegistrationConfig = field(
        default_factory=lambda: RegistrationConfig(
            metric="ssd", family="translation", levels=2, max_iter=20
        )
    )
    eta: float = 0.5
    inner_steps: int = 4  # SGD iterations per round
    smoothing: float | Callable[[int], float] = 0.7  # annotation trust per image
    loss_mix: float | Callable[[int], float] = default_loss_mix
    weight_form: str = "exp"
    omega: float = 2.0
    buffer_size: int = 8
    aux_size: int = 16
    retrieval: int = 2
    seed: int = 0
    guided: bool = True

    def __post_init__(self):
        if self.quota < 1 or self.n_inter < 0:
            raise ValueError("quota must be >= 1 and n_inter >= 0")
        if self.inner_steps < 1:
            raise ValueError("inner_steps must be >= 1")
        if len(self.guidance.axes) != 2:
            raise ValueError("interactive sessions guide exactly two planes")


def _at(schedule, t: int) -> float:
    val = schedule(t) if callable(schedule) else float(schedule)
    if not 0.0 <= val <= 1.0:
        raise ValueError(f"schedule value {val} at t={t} outside [0, 1]")
    return val


@dataclass
class SessionState:
    volume: Volume
    gamma: SliceSet = field(default_factory=SliceSet)
    planes: dict[int, PlaneProxy] = field(default_factory=dict)
    merged: BinaryMask | None = None
    round: int = 0
    complete: bool = False

    def proxy_field(self) -> np.ndarray:
        if self.merged is None:
            return np.zeros(self.volume.dims, dtype=np.uint8)
        return self.merged.data


def _refresh_planes(session: SessionState, added: dict[int, dict[int, np.ndarray]],
                    cfg: InteractiveConfig) -> None:
    for axis, labels in added.items():
        if not labels:
            continue
        if axis in session.planes:
            session.planes[axis] = incremental_update(
                session.planes[axis], session.volume, labels, cfg.registration
            )
        else:
            session.planes[axis] = propagate_plane(
                session.volume, axis, labels, cfg.registration
            )
    ax0, ax1 = cfg.guidance.axes
    zeros = np.zeros(session.volume.dims, dtype=np.uint8)
    f0 = session.planes[ax0].field if ax0 in session.planes else zeros
    f1 = session.planes[ax1].field if ax1 in session.planes else zeros
    session.merged = merge_proxies(f0, f1)


def _round_proposals(session: SessionState, net: ConvNet3D, cfg: InteractiveConfig,
                     rng: np.random.Generator, guided: bool) -> dict[int, list[int]]:
    remaining = cfg.quota - session.gamma.count()
    if remaining <= 0:
        return {}
    r = None
    if guided:
        pred = net.forward(session.volume.data)
        r = residual_map(session.proxy_field().astype(np.float64), pred,
                         session.gamma, cfg.guidance)
    proposals: dict[int, list[int]] = {}
    for axis in cfg.guidance.axes:
        labeled = session.gamma.indices(axis)
        if guided:
            picks = propose_slices(r, axis, labeled, cfg.guidance.tau, rng)
        else:
            picks = random_slices(session.volume.data, axis, labeled,
                                  cfg.guidance.tau, rng)
        kept = picks[:remaining]
        remaining -= len(kept)
        proposals[axis] = kept
    return proposals


def _train_on_proxy(net, session, cfg, buffer, rng, f_prev_pred, image_t, step):
    x = session.volume.data.astype(np.float64)
    lam_y = _at(cfg.smoothing, image_t)
    target = smooth_target(f_prev_pred, session.proxy_field().astype(np.float64), lam_y)
    weights = confidence_weights(
        cfg.weight_form, session.gamma, session.volume.dims,
        axes=cfg.guidance.axes, omega=cfg.omega,
    ).weights
    replay = buffer.select(cfg.retrieval, rng)
    lam_l = _at(cfg.loss_mix, image_t) if replay else 1.0
    loss_cfg = LossConfig(lambda_l=lam_l, weight_form=cfg.weight_form, omega=cfg.omega)
    new = TrainSample(x=x, target=target, weight=weights, gamma=session.gamma, step=step)
    for _ in range(cfg.inner_steps):
        _, grad = weighted_batch_loss(net, new, replay, loss_cfg)
        apply_sgd(net, grad, cfg.eta)
    buffer.update(new)


def _round_log(image_id, session, net, gt):
    row = {
        "image_id": image_id,
        "round": session.round,
        "gamma_x": len(session.gamma.indices(0)),
        "gamma_y": len(session.gamma.indices(1)),
        "labor_fraction": labor_cost(session.gamma, session.volume.dims),
    }
    if gt is not None:
        pred = BinaryMask(
            (net.forward(session.volume.data) > 0.5).astype(np.uint8)
        )
        proxy = BinaryMask(session.proxy_field())
        row["dice_Y_proxy"] = dice(gt, proxy)
        row["dice_Y_pred"] = dice(gt, pred)
        row["dice_proxy_pred"] = dice(proxy, pred)
    return row


def run_session(
    volume: Volume,
    user: UserModel,
    net: ConvNet3D,
    cfg: InteractiveConfig,
    rng: np.random.Generator,
    buffer: ReplayBuffer,
    *,
    f_prev_pred: np.ndarray | None = None,
    image_t: int = 0,
    image_id: int = 0,
    step_base: int = 0,
    first_round_random: bool = False,
    gt: BinaryMask | None = None,
    stop_when: Callable[[dict], bool] | None = None,
    max_rounds: int | None = None,
) -> tuple[SessionState, list[dict]]:
    """Drive annotation rounds for one image; returns the session and logs."""
    session = SessionState(volume=volume)
    if f_prev_pred is None:
        f_prev_pred = np.zeros(volume.dims, dtype=np.float64)
    logs: list[dict] = []
    rounds_cap = cfg.n_inter if max_rounds is None else max_rounds
    while session.gamma.count() < cfg.quota and session.round < rounds_cap:
        guided = cfg.guided and not (first_round_random and session.round == 0
                                     and image_t == 0)
        proposals = _round_proposals(session, net, cfg, rng, guided)
        added = {}
        any_new = False
        for axis, picks in proposals.items():
            labels = {}
            for idx in picks:
                labels[idx] = np.asarray(user.draw_label(axis, idx), dtype=np.uint8)
                session.gamma = session.gamma.with_added(axis, idx, labels[idx])
                any_new = True
            added[axis] = labels
        if not any_new:
            break  # nothing proposable: quota met or zero residual mass
        _refresh_planes(session, added, cfg)
        _train_on_proxy(net, session, cfg, buffer, rng, f_prev_pred, image_t,
                        step_base + session.round)
        row = _round_log(image_id, session, net, gt)
        logs.append(row)
        session.round += 1
        if stop_when is not None and stop_when(row):
            break
    session.complete = True
    return session, logs


def interactive_learning(
    volume: Volume,
    user: UserModel,
    net: ConvNet3D,
    cfg: InteractiveConfig | None = None,
    gt: BinaryMask | None = None,
) -> tuple[BinaryMask, ConvNet3D, list[dict]]:
    """Single-image session: random first round, then model guidance."""
    cfg = cfg or InteractiveConfig()
    rng = np.random.default_rng(cfg.seed)
    buffer = ReplayBuffer(cfg.buffer_size, cfg.aux_size, seed=cfg.seed)
    session, logs = run_session(
        volume, user, net, cfg, rng, buffer,
        first_round_random=True, gt=gt,
    )
    return BinaryMask(session.proxy_field()), net, logs


def dynamic_interactive_train(
    stream: Sequence[tuple[Volume, BinaryMask]],
    net: ConvNet3D,
    cfg: InteractiveConfig | None = None,
    log_dice: bool = True,
) -> tuple[list[BinaryMask], ConvNet3D, list[dict]]:
    """Stream trainer: random selection only in the very first round, the
    previous image's frozen segmenter anchors smoothing, and the replay
    buffer persists across images."""
    if not stream:
        raise ValueError("empty stream")
    cfg = cfg or InteractiveConfig()
    rng = np.random.default_rng(cfg.seed)
    buffer = ReplayBuffer(cfg.buffer_size, cfg.aux_size, seed=cfg.seed)
    f_prev: ConvNet3D | None = None
    proxies: list[BinaryMask] = []
    logs: list[dict] = []
    step = 0
    for t, (volume, gt) in enumerate(stream):
        user = OracleUser(gt)
        f_prev_pred = (
            f_prev.forward(volume.data) if f_prev is not None
            else np.zeros(volume.dims, dtype=np.float64)
        )
        session, rows = run_session(
            volume, user, net, cfg, rng, buffer,
            f_prev_pred=f_prev_pred, image_t=t, image_id=t, step_base=step,
            first_round_random=True, gt=gt if log_dice else None,
        )
        step += session.round
        proxies.append(BinaryMask(session.proxy_field()))
        logs.extend(rows)
        f_prev = net.clone()
    return proxies, net, logs


@dataclass(frozen=True)
class ThresholdConfig:
    rho: float = 0.85
    max_rounds: int = 64

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")


def label_until_threshold(
    stream: Sequence[tuple[Volume, BinaryMask]],
    cfg: InteractiveConfig,
    threshold: ThresholdConfig | None = None,
) -> dict:
    """Labor study: per image, keep labeling until dice(Y, proxy) > rho.

    Full labeling of both guided planes reproduces the ground truth on
    those planes, so every image terminates. Returns per-image records and
    cumulative labor totals.
    """
    threshold = threshold or ThresholdConfig()
    rng = np.random.default_rng(cfg.seed)
    buffer = ReplayBuffer(cfg.buffer_size, cfg.aux_size, seed=cfg.seed)
    f_prev: ConvNet3D | None = None
    net = ConvNet3D(SegmenterSpec(seed=cfg.seed))
    records = []
    step = 0
    for t, (volume, gt) in enumerate(stream):
        user = OracleUser(gt)
        f_prev_pred = (
            f_prev.forward(volume.data) if f_prev is not None
            else np.zeros(volume.dims, dtype=np.float64)
        )
        max_slices = sum(volume.dims[a] for a in cfg.guidance.axes)
        wide = InteractiveConfig(
            quota=max_slices, n_inter=threshold.max_rounds, guidance=cfg.guidance,
            registration=cfg.registration, eta=cfg.eta, inner_steps=cfg.inner_steps,
            smoothing=cfg.smoothing, loss_mix=cfg.loss_mix,
            weight_form=cfg.weight_form, omega=cfg.omega,
            buffer_size=cfg.buffer_size, aux_size=cfg.aux_size,
            retrieval=cfg.retrieval, seed=cfg.seed, guided=cfg.guided,
        )
        session, rows = run_session(
            volume, user, net, wide, rng, buffer,
            f_prev_pred=f_prev_pred, image_t=t, image_id=t, step_base=step,
            first_round_random=True, gt=gt,
            stop_when=lambda row: row["dice_Y_proxy"] > threshold.rho,
        )
        step += session.round
        records.append({
            "image_id": t,
            "rounds": session.round,
            "gamma_x": len(session.gamma.indices(cfg.guidance.axes[0])),
            "gamma_y": len(session.gamma.indices(cfg.guidance.axes[1])),
            "labor_fraction": labor_cost(session.gamma, volume.dims),
            "final_dice": rows[-1]["dice_Y_proxy"] if rows else 0.0,
        })
        f_prev = net.clone()
    total = float(sum(r["labor_fraction"] for r in records))
    slices = int(sum(r["gamma_x"] + r["gamma_y"] for r in records))
    return {"images": records, "total_labor": total, "total_slices": slices}


def write_round_log_jsonl(path: str | Path, rows: list[dict]) -> None:
    import os

    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    os.replace(tmp, path)
