"""Batch entry points.

One declarative JSON config per run; flags only override seed and output
directory. Every artifact embeds generator version, git revision, config
hash, and seed as leading comment lines, and reruns with identical inputs
reproduce artifacts byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import subprocess
from pathlib import Path

import click
import numpy as np

from . import __version__
from .dynamic import (
    MODES,
    DynamicConfig,
    StreamState,
    dynamic_train_step,
    evaluate_protocol,
    offline_train,
    predict_mask,
)
from .guidance import GuidanceConfig
from .interactive import (
    InteractiveConfig,
    ThresholdConfig,
    dynamic_interactive_train,
    label_until_threshold,
    write_round_log_jsonl,
)
from .network import ConvNet3D, SegmenterSpec
from .phantom import PhantomConfig, PhantomStream
from .vio import write_volume
from .volume import dice


class ConfigError(click.ClickException):
    def __init__(self, path: str, message: str):
        super().__init__(f"config error at '{path}': {message}")


_MISSING = object()


def _get(cfg: dict, path: str, typ, default=_MISSING, check=None, check_msg=""):
    """Fetch a (possibly nested) config value with path-aware diagnostics."""
    node = cfg
    parts = path.split(".")
    for i, part in enumerate(parts):
        if not isinstance(node, dict):
            raise ConfigError(".".join(parts[:i]), "expected an object")
        if part not in node:
            if default is not _MISSING:
                return default
            raise ConfigError(path, "required field is missing")
        node = node[part]
    if typ is float and isinstance(node, int):
        node = float(node)
    if not isinstance(node, typ) or isinstance(node, bool) and typ is not bool:
        raise ConfigError(path, f"expected {typ.__name__}, got {type(node).__name__}")
    if check is not None and not check(node):
        raise ConfigError(path, check_msg or "invalid value")
    return node


def _load_config(path: str) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise click.ClickException(f"config is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("", "top level must be an object")
    return cfg, raw


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=10,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def _provenance(config_raw: bytes, seed: int) -> list[str]:
    return [
        f"# generator=dynaseg {__version__}",
        f"# git={_git_describe()}",
        f"# config_sha256={hashlib.sha256(config_raw).hexdigest()}",
        f"# seed={seed}",
    ]


def _write_csv(path: Path, provenance: list[str], fieldnames: list[str],
               rows: list[dict]) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        for line in provenance:
            fh.write(line + "\n")
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            out = {}
            for k in fieldnames:
                v = row[k]
                out[k] = repr(v) if isinstance(v, float) else v
            writer.writerow(out)
    os.replace(tmp, path)


def _phantom_config(cfg: dict, path: str, seed: int) -> PhantomConfig:
    spec = _get(cfg, path, dict, default={})
    known = set(PhantomConfig.__dataclass_fields__)
    for key in spec:
        if key not in known:
            raise ConfigError(f"{path}.{key}", "unknown field")
    spec = {k: tuple(v) if isinstance(v, list) else v for k, v in spec.items()}
    spec.setdefault("seed", seed)
    try:
        return PhantomConfig(**spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc))


def _build_stream(cfg: dict, seed: int, extra: int = 0):
    count = _get(cfg, "stream.count", int, check=lambda n: n > 0,
                 check_msg="must be a positive integer")
    drift = _get(cfg, "stream.drift", float, default=0.5)
    pcfg = _phantom_config(cfg, "stream.phantom", seed)
    return PhantomStream(pcfg, drift=drift, seed=seed).take(count + extra)


def _dynamic_config(cfg: dict, seed: int) -> DynamicConfig:
    try:
        return DynamicConfig(
            buffer_size=_get(cfg, "dynamic.buffer_size", int, default=8),
            aux_size=_get(cfg, "dynamic.aux_size", int, default=16),
            retrieval=_get(cfg, "dynamic.retrieval", int, default=4),
            eta=_get(cfg, "dynamic.eta", float, default=0.5),
            inner_steps=_get(cfg, "dynamic.inner_steps", int, default=4),
            smoothing=_get(cfg, "dynamic.smoothing", float, default=0.7),
            replay=_get(cfg, "dynamic.replay", bool, default=True),
            label_smoothing=_get(cfg, "dynamic.label_smoothing", bool, default=True),
            offline_epochs=_get(cfg, "dynamic.offline_epochs", int, default=20),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError("dynamic", str(exc))


def _interactive_config(cfg: dict, seed: int) -> InteractiveConfig:
    try:
        guidance = GuidanceConfig(
            omega1=_get(cfg, "interactive.omega1", float, default=0.7),
            d2_form=_get(cfg, "interactive.d2_form", str, default="far"),
            tau=_get(cfg, "interactive.tau", int, default=1),
        )
        return InteractiveConfig(
            quota=_get(cfg, "interactive.quota", int, default=12),
            n_inter=_get(cfg, "interactive.n_inter", int, default=6),
            guidance=guidance,
            eta=_get(cfg, "interactive.eta", float, default=0.5),
            inner_steps=_get(cfg, "interactive.inner_steps", int, default=4),
            smoothing=_get(cfg, "interactive.smoothing", float, default=0.7),
            weight_form=_get(cfg, "interactive.weight_form", str, default="exp"),
            guided=_get(cfg, "interactive.guided", bool, default=True),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError("interactive", str(exc))


def _channels(cfg: dict, default=(8, 16, 8)) -> tuple[int, ...]:
    raw = _get(cfg, "channels", list, default=list(default))
    if not all(isinstance(c, int) and c > 0 for c in raw):
        raise ConfigError("channels", "expected a list of positive integers")
    return tuple(raw)


def _resolve(seed_flag, out_flag, cfg, command) -> tuple[int, Path]:
    seed = seed_flag if seed_flag is not None else _get(cfg, "seed", int, default=0)
    out = Path(out_flag) if out_flag else Path(f"{command}-out")
    out.mkdir(parents=True, exist_ok=True)
    return seed, out


@click.group()
@click.version_option(__version__)
def main():
    """Dynamic interactive 3D segmentation toolkit."""


def _common(fn):
    fn = click.option("--out", type=click.Path(), default=None,
                      help="Output directory.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Seed override.")(fn)
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(exists=True, dir_okay=False))(fn)
    return fn


@main.command("phantom-gen")
@_common
def phantom_gen(config_path, seed, out):
    """Render a drifting phantom stream to volume/mask files."""
    cfg, raw = _load_config(config_path)
    seed, out = _resolve(seed, out, cfg, "phantom-gen")
    pairs = _build_stream(cfg, seed)
    rows = []
    for i, (vol, mask) in enumerate(pairs):
        write_volume(out / f"volume_{i:03d}", vol)
        write_volume(out / f"mask_{i:03d}", mask)
        rows.append({"id": i, "volume": f"volume_{i:03d}", "mask": f"mask_{i:03d}",
                     "foreground_voxels": int(mask.data.sum())})
    _write_csv(out / "manifest.csv", _provenance(raw, seed),
               ["id", "volume", "mask", "foreground_voxels"], rows)
    click.echo(f"wrote {len(rows)} phantoms to {out}")


@main.command("train-offline")
@_common
def train_offline(config_path, seed, out):
    """Multi-epoch training on a fixed phantom set."""
    cfg, raw = _load_config(config_path)
    seed, out = _resolve(seed, out, cfg, "train-offline")
    pairs = _build_stream(cfg, seed)
    samples = [(v.data.astype(np.float64), m.data.astype(np.float64))
               for v, m in pairs]
    dcfg = _dynamic_config(cfg, seed)
    net = ConvNet3D(SegmenterSpec(channels=_channels(cfg), seed=seed))
    offline_train(net, samples, dcfg)
    net.save(out / "model")
    rows = [{"id": i, "dice": dice(predict_mask(net, x), m)}
            for i, ((x, _), (_, m)) in enumerate(zip(samples, pairs))]
    _write_csv(out / "train_dice.csv", _provenance(raw, seed), ["id", "dice"], rows)
    click.echo(f"trained on {len(samples)} phantoms; artifacts in {out}")


@main.command("train-dynamic")
@_common
def train_dynamic(config_path, seed, out):
    """Online training over a streaming phantom sequence."""
    cfg, raw = _load_config(config_path)
    seed, out = _resolve(seed, out, cfg, "train-dynamic")
    pairs = _build_stream(cfg, seed)
    dcfg = _dynamic_config(cfg, seed)
    net = ConvNet3D(SegmenterSpec(channels=_channels(cfg), seed=seed))
    state = StreamState.fresh(net, dcfg)
    for vol, mask in pairs:
        dynamic_train_step(state, vol.data.astype(np.float64),
                           mask.data.astype(np.float64))
    net.save(out / "model")
    _write_csv(out / "steps.csv", _provenance(raw, seed),
               ["t", "loss", "replayed"], state.log)
    click.echo(f"streamed {len(pairs)} phantoms; artifacts in {out}")


@main.command("eval-protocol")
@_common
def eval_protocol(config_path, seed, out):
    """Permutation/prefix evaluation of offline and streaming variants."""
    cfg, raw = _load_config(config_path)
    seed, out = _resolve(seed, out, cfg, "eval-protocol")
    eval_count = _get(cfg, "eval_count", int, check=lambda n: n > 0,
                      check_msg="must be a positive integer")
    n_perm = _get(cfg, "n_perm", int, default=1, check=lambda n: n > 0,
                  check_msg="must be a positive integer")
    modes = _get(cfg, "modes", list, default=["offline", "dynamic", "dynamic+rp"])
    for i, mode in enumerate(modes):
        if mode not in MODES:
            raise ConfigError(f"modes[{i}]", f"unknown mode {mode!r}; one of {MODES}")
    prefixes = _get(cfg, "prefixes", list, default=None)
    pairs = _build_stream(cfg, seed, extra=eval_count)
    train_pairs = [(v.data.astype(np.float64), m.data.astype(np.float64))
                   for v, m in pairs[:-eval_count]]
    eval_pairs = [(v.data.astype(np.float64), m.data.astype(np.float64))
                  for v, m in pairs[-eval_count:]]
    dcfg = _dynamic_config(cfg, seed)
    channels = _channels(cfg)
    rows = evaluate_protocol(
        train_pairs, eval_pairs, n_perm, modes, dcfg,
        net_factory=lambda s: ConvNet3D(SegmenterSpec(channels=channels, seed=s)),
        prefixes=prefixes,
    )
    _write_csv(out / "metrics.csv", _provenance(raw, seed),
               ["perm", "mode", "prefix_t", "split",
                "dice_mean", "dice_std", "dice_min", "dice_max"], rows)
    click.echo(f"wrote {len(rows)} metric rows to {out / 'metrics.csv'}")


@main.command("interactive-sim")
@_common
def interactive_sim(config_path, seed, out):
    """Simulated interactive annotation over a phantom stream."""
    cfg, raw = _load_config(config_path)
    seed, out = _resolve(seed, out, cfg, "interactive-sim")
    pairs = _build_stream(cfg, seed)
    icfg = _interactive_config(cfg, seed)
    net = ConvNet3D(SegmenterSpec(channels=_channels(cfg), seed=seed))
    proxies, _, logs = dynamic_interactive_train(pairs, net, icfg)
    write_round_log_jsonl(out / "rounds.jsonl", logs)
    net.save(out / "model")
    rows = [{"id": i, "dice_Y_proxy": dice(p, m)}
            for i, (p, (_, m)) in enumerate(zip(proxies, pairs))]
    _write_csv(out / "proxy_dice.csv", _provenance(raw, seed),
               ["id", "dice_Y_proxy"], rows)
    click.echo(f"simulated {len(pairs)} sessions; artifacts in {out}")


@main.command("labor-study")
@_common
def labor_study(config_path, seed, out):
    """Annotation labor needed to reach a target proxy quality."""
    cfg, raw = _load_config(config_path)
    seed, out = _resolve(seed, out, cfg, "labor-study")
    rho = _get(cfg, "rho", float, default=0.85,
               check=lambda v: 0 < v < 1, check_msg="must lie in (0, 1)")
    seeds = _get(cfg, "seeds", list, default=[seed])
    if not all(isinstance(s, int) for s in seeds):
        raise ConfigError("seeds", "expected a list of integers")
    rows = []
    for run_seed in seeds:
        cfg_seeded = dict(cfg)
        pairs = _build_stream(cfg_seeded, run_seed)
        for guided in (True, False):
            icfg = _interactive_config(cfg, run_seed)
            icfg = InteractiveConfig(**{**icfg.__dict__, "guided": guided})
            result = label_until_threshold(pairs, icfg, ThresholdConfig(rho=rho))
            mode = "guided" if guided else "unguided"
            for rec in result["images"]:
                rows.append({"seed": run_seed, "mode": mode, **rec})
    _write_csv(out / "labor.csv", _provenance(raw, seed),
               ["seed", "mode", "image_id", "rounds", "gamma_x", "gamma_y",
                "labor_fraction", "final_dice"], rows)
    click.echo(f"wrote {len(rows)} labor rows to {out / 'labor.csv'}")


@main.command("serve")
@_common
def serve(config_path, seed, out):
    """Run the interactive segmentation HTTP service."""
    import uvicorn

    from .service import ServiceConfig, create_app

    cfg, _ = _load_config(config_path)
    seed, _ = _resolve(seed, out, cfg, "serve")
    svc = ServiceConfig(
        max_sessions=_get(cfg, "service.max_sessions", int, default=16),
        quota=_get(cfg, "service.quota", int, default=12),
        inner_steps=_get(cfg, "service.inner_steps", int, default=2),
        eta=_get(cfg, "service.eta", float, default=0.3),
        seed=seed,
    )
    host = _get(cfg, "host", str, default="127.0.0.1")
    port = _get(cfg, "port", int, default=8000)
    uvicorn.run(create_app(svc), host=host, port=port, log_level="warning")


@main.command("export")
@_common
def export(config_path, seed, out):
    """Aggregate an evaluation run into one summary table per split."""
    cfg, raw = _load_config(config_path)
    seed, out = _resolve(seed, out, cfg, "export")
    metrics_path = Path(_get(cfg, "metrics_csv", str))
    if not metrics_path.exists():
        raise ConfigError("metrics_csv", f"no such file: {metrics_path}")
    with open(metrics_path, newline="") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    by_split: dict[str, dict] = {}
    for row in rows:
        split = by_split.setdefault(row["split"], {})
        key = (row["mode"], row["prefix_t"])
        split.setdefault(key, []).append(float(row["dice_mean"]))
    written = []
    for split, groups in sorted(by_split.items()):
        table = []
        for (mode, prefix), vals in sorted(groups.items()):
            arr = np.asarray(vals)
            table.append({"mode": mode, "prefix_t": prefix,
                          "dice_mean": float(arr.mean()),
                          "dice_std": float(arr.std()),
                          "n_perm": len(vals)})
        path = out / f"table_{split}.csv"
        _write_csv(path, _provenance(raw, seed),
                   ["mode", "prefix_t", "dice_mean", "dice_std", "n_perm"], table)
        written.append(path)
    click.echo("wrote " + ", ".join(str(p) for p in written))


@main.command("report")
@_common
def report(config_path, seed, out):
    """Render figures next to a run's delimited artifacts."""
    from .report import render_labor_figure, render_metrics_figure, render_round_curves

    cfg, _ = _load_config(config_path)
    seed, out = _resolve(seed, out, cfg, "report")
    run_dir = Path(_get(cfg, "run_dir", str))
    if not run_dir.is_dir():
        raise ConfigError("run_dir", f"no such directory: {run_dir}")
    rendered = []
    for path in sorted(run_dir.glob("metrics*.csv")):
        rendered.append(render_metrics_figure(path, path.with_suffix(".png")))
    for path in sorted(run_dir.glob("*.jsonl")):
        rendered.append(render_round_curves(path, path.with_suffix(".png")))
    for path in sorted(run_dir.glob("labor*.csv")):
        rendered.append(render_labor_figure(path, path.with_suffix(".png")))
    if not rendered:
        raise ConfigError("run_dir", "no renderable artifacts found")
    click.echo("rendered " + ", ".join(str(p) for p in rendered))
