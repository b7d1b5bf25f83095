"""Figure rendering for run artifacts.

Reads the delimited outputs (metrics CSV, round-log JSONL, labor CSV) and
renders matplotlib figures next to them. Rendering is read-only over the
artifacts: figures can always be regenerated from the delimited files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(rows))


def render_metrics_figure(csv_path: str | Path, out_path: str | Path) -> Path:
    """Bar chart of mean dice per mode and split, aggregated over runs."""
    csv_path = Path(csv_path)
    rows = _read_csv(csv_path)
    if not rows:
        raise ValueError(f"no data rows in {csv_path}")
    groups: dict[tuple[str, str], list[float]] = {}
    for row in rows:
        key = (row["mode"], row["split"])
        groups.setdefault(key, []).append(float(row["dice_mean"]))
    labels = sorted(groups)
    means = [sum(groups[k]) / len(groups[k]) for k in labels]
    fig, ax = plt.subplots(figsize=(max(4, len(labels) * 1.2), 3.5))
    ax.bar(range(len(labels)), means, color="#4878d0")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels([f"{m}\n{s}" for m, s in labels], fontsize=8)
    ax.set_ylabel("mean dice")
    ax.set_ylim(0, 1)
    ax.set_title(csv_path.stem)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_round_curves(jsonl_path: str | Path, out_path: str | Path) -> Path:
    """Per-round dice curves averaged across images."""
    jsonl_path = Path(jsonl_path)
    rows = [json.loads(line) for line in open(jsonl_path) if line.strip()]
    if not rows:
        raise ValueError(f"no rows in {jsonl_path}")
    by_round: dict[int, dict[str, list[float]]] = {}
    keys = ("dice_Y_proxy", "dice_Y_pred", "dice_proxy_pred")
    for row in rows:
        bucket = by_round.setdefault(int(row["round"]), {k: [] for k in keys})
        for k in keys:
            if k in row:
                bucket[k].append(float(row[k]))
    rounds = sorted(by_round)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for k in keys:
        series = [by_round[r][k] for r in rounds]
        if any(series):
            ax.plot(rounds, [sum(s) / len(s) if s else float("nan") for s in series],
                    marker="o", label=k)
    ax.set_xlabel("round")
    ax.set_ylabel("dice")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    ax.set_title(jsonl_path.stem)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_labor_figure(csv_path: str | Path, out_path: str | Path) -> Path:
    """Total annotation labor per variant."""
    csv_path = Path(csv_path)
    rows = _read_csv(csv_path)
    if not rows:
        raise ValueError(f"no data rows in {csv_path}")
    totals: dict[str, float] = {}
    for row in rows:
        totals[row["mode"]] = totals.get(row["mode"], 0.0) + float(row["labor_fraction"])
    labels = sorted(totals)
    fig, ax = plt.subplots(figsize=(4, 3.5))
    ax.bar(range(len(labels)), [totals[k] for k in labels], color="#d65f5f")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("total labor (full-effort fractions)")
    ax.set_title(csv_path.stem)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
