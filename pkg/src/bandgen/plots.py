"""Figure rendering for run reports.

All plots are written as SVG files next to the delimited outputs they are
derived from: training curves from metrics.csv, the invalid-rate bar chart
over risk thresholds, and the risk-feasibility coverage heatmap.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .episode_log import EpisodeLog
from .metrics import coverage_grid, frame_arrays


def _read_csv(path: Path) -> dict[str, np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return {k: np.array([float(r[k]) if r[k] not in ("", None) else np.nan for r in rows])
            for k in rows[0] if k not in ("termination",)}


def plot_training_curves(metrics_csv: str | Path, out_path: str | Path) -> Path:
    data = _read_csv(Path(metrics_csv))
    fig, axes = plt.subplots(2, 2, figsize=(9, 6), sharex=True)
    panels = [
        ("policy_loss", "policy loss"),
        ("value_loss", "value loss"),
        ("entropy", "entropy"),
        ("cr_recent", "collision rate (trailing 100 ep)"),
    ]
    x = data["update"]
    for ax, (key, label) in zip(axes.ravel(), panels):
        ax.plot(x, data[key], lw=1.0)
        ax.set_title(label, fontsize=10)
        ax.grid(alpha=0.3)
    for ax in axes[1]:
        ax.set_xlabel("policy update")
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def plot_invalid_rate_bars(
    logs: list[EpisodeLog], out_path: str | Path,
    phi_thresholds: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8),
    exclude_tail_s: float = 0.8,
) -> Path:
    """Physically-invalid frame rate restricted to frames above each risk
    threshold, excluding the pre-impact window of collided episodes."""
    import math

    rates = []
    for thr in phi_thresholds:
        total = invalid = 0
        for logrec in logs:
            sig = logrec.sigmas()
            phi = logrec.phis()
            cf = logrec.collision_frame()
            if cf is not None:
                window = math.ceil(exclude_tail_s / logrec.dt)
                keep = max(0, cf - window + 1)
                sig, phi = sig[:keep], phi[:keep]
            mask = phi >= thr
            total += int(mask.sum())
            invalid += int((sig[mask] < 0.0).sum())
        rates.append(invalid / total if total else 0.0)

    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar([f">= {t:.1f}" for t in phi_thresholds], rates, color="#bb4444")
    ax.set_xlabel("risk threshold")
    ax.set_ylabel("phys-invalid frame rate")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def plot_coverage_heatmap(
    logs: list[EpisodeLog], out_path: str | Path, n_thresholds: int = 11
) -> Path:
    phis, sigmas, _ = frame_arrays(logs)
    thr = np.linspace(0.0, 1.0, n_thresholds)
    grid = coverage_grid(phis, np.clip(sigmas, 0.0, 1.0), thr, thr)
    fig, ax = plt.subplots(figsize=(4.6, 3.8))
    im = ax.imshow(
        grid.T, origin="lower", aspect="auto", cmap="viridis",
        extent=(thr[0], thr[-1], thr[0], thr[-1]),
    )
    ax.set_xlabel("risk threshold")
    ax.set_ylabel("feasibility threshold")
    fig.colorbar(im, ax=ax, label="frame fraction")
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def write_coverage_csv(logs: list[EpisodeLog], out_path: str | Path,
                       n_thresholds: int = 11) -> Path:
    phis, sigmas, _ = frame_arrays(logs)
    thr = np.linspace(0.0, 1.0, n_thresholds)
    grid = coverage_grid(phis, np.clip(sigmas, 0.0, 1.0), thr, thr)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["phi_threshold"] + [f"sigma>={t:.2f}" for t in thr])
        for i, t in enumerate(thr):
            w.writerow([f"{t:.2f}"] + [f"{v:.6f}" for v in grid[i]])
    return out_path
