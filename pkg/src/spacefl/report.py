"""Report emission: heatmap tables (CSV) and rendered figures (PNG).

Heatmap cells are means over seeds of one of three run metrics: maximum
accuracy reached, mean round duration in hours, or idle seconds per
satellite per simulated hour.  The single-satellite cell is forced to 0 for
accuracy, since one satellite cannot run a federated round.
"""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .sweep import read_run_csv

METRICS = {
    "max_accuracy": "max_accuracy",
    "round_duration": "mean_round_duration_h",
    "idle_time": "idle_s_per_sat_per_hour",
}

METRIC_LABELS = {
    "max_accuracy": "maximum accuracy",
    "round_duration": "mean round duration (h)",
    "idle_time": "idle s per satellite per hour",
}

HEATMAP_HEADER = "algorithm,augmentation,stations,clusters,sats_per_cluster,value,n_seeds"


def collect_runs(runs_dir: str | Path) -> list[dict[str, str]]:
    """Header metadata of every run CSV under runs_dir."""
    paths = sorted(Path(runs_dir).glob("*.csv"))
    out = []
    for p in paths:
        if p.name in ("failures.csv",) or p.name.startswith("heatmap_"):
            continue
        meta, _rows = read_run_csv(p)
        meta["_path"] = str(p)
        out.append(meta)
    return out


def heatmap_table(runs: list[dict[str, str]], metric: str) -> list[tuple]:
    """Aggregate run metadata into (cell axes, mean value, n_seeds) rows."""
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {list(METRICS)}")
    field = METRICS[metric]
    cells: dict[tuple, list[float]] = defaultdict(list)
    for meta in runs:
        key = (meta["algorithm"], meta["augmentation"], int(meta["stations"]),
               int(meta["clusters"]), int(meta["sats_per_cluster"]))
        cells[key].append(float(meta[field]))
    rows = []
    for key in sorted(cells):
        value = float(np.mean(cells[key]))
        if metric == "max_accuracy" and key[3] == 1 and key[4] == 1:
            value = 0.0
        rows.append((*key, value, len(cells[key])))
    return rows


def write_heatmap_csv(rows: list[tuple], path: str | Path) -> None:
    lines = [HEATMAP_HEADER]
    for alg, aug, gs, cl, sp, value, n in rows:
        lines.append(f"{alg},{aug},{gs},{cl},{sp},{value:.6g},{n}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_heatmap_csv(path: str | Path) -> list[tuple]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != HEATMAP_HEADER:
        raise ValueError(f"{path}: missing heatmap header")
    rows = []
    for line in lines[1:]:
        if not line.strip():
            continue
        alg, aug, gs, cl, sp, value, n = line.split(",")
        rows.append((alg, aug, int(gs), int(cl), int(sp), float(value), int(n)))
    return rows


def render_heatmap_figures(rows: list[tuple], metric: str,
                           out_dir: str | Path) -> list[Path]:
    """One PNG per (algorithm, augmentation, stations): a clusters x
    sats-per-cluster grid of mean metric values."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    groups: dict[tuple, list[tuple]] = defaultdict(list)
    for alg, aug, gs, cl, sp, value, _n in rows:
        groups[(alg, aug, gs)].append((cl, sp, value))
    written = []
    for (alg, aug, gs), cells in sorted(groups.items()):
        clusters = sorted({c for c, _s, _v in cells})
        sats = sorted({s for _c, s, _v in cells})
        grid = np.full((len(sats), len(clusters)), np.nan)
        for cl, sp, value in cells:
            grid[sats.index(sp), clusters.index(cl)] = value
        fig, ax = plt.subplots(figsize=(4.2, 3.6))
        im = ax.imshow(grid, origin="lower", cmap="viridis", aspect="auto")
        ax.set_xticks(range(len(clusters)), [str(c) for c in clusters])
        ax.set_yticks(range(len(sats)), [str(s) for s in sats])
        ax.set_xlabel("clusters")
        ax.set_ylabel("satellites per cluster")
        ax.set_title(f"{alg} / {aug}, {gs} stations")
        for i in range(len(sats)):
            for j in range(len(clusters)):
                if not np.isnan(grid[i, j]):
                    ax.text(j, i, f"{grid[i, j]:.2f}", ha="center", va="center",
                            fontsize=8, color="white")
        fig.colorbar(im, ax=ax, label=METRIC_LABELS[metric])
        fig.tight_layout()
        path = out / f"heatmap_{metric}_{alg}_{aug}_gs{gs}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


def render_run_lineplot(run_csv: str | Path, out_path: str | Path) -> Path:
    """Accuracy-versus-round and round-duration figure for a single run."""
    meta, rows = read_run_csv(run_csv)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    if rows:
        rounds = [r["round"] for r in rows]
        ax1.plot(rounds, [r["accuracy"] for r in rows])
        ax2.plot(rounds, [r["round_duration_s"] / 3600.0 for r in rows])
    ax1.set_xlabel("server round")
    ax1.set_ylabel("accuracy")
    ax2.set_xlabel("server round")
    ax2.set_ylabel("round duration (h)")
    fig.suptitle(f"{meta.get('algorithm', '?')} / {meta.get('augmentation', '?')}, "
                 f"{meta.get('stations', '?')} stations")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return Path(out_path)


def emit_report(runs_dir: str | Path, metric: str,
                out_dir: str | Path) -> tuple[Path, list[Path]]:
    """Write the heatmap CSV plus rendered PNGs; returns (csv, figure paths)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = collect_runs(runs_dir)
    if not runs:
        raise ValueError(f"no run CSVs found under {runs_dir}")
    rows = heatmap_table(runs, metric)
    csv_path = out / f"heatmap_{metric}.csv"
    write_heatmap_csv(rows, csv_path)
    figures = render_heatmap_figures(rows, metric, out)
    return csv_path, figures
