"""Single-run and sweep execution with CSV emission.

A sweep enumerates the Cartesian product of cluster counts, satellites per
cluster, ground station network sizes, and strategy variants, repeating each
cell over a seed list.  Every (cell, seed) run writes one CSV whose header
echoes the fully resolved configuration, so reruns with identical inputs are
byte-identical.
"""
from __future__ import annotations

import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from .data import partition_to_satellites, split_test_writers, synthetic_noniid, load_leaf_femnist
from .fl_core import LocalDataset, ModelSpec
from .orbital import ConstellationSpec, SatelliteId, build_constellation
from .sim import MetricsLog, SimConfig, build_timeline, run_simulation
from .stations import VALID_NETWORK_SIZES
from .strategies import StrategyConfig, all_variants


@dataclass(frozen=True)
class CellSpec:
    """One sweep cell: a strategy variant on one constellation/network shape."""
    strategy: StrategyConfig
    clusters: int
    sats_per_cluster: int
    stations: int

    @property
    def key(self) -> str:
        return (f"{self.strategy.key}_cl{self.clusters}"
                f"_sp{self.sats_per_cluster}_gs{self.stations}")


@dataclass(frozen=True)
class SweepSpec:
    clusters: tuple[int, ...] = (1, 2, 5, 10)
    sats_per_cluster: tuple[int, ...] = (1, 2, 5, 10)
    stations: tuple[int, ...] = (1, 2, 3, 5, 10, 13)
    variants: tuple[StrategyConfig, ...] = tuple(all_variants())
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)

    def __post_init__(self):
        for s in self.stations:
            if s not in VALID_NETWORK_SIZES:
                raise ValueError(f"invalid station count {s}; "
                                 f"valid sizes are {list(VALID_NETWORK_SIZES)}")
        if not self.seeds:
            raise ValueError("at least one seed is required")

    def cells(self) -> list[CellSpec]:
        return [CellSpec(v, c, s, g)
                for v in self.variants
                for c in self.clusters
                for s in self.sats_per_cluster
                for g in self.stations]


def paper_sweep() -> SweepSpec:
    """The full 768-cell sweep grid."""
    return SweepSpec()


def desk_sweep() -> SweepSpec:
    """Reduced grid sized so a full sweep finishes in minutes."""
    return SweepSpec(clusters=(1, 2), sats_per_cluster=(2, 10), stations=(1, 3, 13))


@dataclass(frozen=True)
class DatasetSpec:
    """Where client data comes from: synthetic generator or a LEAF directory."""
    kind: str = "synthetic"
    path: str = ""
    n_classes: int = 10
    feature_dim: int = 32
    skew: float = 0.5
    hidden: tuple[int, ...] = (64,)

    @classmethod
    def parse(cls, text: str) -> "DatasetSpec":
        """Parse ``synthetic[:k=v,...]`` or ``femnist:<path>``."""
        if text.startswith("femnist:"):
            return cls(kind="femnist", path=text.split(":", 1)[1])
        if text == "synthetic" or text.startswith("synthetic:"):
            kwargs = {}
            if ":" in text:
                for item in text.split(":", 1)[1].split(","):
                    if not item:
                        continue
                    k, _, v = item.partition("=")
                    if k == "n_classes":
                        kwargs["n_classes"] = int(v)
                    elif k == "feature_dim":
                        kwargs["feature_dim"] = int(v)
                    elif k == "skew":
                        kwargs["skew"] = float(v)
                    else:
                        raise ValueError(f"unknown synthetic dataset parameter {k!r}")
            return cls(**kwargs)
        raise ValueError(f"unknown dataset spec {text!r}; "
                         "use 'synthetic[:k=v,...]' or 'femnist:<path>'")

    def as_text(self) -> str:
        if self.kind == "femnist":
            return f"femnist:{self.path}"
        return (f"synthetic:n_classes={self.n_classes},"
                f"feature_dim={self.feature_dim},skew={self.skew}")

    def model_spec(self) -> ModelSpec:
        if self.kind == "femnist":
            return ModelSpec()
        return ModelSpec(input_dim=self.feature_dim, hidden=self.hidden,
                         n_classes=self.n_classes)


def prepare_data(constellation: ConstellationSpec, dataset: DatasetSpec,
                 seed: int, clip: tuple[int, int] = (200, 350),
                 ) -> tuple[dict[SatelliteId, LocalDataset], LocalDataset]:
    """Partitioned per-satellite datasets plus a global held-out test set."""
    sats = [sid for sid, _ in build_constellation(constellation)]
    if dataset.kind == "femnist":
        writers = load_leaf_femnist(dataset.path)
    else:
        n_writers = len(sats) + max(3, math.ceil(0.15 * len(sats)))
        writers = synthetic_noniid(n_writers, dataset.n_classes,
                                   n_per_client=clip, skew=dataset.skew,
                                   seed=seed, feature_dim=dataset.feature_dim)
    train_writers, test_set = split_test_writers(writers, frac=0.1, seed=seed)
    plan = partition_to_satellites(train_writers, sats, clip=clip, seed=seed)
    return plan.datasets, test_set


# ---------------------------------------------------------------------------
# Run CSV serialization

def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, tuple):
        return "x".join(str(x) for x in v)
    return str(v)


def run_header(cfg: SimConfig, dataset: DatasetSpec, log: MetricsLog) -> list[str]:
    """Header lines echoing every resolved configuration value and the
    derived summary metrics."""
    hp = cfg.hp
    items = [
        ("algorithm", cfg.strategy.algorithm),
        ("augmentation", cfg.strategy.augmentation),
        ("clusters", cfg.constellation.n_clusters),
        ("sats_per_cluster", cfg.constellation.sats_per_cluster),
        ("altitude_km", cfg.constellation.altitude_km),
        ("inclination_deg", math.degrees(cfg.constellation.inclination_rad)),
        ("stations", cfg.n_stations),
        ("start_date", cfg.start_date.isoformat()),
        ("end_date", cfg.end_date.isoformat()),
        ("horizon_s", cfg.horizon_s),
        ("max_rounds", cfg.max_rounds),
        ("seed", cfg.seed),
        ("C", hp.C), ("B", hp.B), ("E", hp.E), ("eta", hp.eta),
        ("mu_prox", hp.mu_prox), ("D", hp.D),
        ("staleness_max", hp.staleness_max), ("min_epochs", hp.min_epochs),
        ("flops_rate", cfg.flops_rate),
        ("flops_per_epoch", cfg.flops_per_epoch),
        ("bandwidth_bps", cfg.bandwidth_bps),
        ("min_elev_deg", cfg.min_elev_deg),
        ("gmst0_rad", cfg.gmst0_rad),
        ("max_exec_epochs", cfg.max_exec_epochs),
        ("model_input_dim", cfg.model.input_dim),
        ("model_hidden", cfg.model.hidden),
        ("model_n_classes", cfg.model.n_classes),
        ("dataset", dataset.as_text()),
        ("n_satellites", log.n_satellites),
        ("n_rounds", len(log.rounds)),
        ("max_accuracy", log.max_accuracy),
        ("mean_round_duration_h", log.mean_round_duration_h),
        ("idle_s_per_sat_per_hour", log.idle_s_per_sat_per_hour),
        ("idle_fraction", log.idle_fraction),
        ("note", log.note),
    ]
    return [f"# {k}={_fmt(v)}" for k, v in items]


def write_run_csv(path: str | Path, cfg: SimConfig, dataset: DatasetSpec,
                  log: MetricsLog) -> None:
    lines = run_header(cfg, dataset, log)
    lines.append("round,t_s,accuracy,round_duration_s")
    for r in log.rounds:
        lines.append(f"{r.round_idx},{_fmt(r.t_end_s)},{_fmt(r.accuracy)},"
                     f"{_fmt(r.duration_s)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_run_csv(path: str | Path) -> tuple[dict[str, str], list[dict[str, float]]]:
    """Parse a run CSV into (header metadata, per-round rows)."""
    meta: dict[str, str] = {}
    rows: list[dict[str, float]] = []
    header_seen = False
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if line.startswith("# "):
            k, _, v = line[2:].partition("=")
            meta[k] = v
        elif not header_seen:
            if line != "round,t_s,accuracy,round_duration_s":
                raise ValueError(f"{path}:{lineno}: unexpected column header")
            header_seen = True
        elif line.strip():
            r, t, a, d = line.split(",")
            rows.append({"round": float(r), "t_s": float(t),
                         "accuracy": float(a), "round_duration_s": float(d)})
    return meta, rows


# ---------------------------------------------------------------------------
# Sweep execution

def run_cell(cell: CellSpec, seed: int, base_cfg: SimConfig,
             dataset: DatasetSpec, out_dir: Path,
             timeline=None) -> Path:
    """Run one (cell, seed) simulation and write its CSV; returns the path."""
    constellation = replace(base_cfg.constellation,
                            n_clusters=cell.clusters,
                            sats_per_cluster=cell.sats_per_cluster)
    cfg = replace(base_cfg, constellation=constellation,
                  n_stations=cell.stations, strategy=cell.strategy,
                  seed=seed, model=dataset.model_spec())
    datasets, test_set = prepare_data(constellation, dataset, seed)
    log = run_simulation(cfg, datasets, test_set, timeline=timeline)
    out_path = out_dir / f"{cell.key}_seed{seed}.csv"
    write_run_csv(out_path, cfg, dataset, log)
    return out_path


def _cell_worker(args) -> tuple[str, Optional[str]]:
    cell, seed, base_cfg, dataset, out_dir = args
    try:
        run_cell(cell, seed, base_cfg, dataset, Path(out_dir))
        return f"{cell.key}_seed{seed}", None
    except Exception:
        return f"{cell.key}_seed{seed}", traceback.format_exc()


def run_sweep(spec: SweepSpec, base_cfg: SimConfig, dataset: DatasetSpec,
              out_dir: str | Path, parallelism: int = 1) -> list[Path]:
    """Execute every (cell, seed); failed cells are logged and skipped.

    Returns the list of run CSV paths written.  Cells sharing a geometry
    reuse one contact timeline in the sequential path.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = spec.cells()
    failures: list[tuple[str, str]] = []
    written: list[Path] = []

    if parallelism > 1:
        tasks = [(cell, seed, base_cfg, dataset, str(out))
                 for cell in cells for seed in spec.seeds]
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            for key, err in pool.map(_cell_worker, tasks):
                if err is None:
                    written.append(out / f"{key}.csv")
                else:
                    failures.append((key, err))
    else:
        timelines: dict[tuple[int, int, int], object] = {}
        for cell in cells:
            geo = (cell.clusters, cell.sats_per_cluster, cell.stations)
            for seed in spec.seeds:
                try:
                    if geo not in timelines:
                        constellation = replace(
                            base_cfg.constellation, n_clusters=cell.clusters,
                            sats_per_cluster=cell.sats_per_cluster)
                        probe = replace(base_cfg, constellation=constellation,
                                        n_stations=cell.stations)
                        timelines[geo] = build_timeline(probe)
                    written.append(run_cell(cell, seed, base_cfg, dataset, out,
                                            timeline=timelines[geo]))
                except Exception:
                    failures.append((f"{cell.key}_seed{seed}",
                                     traceback.format_exc()))

    if failures:
        (out / "failures.csv").write_text(
            "run,error\n" + "\n".join(
                f"{key},{err.splitlines()[-1]}" for key, err in failures) + "\n")
    return written
