"""Dataset ingestion and partitioning across satellites.

Supports the LEAF FEMNIST directory layout (one JSON shard per file under
``all_data/``, each holding per-writer samples) and a synthetic non-IID
generator so experiments never require a download.  Partitioning assigns
writers to satellites round-robin in a seeded random order, clipping each
satellite's sample count to a configurable range.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fl_core import LocalDataset, rng_for
from .orbital import SatelliteId

FEMNIST_CLASSES = 62
DEFAULT_CLIP = (200, 350)


@dataclass(frozen=True)
class WriterDataset:
    """All samples attributed to one writer (or one synthetic shard)."""
    writer_id: str
    samples: LocalDataset


def load_leaf_femnist(path: str | Path) -> list[WriterDataset]:
    """Load LEAF-format FEMNIST shards into per-writer datasets.

    Features are clipped to [0, 1]; labels must lie in [0, 62).
    """
    root = Path(path)
    shard_dir = root / "all_data" if (root / "all_data").is_dir() else root
    shards = sorted(shard_dir.glob("*.json"))
    if not shards:
        raise FileNotFoundError(f"no LEAF json shards found under {root}")
    writers: list[WriterDataset] = []
    for shard in shards:
        try:
            blob = json.loads(shard.read_text())
            users = blob["users"]
            user_data = blob["user_data"]
        except (json.JSONDecodeError, KeyError) as exc:
            raise ValueError(f"corrupt LEAF shard {shard}: {exc}") from exc
        for user in users:
            entry = user_data[user]
            x = np.asarray(entry["x"], dtype=float)
            y = np.asarray(entry["y"], dtype=int)
            if x.ndim != 2:
                x = x.reshape(len(y), -1)
            if y.size and (y.min() < 0 or y.max() >= FEMNIST_CLASSES):
                raise ValueError(
                    f"{shard}: writer {user} has label outside [0, {FEMNIST_CLASSES})")
            writers.append(WriterDataset(
                writer_id=user,
                samples=LocalDataset(np.clip(x, 0.0, 1.0), y),
            ))
    return writers


def synthetic_noniid(n_clients: int, n_classes: int,
                     n_per_client: tuple[int, int] = (200, 350),
                     skew: float = 0.5, seed: int = 0,
                     feature_dim: int = 32,
                     class_sep: float = 2.5,
                     noise_std: float = 1.0) -> list[WriterDataset]:
    """Generate Dirichlet-skewed clients over separable Gaussian class clusters.

    Each class is a Gaussian blob around a shared random mean; each client
    draws its label histogram from Dirichlet(skew).  Lower skew concentrates
    a client's data on few labels.  Fully deterministic per seed.
    """
    if n_clients < 1:
        raise ValueError("n_clients must be >= 1")
    lo, hi = n_per_client
    if lo > hi or lo < 1:
        raise ValueError("n_per_client must satisfy 1 <= min <= max")
    master = rng_for(seed, 0x5E)
    means = master.normal(0.0, class_sep, size=(n_classes, feature_dim))
    writers = []
    for c in range(n_clients):
        rng = rng_for(seed, 0x5E, c + 1)
        n = int(rng.integers(lo, hi + 1))
        probs = rng.dirichlet(np.full(n_classes, skew))
        labels = rng.choice(n_classes, size=n, p=probs)
        feats = means[labels] + rng.normal(0.0, noise_std, size=(n, feature_dim))
        writers.append(WriterDataset(f"synth_{c:04d}", LocalDataset(feats, labels)))
    return writers


def split_test_writers(writers: list[WriterDataset], frac: float = 0.1,
                       seed: int = 0) -> tuple[list[WriterDataset], LocalDataset]:
    """Reserve a seeded fraction of writers as a global held-out test set.

    Returns (remaining training writers, pooled test dataset).  Writers are
    canonicalized by id before the seeded shuffle, so input order is
    irrelevant.
    """
    ordered = sorted(writers, key=lambda w: w.writer_id)
    rng = rng_for(seed, 0x7E57)
    perm = rng.permutation(len(ordered))
    n_test = max(1, int(round(frac * len(ordered))))
    test_idx = set(perm[:n_test].tolist())
    train = [ordered[i] for i in range(len(ordered)) if i not in test_idx]
    held = [ordered[i] for i in sorted(test_idx)]
    if not train:
        raise ValueError("test split would consume every writer")
    x = np.concatenate([w.samples.features for w in held])
    y = np.concatenate([w.samples.labels for w in held])
    return train, LocalDataset(x, y)


@dataclass(frozen=True)
class PartitionPlan:
    """Mapping of satellites to writer shards with clipped sample counts."""
    assignments: dict[SatelliteId, tuple[str, ...]]
    datasets: dict[SatelliteId, LocalDataset]

    def sample_count(self, sat: SatelliteId) -> int:
        return self.datasets[sat].n


def partition_to_satellites(writers: list[WriterDataset],
                            satellites: list[SatelliteId],
                            clip: tuple[int, int] = DEFAULT_CLIP,
                            seed: int = 0) -> PartitionPlan:
    """Deal writers round-robin (seeded order) until every satellite holds at
    least clip[0] samples; truncate each satellite at clip[1] samples.

    Writers are never split across satellites, so shards stay disjoint.
    """
    lo, hi = clip
    if lo > hi or lo < 1:
        raise ValueError("clip must satisfy 1 <= min <= max")
    ordered = sorted(writers, key=lambda w: w.writer_id)
    rng = rng_for(seed, 0xA55)
    deck = [ordered[i] for i in rng.permutation(len(ordered))]
    sats = sorted(satellites)

    assigned: dict[SatelliteId, list[WriterDataset]] = {s: [] for s in sats}
    counts = {s: 0 for s in sats}
    deck_iter = iter(deck)
    while True:
        below = [s for s in sats if counts[s] < lo]
        if not below:
            break
        for s in below:
            try:
                w = next(deck_iter)
            except StopIteration:
                shortfall = sum(lo - counts[t] for t in sats if counts[t] < lo)
                raise ValueError(
                    f"insufficient data: {shortfall} more samples needed to give "
                    f"every satellite at least {lo}") from None
            assigned[s].append(w)
            counts[s] += w.samples.n

    datasets = {}
    for s in sats:
        x = np.concatenate([w.samples.features for w in assigned[s]])
        y = np.concatenate([w.samples.labels for w in assigned[s]])
        datasets[s] = LocalDataset(x[:hi], y[:hi])
    return PartitionPlan(
        assignments={s: tuple(w.writer_id for w in assigned[s]) for s in sats},
        datasets=datasets,
    )
