"""Client-selection policies, augmentations, and strategy configuration.

Three algorithm families (fedavg, fedprox, fedbuff) combine with
augmentations (schedule, schedule_v2, intra_cc) according to a fixed
validity matrix; the asynchronous fedbuff supports only its base form.
Selection policies are pure functions over a contact timeline and the
current per-satellite statuses.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .contacts import AccessWindow, ContactTimeline, union_intervals
from .orbital import SatelliteId


class ClientStatus(Enum):
    IDLE = "idle"
    AWAITING_MODEL = "awaiting_model"
    TRAINING = "training"
    AWAITING_RETURN = "awaiting_return"


_LEGAL_TRANSITIONS = {
    ClientStatus.IDLE: {ClientStatus.AWAITING_MODEL},
    ClientStatus.AWAITING_MODEL: {ClientStatus.TRAINING},
    ClientStatus.TRAINING: {ClientStatus.AWAITING_RETURN},
    ClientStatus.AWAITING_RETURN: {ClientStatus.IDLE},
}


def check_transition(old: ClientStatus, new: ClientStatus) -> None:
    if new not in _LEGAL_TRANSITIONS[old]:
        raise ValueError(f"illegal client transition {old.value} -> {new.value}")


ALGORITHMS = ("fedavg", "fedprox", "fedbuff")
AUGMENTATIONS = ("base", "schedule", "schedule_v2", "intra_cc")

# Valid (algorithm, augmentation) combinations.
VARIANT_MATRIX: dict[str, tuple[str, ...]] = {
    "fedavg": ("base", "schedule", "intra_cc"),
    "fedprox": ("base", "schedule", "schedule_v2", "intra_cc"),
    "fedbuff": ("base",),
}


@dataclass(frozen=True)
class StrategyConfig:
    algorithm: str = "fedavg"
    augmentation: str = "base"

    def __post_init__(self):
        if self.algorithm not in VARIANT_MATRIX:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; "
                             f"choose from {list(VARIANT_MATRIX)}")
        if self.augmentation not in VARIANT_MATRIX[self.algorithm]:
            raise ValueError(
                f"augmentation {self.augmentation!r} is not valid for "
                f"{self.algorithm!r} (valid: {list(VARIANT_MATRIX[self.algorithm])})")

    @property
    def scheduled(self) -> bool:
        return self.augmentation in ("schedule", "schedule_v2")

    @property
    def intra_cluster(self) -> bool:
        return self.augmentation == "intra_cc"

    @property
    def key(self) -> str:
        return f"{self.algorithm}_{self.augmentation}"


def all_variants() -> list[StrategyConfig]:
    """The full variant matrix in deterministic order."""
    return [StrategyConfig(alg, aug)
            for alg in ALGORITHMS for aug in VARIANT_MATRIX[alg]]


def _idle_sats(statuses: dict[SatelliteId, ClientStatus]) -> list[SatelliteId]:
    return sorted(s for s, st in statuses.items() if st is ClientStatus.IDLE)


def select_clients_first_contact(timeline: ContactTimeline,
                                 statuses: dict[SatelliteId, ClientStatus],
                                 t: float, c: int) -> list[SatelliteId]:
    """The c idle satellites whose next ground contact comes earliest after t.

    Ties break on satellite id; satellites with no remaining contact are
    excluded.
    """
    if c < 1:
        raise ValueError("c must be >= 1")
    ranked = []
    for sat in _idle_sats(statuses):
        win = timeline.next_contact(sat, t)
        if win is not None:
            ranked.append((max(t, win.start_s), sat))
    ranked.sort()
    return [sat for _t, sat in ranked[:c]]


def select_clients_scheduled(timeline: ContactTimeline,
                             statuses: dict[SatelliteId, ClientStatus],
                             t: float, c: int,
                             training_duration_s: float) -> list[SatelliteId]:
    """The c idle satellites with the smallest combined contact + revisit score."""
    if c < 1:
        raise ValueError("c must be >= 1")
    ranked = []
    for sat in _idle_sats(statuses):
        score = timeline.round_trip_score(sat, t, training_duration_s)
        if score is not None:
            ranked.append((score[2], sat))
    ranked.sort()
    return [sat for _s, sat in ranked[:c]]


def select_evaluation_clients(timeline: ContactTimeline,
                              statuses: dict[SatelliteId, ClientStatus],
                              t: float, c: int,
                              scheduled: bool = False,
                              training_duration_s: float = 0.0) -> list[SatelliteId]:
    """Evaluation-stage selection mirrors the training policy."""
    if scheduled:
        return select_clients_scheduled(timeline, statuses, t, c, training_duration_s)
    return select_clients_first_contact(timeline, statuses, t, c)


def min_epochs_required(cfg: StrategyConfig, min_epochs: int) -> int:
    """Epoch floor a client must reach before returning parameters.

    Only the schedule_v2 variant enforces a nonzero floor.
    """
    return min_epochs if cfg.augmentation == "schedule_v2" else 0


def choose_return_contact(timeline: ContactTimeline, sat: SatelliteId,
                          rx_end: float, epoch_time_s: float,
                          min_epochs: int = 0) -> Optional[AccessWindow]:
    """First return window that leaves time for at least min_epochs of training.

    A client training until contact skips return opportunities until the
    train-until-contact epoch count reaches the floor; min_epochs = 0 keeps
    the unwrapped behavior (first window starting after rx).
    """
    t = rx_end
    while True:
        win = timeline.next_contact_starting_after(sat, t)
        if win is None:
            return None
        epochs = int((win.start_s - rx_end) // epoch_time_s) if epoch_time_s > 0 else 0
        if epochs >= min_epochs:
            return win
        t = win.start_s


@dataclass
class BufferState:
    """Server-side accumulator for asynchronous (buffered) aggregation."""
    capacity: int
    contents: list[tuple[SatelliteId, np.ndarray, int, int]]

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("buffer capacity must be >= 1")
        self.capacity = capacity
        self.contents = []

    def deposit(self, sat: SatelliteId, params: np.ndarray, n_samples: int,
                staleness: int, staleness_max: int) -> bool:
        """Accept the update unless it exceeds the staleness bound.

        Returns True if accepted; the counter is unchanged on rejection.
        """
        if staleness > staleness_max:
            return False
        if len(self.contents) >= self.capacity:
            raise RuntimeError("buffer overfilled without aggregation")
        self.contents.append((sat, params, n_samples, staleness))
        return True

    @property
    def full(self) -> bool:
        return len(self.contents) == self.capacity

    def drain(self) -> list[tuple[np.ndarray, int]]:
        out = [(p, n) for _s, p, n, _st in self.contents]
        self.contents = []
        return out


def ring_hop_path(cluster: list[SatelliteId], src: SatelliteId,
                  dst: SatelliteId) -> list[SatelliteId]:
    """Shortest adjacent-hop path around the cluster ring from src to dst.

    The cluster list must be in slot order.  Ties between the two ring
    directions go to ascending slot direction.
    """
    n = len(cluster)
    i, j = cluster.index(src), cluster.index(dst)
    fwd = (j - i) % n
    bwd = (i - j) % n
    if fwd <= bwd:
        return [cluster[(i + k) % n] for k in range(fwd + 1)]
    return [cluster[(i - k) % n] for k in range(bwd + 1)]


def relay_route_intra_cluster(timeline: ContactTimeline,
                              cluster: list[SatelliteId],
                              training_sat: SatelliteId, t: float,
                              ring_connected: bool) -> Optional[list[SatelliteId]]:
    """Hop path from the training satellite to a cluster member in ground
    contact at time t, or None when no member is reachable and in view.

    The training satellite itself has priority when in contact (path of
    length 0).  Without a connected ring only the direct path is possible.
    """
    def in_contact(sat: SatelliteId) -> bool:
        win = timeline.next_contact(sat, t)
        return win is not None and win.start_s <= t

    if in_contact(training_sat):
        return [training_sat]
    if not ring_connected:
        return None
    n = len(cluster)
    i = cluster.index(training_sat)
    best: Optional[tuple[int, SatelliteId]] = None
    for m in cluster:
        if m == training_sat or not in_contact(m):
            continue
        j = cluster.index(m)
        hops = min((j - i) % n, (i - j) % n)
        if best is None or (hops, m) < best:
            best = (hops, m)
    if best is None:
        return None
    return ring_hop_path(cluster, training_sat, best[1])


def cluster_union_windows(timeline: ContactTimeline,
                          members: list[SatelliteId]) -> list[tuple[float, float]]:
    """Union of the members' ground windows, as merged disjoint intervals."""
    spans = [(w.start_s, w.end_s) for m in members for w in timeline.ground_windows(m)]
    return union_intervals(spans)
