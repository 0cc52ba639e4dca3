"""Deterministic discrete-event simulation of federated rounds over orbits.

One simulation is a single-threaded, seeded run binding a constellation,
its contact timeline, a strategy, and actual SGD training into a timed
schedule.  All event times derive from precomputed access windows plus the
compute/transfer-rate constants, so repeated runs with the same config and
seed are bit-identical.

Station capacity is unlimited (simultaneous multi-satellite contacts are
allowed) and a transfer must fit inside its window, else it restarts at the
next one; at the default bandwidth transfers are millisecond-scale so the
rule is a safety net.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from typing import Optional

import numpy as np

from .contacts import ContactTimeline, build_ground_timeline
from .fl_core import (
    HyperParams,
    LocalDataset,
    ModelSpec,
    aggregate_weighted,
    client_update_fixed,
    client_update_proximal,
    evaluate,
    init_params,
    model_size_bytes,
)
from .orbital import ConstellationSpec, EarthModel, SatelliteId, build_constellation
from .stations import station_network
from .strategies import (
    ClientStatus,
    StrategyConfig,
    min_epochs_required,
    select_clients_first_contact,
    select_clients_scheduled,
    select_evaluation_clients,
)

SEGMENT_STATES = ("idle", "rx", "tx", "compute")


def transfer_time(n_bytes: float, bandwidth_bps: float) -> float:
    """Seconds to move n_bytes over a link of bandwidth_bps."""
    if n_bytes < 0 or bandwidth_bps <= 0:
        raise ValueError("n_bytes must be >= 0 and bandwidth_bps > 0")
    return 8.0 * n_bytes / bandwidth_bps


def compute_time(epochs: float, flops_per_epoch: float, flops_rate: float) -> float:
    """Seconds of on-board compute for the given number of local epochs."""
    if flops_rate <= 0:
        raise ValueError("flops_rate must be positive")
    return epochs * flops_per_epoch / flops_rate


@dataclass(frozen=True)
class SimConfig:
    constellation: ConstellationSpec = ConstellationSpec(2, 10)
    n_stations: int = 13
    strategy: StrategyConfig = StrategyConfig()
    hp: HyperParams = HyperParams()
    model: ModelSpec = ModelSpec()
    start_date: date = date(2024, 4, 14)
    end_date: date = date(2024, 7, 13)
    max_rounds: int = 500
    seed: int = 0
    flops_rate: float = 40e9
    flops_per_epoch: float = 98e6
    bandwidth_bps: float = 580e6
    min_elev_deg: float = 10.0
    gmst0_rad: float = 0.0
    coarse_step_s: float = 10.0
    refine_tol_s: float = 0.1
    earth: EarthModel = EarthModel()
    # Cap on SGD epochs actually executed per client round; the simulated
    # timeline still reflects continuous training, but the compute-rate
    # constants would otherwise imply millions of epochs per contact gap.
    max_exec_epochs: int = 50
    client_side_eval: bool = False

    def __post_init__(self):
        if self.end_date <= self.start_date:
            raise ValueError("end_date must follow start_date")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        for v in (self.flops_rate, self.flops_per_epoch, self.bandwidth_bps):
            if v <= 0:
                raise ValueError("rates must be positive")

    @property
    def horizon_s(self) -> float:
        return (self.end_date - self.start_date) / timedelta(seconds=1)

    def with_horizon_days(self, days: float) -> "SimConfig":
        return replace(self, end_date=self.start_date + timedelta(days=days))


@dataclass(frozen=True)
class TimelineSegment:
    sat: SatelliteId
    state: str
    t0_s: float
    t1_s: float

    def __post_init__(self):
        if self.state not in SEGMENT_STATES:
            raise ValueError(f"unknown segment state {self.state!r}")

    @property
    def duration_s(self) -> float:
        return self.t1_s - self.t0_s


@dataclass(frozen=True)
class RoundRecord:
    round_idx: int
    t_start_s: float
    t_end_s: float
    participants: tuple[str, ...]
    accuracy: float
    loss: float
    client_accuracy: Optional[float] = None

    @property
    def duration_s(self) -> float:
        return self.t_end_s - self.t_start_s


@dataclass
class MetricsLog:
    config_key: str
    n_satellites: int
    horizon_s: float
    t_end_s: float
    rounds: list[RoundRecord]
    segments: dict[SatelliteId, list[TimelineSegment]]
    note: str = ""

    @property
    def max_accuracy(self) -> float:
        return max((r.accuracy for r in self.rounds), default=0.0)

    @property
    def mean_round_duration_h(self) -> float:
        if not self.rounds:
            return 0.0
        return float(np.mean([r.duration_s for r in self.rounds])) / 3600.0

    def idle_breakdown(self, sat: SatelliteId) -> dict[str, float]:
        """Total seconds per state for one satellite; sums to t_end_s."""
        if sat not in self.segments:
            raise KeyError(f"unknown satellite {sat}")
        totals = {s: 0.0 for s in SEGMENT_STATES}
        for seg in self.segments[sat]:
            totals[seg.state] += seg.duration_s
        return totals

    @property
    def idle_fraction(self) -> float:
        if self.t_end_s <= 0 or not self.segments:
            return 0.0
        idle = sum(self.idle_breakdown(s)["idle"] for s in self.segments)
        return idle / (len(self.segments) * self.t_end_s)

    @property
    def idle_s_per_sat_per_hour(self) -> float:
        if self.t_end_s <= 0 or not self.segments:
            return 0.0
        idle = sum(self.idle_breakdown(s)["idle"] for s in self.segments)
        return idle / len(self.segments) / (self.t_end_s / 3600.0)


class _Recorder:
    """Collects busy segments and later closes the per-satellite partition."""

    def __init__(self, sats: list[SatelliteId], trace_path: Optional[str] = None):
        self.busy: dict[SatelliteId, list[TimelineSegment]] = {s: [] for s in sats}
        self._trace = open(trace_path, "w") if trace_path else None

    def add(self, sat: SatelliteId, state: str, t0: float, t1: float) -> None:
        if t1 > t0:
            self.busy[sat].append(TimelineSegment(sat, state, t0, t1))

    def event(self, t: float, kind: str, sat: Optional[SatelliteId], round_idx: int) -> None:
        if self._trace is not None:
            self._trace.write(json.dumps({
                "t_s": round(t, 6), "event": kind,
                "sat": str(sat) if sat is not None else None,
                "round": round_idx,
            }) + "\n")

    def finalize(self, t_end: float) -> dict[SatelliteId, list[TimelineSegment]]:
        if self._trace is not None:
            self._trace.close()
        out: dict[SatelliteId, list[TimelineSegment]] = {}
        for sat, segs in self.busy.items():
            segs = sorted(segs, key=lambda s: (s.t0_s, s.t1_s))
            closed: list[TimelineSegment] = []
            cursor = 0.0
            for seg in segs:
                t0 = max(seg.t0_s, cursor)
                t1 = min(seg.t1_s, t_end)
                if t1 <= t0:
                    continue
                if t0 > cursor:
                    closed.append(TimelineSegment(sat, "idle", cursor, t0))
                closed.append(TimelineSegment(sat, seg.state, t0, t1))
                cursor = t1
            if cursor < t_end:
                closed.append(TimelineSegment(sat, "idle", cursor, t_end))
            out[sat] = closed
        return out


@dataclass(frozen=True)
class _CWin:
    """A usable contact window, possibly via a relay owner hops links away."""
    start: float
    end: float
    hops: int
    owner: SatelliteId
    station: str


def _candidate_windows(timeline: ContactTimeline, sat: SatelliteId,
                       cluster: list[SatelliteId], ring_connected: bool) -> list[_CWin]:
    cands = [_CWin(w.start_s, w.end_s, 0, sat, w.counterpart)
             for w in timeline.ground_windows(sat)]
    if ring_connected:
        n = len(cluster)
        i = cluster.index(sat)
        for m in cluster:
            if m == sat:
                continue
            j = cluster.index(m)
            hops = min((j - i) % n, (i - j) % n)
            cands.extend(_CWin(w.start_s, w.end_s, hops, m, w.counterpart)
                         for w in timeline.ground_windows(m))
    cands.sort(key=lambda c: (c.start, c.hops, c.owner, c.station))
    return cands


def _plan_rx(cands: list[_CWin], t: float, transfer_s: float) -> Optional[tuple[float, float, _CWin]]:
    """Earliest feasible model receipt at/after t; returns (start, end, window)."""
    best: Optional[tuple[float, int, _CWin]] = None
    for c in cands:
        if best is not None and c.start > best[0]:
            break
        total = transfer_s * (1 + c.hops)
        eff = max(t, c.start)
        if c.end - eff < total:
            continue
        key = (eff, c.hops, c)
        if best is None or (key[0], key[1], c.owner, c.station) < \
                (best[0], best[1], best[2].owner, best[2].station):
            best = (eff, c.hops, c)
    if best is None:
        return None
    eff, hops, c = best
    return eff, eff + transfer_s * (1 + hops), c


def _plan_tx(cands: list[_CWin], after: float, transfer_s: float,
             rx_end: float = 0.0, epoch_time_s: float = 0.0,
             min_epochs: int = 0) -> Optional[tuple[float, float, _CWin]]:
    """First return window starting strictly after `after` that fits the
    transfer and (optionally) leaves at least min_epochs of training time."""
    best: Optional[_CWin] = None
    for c in cands:
        if best is not None and c.start > best.start:
            break
        if c.start <= after:
            continue
        total = transfer_s * (1 + c.hops)
        if c.end - c.start < total:
            continue
        if min_epochs > 0 and epoch_time_s > 0:
            epochs = int((c.start - rx_end) // epoch_time_s)
            if epochs < min_epochs:
                continue
        if best is None or (c.start, c.hops, c.owner, c.station) < \
                (best.start, best.hops, best.owner, best.station):
            best = c
    if best is None:
        return None
    return best.start, best.start + transfer_s * (1 + best.hops), best


def _charge_transfer(rec: _Recorder, sat: SatelliteId, cwin: _CWin,
                     cluster: list[SatelliteId], t0: float, transfer_s: float,
                     direction: str) -> None:
    """Record rx/tx segments along the relay path (both endpoints per hop)."""
    if cwin.hops == 0:
        rec.add(sat, direction, t0, t0 + transfer_s)
        return
    from .strategies import ring_hop_path
    path = ring_hop_path(cluster, cwin.owner, sat)  # ground-side first
    if direction == "tx":
        path = path[::-1]  # model flows sat -> ... -> owner -> ground
    t = t0
    if direction == "rx":
        rec.add(path[0], "rx", t, t + transfer_s)  # owner receives from ground
        t += transfer_s
        for a, b in zip(path, path[1:]):
            rec.add(a, "tx", t, t + transfer_s)
            rec.add(b, "rx", t, t + transfer_s)
            t += transfer_s
    else:
        for a, b in zip(path, path[1:]):
            rec.add(a, "tx", t, t + transfer_s)
            rec.add(b, "rx", t, t + transfer_s)
            t += transfer_s
        rec.add(path[-1], "tx", t, t + transfer_s)  # owner sends to ground


def _child_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1)[0])


def _ring_connected(cfg: SimConfig) -> bool:
    n = cfg.constellation.sats_per_cluster
    if n < 2:
        return False
    r = cfg.earth.radius_km + cfg.constellation.altitude_km
    return r * math.cos(math.pi / n) > cfg.earth.radius_km + cfg.earth.grazing_margin_km


def build_timeline(cfg: SimConfig) -> ContactTimeline:
    """Compute the ground-contact timeline for a config's constellation."""
    orbits = build_constellation(cfg.constellation, cfg.earth)
    stations = station_network(cfg.n_stations)
    return build_ground_timeline(
        orbits, stations, (0.0, cfg.horizon_s),
        min_elev_rad=math.radians(cfg.min_elev_deg),
        coarse_step_s=cfg.coarse_step_s, refine_tol_s=cfg.refine_tol_s,
        earth=cfg.earth, gmst0_rad=cfg.gmst0_rad)


def run_simulation(cfg: SimConfig,
                   datasets: dict[SatelliteId, LocalDataset],
                   test_set: LocalDataset,
                   timeline: Optional[ContactTimeline] = None,
                   trace_path: Optional[str] = None) -> MetricsLog:
    """Execute the configured strategy until max_rounds or the horizon end."""
    sats = sorted(datasets)
    if set(sats) != {sid for sid, _ in build_constellation(cfg.constellation, cfg.earth)}:
        raise ValueError("datasets must cover exactly the constellation's satellites")
    if timeline is None:
        timeline = build_timeline(cfg)

    if len(sats) < 2:
        return MetricsLog(cfg.strategy.key, len(sats), cfg.horizon_s, cfg.horizon_s,
                          [], {s: [TimelineSegment(s, "idle", 0.0, cfg.horizon_s)]
                               for s in sats},
                          note="cannot perform FL with a single satellite")

    rec = _Recorder(sats, trace_path)
    if cfg.strategy.algorithm == "fedbuff":
        return _run_fedbuff(cfg, timeline, datasets, test_set, rec)
    return _run_synchronous(cfg, timeline, datasets, test_set, rec)


def _cluster_of(cfg: SimConfig, sat: SatelliteId) -> list[SatelliteId]:
    return [SatelliteId(sat.cluster_idx, q)
            for q in range(cfg.constellation.sats_per_cluster)]


def _run_synchronous(cfg: SimConfig, timeline: ContactTimeline,
                     datasets: dict[SatelliteId, LocalDataset],
                     test_set: LocalDataset, rec: _Recorder) -> MetricsLog:
    sats = sorted(datasets)
    k = len(sats)
    hp = cfg.hp
    strategy = cfg.strategy
    epoch_time = compute_time(1, cfg.flops_per_epoch, cfg.flops_rate)
    transfer_s = transfer_time(model_size_bytes(cfg.model), cfg.bandwidth_bps)
    ring = _ring_connected(cfg) and strategy.intra_cluster
    cands = {s: _candidate_windows(timeline, s, _cluster_of(cfg, s),
                                   ring) for s in sats}

    w = init_params(cfg.model, cfg.seed)
    statuses = {s: ClientStatus.IDLE for s in sats}
    rounds: list[RoundRecord] = []
    note = ""
    t = 0.0
    horizon = cfg.horizon_s
    c = min(hp.C, k)
    fixed_epoch_duration = compute_time(hp.E, cfg.flops_per_epoch, cfg.flops_rate)
    min_ep = min_epochs_required(strategy, hp.min_epochs)

    for round_idx in range(cfg.max_rounds):
        if t >= horizon:
            break
        if strategy.scheduled:
            selected = select_clients_scheduled(timeline, statuses, t, c,
                                               fixed_epoch_duration)
        else:
            selected = select_clients_first_contact(timeline, statuses, t, c)
        if not selected:
            note = "no reachable clients; simulation ended"
            break

        plans = []
        feasible = True
        for sat in selected:
            rx = _plan_rx(cands[sat], t, transfer_s)
            if rx is None:
                feasible = False
                break
            rx_start, rx_end, rx_win = rx
            if strategy.algorithm == "fedavg":
                train_end = rx_end + fixed_epoch_duration
                tx = _plan_tx(cands[sat], train_end, transfer_s)
            else:  # fedprox: train until the chosen return contact
                tx = _plan_tx(cands[sat], rx_end, transfer_s,
                              rx_end=rx_end, epoch_time_s=epoch_time,
                              min_epochs=min_ep)
                train_end = tx[0] if tx is not None else None
            if tx is None or tx[1] > horizon:
                feasible = False
                break
            plans.append((sat, rx, train_end, tx))
        if not feasible:
            note = "incomplete final round; horizon exhausted"
            break

        updates = []
        round_end = t
        for sat, (rx_start, rx_end, rx_win), train_end, (tx_start, tx_end, tx_win) in plans:
            data = datasets[sat]
            seed = _child_seed(cfg.seed, sat.cluster_idx, sat.slot_idx, round_idx)
            if strategy.algorithm == "fedavg":
                epochs_exec = min(hp.E, cfg.max_exec_epochs)
                hp_exec = hp if epochs_exec == hp.E else replace(hp, E=epochs_exec)
                w_k = client_update_fixed(w, data, hp_exec, seed, cfg.model)
                rec.add(sat, "compute", rx_end, train_end)
            else:
                epochs_avail = int((tx_start - rx_end) // epoch_time)
                epochs_exec = min(epochs_avail, cfg.max_exec_epochs)
                if epochs_exec >= 1:
                    w_k, _done = client_update_proximal(w, data, hp, epochs_exec,
                                                        seed, cfg.model)
                else:
                    w_k = w.copy()
                rec.add(sat, "compute", rx_end, tx_start)
            updates.append((w_k, data.n))
            cluster = _cluster_of(cfg, sat)
            _charge_transfer(rec, sat, rx_win, cluster, rx_start, transfer_s, "rx")
            _charge_transfer(rec, sat, tx_win, cluster, tx_start, transfer_s, "tx")
            rec.event(rx_start, "rx_start", sat, round_idx)
            rec.event(train_end if train_end is not None else rx_end,
                      "train_end", sat, round_idx)
            rec.event(tx_start, "tx_start", sat, round_idx)
            round_end = max(round_end, tx_end)

        w = aggregate_weighted(updates)
        acc, loss = evaluate(w, cfg.model, test_set)
        client_acc = None
        if cfg.client_side_eval:
            eval_set = select_evaluation_clients(timeline, statuses, round_end, c,
                                                 scheduled=strategy.scheduled,
                                                 training_duration_s=fixed_epoch_duration)
            if eval_set:
                accs = [evaluate(w, cfg.model, datasets[s])[0] for s in eval_set]
                client_acc = float(np.mean(accs))
        rec.event(round_end, "aggregate", None, round_idx)
        rounds.append(RoundRecord(round_idx, t, round_end,
                                  tuple(str(s) for s in selected),
                                  acc, loss, client_acc))
        t = round_end

    t_end = t if rounds else min(horizon, timeline.t1_s)
    if t_end <= 0:
        t_end = horizon
    segments = rec.finalize(t_end)
    return MetricsLog(strategy.key, k, horizon, t_end, rounds, segments, note)


def _run_fedbuff(cfg: SimConfig, timeline: ContactTimeline,
                 datasets: dict[SatelliteId, LocalDataset],
                 test_set: LocalDataset, rec: _Recorder) -> MetricsLog:
    """Asynchronous buffered aggregation: every satellite trains continuously
    and deposits at each ground contact; the server aggregates whenever the
    buffer reaches min(C, K) accepted updates, discarding over-stale deposits
    and refreshing the depositor with the current global model either way."""
    from .strategies import BufferState

    sats = sorted(datasets)
    k = len(sats)
    hp = cfg.hp
    epoch_time = compute_time(1, cfg.flops_per_epoch, cfg.flops_rate)
    transfer_s = transfer_time(model_size_bytes(cfg.model), cfg.bandwidth_bps)
    horizon = cfg.horizon_s

    events = sorted(
        ((w.start_s, sat, w) for sat in sats for w in timeline.ground_windows(sat)),
        key=lambda e: (e[0], e[1]))

    w = init_params(cfg.model, cfg.seed)
    buffer = BufferState(min(hp.D, hp.C, k))
    agg_round = 0
    last_agg_t = 0.0
    # per-satellite continuous-training state: (base model, origin round,
    # train start time, deposit counter); None until first model receipt
    state: dict[SatelliteId, Optional[tuple[np.ndarray, int, float, int]]] = \
        {s: None for s in sats}
    rounds: list[RoundRecord] = []
    t_last_event = 0.0

    for t, sat, win in events:
        if agg_round >= cfg.max_rounds or t > horizon:
            break
        if win.end_s - win.start_s < 2 * transfer_s:
            continue  # cannot fit deposit + refresh; safety net only
        data = datasets[sat]
        if state[sat] is None:
            rec.add(sat, "rx", t, t + transfer_s)
            rec.event(t, "initial_rx", sat, agg_round)
            state[sat] = (w.copy(), agg_round, t + transfer_s, 0)
            t_last_event = max(t_last_event, t + transfer_s)
            continue

        base, origin, train_start, n_dep = state[sat]
        epochs_avail = int(max(0.0, t - train_start) // epoch_time)
        epochs_exec = min(epochs_avail, cfg.max_exec_epochs)
        if epochs_exec >= 1:
            seed = _child_seed(cfg.seed, sat.cluster_idx, sat.slot_idx, n_dep)
            w_k, _done = client_update_proximal(base, data, hp, epochs_exec,
                                                seed, cfg.model)
        else:
            w_k = base
        rec.add(sat, "compute", train_start, t)
        rec.add(sat, "tx", t, t + transfer_s)
        rec.add(sat, "rx", t + transfer_s, t + 2 * transfer_s)
        rec.event(t, "deposit", sat, agg_round)
        accepted = buffer.deposit(sat, w_k, data.n, agg_round - origin,
                                  hp.staleness_max)
        if not accepted:
            rec.event(t, "deposit_rejected_stale", sat, agg_round)
        t_end_contact = t + 2 * transfer_s
        t_last_event = max(t_last_event, t_end_contact)
        if accepted and buffer.full:
            w = aggregate_weighted(buffer.drain())
            acc, loss = evaluate(w, cfg.model, test_set)
            rec.event(t + transfer_s, "aggregate", None, agg_round)
            rounds.append(RoundRecord(agg_round, last_agg_t, t + transfer_s,
                                      (), acc, loss))
            last_agg_t = t + transfer_s
            agg_round += 1
        # refresh with the (possibly just aggregated) global model
        state[sat] = (w.copy(), agg_round, t_end_contact, n_dep + 1)

    t_end = max(t_last_event, rounds[-1].t_end_s if rounds else 0.0)
    if t_end <= 0:
        t_end = horizon
    # satellites compute continuously after their last refresh
    for sat in sats:
        if state[sat] is not None:
            rec.add(sat, "compute", state[sat][2], t_end)
    segments = rec.finalize(t_end)
    return MetricsLog(cfg.strategy.key, k, horizon, t_end, rounds, segments)
