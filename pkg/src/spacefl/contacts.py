"""Access window computation, storage, import/export, and contact queries.

Windows are maximal intervals during which a link (satellite-ground or
satellite-satellite) is geometrically feasible.  Edges are located by
bisection after a coarse scan; windows shorter than the coarse step may be
missed only if the step is raised above 10 s (passes at LEO altitudes are
minutes long, so the default cannot skip a real pass).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

from .orbital import (
    EarthModel,
    GroundStation,
    OrbitSpec,
    SatelliteId,
    elevation_angles,
    is_visible_intersat_many,
    propagate_many,
    station_positions,
)

DEFAULT_MIN_ELEV_RAD = math.radians(10.0)
DEFAULT_COARSE_STEP_S = 10.0
DEFAULT_REFINE_TOL_S = 0.1


@dataclass(frozen=True)
class AccessWindow:
    """One contact interval between a satellite and a counterpart.

    The counterpart is a ground station name or the string form of another
    satellite id.
    """
    sat: SatelliteId
    counterpart: str
    start_s: float
    end_s: float

    def __post_init__(self):
        if not self.start_s < self.end_s:
            raise ValueError(f"window start must precede end: {self.start_s} >= {self.end_s}")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s

    def contains(self, t: float) -> bool:
        return self.start_s <= t <= self.end_s


def _refine_edge(pred: Callable[[float], bool], t_lo: float, t_hi: float,
                 tol: float) -> float:
    """Bisect the boundary of a predicate between t_lo and t_hi (which may be
    given in either time order); returns the midpoint of the final bracket."""
    lo_val = pred(t_lo)
    while abs(t_hi - t_lo) > tol:
        mid = 0.5 * (t_lo + t_hi)
        if pred(mid) == lo_val:
            t_lo = mid
        else:
            t_hi = mid
    return 0.5 * (t_lo + t_hi)


def _scan_intervals(pred_many: Callable[[np.ndarray], np.ndarray],
                    t0: float, t1: float,
                    coarse_step_s: float, refine_tol_s: float) -> list[tuple[float, float]]:
    """Maximal intervals within [t0, t1] where a boolean predicate holds."""
    if t1 <= t0:
        return []
    if coarse_step_s <= 0 or refine_tol_s <= 0:
        raise ValueError("coarse_step_s and refine_tol_s must be positive")
    n = max(2, int(math.ceil((t1 - t0) / coarse_step_s)) + 1)
    times = np.linspace(t0, t1, n)
    above = np.asarray(pred_many(times), dtype=bool)

    def pred(t: float) -> bool:
        return bool(pred_many(np.array([t]))[0])

    intervals: list[tuple[float, float]] = []
    start: Optional[float] = None
    for i in range(n):
        if above[i] and start is None:
            if i == 0:
                start = t0
            else:
                start = _refine_edge(pred, float(times[i - 1]), float(times[i]), refine_tol_s)
        elif not above[i] and start is not None:
            end = _refine_edge(pred, float(times[i]), float(times[i - 1]), refine_tol_s)
            if end > start:
                intervals.append((start, end))
            start = None
    if start is not None:
        intervals.append((start, t1))
    return [(s, e) for s, e in intervals if e > s]


def scan_windows(orbit: OrbitSpec, gs: GroundStation, horizon: tuple[float, float],
                 min_elev_rad: float = DEFAULT_MIN_ELEV_RAD,
                 coarse_step_s: float = DEFAULT_COARSE_STEP_S,
                 refine_tol_s: float = DEFAULT_REFINE_TOL_S,
                 earth: EarthModel = EarthModel(),
                 gmst0_rad: float = 0.0,
                 sat: SatelliteId = SatelliteId(0, 0)) -> list[AccessWindow]:
    """Satellite-ground access windows where elevation >= min_elev_rad."""
    t0, t1 = horizon

    def pred_many(times: np.ndarray) -> np.ndarray:
        sat_xyz = propagate_many(orbit, times, earth.mu_km3_s2)
        gs_xyz = station_positions(gs, times, earth, gmst0_rad)
        return elevation_angles(sat_xyz, gs_xyz) >= min_elev_rad

    return [AccessWindow(sat, gs.name, s, e)
            for s, e in _scan_intervals(pred_many, t0, t1, coarse_step_s, refine_tol_s)]


def scan_intersat_windows(orbit_a: OrbitSpec, orbit_b: OrbitSpec,
                          horizon: tuple[float, float],
                          earth: EarthModel = EarthModel(),
                          coarse_step_s: float = DEFAULT_COARSE_STEP_S,
                          refine_tol_s: float = DEFAULT_REFINE_TOL_S,
                          sat_a: SatelliteId = SatelliteId(0, 0),
                          sat_b: SatelliteId = SatelliteId(0, 1)) -> list[AccessWindow]:
    """Satellite-satellite line-of-sight windows over the horizon."""
    if sat_a == sat_b or orbit_a == orbit_b:
        raise ValueError("a satellite cannot be paired with itself")
    t0, t1 = horizon

    def pred_many(times: np.ndarray) -> np.ndarray:
        a_xyz = propagate_many(orbit_a, times, earth.mu_km3_s2)
        b_xyz = propagate_many(orbit_b, times, earth.mu_km3_s2)
        return is_visible_intersat_many(a_xyz, b_xyz, earth)

    return [AccessWindow(sat_a, str(sat_b), s, e)
            for s, e in _scan_intervals(pred_many, t0, t1, coarse_step_s, refine_tol_s)]


@dataclass
class ContactTimeline:
    """Per-satellite sorted access windows over a fixed horizon.

    Ground windows are kept sorted by (start, station index); the station
    index order is the catalog order, which also breaks next-contact ties.
    Immutable after construction by convention.
    """
    t0_s: float
    t1_s: float
    station_order: list[str]
    ground: dict[SatelliteId, list[AccessWindow]] = field(default_factory=dict)
    intersat: dict[tuple[SatelliteId, SatelliteId], list[AccessWindow]] = field(default_factory=dict)

    def __post_init__(self):
        self._station_idx = {name: i for i, name in enumerate(self.station_order)}
        for sat, wins in self.ground.items():
            wins.sort(key=lambda w: (w.start_s, self._station_idx.get(w.counterpart, 1 << 30)))

    def satellites(self) -> list[SatelliteId]:
        return sorted(self.ground)

    def ground_windows(self, sat: SatelliteId) -> list[AccessWindow]:
        return self.ground.get(sat, [])

    def next_contact(self, sat: SatelliteId, t: float) -> Optional[AccessWindow]:
        """Earliest ground window with end > t (the containing window if t is inside)."""
        for w in self.ground.get(sat, []):
            if w.end_s > t:
                return w
        return None

    def next_contact_starting_after(self, sat: SatelliteId, t: float) -> Optional[AccessWindow]:
        """Earliest ground window with start strictly greater than t."""
        for w in self.ground.get(sat, []):
            if w.start_s > t:
                return w
        return None

    def round_trip_score(self, sat: SatelliteId, t_now: float,
                         training_duration_s: float) -> Optional[tuple[float, float, float]]:
        """(t_rx, t_tx, score) for the receive / train / return cycle from t_now.

        score = wait before receiving + wait between training end and the
        first contact starting afterwards.  None if either contact is missing
        within the horizon.
        """
        if training_duration_s < 0:
            raise ValueError("training_duration_s must be non-negative")
        rx_win = self.next_contact(sat, t_now)
        if rx_win is None:
            return None
        t_rx = max(t_now, rx_win.start_s)
        train_end = t_rx + training_duration_s
        tx_win = self.next_contact_starting_after(sat, train_end)
        if tx_win is None:
            return None
        t_tx = tx_win.start_s
        return t_rx, t_tx, (t_rx - t_now) + (t_tx - train_end)


def build_ground_timeline(orbits: Iterable[tuple[SatelliteId, OrbitSpec]],
                          stations: list[GroundStation],
                          horizon: tuple[float, float],
                          min_elev_rad: float = DEFAULT_MIN_ELEV_RAD,
                          coarse_step_s: float = DEFAULT_COARSE_STEP_S,
                          refine_tol_s: float = DEFAULT_REFINE_TOL_S,
                          earth: EarthModel = EarthModel(),
                          gmst0_rad: float = 0.0) -> ContactTimeline:
    """Scan all (satellite, station) pairs and assemble a timeline."""
    ground: dict[SatelliteId, list[AccessWindow]] = {}
    for sat, orbit in orbits:
        wins: list[AccessWindow] = []
        for gs in stations:
            wins.extend(scan_windows(orbit, gs, horizon, min_elev_rad,
                                     coarse_step_s, refine_tol_s, earth, gmst0_rad, sat))
        ground[sat] = wins
    return ContactTimeline(horizon[0], horizon[1], [g.name for g in stations], ground)


def union_intervals(intervals: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    """Merge possibly overlapping intervals into a sorted disjoint union."""
    items = sorted(intervals)
    merged: list[list[float]] = []
    for s, e in items:
        if merged and s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    return [(s, e) for s, e in merged]


CSV_HEADER = "sat_id,counterpart,start_s,end_s"


def export_windows_csv(timeline: ContactTimeline, path: str | Path) -> None:
    """Write all windows sorted by (sat_id, counterpart, start_s), 3-decimal times."""
    rows = []
    for sat, wins in timeline.ground.items():
        for w in wins:
            rows.append((str(sat), w.counterpart, w.start_s, w.end_s))
    for (sa, _sb), wins in timeline.intersat.items():
        for w in wins:
            rows.append((str(sa), w.counterpart, w.start_s, w.end_s))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    lines = [CSV_HEADER]
    lines += [f"{sid},{cp},{s:.3f},{e:.3f}" for sid, cp, s, e in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def import_windows_csv(path: str | Path,
                       station_order: Optional[list[str]] = None) -> ContactTimeline:
    """Read a window CSV back into a timeline.

    Raises ValueError naming the offending line for malformed rows, and a
    validation error if windows for any endpoint pair are unsorted or overlap.
    """
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != CSV_HEADER:
        raise ValueError(f"{path}: missing or wrong header (expected {CSV_HEADER!r})")
    ground: dict[SatelliteId, list[AccessWindow]] = {}
    intersat: dict[tuple[SatelliteId, SatelliteId], list[AccessWindow]] = {}
    seen_stations: list[str] = []
    per_pair: dict[tuple[str, str], float] = {}
    t_max = 0.0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
        sid_text, counterpart, start_text, end_text = (p.strip() for p in parts)
        try:
            sat = SatelliteId.parse(sid_text)
            start_s = float(start_text)
            end_s = float(end_text)
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        if not start_s < end_s:
            raise ValueError(f"{path}:{lineno}: window start must precede end")
        key = (sid_text, counterpart)
        if key in per_pair and start_s < per_pair[key]:
            raise ValueError(
                f"{path}:{lineno}: windows for ({sid_text}, {counterpart}) "
                "are unsorted or overlapping")
        per_pair[key] = end_s
        win = AccessWindow(sat, counterpart, start_s, end_s)
        try:
            other = SatelliteId.parse(counterpart)
            intersat.setdefault((sat, other), []).append(win)
        except ValueError:
            if counterpart not in seen_stations:
                seen_stations.append(counterpart)
            ground.setdefault(sat, []).append(win)
        t_max = max(t_max, end_s)
    order = station_order if station_order is not None else seen_stations
    return ContactTimeline(0.0, t_max, order, ground, intersat)
