"""Two-body circular orbit propagation and visibility geometry.

Spherical Earth, Keplerian circular orbits only (the constellations of
interest are circular polar, where J2 nodal precession vanishes).  All
angles are radians internally; degrees appear only at I/O boundaries.
Positions are expressed in an Earth-centered inertial frame in km.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class EarthModel:
    """Spherical Earth constants used throughout the geometry layer."""
    radius_km: float = 6371.0
    mu_km3_s2: float = 398600.4418
    rotation_rate_rad_s: float = 7.2921159e-5
    grazing_margin_km: float = 100.0

    def __post_init__(self):
        if self.radius_km <= 0:
            raise ValueError("radius_km must be positive")
        if self.mu_km3_s2 <= 0:
            raise ValueError("mu_km3_s2 must be positive")
        if self.grazing_margin_km < 0:
            raise ValueError("grazing_margin_km must be non-negative")


@dataclass(frozen=True)
class OrbitSpec:
    """Circular Keplerian orbit (eccentricity and argument of perigee fixed at 0)."""
    semi_major_axis_km: float
    inclination_rad: float
    raan_rad: float
    true_anomaly_epoch_rad: float = 0.0
    eccentricity: float = 0.0
    arg_perigee_rad: float = 0.0

    def __post_init__(self):
        if self.eccentricity != 0.0:
            raise ValueError("only circular orbits are supported (eccentricity must be 0)")
        if self.arg_perigee_rad != 0.0:
            raise ValueError("argument of perigee is fixed at 0 for circular orbits")
        for v in (self.semi_major_axis_km, self.inclination_rad,
                  self.raan_rad, self.true_anomaly_epoch_rad):
            if not math.isfinite(v):
                raise ValueError("orbit elements must be finite")


@dataclass(frozen=True)
class ConstellationSpec:
    """Walker-Star generation parameters: polar planes spread over half a turn."""
    n_clusters: int
    sats_per_cluster: int
    altitude_km: float = 500.0
    inclination_rad: float = math.pi / 2
    raan_spread_rad: float = math.pi

    def __post_init__(self):
        if self.n_clusters < 1 or self.sats_per_cluster < 1:
            raise ValueError("cluster counts must be >= 1")
        if self.altitude_km <= 0:
            raise ValueError("altitude_km must be positive")

    @property
    def n_satellites(self) -> int:
        return self.n_clusters * self.sats_per_cluster


@dataclass(frozen=True, order=True)
class SatelliteId:
    """Satellite identity as (cluster, slot); string form ``c<cluster>_s<slot>``."""
    cluster_idx: int
    slot_idx: int

    def __str__(self) -> str:
        return f"c{self.cluster_idx}_s{self.slot_idx}"

    @classmethod
    def parse(cls, text: str) -> "SatelliteId":
        try:
            c_part, s_part = text.split("_")
            if not (c_part.startswith("c") and s_part.startswith("s")):
                raise ValueError
            return cls(int(c_part[1:]), int(s_part[1:]))
        except ValueError:
            raise ValueError(f"not a satellite id: {text!r}") from None


@dataclass(frozen=True)
class GroundStation:
    name: str
    lat_deg: float
    lon_deg: float
    alt_km: float = 0.0

    def __post_init__(self):
        if not -90.0 <= self.lat_deg <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat_deg}")
        if not -180.0 <= self.lon_deg <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon_deg}")


@dataclass(frozen=True)
class EciPosition:
    x_km: float
    y_km: float
    z_km: float
    t_s: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x_km, self.y_km, self.z_km])

    @property
    def norm_km(self) -> float:
        return math.sqrt(self.x_km ** 2 + self.y_km ** 2 + self.z_km ** 2)


def orbital_period(a_km: float, mu_km3_s2: float = EarthModel.mu_km3_s2) -> float:
    """Kepler's third law: period in seconds of a circular orbit of radius a_km."""
    if a_km <= 0 or mu_km3_s2 <= 0:
        raise ValueError("semi-major axis and mu must be positive")
    return TWO_PI * math.sqrt(a_km ** 3 / mu_km3_s2)


def build_constellation(
    spec: ConstellationSpec, earth: EarthModel = EarthModel()
) -> list[tuple[SatelliteId, OrbitSpec]]:
    """Generate the Walker-Star orbit set.

    Cluster p gets RAAN = p * raan_spread / n_clusters; slot q within a
    cluster gets true anomaly = q * 2*pi / sats_per_cluster.
    """
    a = earth.radius_km + spec.altitude_km
    out = []
    for p in range(spec.n_clusters):
        raan = spec.raan_spread_rad * p / spec.n_clusters
        for q in range(spec.sats_per_cluster):
            anomaly = TWO_PI * q / spec.sats_per_cluster
            out.append((
                SatelliteId(p, q),
                OrbitSpec(
                    semi_major_axis_km=a,
                    inclination_rad=spec.inclination_rad,
                    raan_rad=raan,
                    true_anomaly_epoch_rad=anomaly,
                ),
            ))
    return out


def propagate_many(orbit: OrbitSpec, t_s: np.ndarray,
                   mu_km3_s2: float = EarthModel.mu_km3_s2) -> np.ndarray:
    """Vectorized circular two-body propagation; returns an (N, 3) array in km."""
    t = np.asarray(t_s, dtype=float)
    a = orbit.semi_major_axis_km
    n = TWO_PI / orbital_period(a, mu_km3_s2)
    u = orbit.true_anomaly_epoch_rad + n * t
    cu, su = np.cos(u), np.sin(u)
    ci, si = math.cos(orbit.inclination_rad), math.sin(orbit.inclination_rad)
    cO, sO = math.cos(orbit.raan_rad), math.sin(orbit.raan_rad)
    x = a * (cO * cu - sO * su * ci)
    y = a * (sO * cu + cO * su * ci)
    z = a * (su * si)
    return np.stack([x, y, z], axis=-1)


def propagate(orbit: OrbitSpec, t_s: float,
              mu_km3_s2: float = EarthModel.mu_km3_s2) -> EciPosition:
    """Position on the circular orbit at time offset t_s."""
    if not math.isfinite(t_s):
        raise ValueError("t_s must be finite")
    v = propagate_many(orbit, np.array([t_s]), mu_km3_s2)[0]
    return EciPosition(float(v[0]), float(v[1]), float(v[2]), t_s)


def station_positions(gs: GroundStation, t_s: np.ndarray,
                      earth: EarthModel = EarthModel(),
                      gmst0_rad: float = 0.0) -> np.ndarray:
    """Vectorized Earth-fixed station position rotated into the inertial frame."""
    t = np.asarray(t_s, dtype=float)
    lat = math.radians(gs.lat_deg)
    lon = math.radians(gs.lon_deg)
    r = earth.radius_km + gs.alt_km
    theta = gmst0_rad + earth.rotation_rate_rad_s * t + lon
    cl = math.cos(lat)
    x = r * cl * np.cos(theta)
    y = r * cl * np.sin(theta)
    z = np.full_like(t, r * math.sin(lat))
    return np.stack([x, y, z], axis=-1)


def station_position_eci(gs: GroundStation, t_s: float,
                         earth: EarthModel = EarthModel(),
                         gmst0_rad: float = 0.0) -> EciPosition:
    v = station_positions(gs, np.array([t_s]), earth, gmst0_rad)[0]
    return EciPosition(float(v[0]), float(v[1]), float(v[2]), t_s)


def elevation_angles(sat_xyz: np.ndarray, gs_xyz: np.ndarray) -> np.ndarray:
    """Topocentric elevation of satellite(s) above station horizon plane, radians.

    Both arguments are (..., 3) arrays; broadcasting applies.
    """
    gs_norm = np.linalg.norm(gs_xyz, axis=-1, keepdims=True)
    rel = sat_xyz - gs_xyz
    rel_norm = np.linalg.norm(rel, axis=-1, keepdims=True)
    if np.any(gs_norm == 0) or np.any(rel_norm == 0):
        raise ValueError("station at origin or coincident with satellite")
    s = np.sum((gs_xyz / gs_norm) * (rel / rel_norm), axis=-1)
    return np.arcsin(np.clip(s, -1.0, 1.0))


def elevation_angle(sat: EciPosition, gs: EciPosition) -> float:
    return float(elevation_angles(sat.as_array(), gs.as_array()))


def _segment_min_dist_to_origin(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimum distance from the origin to segment a-b (vectorized over (..., 3))."""
    d = b - a
    dd = np.sum(d * d, axis=-1)
    # coincident endpoints: distance to the point itself
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(dd > 0, -np.sum(a * d, axis=-1) / np.where(dd > 0, dd, 1.0), 0.0)
    s = np.clip(s, 0.0, 1.0)
    closest = a + s[..., None] * d
    return np.linalg.norm(closest, axis=-1)


def is_visible_intersat_many(a_xyz: np.ndarray, b_xyz: np.ndarray,
                             earth: EarthModel = EarthModel()) -> np.ndarray:
    """Line-of-sight predicate: segment a-b clears radius + grazing margin."""
    return _segment_min_dist_to_origin(a_xyz, b_xyz) > (
        earth.radius_km + earth.grazing_margin_km
    )


def is_visible_intersat(a: EciPosition, b: EciPosition,
                        earth: EarthModel = EarthModel()) -> bool:
    return bool(is_visible_intersat_many(a.as_array(), b.as_array(), earth))


def min_persistent_ring_size(altitude_km: float, earth: EarthModel = EarthModel(),
                             upper: int = 100) -> int:
    """Smallest ring size for which all adjacent same-plane pairs keep line of sight.

    Adjacent satellites in a uniformly phased circular ring subtend a fixed
    central angle 2*pi/n, so visibility is time-invariant per ring size.
    """
    r = earth.radius_km + altitude_km
    for n in range(2, upper + 1):
        half = math.pi / n
        if r * math.cos(half) > earth.radius_km + earth.grazing_margin_km:
            return n
    raise ValueError(f"no ring size up to {upper} has persistent adjacent links")
