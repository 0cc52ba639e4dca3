"""Orbit propagation and visibility geometry tests.

Numeric expectations were computed with an independent closed-form oracle
(Kepler's third law, chord-grazing altitude r*cos(theta/2)) before being
frozen here.
"""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spacefl.orbital import (
    ConstellationSpec,
    EarthModel,
    EciPosition,
    GroundStation,
    OrbitSpec,
    SatelliteId,
    build_constellation,
    elevation_angle,
    elevation_angles,
    is_visible_intersat,
    min_persistent_ring_size,
    orbital_period,
    propagate,
    propagate_many,
    station_position_eci,
)

MU = 398600.4418
R = 6371.0


class TestOrbitalPeriod:
    def test_leo_500km(self):
        # independent oracle: 2*pi*sqrt(6871^3 / 398600.4418)
        assert orbital_period(6871.0, MU) == pytest.approx(5668.144, abs=0.01)

    def test_surface_grazing(self):
        assert orbital_period(6371.0, MU) == pytest.approx(5060.837, abs=0.01)

    def test_kepler_scaling(self):
        # T proportional to a^(3/2): radius x4 -> period x8
        assert orbital_period(4 * 6871.0, MU) == pytest.approx(
            8 * orbital_period(6871.0, MU), rel=1e-12)

    @pytest.mark.parametrize("a", [0.0, -1.0])
    def test_nonpositive_axis_rejected(self, a):
        with pytest.raises(ValueError):
            orbital_period(a, MU)


class TestBuildConstellation:
    def test_single_satellite(self):
        out = build_constellation(ConstellationSpec(1, 1, altitude_km=500.0))
        assert len(out) == 1
        sid, orbit = out[0]
        assert sid == SatelliteId(0, 0)
        assert orbit.raan_rad == 0.0
        assert orbit.true_anomaly_epoch_rad == 0.0
        assert orbit.semi_major_axis_km == pytest.approx(6871.0)

    def test_two_by_two_spacing(self):
        out = build_constellation(ConstellationSpec(2, 2))
        raans = sorted({o.raan_rad for _s, o in out})
        anomalies = sorted({o.true_anomaly_epoch_rad for _s, o in out})
        assert raans == pytest.approx([0.0, math.pi / 2])
        assert anomalies == pytest.approx([0.0, math.pi])

    def test_largest_grid_count(self):
        out = build_constellation(ConstellationSpec(10, 10))
        assert len(out) == 100
        assert len({sid for sid, _o in out}) == 100

    def test_uniform_spacing_exact(self):
        spec = ConstellationSpec(5, 4)
        out = build_constellation(spec)
        for sid, orbit in out:
            assert orbit.raan_rad == pytest.approx(
                math.pi * sid.cluster_idx / 5, abs=1e-15)
            assert orbit.true_anomaly_epoch_rad == pytest.approx(
                2 * math.pi * sid.slot_idx / 4, abs=1e-15)


class TestPropagate:
    def test_equatorial_epoch(self):
        orbit = OrbitSpec(7000.0, 0.0, 0.0)
        p = propagate(orbit, 0.0)
        assert (p.x_km, p.y_km, p.z_km) == pytest.approx((7000.0, 0.0, 0.0), abs=1e-9)

    def test_equatorial_quarter_period(self):
        orbit = OrbitSpec(7000.0, 0.0, 0.0)
        p = propagate(orbit, orbital_period(7000.0) / 4)
        assert (p.x_km, p.y_km, p.z_km) == pytest.approx((0.0, 7000.0, 0.0), abs=1e-6)

    def test_polar_quarter_period_reaches_pole(self):
        orbit = OrbitSpec(7000.0, math.pi / 2, 0.0)
        p = propagate(orbit, orbital_period(7000.0) / 4)
        assert (p.x_km, p.y_km, p.z_km) == pytest.approx((0.0, 0.0, 7000.0), abs=1e-6)

    @given(t=st.floats(min_value=0.0, max_value=1e6),
           raan=st.floats(min_value=0.0, max_value=2 * math.pi),
           inc=st.floats(min_value=0.0, max_value=math.pi))
    @settings(max_examples=50, deadline=None)
    def test_radius_constant(self, t, raan, inc):
        orbit = OrbitSpec(6871.0, inc, raan)
        assert propagate(orbit, t).norm_km == pytest.approx(6871.0, rel=1e-9)

    @given(t=st.floats(min_value=0.0, max_value=1e5))
    @settings(max_examples=30, deadline=None)
    def test_periodicity(self, t):
        orbit = OrbitSpec(6871.0, 1.1, 0.7, 0.3)
        a = propagate(orbit, t)
        b = propagate(orbit, t + orbital_period(6871.0))
        assert np.allclose(a.as_array(), b.as_array(), atol=1e-6)

    def test_vectorized_matches_scalar(self):
        orbit = OrbitSpec(6871.0, 1.2, 0.4, 0.9)
        times = np.linspace(0.0, 1e4, 17)
        many = propagate_many(orbit, times)
        for i, t in enumerate(times):
            assert np.allclose(many[i], propagate(orbit, float(t)).as_array())


class TestStationPosition:
    def test_pole_is_rotation_invariant(self):
        gs = GroundStation("pole", 90.0, 0.0)
        for t in (0.0, 1234.5, 86400.0):
            p = station_position_eci(gs, t)
            assert (p.x_km, p.y_km, p.z_km) == pytest.approx((0.0, 0.0, R), abs=1e-9)

    def test_prime_meridian_epoch(self):
        p = station_position_eci(GroundStation("eq", 0.0, 0.0), 0.0)
        assert (p.x_km, p.y_km, p.z_km) == pytest.approx((R, 0.0, 0.0), abs=1e-9)

    def test_sidereal_periodicity(self):
        earth = EarthModel()
        day = 2 * math.pi / earth.rotation_rate_rad_s
        p = station_position_eci(GroundStation("eq", 0.0, 0.0), day)
        assert (p.x_km, p.y_km, p.z_km) == pytest.approx((R, 0.0, 0.0), abs=1e-6)


class TestElevation:
    def test_directly_overhead(self):
        gs = EciPosition(R, 0.0, 0.0)
        sat = EciPosition(R + 500.0, 0.0, 0.0)
        assert elevation_angle(sat, gs) == pytest.approx(math.pi / 2)

    def test_antipodal(self):
        gs = EciPosition(R, 0.0, 0.0)
        sat = EciPosition(-(R + 500.0), 0.0, 0.0)
        assert elevation_angle(sat, gs) == pytest.approx(-math.pi / 2)

    def test_on_horizon_plane(self):
        gs = EciPosition(R, 0.0, 0.0)
        sat = EciPosition(R, 2000.0, 0.0)  # same x => in the horizon plane
        assert abs(elevation_angle(sat, gs)) < 1e-9

    def test_antisymmetric_under_reflection(self):
        gs = np.array([R, 0.0, 0.0])
        sat = np.array([R + 300.0, 1500.0, -400.0])
        mirrored = sat.copy()
        mirrored[0] = 2 * R - sat[0]  # reflect through the horizon plane x = R
        e1 = float(elevation_angles(sat, gs))
        e2 = float(elevation_angles(mirrored, gs))
        assert e1 == pytest.approx(-e2, abs=1e-12)

    def test_coincident_points_rejected(self):
        gs = EciPosition(R, 0.0, 0.0)
        with pytest.raises(ValueError):
            elevation_angle(gs, gs)


class TestIntersatVisibility:
    def test_adjacent_in_ten_ring_visible(self):
        # chord-grazing oracle: 6871*cos(18 deg) = 6534.7 > 6471
        r = 6871.0
        a = EciPosition(r, 0.0, 0.0)
        theta = 2 * math.pi / 10
        b = EciPosition(r * math.cos(theta), r * math.sin(theta), 0.0)
        assert is_visible_intersat(a, b)

    def test_adjacent_in_eight_ring_blocked(self):
        # 6871*cos(22.5 deg) = 6348.0 < 6471
        r = 6871.0
        a = EciPosition(r, 0.0, 0.0)
        theta = 2 * math.pi / 8
        b = EciPosition(r * math.cos(theta), r * math.sin(theta), 0.0)
        assert not is_visible_intersat(a, b)

    def test_radially_aligned_always_visible(self):
        a = EciPosition(6871.0, 0.0, 0.0)
        b = EciPosition(8000.0, 0.0, 0.0)
        assert is_visible_intersat(a, b)

    def test_min_persistent_ring_size_is_ten(self):
        assert min_persistent_ring_size(500.0) == 10


class TestValidation:
    def test_elliptical_orbit_rejected(self):
        with pytest.raises(ValueError):
            OrbitSpec(7000.0, 0.0, 0.0, eccentricity=0.1)

    def test_bad_station_latitude(self):
        with pytest.raises(ValueError):
            GroundStation("bad", 91.0, 0.0)

    def test_bad_station_longitude(self):
        with pytest.raises(ValueError):
            GroundStation("bad", 0.0, -181.0)

    def test_satellite_id_round_trip(self):
        sid = SatelliteId(3, 7)
        assert str(sid) == "c3_s7"
        assert SatelliteId.parse("c3_s7") == sid

    @pytest.mark.parametrize("text", ["", "c3s7", "x3_s7", "c3_s7_extra", "c_s"])
    def test_satellite_id_parse_rejects_garbage(self, text):
        with pytest.raises(ValueError):
            SatelliteId.parse(text)

    def test_constellation_rejects_empty(self):
        with pytest.raises(ValueError):
            ConstellationSpec(0, 5)
