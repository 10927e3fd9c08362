import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from airsweep._validation import ConfigurationError
from airsweep.field import RoomGeometry, total_virus
from airsweep.plume import (
    CACHE_MAGIC,
    AirParams,
    CoughSpec,
    DropletCloud,
    VirologyParams,
    advance_droplets,
    bin_concentration,
    cloud_virus,
    generate_source_series,
    load_series,
    sample_diameters,
    sample_droplets,
    save_series,
    truncated_rr_cdf,
)

ROOM = RoomGeometry(3.0, 8.0, 3.5)
SMALL_COUGH = CoughSpec(droplet_count=400, origin=(0.55, 4.05, 1.2))


def cloud_at(radius, z, velocity=(0.0, 0.0, 0.0)):
    n = len(radius)
    pos = np.tile([1.0, 1.0, z], (n, 1))
    return DropletCloud(pos, np.asarray(radius, float), np.tile(velocity, (n, 1)), np.ones(n, bool))


def test_sampling_is_deterministic():
    a = sample_droplets(SMALL_COUGH, 11)
    b = sample_droplets(SMALL_COUGH, 11)
    np.testing.assert_array_equal(a.radius, b.radius)
    np.testing.assert_array_equal(a.velocity, b.velocity)
    c = sample_droplets(SMALL_COUGH, 12)
    assert not np.array_equal(a.radius, c.radius)


def test_rosin_rammler_ks_distance():
    spec = CoughSpec()
    d = np.sort(sample_diameters(spec, 100_000, np.random.default_rng(3)))
    cdf = truncated_rr_cdf(d, spec)
    n = len(d)
    ks = max(np.max(np.arange(1, n + 1) / n - cdf), np.max(cdf - np.arange(n) / n))
    assert ks <= 0.01
    assert d.min() >= spec.diameter_min and d.max() <= spec.diameter_max


def test_degenerate_range_collapses():
    spec = CoughSpec(diameter_min=20e-6, diameter_max=20e-6)
    d = sample_diameters(spec, 50, np.random.default_rng(0))
    assert (d == 20e-6).all()


def test_vanishing_truncation_mass_rejected():
    spec = CoughSpec(diameter_min=5e-3, diameter_max=6e-3)
    with pytest.raises(ConfigurationError):
        sample_diameters(spec, 10, np.random.default_rng(0))


def test_initial_cloud_at_origin_within_cone():
    spec = CoughSpec(droplet_count=2000)
    cloud = sample_droplets(spec, 0)
    np.testing.assert_array_equal(cloud.position, np.tile(spec.origin, (2000, 1)))
    speed = np.linalg.norm(cloud.velocity, axis=1)
    moving = speed > 0
    cos = cloud.velocity[moving, 0] / speed[moving]
    assert (cos >= math.cos(math.radians(15)) - 1e-12).all()
    assert speed.max() <= spec.jet_peak_velocity + 1e-12


def test_jet_profile_shape():
    spec = CoughSpec()
    assert spec.jet_speed(0.0) == 0.0
    assert math.isclose(spec.jet_speed(0.066), 22.06)
    assert spec.jet_speed(0.61) == 0.0
    assert spec.jet_speed(0.7) == 0.0


def test_stokes_settling_reference():
    assert math.isclose(AirParams().settling_velocity(5e-6), 3.01e-3, rel_tol=2e-3)
    # 500 um diameter: about 7.5 m/s, below the free-fall cap
    assert math.isclose(AirParams().settling_velocity(250e-6), 7.5276, rel_tol=1e-4)
    assert AirParams().settling_velocity(1e-3) == 9.65


def test_zero_velocity_droplet_settles_at_stokes_speed():
    air = AirParams(dispersivity=0.0)
    out = advance_droplets(cloud_at([5e-6], 1.0), 2.0, air)
    assert math.isclose(out.position[0, 2], 1.0 - 2.0 * air.settling_velocity(5e-6), rel_tol=1e-12)
    assert out.active[0]


def test_large_droplet_deposits_quickly():
    air = AirParams(dispersivity=0.0)
    cloud = cloud_at([250e-6], 1.5)
    for _ in range(10):
        cloud = advance_droplets(cloud, 0.1, air)
    assert not cloud.active[0]
    assert cloud.position[0, 2] == 0.0


def test_zero_step_is_identity():
    cloud = sample_droplets(SMALL_COUGH, 0)
    out = advance_droplets(cloud, 0.0, AirParams())
    np.testing.assert_array_equal(out.position, cloud.position)
    np.testing.assert_array_equal(out.velocity, cloud.velocity)


def test_walls_reflect():
    air = AirParams(dispersivity=0.0, tau_jet=10.0)
    cloud = cloud_at([1e-6], 1.5, velocity=(5.0, 0.0, 0.0))
    out = advance_droplets(cloud, 1.0, air, ROOM)
    assert 0.0 <= out.position[0, 0] <= ROOM.width
    assert out.velocity[0, 0] < 0.0


def test_single_droplet_binning_value():
    g = RoomGeometry(1.0, 1.0, 3.5)
    vir = VirologyParams(c_saliva=1e12, k_evap=10)
    cloud = cloud_at([5e-6], 1.0)
    f = bin_concentration(cloud, g, vir)
    expected = 10 * 1e12 * (4 * math.pi / 3) * (5e-6) ** 3 / (4 * 3.5 * 0.05**2)
    # x = y = 1.0 sits on the far walls and maps to the last cell
    assert math.isclose(f.values[9, 9], expected, rel_tol=1e-12)
    assert math.isclose(expected, 0.1497, rel_tol=1e-3)
    assert np.count_nonzero(f.values) == 1


def test_inactive_droplets_not_binned():
    cloud = cloud_at([5e-6, 7e-6], 1.0)
    cloud.active[:] = False
    assert not bin_concentration(cloud, ROOM, VirologyParams()).values.any()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 300))
def test_binning_mass_consistency(seed, n):
    rng = np.random.default_rng(seed)
    pos = np.column_stack([rng.uniform(0, 3, n), rng.uniform(0, 8, n), rng.uniform(0, 3.5, n)])
    radius = rng.uniform(0.5e-6, 250e-6, n)
    active = rng.random(n) < 0.7
    cloud = DropletCloud(pos, radius, np.zeros((n, 3)), active)
    vir = VirologyParams()
    expected = vir.k_evap * vir.c_saliva * (4 * math.pi / 3) * np.sum(radius[active] ** 3)
    got = total_virus(bin_concentration(cloud, ROOM, vir))
    assert math.isclose(got, expected, rel_tol=1e-9, abs_tol=1e-300)
    assert math.isclose(cloud_virus(cloud, vir), expected, rel_tol=1e-12, abs_tol=1e-300)


@pytest.fixture(scope="module")
def series():
    return generate_source_series(CoughSpec(droplet_count=3000).at(0.55, 4.05), ROOM, seed=5)


def test_series_shape_and_determinism(series):
    assert series.values.shape == (61, 30, 80)
    again = generate_source_series(CoughSpec(droplet_count=3000).at(0.55, 4.05), ROOM, seed=5)
    assert series.values.tobytes() == again.values.tobytes()


def test_series_total_nonincreasing(series):
    totals = series.values.reshape(61, -1).sum(axis=1)
    assert (np.diff(totals) <= 1e-12 * totals[0]).all()
    assert all(a >= b for a, b in zip(series.active_counts, series.active_counts[1:]))


def test_series_shape_oracle(series):
    start = series.values[0]
    assert np.count_nonzero(start) == 1
    assert start[5, 40] > 0
    late = series.values[60]
    ii, jj = np.nonzero(late)
    xs = (ii + 0.5) * 0.1
    assert xs.max() - 0.55 > 1.0


def test_two_source_superposition():
    spec = CoughSpec(droplet_count=500)
    a = generate_source_series(spec.at(0.55, 3.25), ROOM, seed=1, t_handoff=10)
    c = generate_source_series(spec.at(0.55, 4.75), ROOM, seed=2, t_handoff=10)
    both = a + c
    np.testing.assert_array_equal(both.values, a.values + c.values)


def test_origin_outside_room_rejected():
    with pytest.raises(ConfigurationError):
        generate_source_series(CoughSpec(droplet_count=10).at(5.0, 1.0), ROOM, t_handoff=2)


def test_mirror_pairs_give_symmetric_field():
    g = RoomGeometry(3.0, 8.1, 3.5)
    s = generate_source_series(CoughSpec(droplet_count=800).at(0.55, 4.05), g, seed=9, t_handoff=20)
    # binning sums in a different order on each side, so allow rounding
    np.testing.assert_allclose(s.values, s.values[:, :, ::-1], rtol=1e-12, atol=0)


def test_cache_roundtrip(series, tmp_path):
    path = tmp_path / "s.apsrc"
    save_series(series, path)
    data = path.read_bytes()
    assert data.startswith(CACHE_MAGIC)
    back = load_series(path)
    assert back.geometry == series.geometry and back.t_handoff == series.t_handoff
    np.testing.assert_array_equal(back.values, series.values)
    save_series(back, tmp_path / "again.apsrc")
    assert (tmp_path / "again.apsrc").read_bytes() == data


def test_cache_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.apsrc"
    bad.write_bytes(b"not a cache")
    with pytest.raises(ConfigurationError):
        load_series(bad)
    good = tmp_path / "good.apsrc"
    save_series(generate_source_series(replace(SMALL_COUGH, droplet_count=5), ROOM, t_handoff=1), good)
    good.write_bytes(good.read_bytes()[:-8])
    with pytest.raises(ConfigurationError):
        load_series(good)
