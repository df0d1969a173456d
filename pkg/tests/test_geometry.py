"""Deployment and mobility tests, including the Monte Carlo oracles."""

import numpy as np
import pytest
from scipy import stats

from beamsim.errors import ConfigurationError
from beamsim.geometry import (
    Rect,
    deploy_pcp,
    init_random_waypoint,
    step_random_waypoint,
)

AREA = Rect(0.0, 0.0, 400.0, 300.0)


def test_pcp_zero_users_per_cluster():
    dep = deploy_pcp(2, 0, 30.0, AREA, seed=7)
    assert dep.positions.shape == (0, 2)
    assert dep.centers.shape == (2, 2)


def test_pcp_counts_and_radius():
    # Table-style scenario: 2 clusters x 6 users within 30 m of their parent.
    dep = deploy_pcp(2, 6, 30.0, AREA, seed=3)
    assert len(dep.positions) == 12
    d = np.linalg.norm(dep.positions - dep.centers[dep.parent], axis=1)
    assert np.all(d <= 30.0 + 1e-12)
    assert AREA.contains(dep.positions)


def test_pcp_deterministic():
    a = deploy_pcp(3, 5, 20.0, AREA, seed=42)
    b = deploy_pcp(3, 5, 20.0, AREA, seed=42)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.centers, b.centers)


def test_pcp_radius_too_large():
    with pytest.raises(ConfigurationError):
        deploy_pcp(1, 3, 200.0, Rect(0, 0, 300, 100), seed=1)


def test_pcp_centroid_converges_to_parent():
    # Law of large numbers: the mean of 1e4 offspring sits within 1 m of
    # the parent (disk of radius 30 -> std of the mean ~ 0.15 m per axis).
    dep = deploy_pcp(1, 10_000, 30.0, AREA, seed=11)
    centroid = dep.positions.mean(axis=0)
    assert np.linalg.norm(centroid - dep.centers[0]) < 1.0


def test_pcp_uniform_on_disk_chi_square():
    # Conditional law given the parent: uniform on the disk. Bin by equal-
    # area radial shells x angular sectors and test at the 1% level.
    radius = 30.0
    dep = deploy_pcp(1, 10_000, radius, AREA, seed=5)
    rel = dep.positions - dep.centers[0]
    r2 = (rel**2).sum(axis=1) / radius**2  # uniform on [0, 1] under H0
    ang = np.mod(np.arctan2(rel[:, 1], rel[:, 0]), 2 * np.pi) / (2 * np.pi)
    n_r, n_a = 5, 8
    counts, _, _ = np.histogram2d(r2, ang, bins=[n_r, n_a], range=[[0, 1], [0, 1]])
    expected = len(rel) / (n_r * n_a)
    chi2 = ((counts - expected) ** 2 / expected).sum()
    crit = stats.chi2.ppf(0.99, n_r * n_a - 1)
    assert chi2 < crit


def _state(n=1, seed=0, area=AREA):
    rng = np.random.default_rng(seed)
    pos = area.sample(rng, n)
    return init_random_waypoint(pos, area, rng), rng


def test_rwp_zero_dt_is_identity():
    state, rng = _state(5, seed=1)
    out = step_random_waypoint(state, 0.0, rng)
    assert np.array_equal(out.positions, state.positions)
    assert np.array_equal(out.waypoints, state.waypoints)


def test_rwp_linear_motion_toward_waypoint():
    state, rng = _state(1, seed=2)
    state.positions[0] = [100.0, 100.0]
    state.waypoints[0] = [110.0, 100.0]  # 10 m east
    state.speeds[0] = 1.0
    out = step_random_waypoint(state, 1.0, rng)
    assert np.allclose(out.positions[0], [101.0, 100.0])
    remaining = np.linalg.norm(out.waypoints[0] - out.positions[0])
    assert remaining == pytest.approx(9.0)


def test_rwp_positions_stay_in_area():
    state, rng = _state(8, seed=3)
    for _ in range(2000):
        state = step_random_waypoint(state, 0.5, rng)
        assert AREA.contains(state.positions)


def test_rwp_arrival_draws_new_waypoint():
    state, rng = _state(1, seed=4)
    state.positions[0] = [50.0, 50.0]
    state.waypoints[0] = [50.5, 50.0]
    state.speeds[0] = 2.0
    state.pause_remaining[0] = 0.0
    out = step_random_waypoint(state, 1.0, rng)  # overshoots: arrives
    assert np.allclose(out.positions[0], [50.5, 50.0])
    assert not np.allclose(out.waypoints[0], [50.5, 50.0])


def test_rwp_center_bias_oracle():
    # Long-run occupancy of random waypoint is center-biased: the mean
    # distance to the area center falls below the uniform-law expectation.
    area = Rect(0.0, 0.0, 200.0, 200.0)
    rng = np.random.default_rng(9)
    state = init_random_waypoint(area.sample(rng, 20), area, rng)
    center = area.center
    samples = []
    for step in range(6000):
        state = step_random_waypoint(state, 1.0, rng)
        if step > 500:
            samples.append(np.linalg.norm(state.positions - center, axis=1))
    mean_occupied = float(np.mean(samples))
    uniform_draws = area.sample(np.random.default_rng(10), 40_000)
    mean_uniform = float(np.mean(np.linalg.norm(uniform_draws - center, axis=1)))
    assert mean_occupied < 0.95 * mean_uniform


def test_rwp_deterministic_given_seed():
    s1, r1 = _state(6, seed=12)
    s2, r2 = _state(6, seed=12)
    for _ in range(200):
        s1 = step_random_waypoint(s1, 0.7, r1)
        s2 = step_random_waypoint(s2, 0.7, r2)
    assert np.array_equal(s1.positions, s2.positions)
