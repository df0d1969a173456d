"""Clustering tests: correlation k-means, DBSCAN vs closure oracle, sectors."""

import itertools

import numpy as np
import pytest

from beamsim.channel import ChannelParams, correlation_matrix, draw_channel, steering_vector
from beamsim.clustering import NOISE, dbscan, kmeans_channel, sectorize
from beamsim.errors import DomainError

PARAMS = ChannelParams()


def _steering_group(theta, n, jitter, rng):
    return [steering_vector(theta + jitter * rng.standard_normal(), 16, 0.5) for _ in range(n)]


def test_kmeans_k1_single_beam():
    rng = np.random.default_rng(0)
    hs = _steering_group(0.1, 5, 0.02, rng)
    asg = kmeans_channel(hs, 1, rng)
    assert asg.k == 1
    assert np.all(asg.labels == 0)


def test_kmeans_k_equals_n_singletons():
    rng = np.random.default_rng(1)
    hs = _steering_group(0.0, 4, 0.3, rng)
    asg = kmeans_channel(hs, 4, rng)
    assert sorted(asg.labels) == [0, 1, 2, 3]


def test_kmeans_rejects_k_above_n():
    rng = np.random.default_rng(2)
    hs = _steering_group(0.0, 3, 0.1, rng)
    with pytest.raises(DomainError):
        kmeans_channel(hs, 4, rng)


def _best_two_partition(hs):
    """Exhaustive 2-partition minimizing total medoid dissimilarity."""
    n = len(hs)
    dissim = 1.0 - correlation_matrix(hs)
    best, best_cost = None, np.inf
    for mask in range(1, 2 ** (n - 1)):  # fix point 0 in part A
        a = [i for i in range(n) if not (mask >> i) & 1]
        b = [i for i in range(n) if (mask >> i) & 1]
        if not a or not b:
            continue
        cost = 0.0
        for part in (a, b):
            sub = dissim[np.ix_(part, part)]
            cost += sub.sum(axis=0).min()
        if cost < best_cost:
            best, best_cost = (a, b), cost
    return best


def test_kmeans_two_groups_perfect_split():
    # Two steering bundles at 0 and 60 degrees: the exhaustive 2-partition
    # oracle and k-means must agree on the grouping.
    rng = np.random.default_rng(3)
    g1 = _steering_group(0.0, 4, 0.01, rng)
    g2 = _steering_group(np.pi / 3, 4, 0.01, rng)
    hs = g1 + g2
    asg = kmeans_channel(hs, 2, rng)
    labels = asg.labels
    assert len(set(labels[:4])) == 1
    assert len(set(labels[4:])) == 1
    assert labels[0] != labels[4]
    oracle_a, oracle_b = _best_two_partition(hs)
    assert sorted(map(sorted, [oracle_a, oracle_b])) == [[0, 1, 2, 3], [4, 5, 6, 7]]


def test_kmeans_objective_monotone():
    rng = np.random.default_rng(4)
    hs = [steering_vector(t, 16, 0.5) for t in rng.uniform(-1.2, 1.2, 12)]
    _, history = kmeans_channel(hs, 3, rng, return_history=True)
    assert all(history[i + 1] <= history[i] + 1e-12 for i in range(len(history) - 1))


def test_kmeans_on_drawn_channels():
    rng = np.random.default_rng(5)
    near = [draw_channel([50.0 + dx, 5.0], [0, 0], PARAMS, rng) for dx in range(4)]
    far = [draw_channel([-5.0, 60.0 + dy], [0, 0], PARAMS, rng) for dy in range(4)]
    asg = kmeans_channel(near + far, 2, rng)
    assert len({asg.labels[i] for i in range(4)}) == 1
    assert asg.labels[0] != asg.labels[4]


# -- DBSCAN ----------------------------------------------------------------


def _closure_components(points, eps):
    """Brute-force reachability closure: connected components of the
    eps-neighborhood graph (reference for minpts = 1)."""
    n = len(points)
    adj = np.linalg.norm(points[:, None] - points[None, :], axis=2) <= eps
    labels = -np.ones(n, dtype=int)
    k = 0
    for i in range(n):
        if labels[i] >= 0:
            continue
        stack = [i]
        while stack:
            j = stack.pop()
            if labels[j] >= 0:
                continue
            labels[j] = k
            stack.extend(np.flatnonzero(adj[j]))
        k += 1
    return labels, k


def _same_partition(a, b):
    mapping = {}
    for x, y in zip(a, b):
        if x in mapping and mapping[x] != y:
            return False
        mapping[x] = y
    return len(set(mapping.values())) == len(mapping)


def test_dbscan_all_within_eps_one_cluster():
    pts = np.array([[0, 0], [1, 1], [2, 0], [1, -1]], dtype=float)
    asg = dbscan(pts, eps=3.0, minpts=1)
    assert asg.k == 1
    assert np.all(asg.labels == 0)


def test_dbscan_two_separated_groups():
    pts = np.array([[0, 0], [1, 0], [100, 0], [101, 0]], dtype=float)
    asg = dbscan(pts, eps=5.0, minpts=1)
    assert asg.k == 2
    assert asg.labels[0] == asg.labels[1]
    assert asg.labels[2] == asg.labels[3]
    assert asg.labels[0] != asg.labels[2]


def test_dbscan_empty_input():
    asg = dbscan(np.zeros((0, 2)), eps=1.0, minpts=1)
    assert asg.k == 0
    assert asg.labels.size == 0


def test_dbscan_noise_with_high_minpts():
    pts = np.array([[0, 0], [0.5, 0], [1.0, 0], [50, 50]], dtype=float)
    asg = dbscan(pts, eps=2.0, minpts=3)
    assert asg.labels[3] == NOISE
    assert asg.k == 1


def test_dbscan_matches_closure_oracle_random():
    # 200 random instances of up to 20 points: labels equal the transitive
    # closure reference up to permutation (minpts = 1: no noise possible).
    rng = np.random.default_rng(6)
    for _ in range(200):
        n = int(rng.integers(1, 21))
        pts = rng.uniform(0, 100, (n, 2))
        eps = float(rng.uniform(5, 40))
        asg = dbscan(pts, eps=eps, minpts=1)
        ref, ref_k = _closure_components(pts, eps)
        assert asg.k == ref_k
        assert np.all(asg.labels != NOISE)
        assert _same_partition(asg.labels, ref)


def test_dbscan_exact_connected_components_small():
    # Exhaustive-ish check on many <= 50 point instances.
    rng = np.random.default_rng(7)
    for _ in range(30):
        n = int(rng.integers(2, 51))
        pts = rng.uniform(0, 60, (n, 2))
        asg = dbscan(pts, eps=8.0, minpts=1)
        ref, ref_k = _closure_components(pts, 8.0)
        assert asg.k == ref_k and _same_partition(asg.labels, ref)


# -- sectorize ---------------------------------------------------------------


def test_sectorize_examples():
    gnb = np.array([0.0, 0.0])
    az10 = np.array([[np.cos(np.deg2rad(10)), np.sin(np.deg2rad(10))]])
    az200 = np.array([[np.cos(np.deg2rad(200)), np.sin(np.deg2rad(200))]])
    assert sectorize(az10, gnb, 3).labels[0] == 0
    assert sectorize(az200, gnb, 3).labels[0] == 1


def test_sectorize_single_sector():
    rng = np.random.default_rng(8)
    pts = rng.uniform(-50, 50, (10, 2))
    asg = sectorize(pts, [0.0, 0.0], 1)
    assert np.all(asg.labels == 0)


def test_sectorize_coincident_ue_sector_zero():
    asg = sectorize(np.array([[5.0, 5.0]]), [5.0, 5.0], 3)
    assert asg.labels[0] == 0


def test_sectorize_rotation_cycles_labels():
    rng = np.random.default_rng(9)
    n_sectors = 4
    width = 2 * np.pi / n_sectors
    pts = rng.uniform(-40, 40, (30, 2)) + 1e-3
    base = sectorize(pts, [0.0, 0.0], n_sectors).labels
    c, s = np.cos(width), np.sin(width)
    rotation = np.array([[c, -s], [s, c]])
    rotated = sectorize(pts @ rotation.T, [0.0, 0.0], n_sectors).labels
    assert np.all(rotated == (base + 1) % n_sectors)
