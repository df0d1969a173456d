"""Steering vector, channel draw, matched beam and correlation tests."""

import numpy as np
import pytest

from beamsim.channel import (
    ChannelParams,
    beamforming_for_cluster,
    channel_correlation,
    channel_matrix,
    correlation_matrix,
    draw_channel,
    effective_gain,
    steering_vector,
)
from beamsim.errors import DomainError

PARAMS = ChannelParams()


def test_steering_theta_zero_all_ones():
    v = steering_vector(0.0, 4, 0.5)
    assert np.allclose(v, np.ones(4))


def test_steering_broadside_alternates():
    v = steering_vector(np.pi / 2, 2, 0.5)
    assert np.allclose(v, [1.0, -1.0])


def test_steering_pi_over_six_phases():
    # sin(pi/6) = 1/2 with half-wavelength spacing: phases 0, -pi/2, -pi.
    v = steering_vector(np.pi / 6, 3, 0.5)
    assert np.allclose(v, [1.0, -1.0j, -1.0])


def test_steering_unit_modulus():
    rng = np.random.default_rng(0)
    for theta in rng.uniform(-np.pi, np.pi, 50):
        v = steering_vector(theta, 16, 0.5)
        assert np.allclose(np.abs(v), 1.0, atol=1e-12)


def test_steering_rejects_zero_antennas():
    with pytest.raises(DomainError):
        steering_vector(0.3, 0)


def test_channel_envelope_scaling():
    # Doubling a large distance with eta = 2 shrinks the norm by ~4x.
    rng = np.random.default_rng(1)
    h1 = draw_channel([100.0, 0.0], [0.0, 0.0], PARAMS, rng, alpha=1.0)
    h2 = draw_channel([200.0, 0.0], [0.0, 0.0], PARAMS, rng, alpha=1.0)
    ratio = np.linalg.norm(h1) / np.linalg.norm(h2)
    assert ratio == pytest.approx(4.0, rel=0.02)


def test_channel_equal_modulus_entries():
    rng = np.random.default_rng(2)
    h = draw_channel([30.0, 40.0], [0.0, 0.0], PARAMS, rng, alpha=1.0)
    d = 50.0
    expect = 1.0 / (np.sqrt(PARAMS.pathloss_constant) * (1.0 + d**PARAMS.pathloss_exponent))
    assert np.allclose(np.abs(h), expect)


def test_channel_alpha_variance_oracle():
    # Sample variance of the complex gain over 1e5 draws within 2%.
    from beamsim.channel import draw_alpha

    rng = np.random.default_rng(3)
    a = draw_alpha(rng, variance=1.0, n=100_000)
    assert np.mean(np.abs(a) ** 2) == pytest.approx(1.0, rel=0.02)


def test_channel_rejects_coincident_positions():
    rng = np.random.default_rng(4)
    with pytest.raises(DomainError):
        draw_channel([10.0, 10.0], [10.0, 10.0], PARAMS, rng)


def test_channel_deterministic_and_continuous():
    rng1 = np.random.default_rng(5)
    rng2 = np.random.default_rng(5)
    h1 = draw_channel([60.0, 10.0], [0.0, 0.0], PARAMS, rng1)
    h2 = draw_channel([60.0, 10.0], [0.0, 0.0], PARAMS, rng2)
    assert np.array_equal(h1, h2)
    ha = draw_channel([60.0, 10.0], [0.0, 0.0], PARAMS, rng1, alpha=0.7 + 0.1j)
    hb = draw_channel([60.0, 10.0 + 1e-6], [0.0, 0.0], PARAMS, rng1, alpha=0.7 + 0.1j)
    assert np.linalg.norm(ha - hb) < 1e-6


def test_channel_matrix_matches_single_draws():
    gnbs = np.array([[0.0, 0.0], [150.0, 0.0]])
    ues = np.array([[40.0, 20.0], [90.0, -30.0], [130.0, 10.0]])
    alphas = np.full((2, 3), 1.0 + 0.0j)
    H = channel_matrix(gnbs, ues, PARAMS, None, alphas=alphas)
    for gi in range(2):
        for ui in range(3):
            h = draw_channel(ues[ui], gnbs[gi], PARAMS, None, alpha=1.0)
            assert np.allclose(H[gi, ui], h)


def test_beamforming_single_member_matched_gain():
    rng = np.random.default_rng(6)
    h = draw_channel([70.0, 25.0], [0.0, 0.0], PARAMS, rng)
    w = beamforming_for_cluster([h])
    assert np.linalg.norm(w) == pytest.approx(1.0, abs=1e-12)
    assert np.abs(np.vdot(h, w)) == pytest.approx(np.linalg.norm(h), rel=1e-12)


def test_beamforming_identical_aod_members():
    rng = np.random.default_rng(7)
    # Two members on the same ray from the gNB: identical AoD.
    h1 = draw_channel([50.0, 50.0], [0.0, 0.0], PARAMS, rng)
    h2 = draw_channel([80.0, 80.0], [0.0, 0.0], PARAMS, rng)
    w12 = beamforming_for_cluster([h1, h2])
    w1 = beamforming_for_cluster([h1])
    phase = np.vdot(w1, w12)
    assert np.abs(np.abs(phase) - 1.0) < 1e-9  # equal up to a global phase
    assert np.allclose(w12 * np.conj(phase) / np.abs(phase), w1, atol=1e-9)


def test_beamforming_off_cluster_gain_lower():
    rng = np.random.default_rng(8)
    members = [
        draw_channel(p, [0.0, 0.0], PARAMS, rng)
        for p in ([60.0, 4.0], [62.0, -3.0], [58.0, 0.0])
    ]
    w = beamforming_for_cluster(members)
    in_gain = min(
        effective_gain(h, w) / np.linalg.norm(h) ** 2 for h in members
    )
    off = draw_channel([0.0, 60.0], [0.0, 0.0], PARAMS, rng)  # 90 deg away
    off_gain = effective_gain(off, w) / np.linalg.norm(off) ** 2
    assert off_gain <= in_gain


def test_beamforming_rejects_empty():
    with pytest.raises(DomainError):
        beamforming_for_cluster([])


def test_correlation_self_is_one():
    rng = np.random.default_rng(9)
    h = draw_channel([45.0, 12.0], [0.0, 0.0], PARAMS, rng)
    assert channel_correlation(h, h) == pytest.approx(1.0, abs=1e-12)


def test_correlation_orthogonal_is_zero():
    h1 = np.array([1.0, 0.0, 0.0, 0.0], dtype=complex)
    h2 = np.array([0.0, 1.0, 0.0, 0.0], dtype=complex)
    assert channel_correlation(h1, h2) == 0.0


def test_correlation_scale_invariant_and_symmetric():
    rng = np.random.default_rng(10)
    h1 = draw_channel([45.0, 12.0], [0.0, 0.0], PARAMS, rng)
    h2 = draw_channel([52.0, -9.0], [0.0, 0.0], PARAMS, rng)
    c = channel_correlation(h1, h2)
    assert channel_correlation(h2, h1) == pytest.approx(c, abs=1e-12)
    assert channel_correlation(h1 * (2.0 - 3.0j), h2) == pytest.approx(c, abs=1e-12)
    assert 0.0 <= c <= 1.0


def test_correlation_zero_norm_rejected():
    with pytest.raises(DomainError):
        channel_correlation(np.zeros(4, dtype=complex), np.ones(4, dtype=complex))


def test_correlation_monotone_in_angle_gap():
    # Steering correlation at M = 16 decays monotonically for small offsets.
    base = steering_vector(0.2, 16, 0.5)
    deltas = np.linspace(0.0, 5.0, 11) * np.pi / 180.0
    corrs = [channel_correlation(base, steering_vector(0.2 + d, 16, 0.5)) for d in deltas]
    assert all(corrs[i + 1] <= corrs[i] + 1e-12 for i in range(len(corrs) - 1))


def test_correlation_matrix_matches_pairwise():
    rng = np.random.default_rng(11)
    hs = [draw_channel(p, [0.0, 0.0], PARAMS, rng)
          for p in ([40.0, 0.0], [0.0, 40.0], [30.0, 30.0])]
    C = correlation_matrix(hs)
    for i in range(3):
        for j in range(3):
            assert C[i, j] == pytest.approx(channel_correlation(hs[i], hs[j]), abs=1e-12)
