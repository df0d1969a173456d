"""Single-path LoS mm-Wave channel, ULA steering vectors and matched beams.

The channel of a gNB-UE link is h = v(theta) * alpha / (sqrt(L) * (1 + d^eta))
with v the uniform-linear-array steering vector for the azimuth angle of
departure theta, alpha a circularly-symmetric complex Gaussian fast-fading
gain and d the link distance in meters.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class ChannelParams:
    """Propagation constants shared by every link."""

    n_antennas: int = 16
    spacing_ratio: float = 0.5  # antenna spacing D over wavelength
    pathloss_exponent: float = 2.0
    pathloss_constant: float = 1.0  # unitless normalization, L in the envelope
    alpha_variance: float = 1.0  # E|alpha|^2 of the fast-fading gain


def steering_vector(theta, m, spacing_ratio=0.5):
    """ULA steering vector: entry n is exp(-j*2*pi*n*(D/lambda)*sin(theta))."""
    if m < 1:
        raise DomainError("steering vector needs at least one antenna")
    n = np.arange(m)
    return np.exp(-1j * 2.0 * np.pi * n * spacing_ratio * np.sin(theta))


def envelope(distance, eta, pathloss_constant=1.0):
    """Large-scale amplitude factor 1 / (sqrt(L) * (1 + d^eta))."""
    return 1.0 / (np.sqrt(pathloss_constant) * (1.0 + distance**eta))


def aod(gnb_pos, ue_pos):
    """Azimuth angle of departure from gNB to UE, radians in (-pi, pi]."""
    d = np.asarray(ue_pos, dtype=float) - np.asarray(gnb_pos, dtype=float)
    if d[0] == 0.0 and d[1] == 0.0:
        raise DomainError("coincident gNB and UE: angle of departure undefined")
    return float(np.arctan2(d[1], d[0]))


def draw_alpha(rng, variance=1.0, n=1):
    """Circularly-symmetric complex Gaussian gains with E|alpha|^2 = variance."""
    s = np.sqrt(variance / 2.0)
    return s * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def draw_channel(ue_pos, gnb_pos, params, rng, alpha=None):
    """One channel realization for a single link.

    `alpha` may be passed to freeze the fast fading (deterministic geometry
    component only); otherwise one gain is drawn from `rng`.
    """
    d = float(np.linalg.norm(np.asarray(ue_pos, dtype=float) - np.asarray(gnb_pos, dtype=float)))
    if d <= 0.0:
        raise DomainError("coincident gNB and UE positions")
    theta = aod(gnb_pos, ue_pos)
    v = steering_vector(theta, params.n_antennas, params.spacing_ratio)
    if alpha is None:
        alpha = draw_alpha(rng, params.alpha_variance, 1)[0]
    return v * (alpha * envelope(d, params.pathloss_exponent, params.pathloss_constant))


def channel_matrix(gnb_positions, ue_positions, params, rng, alphas=None):
    """Channels for every gNB-UE pair, shape (n_gnb, n_ue, M).

    Steering geometry is recomputed from positions; fast fading is one alpha
    per link (redrawn by the caller every TTI unless `alphas` is given).
    """
    g = np.asarray(gnb_positions, dtype=float).reshape(-1, 2)
    u = np.asarray(ue_positions, dtype=float).reshape(-1, 2)
    ng, nu = len(g), len(u)
    delta = u[None, :, :] - g[:, None, :]  # (ng, nu, 2)
    dist = np.hypot(delta[..., 0], delta[..., 1])
    if np.any(dist <= 0.0):
        raise DomainError("coincident gNB and UE positions")
    theta = np.arctan2(delta[..., 1], delta[..., 0])
    n = np.arange(params.n_antennas)
    phase = -2.0 * np.pi * params.spacing_ratio * np.sin(theta)[..., None] * n
    v = np.exp(1j * phase)
    if alphas is None:
        alphas = draw_alpha(rng, params.alpha_variance, ng * nu).reshape(ng, nu)
    env = envelope(dist, params.pathloss_exponent, params.pathloss_constant)
    return v * (alphas * env)[..., None]


def _aligned_direction(h):
    """Unit-norm channel direction with the first nonzero entry made real."""
    h = np.asarray(h)
    norm = np.linalg.norm(h)
    if norm == 0.0:
        raise DomainError("zero channel vector")
    nz = np.flatnonzero(np.abs(h) > 0)[0]
    return h * (np.conj(h[nz]) / np.abs(h[nz])) / norm


def beamforming_for_cluster(member_channels):
    """Matched beam toward a cluster: normalized mean of the members'
    phase-aligned channel directions. Unit Euclidean norm.

    For a single member this reduces to w = h / ||h||, so the effective gain
    |h^H w| equals ||h|| exactly.
    """
    if len(member_channels) == 0:
        raise DomainError("cannot beamform toward an empty cluster")
    mean_dir = np.mean([_aligned_direction(h) for h in member_channels], axis=0)
    norm = np.linalg.norm(mean_dir)
    if norm == 0.0:
        # Pathological cancellation; fall back to the first member's direction.
        return _aligned_direction(member_channels[0])
    return mean_dir / norm


def effective_gain(h, w):
    """Beamformed power gain |h^H w|^2."""
    return float(np.abs(np.vdot(h, w)) ** 2)


def channel_correlation(h1, h2):
    """|h1^H h2| / (||h1|| * ||h2||), in [0, 1]."""
    h1 = np.asarray(h1)
    h2 = np.asarray(h2)
    if h1.shape != h2.shape:
        raise DomainError("channel vectors differ in length")
    n1 = np.linalg.norm(h1)
    n2 = np.linalg.norm(h2)
    if n1 == 0.0 or n2 == 0.0:
        raise DomainError("zero-norm channel in correlation")
    return float(min(1.0, np.abs(np.vdot(h1, h2)) / (n1 * n2)))


def correlation_matrix(channels):
    """Pairwise channel correlations, shape (n, n)."""
    H = np.asarray(channels)
    norms = np.linalg.norm(H, axis=1)
    if np.any(norms == 0.0):
        raise DomainError("zero-norm channel in correlation")
    gram = np.abs(H.conj() @ H.T)
    c = gram / np.outer(norms, norms)
    return np.minimum(c, 1.0)
