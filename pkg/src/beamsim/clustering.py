"""Beam grouping: correlation k-means (medoid form), DBSCAN, fixed sectors."""

from dataclasses import dataclass

import numpy as np

from .channel import correlation_matrix
from .errors import DomainError

NOISE = -1


@dataclass(frozen=True)
class ClusterAssignment:
    """Per-UE beam labels. Non-noise labels are 0..k-1; DBSCAN may emit NOISE."""

    labels: np.ndarray  # (n,) int
    k: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        object.__setattr__(self, "labels", labels)
        real = labels[labels != NOISE]
        if real.size and (real.min() < 0 or real.max() >= self.k):
            raise DomainError("cluster label outside 0..k-1")

    def members(self, label):
        return np.flatnonzero(self.labels == label)


def _farthest_first_medoids(dissim, k, rng):
    n = dissim.shape[0]
    first = int(rng.integers(n))
    medoids = [first]
    while len(medoids) < k:
        d_to_set = dissim[:, medoids].min(axis=1)
        d_to_set[medoids] = -1.0
        medoids.append(int(np.argmax(d_to_set)))
    return medoids


def kmeans_channel(channels, k, rng, max_iter=100, return_history=False):
    """Group channels into k beams by correlation distance 1 - |h_i^H h_j|/(..).

    Medoid variant of Lloyd's algorithm: the representative of a cluster is
    the member maximizing total in-cluster correlation. Farthest-first
    seeding from `rng`; stops when labels stabilize or after `max_iter`.
    """
    n = len(channels)
    if not 1 <= k <= n:
        raise DomainError(f"k = {k} outside 1..{n}")
    dissim = 1.0 - correlation_matrix(channels)
    medoids = _farthest_first_medoids(dissim, k, rng)
    labels = np.full(n, -1, dtype=int)
    history = []
    for _ in range(max_iter):
        # Assignment: nearest medoid, lowest cluster index on ties; medoid
        # points stay in their own cluster (their self-distance is 0).
        new_labels = np.argmin(dissim[:, medoids], axis=1)
        for ci, m in enumerate(medoids):
            new_labels[m] = ci
        history.append(float(sum(dissim[i, medoids[new_labels[i]]] for i in range(n))))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        # Update: member minimizing total in-cluster dissimilarity.
        for ci in range(k):
            members = np.flatnonzero(labels == ci)
            if members.size == 0:
                continue
            within = dissim[np.ix_(members, members)].sum(axis=1)
            medoids[ci] = int(members[np.argmin(within)])
        history.append(float(sum(dissim[i, medoids[labels[i]]] for i in range(n))))
    assignment = ClusterAssignment(labels=labels, k=k)
    if return_history:
        return assignment, history
    return assignment


def dbscan(positions, eps, minpts):
    """Density-based clustering on 2-D positions.

    Core points have at least `minpts` neighbors within `eps` (the point
    itself counts). Non-core points reachable from a core point join its
    cluster; the rest are NOISE. With minpts = 1 every point is core, so the
    result equals the connected components of the eps-neighborhood graph.
    """
    if eps <= 0:
        raise DomainError("eps must be > 0")
    if minpts < 1:
        raise DomainError("minpts must be >= 1")
    pts = np.asarray(positions, dtype=float).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        return ClusterAssignment(labels=np.zeros(0, dtype=int), k=0)
    diff = pts[:, None, :] - pts[None, :, :]
    within = np.hypot(diff[..., 0], diff[..., 1]) <= eps
    n_neigh = within.sum(axis=1)
    core = n_neigh >= minpts
    labels = np.full(n, NOISE, dtype=int)
    k = 0
    for start in range(n):
        if labels[start] != NOISE or not core[start]:
            continue
        labels[start] = k
        frontier = list(np.flatnonzero(within[start]))
        while frontier:
            p = frontier.pop()
            if labels[p] == NOISE:
                labels[p] = k
                if core[p]:
                    frontier.extend(np.flatnonzero(within[p]))
        k += 1
    return ClusterAssignment(labels=labels, k=k)


def sectorize(positions, gnb_pos, n_sectors):
    """Fixed angular sectors of width 2*pi/n_sectors around the gNB.

    Azimuth is measured in [0, 2*pi) from the +x axis; a UE coincident with
    the gNB goes to sector 0 by convention.
    """
    if n_sectors < 1:
        raise DomainError("n_sectors must be >= 1")
    pts = np.asarray(positions, dtype=float).reshape(-1, 2)
    d = pts - np.asarray(gnb_pos, dtype=float)
    az = np.mod(np.arctan2(d[:, 1], d[:, 0]), 2.0 * np.pi)
    labels = np.floor(az / (2.0 * np.pi / n_sectors)).astype(int)
    labels = np.minimum(labels, n_sectors - 1)  # guard az == 2*pi after rounding
    labels[(d[:, 0] == 0.0) & (d[:, 1] == 0.0)] = 0
    return ClusterAssignment(labels=labels, k=n_sectors)


def compact_labels(assignment):
    """Renumber labels so that only occupied clusters remain, preserving order.

    NOISE points become singleton clusters (used by the beam builder: every
    served UE must sit in some beam).
    """
    labels = assignment.labels.copy()
    out = np.full(len(labels), -1, dtype=int)
    nxt = 0
    seen = {}
    for i, lab in enumerate(labels):
        if lab == NOISE:
            out[i] = nxt
            nxt += 1
        else:
            if lab not in seen:
                seen[lab] = nxt
                nxt += 1
            out[i] = seen[lab]
    return ClusterAssignment(labels=out, k=nxt)
