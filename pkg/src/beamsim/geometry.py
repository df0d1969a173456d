"""User deployment (Poisson Cluster Process) and random waypoint mobility."""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle in meters."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    @property
    def width(self):
        return self.xmax - self.xmin

    @property
    def height(self):
        return self.ymax - self.ymin

    @property
    def center(self):
        return np.array([0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax)])

    def contains(self, points, tol=1e-9):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return bool(
            np.all(p[:, 0] >= self.xmin - tol)
            and np.all(p[:, 0] <= self.xmax + tol)
            and np.all(p[:, 1] >= self.ymin - tol)
            and np.all(p[:, 1] <= self.ymax + tol)
        )

    def inset(self, margin):
        r = Rect(self.xmin + margin, self.ymin + margin, self.xmax - margin, self.ymax - margin)
        if r.width < -1e-9 or r.height < -1e-9:
            raise ConfigurationError("inset margin %.3g m exceeds rectangle half-size" % margin)
        if r.width < 0 or r.height < 0:  # degenerate up to rounding
            cx, cy = r.center
            r = Rect(min(r.xmin, cx), min(r.ymin, cy), max(r.xmax, cx), max(r.ymax, cy))
        return r

    def sample(self, rng, n=1):
        xy = rng.random((n, 2))
        xy[:, 0] = self.xmin + xy[:, 0] * self.width
        xy[:, 1] = self.ymin + xy[:, 1] * self.height
        return xy


@dataclass(frozen=True)
class Gnb:
    id: int
    role: str  # "expert" or "learner"
    position: np.ndarray  # (2,) meters
    n_antennas: int
    max_power_dbm: float


@dataclass(frozen=True)
class Ue:
    id: int
    position: np.ndarray  # (2,) meters


@dataclass
class Topology:
    """Static snapshot of gNB and UE placement.

    Expert and learner gNB groups must be spatially disjoint: every UE's two
    nearest gNBs share one role.
    """

    gnbs: list
    ues: list
    area: Rect
    inter_gnb_distance: float

    def validate(self):
        gnb_ids = [g.id for g in self.gnbs]
        ue_ids = [u.id for u in self.ues]
        if len(set(gnb_ids)) != len(gnb_ids):
            raise ConfigurationError("duplicate gNB ids")
        if len(set(ue_ids)) != len(ue_ids):
            raise ConfigurationError("duplicate UE ids")
        for g in self.gnbs:
            if not self.area.contains(g.position):
                raise ConfigurationError(f"gNB {g.id} outside area")
        if self.ues:
            if not self.area.contains(self.ue_positions()):
                raise ConfigurationError("UE outside area")
        self._check_role_separation()

    def _check_role_separation(self):
        if len(self.gnbs) < 2:
            return
        gpos = np.array([g.position for g in self.gnbs])
        roles = [g.role for g in self.gnbs]
        for u in self.ues:
            d = np.linalg.norm(gpos - u.position, axis=1)
            nearest2 = np.argsort(d)[:2]
            r0, r1 = roles[nearest2[0]], roles[nearest2[1]]
            if r0 != r1:
                raise ConfigurationError(
                    f"UE {u.id}: nearest two gNBs mix roles ({r0}/{r1}); "
                    "expert and learner groups must not overlap"
                )

    def ue_positions(self):
        return np.array([u.position for u in self.ues], dtype=float).reshape(-1, 2)

    def gnb_positions(self):
        return np.array([g.position for g in self.gnbs], dtype=float).reshape(-1, 2)

    def gnbs_with_role(self, role):
        return [g for g in self.gnbs if g.role == role]

    def to_dict(self):
        return {
            "area": [self.area.xmin, self.area.ymin, self.area.xmax, self.area.ymax],
            "inter_gnb_distance": self.inter_gnb_distance,
            "gnbs": [
                {
                    "id": g.id,
                    "role": g.role,
                    "position": [float(g.position[0]), float(g.position[1])],
                    "n_antennas": g.n_antennas,
                    "max_power_dbm": g.max_power_dbm,
                }
                for g in self.gnbs
            ],
            "ues": [
                {"id": u.id, "position": [float(u.position[0]), float(u.position[1])]}
                for u in self.ues
            ],
        }

    @classmethod
    def from_dict(cls, d):
        topo = cls(
            gnbs=[
                Gnb(
                    id=g["id"],
                    role=g["role"],
                    position=np.asarray(g["position"], dtype=float),
                    n_antennas=int(g["n_antennas"]),
                    max_power_dbm=float(g["max_power_dbm"]),
                )
                for g in d["gnbs"]
            ],
            ues=[Ue(id=u["id"], position=np.asarray(u["position"], dtype=float)) for u in d["ues"]],
            area=Rect(*d["area"]),
            inter_gnb_distance=float(d["inter_gnb_distance"]),
        )
        topo.validate()
        return topo


@dataclass(frozen=True)
class PcpDeployment:
    """Result of one Poisson-cluster draw: parents plus their offspring."""

    centers: np.ndarray  # (n_clusters, 2)
    positions: np.ndarray  # (n_users, 2)
    parent: np.ndarray  # (n_users,) index into centers


def deploy_pcp(n_clusters, users_per_cluster, radius, area, seed):
    """Draw cluster centers uniformly in `area` and users uniformly on disks.

    Centers are drawn in the rectangle inset by `radius` so every user stays
    inside `area`. Deterministic for a given seed.
    """
    if radius <= 0:
        raise ConfigurationError("cluster radius must be > 0")
    if area.width <= 0 or area.height <= 0:
        raise ConfigurationError("deployment area is empty")
    if radius > 0.5 * min(area.width, area.height) + 1e-9:
        raise ConfigurationError(
            f"cluster radius {radius} m exceeds half the smaller area dimension; "
            "clusters would be clipped"
        )
    rng = np.random.default_rng(seed)
    centers = area.inset(radius).sample(rng, n_clusters)
    n = n_clusters * users_per_cluster
    parent = np.repeat(np.arange(n_clusters), users_per_cluster)
    # Uniform on the disk: radius ~ r*sqrt(U), angle uniform.
    r = radius * np.sqrt(rng.random(n))
    phi = rng.random(n) * 2.0 * np.pi
    offsets = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
    positions = centers[parent] + offsets if n else np.zeros((0, 2))
    return PcpDeployment(centers=centers, positions=positions, parent=parent)


@dataclass
class MobilityState:
    """Random-waypoint state for a set of UEs confined to one rectangle."""

    positions: np.ndarray  # (n, 2) meters
    waypoints: np.ndarray  # (n, 2) meters
    speeds: np.ndarray  # (n,) m/s
    pause_remaining: np.ndarray  # (n,) seconds
    area: Rect
    speed_range: tuple = (1.0, 3.0)
    pause_range: tuple = (0.0, 2.0)

    def copy(self):
        return replace(
            self,
            positions=self.positions.copy(),
            waypoints=self.waypoints.copy(),
            speeds=self.speeds.copy(),
            pause_remaining=self.pause_remaining.copy(),
        )


def init_random_waypoint(positions, area, rng, speed_range=(1.0, 3.0), pause_range=(0.0, 2.0)):
    n = len(positions)
    lo, hi = speed_range
    return MobilityState(
        positions=np.array(positions, dtype=float).reshape(n, 2),
        waypoints=area.sample(rng, n),
        speeds=lo + (hi - lo) * rng.random(n),
        pause_remaining=np.zeros(n),
        area=area,
        speed_range=speed_range,
        pause_range=pause_range,
    )


def step_random_waypoint(state, dt, rng):
    """Advance every UE by one time step of `dt` seconds.

    UEs move straight toward their waypoint at their drawn speed; on arrival
    they pause, then draw a fresh uniform waypoint and speed. Total function:
    dt = 0 leaves the state unchanged.
    """
    if dt < 0:
        raise ConfigurationError("dt must be >= 0")
    out = state.copy()
    lo, hi = state.speed_range
    plo, phi = state.pause_range
    for i in range(len(out.positions)):
        if out.pause_remaining[i] > 0.0:
            out.pause_remaining[i] = max(0.0, out.pause_remaining[i] - dt)
            continue
        delta = out.waypoints[i] - out.positions[i]
        dist = float(np.hypot(delta[0], delta[1]))
        step = out.speeds[i] * dt
        if step < dist:
            out.positions[i] += delta * (step / dist)
        else:
            out.positions[i] = out.waypoints[i].copy()
            if dt > 0.0:
                out.pause_remaining[i] = plo + (phi - plo) * rng.random()
                out.waypoints[i] = state.area.sample(rng, 1)[0]
                out.speeds[i] = lo + (hi - lo) * rng.random()
    return out
