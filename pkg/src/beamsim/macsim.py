"""Per-TTI event loop: traffic, link adaptation, HARQ, agent hooks, metrics.

One TTI runs eight ordered phases: mobility, channel redraw, agent decisions,
association / beam-plan construction, traffic arrivals, transmission with
HARQ feedback, reward computation, metrics append. One run is one logical
thread; determinism comes from named sub-streams of the run seed.
"""

import csv
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import channel as chan
from . import clustering, phy, rl, transfer
from .errors import ConfigurationError, DomainError
from .geometry import init_random_waypoint, step_random_waypoint

POLICIES = ("tql", "qlearning", "bsdc", "baseline")

# 2 OFDM symbols at 15 kHz subcarrier spacing with normal cyclic prefix:
# 14 symbols per 1 ms slot.
TTI_SECONDS = 2.0 / 14.0 * 1e-3


@dataclass(frozen=True)
class MacConfig:
    bandwidth_hz: float = 20e6
    packet_bytes: int = 32
    harq_processes: int = 6
    harq_rtt_ttis: int = 4
    max_retx: int = 1
    se_scale: float = 0.75  # truncated-Shannon attenuation
    se_cap: float = 7.4  # bits/s/Hz ceiling
    se_min_sinr_db: float = -20.0  # below this the UE is not scheduled
    la_backoff_db: float = 3.0  # scheduling backoff under the SINR estimate
    decode_margin_db: float = 1.0  # decode succeeds down to sched - margin
    ewma_coef: float = 0.2  # SINR estimator smoothing
    report_cap_db: float = 25.0  # measured SINR saturates at the CQI ceiling
    noise_figure_db: float = 7.0

    @property
    def packet_bits(self):
        return self.packet_bytes * 8

    @property
    def noise_w(self):
        return phy.noise_power_w(self.bandwidth_hz, self.noise_figure_db)


@dataclass(frozen=True)
class RlConfig:
    alpha: float = 0.5
    gamma: float = 0.9
    epsilon: float = 0.05
    sinr_threshold_db: float = 20.0
    k_max: int = 3
    # Initial table value. Zero for the online learners; expert training
    # uses the return ceiling 1/(1-gamma) so every action gets visited.
    init_q: float = 0.0


def generate_traffic(lambda_per_ue, rng, n_ues=1):
    """Poisson packet arrivals for this TTI, one count per UE."""
    if lambda_per_ue < 0:
        raise DomainError("arrival rate must be >= 0")
    return rng.poisson(lambda_per_ue, n_ues)


def link_adaptation(sinr_linear, mac=MacConfig()):
    """Truncated-Shannon spectral efficiency in bits/s/Hz.

    Zero below the scheduling cutoff, otherwise 0.75*log2(1+sinr) capped at
    7.4. The per-TTI bit budget is SE * bandwidth * TTI duration.
    """
    if sinr_linear < 0:
        raise DomainError("SINR must be >= 0")
    if sinr_linear <= 0 or phy.linear_to_db(sinr_linear) < mac.se_min_sinr_db:
        return 0.0
    return float(min(mac.se_scale * np.log2(1.0 + sinr_linear), mac.se_cap))


@dataclass
class Packet:
    id: int
    ue_id: int
    size_bytes: int
    arrival_tti: int
    delivery_tti: int | None = None
    retx_count: int = 0


@dataclass
class HarqProcess:
    pid: int
    occupied: bool = False
    packet: Packet | None = None
    send_tti: int = -1
    feedback_due_tti: int = -1
    attempt: int = 0
    decode_threshold_db: float = 0.0
    decoded: bool = False


class UeLink:
    """Queue, HARQ processes and SINR estimator of one UE."""

    def __init__(self, ue_id, n_processes):
        self.ue_id = ue_id
        self.queue = deque()
        self.processes = [HarqProcess(pid=i) for i in range(n_processes)]
        self.ewma_sinr_db = None
        self.hol_blocked_ttis = 0

    def free_process(self):
        for p in self.processes:
            if not p.occupied:
                return p
        return None

    def occupied_count(self):
        return sum(1 for p in self.processes if p.occupied)


@dataclass
class MetricsLog:
    """Append-only per-TTI records plus per-packet latency samples."""

    gnb_ids: list
    rows: list = field(default_factory=list)
    latency: list = field(default_factory=list)  # (packet_id, ue_id, arrival, delivery, seconds)
    arrivals_total: int = 0
    delivered_total: int = 0
    lost_total: int = 0
    delivered_bits_total: int = 0

    def append(self, tti, per_gnb):
        self.rows.append({"tti": tti, "gnbs": per_gnb})

    def reward_curve(self):
        """Per-TTI reward averaged over gNBs."""
        return np.array(
            [np.mean([g["reward"] for g in row["gnbs"].values()]) for row in self.rows]
        )

    def cumulative_mean_reward(self):
        r = self.reward_curve()
        if r.size == 0:
            return r
        return np.cumsum(r) / np.arange(1, r.size + 1)

    def write_metrics_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(
                ["tti", "gnb_id", "state", "action", "reward",
                 "delivered_bits", "lost_packets", "mean_sinr_db"]
            )
            for row in self.rows:
                for gid in self.gnb_ids:
                    g = row["gnbs"][gid]
                    w.writerow(
                        [row["tti"], gid, g["state"], g["action"], repr(g["reward"]),
                         g["delivered_bits"], g["lost_packets"], repr(g["mean_sinr_db"])]
                    )

    def write_latency_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["packet_id", "ue_id", "arrival_tti", "delivery_tti", "latency_s"])
            for rec in self.latency:
                w.writerow([rec[0], rec[1], rec[2], rec[3], repr(rec[4])])


class QAgent:
    """Plain tabular Q-learning over one gNB's joint action space."""

    def __init__(self, gnb_id, action_set, cfg, rng):
        self.gnb_id = gnb_id
        self.action_set = action_set
        self.cfg = cfg
        self.rng = rng
        self.table = rl.QTable(rl.N_STATES, action_set.n_actions)
        if cfg.init_q:
            self.table.values[:] = cfg.init_q
        self.prev = None  # (state, action, reward)

    def selection_values(self, s):
        return self.table.values[s]

    def learn(self, s, a, r, s_next):
        rl.q_update(self.table, s, a, r, s_next, self.cfg.alpha, self.cfg.gamma)

    def step(self, avg_sinr_db_prev, reward_prev):
        """Observe, update from the previous decision, pick this TTI's action."""
        s = rl.observe_state(avg_sinr_db_prev, self.cfg.sinr_threshold_db)
        if self.prev is not None:
            ps, pa, _ = self.prev
            self.learn(ps, pa, reward_prev, s)
        a = rl.epsilon_greedy(self.selection_values(s), self.cfg.epsilon, self.rng)
        self.prev = (s, a, None)
        return s, a


class TqlAgent(QAgent):
    """Q-learning guided by imported expert values; learns a local table."""

    def __init__(self, gnb_id, action_set, cfg, rng, bundle):
        super().__init__(gnb_id, action_set, cfg, rng)
        self.bundle = bundle
        self.contrib = transfer.expert_contribution(bundle, action_set)

    def selection_values(self, s):
        return self.table.values[s] + self.contrib[s]

    def learn(self, s, a, r, s_next):
        transfer.tql_step(self.table, s, a, r, s_next, self.cfg.alpha, self.cfg.gamma)


def _large_scale_rx(gnb_positions, ue_positions, powers_w, params):
    """Distance-only received-power proxy used for association decisions."""
    g = np.asarray(gnb_positions, dtype=float).reshape(-1, 2)
    u = np.asarray(ue_positions, dtype=float).reshape(-1, 2)
    d = np.hypot(*(u[None, :, :] - g[:, None, :]).transpose(2, 0, 1))
    env = chan.envelope(d, params.pathloss_exponent, params.pathloss_constant)
    return np.asarray(powers_w, dtype=float)[:, None] * params.n_antennas * env**2


class Simulation:
    """One seeded run of one gNB group under one policy."""

    def __init__(self, gnbs, ue_ids, ue_positions, area, *, policy, chan_params, mac,
                 rl_cfg, seed, offered_load_mbps=0.0, bundle=None, mobility=None,
                 dbscan_eps=40.0, dbscan_minpts=1, n_sectors=3, ftpa_delta=1.0):
        if policy not in POLICIES and policy != "expert":
            raise ConfigurationError(f"unknown policy {policy!r}")
        if policy == "tql" and bundle is None:
            raise ConfigurationError("policy tql requires a transfer bundle")
        self.gnbs = sorted(gnbs, key=lambda g: g.id)
        self.ue_ids = list(ue_ids)
        self.ue_pos = np.array(ue_positions, dtype=float).reshape(len(ue_ids), 2)
        self.area = area
        self.policy = policy
        self.params = chan_params
        self.mac = mac
        self.rl_cfg = rl_cfg
        self.ftpa_delta = ftpa_delta
        self.dbscan_eps = dbscan_eps
        self.dbscan_minpts = dbscan_minpts
        self.n_sectors = n_sectors
        self.noise_w = mac.noise_w
        self.powers_w = [float(phy.dbm_to_watt(g.max_power_dbm)) for g in self.gnbs]
        self.lam_per_ue = offered_load_per_ue(offered_load_mbps, len(ue_ids), mac)

        ss = np.random.SeedSequence([int(seed), 0xB5])
        kids = ss.spawn(4 + len(self.gnbs))
        self.rng_mobility = np.random.default_rng(kids[0])
        self.rng_channel = np.random.default_rng(kids[1])
        self.rng_traffic = np.random.default_rng(kids[2])
        self.rng_cluster = np.random.default_rng(kids[3])
        agent_rngs = [np.random.default_rng(k) for k in kids[4:]]

        self.mobility_cfg = mobility
        self.mob_state = None
        if mobility is not None and mobility.get("model") == "random_waypoint":
            self.mob_state = init_random_waypoint(
                self.ue_pos, area, self.rng_mobility,
                speed_range=tuple(mobility.get("speed_range", (1.0, 3.0))),
                pause_range=tuple(mobility.get("pause_range", (0.0, 2.0))),
            )
            self.mob_dt = TTI_SECONDS * float(mobility.get("time_scale", 1.0))

        # Fixed candidate sets from initial geometry: a UE is a candidate of
        # its best and second-best gNB by large-scale received power.
        ls = _large_scale_rx([g.position for g in self.gnbs], self.ue_pos,
                             self.powers_w, chan_params)
        n_top = min(2, len(self.gnbs))
        cand = {g.id: [] for g in self.gnbs}
        for ui, ue in enumerate(self.ue_ids):
            best = np.argsort(-ls[:, ui])[:n_top]
            for gi in best:
                cand[self.gnbs[gi].id].append(ue)

        self.agents = {}
        if policy in ("tql", "qlearning", "expert"):
            for g, rng in zip(self.gnbs, agent_rngs):
                k_max = None if policy == "expert" else rl_cfg.k_max
                aset = rl.ActionSet(candidate_ues=tuple(sorted(cand[g.id])), k_max=k_max)
                if policy == "tql":
                    self.agents[g.id] = TqlAgent(g.id, aset, rl_cfg, rng, bundle)
                else:
                    self.agents[g.id] = QAgent(g.id, aset, rl_cfg, rng)

        self.links = {u: UeLink(u, mac.harq_processes) for u in self.ue_ids}
        self.log = MetricsLog(gnb_ids=[g.id for g in self.gnbs])
        self.tti = 0
        self.next_packet_id = 0
        self.in_flight = 0
        self.prev_avg_sinr_db = {g.id: float("-inf") for g in self.gnbs}
        self.prev_reward = {g.id: 0.0 for g in self.gnbs}
        self._geom_cache = None
        self._geom_dirty = True

    # -- channel ---------------------------------------------------------

    def _geometry_factor(self):
        if self._geom_dirty or self._geom_cache is None:
            gpos = np.array([g.position for g in self.gnbs])
            ones = np.ones((len(self.gnbs), len(self.ue_ids)), dtype=complex)
            self._geom_cache = chan.channel_matrix(
                gpos, self.ue_pos, self.params, None, alphas=ones
            )
            self._geom_dirty = False
        return self._geom_cache

    def _draw_channels(self):
        geom = self._geometry_factor()
        ng, nu = len(self.gnbs), len(self.ue_ids)
        alphas = chan.draw_alpha(self.rng_channel, self.params.alpha_variance, ng * nu)
        H = geom * alphas.reshape(ng, nu)[..., None]
        return {
            (g.id, u): H[gi, ui]
            for gi, g in enumerate(self.gnbs)
            for ui, u in enumerate(self.ue_ids)
        }

    # -- association and beams -------------------------------------------

    def _resolve_association(self, actions):
        """Returns ue_id -> gnb_id. Claims win over the large-scale default;
        multi-claim conflicts go to the claimant with the best large-scale
        received power; unclaimed UEs fall back to their best gNB."""
        ls = _large_scale_rx([g.position for g in self.gnbs], self.ue_pos,
                             self.powers_w, self.params)
        gid_index = {g.id: i for i, g in enumerate(self.gnbs)}
        claims = {u: [] for u in self.ue_ids}
        if actions:
            for gid, a_idx in actions.items():
                for u in self.agents[gid].action_set.claimed_ues(a_idx):
                    claims[u].append(gid)
        attach = {}
        for ui, u in enumerate(self.ue_ids):
            cl = claims.get(u, [])
            if len(cl) == 1:
                attach[u] = cl[0]
            elif len(cl) > 1:
                attach[u] = max(cl, key=lambda gid: ls[gid_index[gid], ui])
            else:
                attach[u] = self.gnbs[int(np.argmax(ls[:, ui]))].id
        return attach

    def _build_plan(self, attach, actions, channels):
        beams = []
        ue_index = {u: i for i, u in enumerate(self.ue_ids)}
        for gi, g in enumerate(self.gnbs):
            members = [u for u in self.ue_ids if attach[u] == g.id]
            if not members:
                continue
            member_chans = [channels[(g.id, u)] for u in members]
            if self.policy in ("tql", "qlearning"):
                want_k = self.agents[g.id].action_set.decode(actions[g.id]).k or 1
                k = max(1, min(want_k, len(members)))
                labels = clustering.kmeans_channel(member_chans, k, self.rng_cluster).labels
            elif self.policy == "expert":
                k, labels = 1, np.zeros(len(members), dtype=int)
            elif self.policy == "bsdc":
                pos = self.ue_pos[[ue_index[u] for u in members]]
                asg = clustering.compact_labels(
                    clustering.dbscan(pos, self.dbscan_eps, self.dbscan_minpts)
                )
                k, labels = asg.k, asg.labels
            else:  # baseline: fixed sectors, power split over occupied ones
                pos = self.ue_pos[[ue_index[u] for u in members]]
                asg = clustering.compact_labels(
                    clustering.sectorize(pos, g.position, self.n_sectors)
                )
                k, labels = asg.k, asg.labels
            beams.extend(
                phy.build_beams(g.id, members, member_chans, labels, k,
                                self.powers_w[gi], self.ftpa_delta)
            )
        return phy.BeamPlan(beams=beams)

    # -- transmission ----------------------------------------------------

    def _serve_harq_feedback(self, link, cur_db, counters, gid):
        """Process feedback due this TTI; fire retransmissions exactly
        harq_rtt TTIs after their NACK."""
        for p in link.processes:
            if not p.occupied or p.feedback_due_tti != self.tti:
                continue
            if p.decoded:
                p.occupied = False
                p.packet = None
                continue
            if p.attempt >= self.mac.max_retx:
                # Exhausted: already counted lost when the retx failed.
                p.occupied = False
                p.packet = None
                continue
            # NACK arrived: retransmit now, same process, same MCS.
            p.attempt += 1
            p.packet.retx_count = p.attempt
            p.send_tti = self.tti
            p.feedback_due_tti = self.tti + self.mac.harq_rtt_ttis
            p.decoded = cur_db >= p.decode_threshold_db
            if p.decoded:
                self._deliver(p.packet, counters, gid)
            elif p.attempt >= self.mac.max_retx:
                self._lose(p.packet, counters, gid)

    def _deliver(self, pkt, counters, gid):
        pkt.delivery_tti = self.tti
        latency_s = (self.tti - pkt.arrival_tti + 1) * TTI_SECONDS
        self.log.latency.append((pkt.id, pkt.ue_id, pkt.arrival_tti, self.tti, latency_s))
        self.log.delivered_total += 1
        self.log.delivered_bits_total += pkt.size_bytes * 8
        counters[gid]["delivered_bits"] += pkt.size_bytes * 8
        self.in_flight -= 1

    def _lose(self, pkt, counters, gid):
        self.log.lost_total += 1
        counters[gid]["lost_packets"] += 1
        self.in_flight -= 1

    def _transmit(self, attach, reports, counters):
        for u in self.ue_ids:
            link = self.links[u]
            gid = attach[u]
            rep = reports.get(u)
            # Decode checks run on the true instantaneous SINR; the feedback
            # the estimator sees saturates at the CQI ceiling.
            cur_db = rep.sinr_db if rep is not None else float("-inf")
            meas_db = min(cur_db, self.mac.report_cap_db)
            basis = link.ewma_sinr_db if link.ewma_sinr_db is not None else meas_db
            sched_db = basis - self.mac.la_backoff_db
            self._serve_harq_feedback(link, cur_db, counters, gid)
            se = link_adaptation(float(phy.db_to_linear(sched_db)), self.mac)
            if se > 0.0:
                budget = se * self.mac.bandwidth_hz * TTI_SECONDS
                thresh = sched_db - self.mac.decode_margin_db
                while link.queue and budget >= self.mac.packet_bits:
                    proc = link.free_process()
                    if proc is None:
                        link.hol_blocked_ttis += 1
                        break
                    pkt = link.queue.popleft()
                    budget -= self.mac.packet_bits
                    self.in_flight += 1
                    proc.occupied = True
                    proc.packet = pkt
                    proc.send_tti = self.tti
                    proc.feedback_due_tti = self.tti + self.mac.harq_rtt_ttis
                    proc.attempt = 0
                    proc.decode_threshold_db = thresh
                    proc.decoded = cur_db >= thresh
                    if proc.decoded:
                        self._deliver(pkt, counters, gid)
            # Estimator update after scheduling: feedback of this TTI.
            if rep is not None:
                c = self.mac.ewma_coef
                link.ewma_sinr_db = (
                    meas_db if link.ewma_sinr_db is None
                    else (1.0 - c) * link.ewma_sinr_db + c * meas_db
                )

    # -- the TTI ---------------------------------------------------------

    def run_tti(self):
        # (1) mobility
        if self.mob_state is not None:
            self.mob_state = step_random_waypoint(self.mob_state, self.mob_dt,
                                                  self.rng_mobility)
            self.ue_pos = self.mob_state.positions.copy()
            self._geom_dirty = True
        # (2) channel redraw
        channels = self._draw_channels()
        # (3) agents: observe, update, select
        actions = {}
        states = {}
        for g in self.gnbs:
            if g.id in self.agents:
                s, a = self.agents[g.id].step(self.prev_avg_sinr_db[g.id],
                                              self.prev_reward[g.id])
                states[g.id], actions[g.id] = s, a
            else:
                states[g.id] = rl.observe_state(self.prev_avg_sinr_db[g.id],
                                                self.rl_cfg.sinr_threshold_db)
        # (4) association and beam plan
        attach = self._resolve_association(actions)
        plan = self._build_plan(attach, actions, channels)
        # (5) traffic arrivals
        arrivals = generate_traffic(self.lam_per_ue, self.rng_traffic, len(self.ue_ids))
        for ui, u in enumerate(self.ue_ids):
            for _ in range(int(arrivals[ui])):
                self.links[u].queue.append(
                    Packet(id=self.next_packet_id, ue_id=u,
                           size_bytes=self.mac.packet_bytes, arrival_tti=self.tti)
                )
                self.next_packet_id += 1
                self.log.arrivals_total += 1
        # (6) transmit + HARQ feedback
        reports = phy.sinr_all(plan, channels, self.noise_w)
        counters = {g.id: {"delivered_bits": 0, "lost_packets": 0} for g in self.gnbs}
        self._transmit(attach, reports, counters)
        # (7) reward from this TTI's SINRs, consumed at the next update
        per_gnb = {}
        cap = self.mac.report_cap_db
        for g in self.gnbs:
            served = [u for u in self.ue_ids if attach[u] == g.id]
            avg_db = rl.avg_sinr(
                [min(reports[u].sinr_db, cap) for u in served if u in reports]
            )
            r = rl.reward(avg_db, self.rl_cfg.sinr_threshold_db)
            self.prev_avg_sinr_db[g.id] = avg_db
            self.prev_reward[g.id] = r
            per_gnb[g.id] = {
                "state": states[g.id],
                "action": actions.get(g.id, -1),
                "reward": r,
                "delivered_bits": counters[g.id]["delivered_bits"],
                "lost_packets": counters[g.id]["lost_packets"],
                "mean_sinr_db": avg_db,
            }
        # (8) metrics
        self.log.append(self.tti, per_gnb)
        self.tti += 1

    def run(self, n_ttis):
        for _ in range(n_ttis):
            self.run_tti()
        return self.log

    def ledger(self):
        """Exact packet conservation counts at the current TTI boundary."""
        queued = sum(len(l.queue) for l in self.links.values())
        return {
            "arrivals": self.log.arrivals_total,
            "delivered": self.log.delivered_total,
            "lost": self.log.lost_total,
            "queued": queued,
            "in_flight": self.in_flight,
        }

    def ledger_balanced(self):
        led = self.ledger()
        return led["arrivals"] == (led["delivered"] + led["lost"]
                                   + led["queued"] + led["in_flight"])


def offered_load_per_ue(load_mbps, n_ues, mac=MacConfig()):
    """Equal-split Poisson rate in packets per UE per TTI for a total
    offered network load in Mbps."""
    if load_mbps < 0:
        raise ConfigurationError("offered load must be >= 0")
    if n_ues == 0 or load_mbps == 0:
        return 0.0
    bits_per_tti = load_mbps * 1e6 * TTI_SECONDS
    return bits_per_tti / mac.packet_bits / n_ues
