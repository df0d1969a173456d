"""Experiment orchestration: scenario construction, offline expert training,
multi-seed/multi-load sweeps, confidence intervals and CSV artifacts."""

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict, replace

import numpy as np
import yaml
from scipy import stats

from . import macsim, rl, transfer
from .channel import ChannelParams
from .errors import ConfigurationError
from .geometry import Gnb, PcpDeployment, Rect, Topology, Ue, deploy_pcp
from .macsim import MacConfig, RlConfig, Simulation, TTI_SECONDS

MOBILITY_MODELS = ("stationary", "random_waypoint")


@dataclass(frozen=True)
class ScenarioConfig:
    n_expert_gnbs: int = 2
    n_learner_gnbs: int = 2
    expert_users_per_cluster: int = 3
    expert_clusters_per_gnb: int = 1
    learner_users_per_cluster: int = 6
    learner_clusters: int = 2
    cluster_radius_m: float = 30.0
    inter_gnb_distance_m: float = 150.0
    group_separation_m: float = 300.0
    area_margin_m: float = 110.0
    # Each cluster's parent lands at a uniform random direction and distance
    # (within this range) from its cell's gNB, so deployments keep a
    # per-cell structure with seed-varying angular spread.
    cluster_offset_range_m: tuple = (35.0, 75.0)
    n_antennas: int = 16
    max_power_dbm: float = 28.0


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    channel: ChannelParams = field(default_factory=ChannelParams)
    mac: MacConfig = field(default_factory=MacConfig)
    rl: RlConfig = field(default_factory=RlConfig)
    policy: str = "qlearning"
    mobility_model: str = "stationary"
    mobility_speed_range: tuple = (1.0, 3.0)
    mobility_pause_range: tuple = (0.0, 2.0)
    mobility_time_scale: float = 1000.0
    dbscan_eps_m: float = 40.0
    dbscan_minpts: int = 1
    n_sectors: int = 3
    ftpa_delta: float = 1.0
    offered_loads_mbps: list = field(default_factory=lambda: [4.0, 8.0, 12.0, 16.0])
    seeds: list = field(default_factory=lambda: list(range(1, 11)))
    tti_count: int = 2000
    expert_tti_count: int = 6000
    workers: int = 1
    bundle_path: str | None = None
    out_dir: str = "results"

    def validate(self):
        if self.policy not in macsim.POLICIES:
            raise ConfigurationError(
                f"policy: unknown value {self.policy!r}, expected one of {macsim.POLICIES}"
            )
        if self.mobility_model not in MOBILITY_MODELS:
            raise ConfigurationError(
                f"mobility_model: unknown value {self.mobility_model!r}"
            )
        if not self.seeds:
            raise ConfigurationError("seeds: must be nonempty")
        if not self.offered_loads_mbps or any(l <= 0 for l in self.offered_loads_mbps):
            raise ConfigurationError("offered_loads_mbps: must be nonempty and > 0")
        if self.tti_count < 1:
            raise ConfigurationError("tti_count: must be >= 1")
        if self.policy == "tql" and not self.bundle_path:
            raise ConfigurationError(
                "bundle_path: policy tql needs a trained expert bundle "
                "(run train-expert first)"
            )
        return self


@dataclass(frozen=True)
class GnbGroup:
    gnbs: list
    ue_ids: list
    ue_positions: np.ndarray
    area: Rect


@dataclass(frozen=True)
class Scenario:
    topology: Topology
    learner: GnbGroup
    expert: GnbGroup


def _group_area(positions, margin):
    p = np.asarray(positions, dtype=float).reshape(-1, 2)
    return Rect(
        float(p[:, 0].min() - margin), float(p[:, 1].min() - margin),
        float(p[:, 0].max() + margin), float(p[:, 1].max() + margin),
    )


def _cluster_box(gnb_pos, offset_range, radius, rng):
    """Degenerate parent rectangle at a random offset from the gNB: after the
    radius inset the PCP parent lands exactly at the drawn offset point."""
    lo, hi = offset_range
    dist = lo + (hi - lo) * rng.random()
    phi = 2.0 * np.pi * rng.random()
    cx = gnb_pos[0] + dist * np.cos(phi)
    cy = gnb_pos[1] + dist * np.sin(phi)
    return Rect(cx - radius, cy - radius, cx + radius, cy + radius)


def build_scenario(sc, seed):
    """Place both gNB groups and draw the clustered user deployment.

    Learner gNBs sit on a line at the configured inter-gNB spacing; the
    expert group repeats the pattern `group_separation_m` further out, so
    the two groups never share coverage. Clusters are dealt round-robin to
    the cells: cluster i's parent sits at a random offset from gNB i mod n.
    """
    d = sc.inter_gnb_distance_m
    lg_pos = [np.array([i * d, 0.0]) for i in range(sc.n_learner_gnbs)]
    x0 = (sc.n_learner_gnbs - 1) * d + sc.group_separation_m
    eg_pos = [np.array([x0 + i * d, 0.0]) for i in range(sc.n_expert_gnbs)]

    margin = max(sc.area_margin_m,
                 sc.cluster_offset_range_m[1] + sc.cluster_radius_m)
    learner_area = _group_area(lg_pos, margin)
    expert_area = _group_area(eg_pos, margin)

    n_lc = sc.learner_clusters
    n_ec = sc.n_expert_gnbs * sc.expert_clusters_per_gnb
    ss = np.random.SeedSequence([int(seed), 0xDE])
    kid = ss.spawn(n_lc + n_ec + 1)
    offset_rng = np.random.default_rng(kid[n_lc + n_ec])
    learner_parts = [
        deploy_pcp(1, sc.learner_users_per_cluster, sc.cluster_radius_m,
                   _cluster_box(lg_pos[i % sc.n_learner_gnbs],
                                sc.cluster_offset_range_m,
                                sc.cluster_radius_m, offset_rng),
                   kid[i])
        for i in range(n_lc)
    ]
    expert_parts = [
        deploy_pcp(1, sc.expert_users_per_cluster, sc.cluster_radius_m,
                   _cluster_box(eg_pos[i % sc.n_expert_gnbs],
                                sc.cluster_offset_range_m,
                                sc.cluster_radius_m, offset_rng),
                   kid[n_lc + i])
        for i in range(n_ec)
    ]
    learner_dep = PcpDeployment(
        centers=np.concatenate([p.centers for p in learner_parts]),
        positions=np.concatenate([p.positions for p in learner_parts]),
        parent=np.concatenate(
            [p.parent + i for i, p in enumerate(learner_parts)]
        ),
    )
    expert_dep = PcpDeployment(
        centers=np.concatenate([p.centers for p in expert_parts]),
        positions=np.concatenate([p.positions for p in expert_parts]),
        parent=np.concatenate(
            [p.parent + i for i, p in enumerate(expert_parts)]
        ),
    )

    gnbs = [
        Gnb(id=i, role="learner", position=p, n_antennas=sc.n_antennas,
            max_power_dbm=sc.max_power_dbm)
        for i, p in enumerate(lg_pos)
    ] + [
        Gnb(id=sc.n_learner_gnbs + i, role="expert", position=p,
            n_antennas=sc.n_antennas, max_power_dbm=sc.max_power_dbm)
        for i, p in enumerate(eg_pos)
    ]
    learner_ues = [Ue(id=i, position=learner_dep.positions[i])
                   for i in range(len(learner_dep.positions))]
    n_l = len(learner_ues)
    expert_ues = [Ue(id=n_l + i, position=expert_dep.positions[i])
                  for i in range(len(expert_dep.positions))]

    area = Rect(
        min(learner_area.xmin, expert_area.xmin),
        min(learner_area.ymin, expert_area.ymin),
        max(learner_area.xmax, expert_area.xmax),
        max(learner_area.ymax, expert_area.ymax),
    )
    topo = Topology(gnbs=gnbs, ues=learner_ues + expert_ues, area=area,
                    inter_gnb_distance=d)
    topo.validate()
    return Scenario(
        topology=topo,
        learner=GnbGroup(
            gnbs=[g for g in gnbs if g.role == "learner"],
            ue_ids=[u.id for u in learner_ues],
            ue_positions=np.array([u.position for u in learner_ues]).reshape(-1, 2),
            area=learner_area,
        ),
        expert=GnbGroup(
            gnbs=[g for g in gnbs if g.role == "expert"],
            ue_ids=[u.id for u in expert_ues],
            ue_positions=np.array([u.position for u in expert_ues]).reshape(-1, 2),
            area=expert_area,
        ),
    )


def make_simulation(cfg, policy, seed, load_mbps, bundle=None, group=None):
    scenario = build_scenario(cfg.scenario, seed)
    if group is None:
        group = scenario.expert if policy == "expert" else scenario.learner
    mobility = None
    if cfg.mobility_model == "random_waypoint" and policy != "expert":
        mobility = {
            "model": "random_waypoint",
            "speed_range": cfg.mobility_speed_range,
            "pause_range": cfg.mobility_pause_range,
            "time_scale": cfg.mobility_time_scale,
        }
    return Simulation(
        group.gnbs, group.ue_ids, group.ue_positions, group.area,
        policy=policy, chan_params=cfg.channel, mac=cfg.mac, rl_cfg=cfg.rl,
        seed=seed, offered_load_mbps=load_mbps, bundle=bundle, mobility=mobility,
        dbscan_eps=cfg.dbscan_eps_m, dbscan_minpts=cfg.dbscan_minpts,
        n_sectors=cfg.n_sectors, ftpa_delta=cfg.ftpa_delta,
    )


# -- expert training -------------------------------------------------------

CONVERGENCE_WINDOW = 500
CONVERGENCE_SLOPE = 1e-4


def reward_slope(rewards, window=CONVERGENCE_WINDOW):
    """Per-TTI slope between the last two disjoint reward windows."""
    if len(rewards) < 2 * window:
        return float("inf")
    recent = float(np.mean(rewards[-window:]))
    previous = float(np.mean(rewards[-2 * window:-window]))
    return (recent - previous) / window


def train_expert(cfg, seed=1, out_path=None):
    """Offline association-only Q-learning on the expert group.

    Runs until the sliding-window mean-reward slope flattens or the TTI
    budget is spent; serializes the lowest-id expert gNB's table with the
    action mapping so learners can import it. Emits the bundle with a
    warning flag when the budget ran out before convergence.

    Training uses optimistic initialization (the return ceiling 1/(1-gamma))
    so the whole association action space gets visited; the bundle must hold
    a genuinely converged table, not a first-action lock-in.
    """
    cfg_opt = replace(cfg, rl=replace(cfg.rl, init_q=1.0 / (1.0 - cfg.rl.gamma)))
    sim = make_simulation(cfg_opt, "expert", seed, load_mbps=0.0)
    converged = False
    check_every = 100
    warmup = max(4 * CONVERGENCE_WINDOW, cfg.expert_tti_count // 4)
    for t in range(cfg.expert_tti_count):
        sim.run_tti()
        if (t + 1) % check_every == 0 and t + 1 >= warmup:
            if abs(reward_slope(sim.log.reward_curve())) < CONVERGENCE_SLOPE:
                converged = True
                break
    first = sim.gnbs[0].id
    agent = sim.agents[first]
    bundle = transfer.TransferBundle(
        expert_table=agent.table.copy(),
        expert_actions=agent.action_set,
        converged=converged,
    )
    if out_path:
        transfer.save_bundle(out_path, bundle)
    return bundle, sim.log


# -- experiment execution --------------------------------------------------


@dataclass
class RunResult:
    policy: str
    load_mbps: float
    seed: int
    sum_rate_mbps: float
    lost_packets: int
    arrivals: int
    loss_pct: float
    cum_reward: np.ndarray
    latency_s: list
    metrics_path: str | None = None
    latency_path: str | None = None


def _execute_run(cfg, policy, seed, load, bundle, out_dir):
    sim = make_simulation(cfg, policy, seed, load, bundle=bundle)
    log = sim.run(cfg.tti_count)
    sum_rate = log.delivered_bits_total / (cfg.tti_count * TTI_SECONDS) / 1e6
    loss_pct = 100.0 * log.lost_total / log.arrivals_total if log.arrivals_total else 0.0
    metrics_path = latency_path = None
    if out_dir:
        run_dir = os.path.join(out_dir, policy, f"load_{load:g}", f"seed_{seed}")
        os.makedirs(run_dir, exist_ok=True)
        metrics_path = os.path.join(run_dir, "metrics.csv")
        latency_path = os.path.join(run_dir, "latency.csv")
        log.write_metrics_csv(metrics_path)
        log.write_latency_csv(latency_path)
    return RunResult(
        policy=policy, load_mbps=load, seed=seed, sum_rate_mbps=sum_rate,
        lost_packets=log.lost_total, arrivals=log.arrivals_total,
        loss_pct=loss_pct, cum_reward=log.cumulative_mean_reward(),
        latency_s=[rec[4] for rec in log.latency],
        metrics_path=metrics_path, latency_path=latency_path,
    )


def _execute_run_star(args):
    return _execute_run(*args)


def mean_ci(samples, confidence=0.95):
    """Sample mean and Student-t half-width of the confidence interval."""
    x = np.asarray(samples, dtype=float)
    m = float(x.mean())
    if x.size < 2:
        return m, 0.0
    half = float(stats.t.ppf(0.5 + confidence / 2.0, x.size - 1)
                 * x.std(ddof=1) / np.sqrt(x.size))
    return m, half


@dataclass
class LoadAggregate:
    load_mbps: float
    n_runs: int
    sum_rate_mbps_mean: float
    sum_rate_mbps_ci95: float
    loss_packets_mean: float
    loss_packets_ci95: float
    loss_pct_mean: float
    loss_pct_ci95: float


@dataclass
class AggregateResult:
    policy: str
    per_load: list
    reward_curves: dict  # load -> mean cumulative reward over seeds
    latency: dict  # load -> pooled sorted samples
    runs: list


def run_experiment(cfg, bundle=None, write_csv=True):
    """Execute |seeds| x |loads| runs of cfg.policy and aggregate them."""
    cfg.validate()
    if cfg.policy == "tql" and bundle is None:
        bundle = transfer.load_bundle(cfg.bundle_path)
    out_dir = cfg.out_dir if write_csv else None
    jobs = [(cfg, cfg.policy, seed, load, bundle, out_dir)
            for load in cfg.offered_loads_mbps for seed in cfg.seeds]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_execute_run_star, jobs))
    else:
        results = [_execute_run_star(j) for j in jobs]
    results.sort(key=lambda r: (r.load_mbps, r.seed))

    per_load, curves, latency = [], {}, {}
    for load in cfg.offered_loads_mbps:
        runs = [r for r in results if r.load_mbps == load]
        rate_m, rate_c = mean_ci([r.sum_rate_mbps for r in runs])
        loss_m, loss_c = mean_ci([r.lost_packets for r in runs])
        pct_m, pct_c = mean_ci([r.loss_pct for r in runs])
        per_load.append(LoadAggregate(load, len(runs), rate_m, rate_c,
                                      loss_m, loss_c, pct_m, pct_c))
        curves[load] = np.mean([r.cum_reward for r in runs], axis=0)
        latency[load] = sorted(s for r in runs for s in r.latency_s)

    agg = AggregateResult(policy=cfg.policy, per_load=per_load,
                          reward_curves=curves, latency=latency, runs=results)
    if write_csv:
        write_aggregate_csv(agg, cfg.out_dir)
    return agg


def write_aggregate_csv(agg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"aggregate_{agg.policy}.csv")
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["policy", "load_mbps", "n_runs",
                    "sum_rate_mbps_mean", "sum_rate_mbps_ci95",
                    "loss_packets_mean", "loss_packets_ci95",
                    "loss_pct_mean", "loss_pct_ci95"])
        for row in agg.per_load:
            w.writerow([agg.policy, repr(row.load_mbps), row.n_runs,
                        repr(row.sum_rate_mbps_mean), repr(row.sum_rate_mbps_ci95),
                        repr(row.loss_packets_mean), repr(row.loss_packets_ci95),
                        repr(row.loss_pct_mean), repr(row.loss_pct_ci95)])
    for load, curve in agg.reward_curves.items():
        cpath = os.path.join(out_dir, f"convergence_{agg.policy}_load_{load:g}.csv")
        with open(cpath, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["tti", "mean_cum_reward"])
            for t, v in enumerate(curve):
                w.writerow([t, repr(float(v))])
    for load, samples in agg.latency.items():
        lpath = os.path.join(out_dir, f"latency_{agg.policy}_load_{load:g}.csv")
        with open(lpath, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["latency_s"])
            for s in samples:
                w.writerow([repr(float(s))])
    return path


# -- configuration documents ------------------------------------------------

def default_config_dict():
    return {
        "scenario": asdict(ScenarioConfig()),
        "channel": asdict(ChannelParams()),
        "mac": asdict(MacConfig()),
        "rl": asdict(RlConfig()),
        "policy": "qlearning",
        "mobility": {
            "model": "stationary",
            "speed_range": [1.0, 3.0],
            "pause_range": [0.0, 2.0],
            "time_scale": 1000.0,
        },
        "bsdc": {"eps_m": 40.0, "minpts": 1},
        "baseline": {"n_sectors": 3},
        "ftpa_delta": 1.0,
        "offered_loads_mbps": [4.0, 8.0, 12.0, 16.0],
        "seeds": list(range(1, 11)),
        "tti_count": 2000,
        "expert_tti_count": 6000,
        "workers": 1,
        "bundle_path": None,
        "out_dir": "results",
    }


def _build_section(cls, d, name):
    try:
        return cls(**d)
    except TypeError as e:
        raise ConfigurationError(f"{name}: {e}") from None


def config_from_dict(doc):
    doc = dict(doc or {})
    mob = doc.get("mobility", {}) or {}
    bsdc = doc.get("bsdc", {}) or {}
    base = doc.get("baseline", {}) or {}
    try:
        cfg = ExperimentConfig(
            scenario=_build_section(ScenarioConfig, doc.get("scenario", {}), "scenario"),
            channel=_build_section(ChannelParams, doc.get("channel", {}), "channel"),
            mac=_build_section(MacConfig, doc.get("mac", {}), "mac"),
            rl=_build_section(RlConfig, doc.get("rl", {}), "rl"),
            policy=doc.get("policy", "qlearning"),
            mobility_model=mob.get("model", "stationary"),
            mobility_speed_range=tuple(mob.get("speed_range", (1.0, 3.0))),
            mobility_pause_range=tuple(mob.get("pause_range", (0.0, 2.0))),
            mobility_time_scale=float(mob.get("time_scale", 1000.0)),
            dbscan_eps_m=float(bsdc.get("eps_m", 40.0)),
            dbscan_minpts=int(bsdc.get("minpts", 1)),
            n_sectors=int(base.get("n_sectors", 3)),
            ftpa_delta=float(doc.get("ftpa_delta", 1.0)),
            offered_loads_mbps=list(doc.get("offered_loads_mbps", [4.0, 8.0, 12.0, 16.0])),
            seeds=list(doc.get("seeds", range(1, 11))),
            tti_count=int(doc.get("tti_count", 2000)),
            expert_tti_count=int(doc.get("expert_tti_count", 6000)),
            workers=int(doc.get("workers", 1)),
            bundle_path=doc.get("bundle_path"),
            out_dir=doc.get("out_dir", "results"),
        )
    except (ValueError, TypeError) as e:
        raise ConfigurationError(str(e)) from None
    return cfg


def load_config(path):
    try:
        with open(path) as f:
            doc = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigurationError(f"malformed config document: {e}") from None
    if not isinstance(doc, dict):
        raise ConfigurationError("config document must be a mapping")
    return config_from_dict(doc)
