"""NOMA power factors, SIC ordering, SINR decomposition and Shannon sum rate.

A transmission plan ("beam plan") fixes, per gNB: its beams, each beam's
members, matched beamforming vector, transmit power and per-member NOMA
factors with a SIC decoding order. The SINR of a served UE decomposes into
signal, residual intra-beam NOMA interference (I1) and inter-beam
interference from every other beam of the same group (I2).
"""

from dataclasses import dataclass

import numpy as np

from .channel import beamforming_for_cluster, effective_gain
from .errors import DomainError


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(x)


def dbm_to_watt(dbm):
    return 10.0 ** (np.asarray(dbm, dtype=float) / 10.0) / 1000.0


def noise_power_w(bandwidth_hz, noise_figure_db=7.0, thermal_dbm_hz=-174.0):
    """Receiver noise power over the full band, in watts."""
    dbm = thermal_dbm_hz + 10.0 * np.log10(bandwidth_hz) + noise_figure_db
    return float(dbm_to_watt(dbm))


def noma_power_factors(effective_gains, delta_f=1.0):
    """Fractional transmit power allocation: beta_u = g_u^-d / sum g_i^-d.

    Weaker users receive larger factors; the factors of one beam sum to 1.
    """
    g = np.asarray(effective_gains, dtype=float)
    if g.size == 0:
        raise DomainError("no gains")
    if np.any(g <= 0.0):
        raise DomainError("effective gains must be > 0")
    raw = g ** (-delta_f)
    return raw / raw.sum()


def sic_order(effective_gains, ue_ids=None):
    """Decoding order per member: ascending effective gain gets ascending
    order index; ties break by UE id ascending.

    A user is interfered only by members with a larger order index (the
    stronger users, whose signals it cannot cancel).
    """
    g = np.asarray(effective_gains, dtype=float)
    n = g.size
    if ue_ids is None:
        ue_ids = np.arange(n)
    ids = np.asarray(ue_ids)
    by_gain = np.lexsort((ids, g))
    order = np.empty(n, dtype=int)
    order[by_gain] = np.arange(n)
    return order


@dataclass(frozen=True)
class Beam:
    gnb_id: int
    beam_id: int
    members: tuple  # UE ids
    w: np.ndarray  # (M,) unit norm
    power_w: float
    betas: np.ndarray  # (n_members,), sums to 1
    order: np.ndarray  # (n_members,) SIC decoding order

    def member_index(self, ue_id):
        try:
            return self.members.index(ue_id)
        except ValueError:
            raise DomainError(f"UE {ue_id} not in beam ({self.gnb_id},{self.beam_id})") from None


@dataclass
class BeamPlan:
    """All concurrently transmitting beams of one gNB group for one TTI."""

    beams: list

    def serving_beam(self, ue_id):
        for b in self.beams:
            if ue_id in b.members:
                return b
        raise DomainError(f"UE {ue_id} served by no beam")

    def gnb_beams(self, gnb_id):
        return [b for b in self.beams if b.gnb_id == gnb_id]

    def validate(self, max_power_w=None, tol=1e-9):
        for b in self.beams:
            if abs(float(b.betas.sum()) - 1.0) > tol:
                raise DomainError("NOMA factors of a beam must sum to 1")
            if sorted(b.order) != list(range(len(b.members))):
                raise DomainError("SIC order must be a permutation of beam members")
        if max_power_w is not None:
            per_gnb = {}
            for b in self.beams:
                per_gnb[b.gnb_id] = per_gnb.get(b.gnb_id, 0.0) + b.power_w
            for g, p in per_gnb.items():
                if p > max_power_w * (1.0 + 1e-9):
                    raise DomainError(f"gNB {g} beam powers exceed the power budget")


def build_beams(gnb_id, member_ids, member_channels, labels, k, max_power_w, ftpa_delta=1.0):
    """Assemble the beams of one gNB from a cluster assignment.

    Power splits equally across the k beams; per-beam NOMA factors and SIC
    order come from the members' effective beamformed gains.
    """
    beams = []
    if k == 0:
        return beams
    p_beam = max_power_w / k
    for ci in range(k):
        idx = [i for i, lab in enumerate(labels) if lab == ci]
        if not idx:
            continue
        chans = [member_channels[i] for i in idx]
        w = beamforming_for_cluster(chans)
        gains = np.array([effective_gain(h, w) for h in chans])
        beams.append(
            Beam(
                gnb_id=gnb_id,
                beam_id=ci,
                members=tuple(member_ids[i] for i in idx),
                w=w,
                power_w=p_beam,
                betas=noma_power_factors(gains, ftpa_delta),
                order=sic_order(gains, [member_ids[i] for i in idx]),
            )
        )
    return beams


@dataclass(frozen=True)
class SinrReport:
    """Linear-domain SINR and its additive components in watts."""

    signal_w: float
    intra_w: float  # I1: residual NOMA interference inside the serving beam
    inter_w: float  # I2: all other beams of the group
    noise_w: float

    @property
    def sinr(self):
        return self.signal_w / (self.intra_w + self.inter_w + self.noise_w)

    @property
    def sinr_db(self):
        return float(linear_to_db(self.sinr))


def _report(ue_id, beam, plan, channels, noise_w):
    i = beam.member_index(ue_id)
    h_serv = channels[(beam.gnb_id, ue_id)]
    g_serv = effective_gain(h_serv, beam.w)
    signal = beam.power_w * float(beam.betas[i]) * g_serv
    later = [j for j in range(len(beam.members)) if j != i and beam.order[j] > beam.order[i]]
    i1 = beam.power_w * g_serv * float(beam.betas[later].sum()) if later else 0.0
    i2 = 0.0
    for other in plan.beams:
        if other is beam:
            continue
        h = channels[(other.gnb_id, ue_id)]
        i2 += other.power_w * effective_gain(h, other.w)
    return SinrReport(signal_w=signal, intra_w=i1, inter_w=i2, noise_w=noise_w)


def sinr_learner(ue_id, beam, plan, channels, noise_w):
    """SINR report of a UE served by a learner beam.

    signal = P_k * beta_u * |h^H w|^2; I1 covers same-beam members decoded
    after this UE; I2 sums P_m * |h_m^H w_m|^2 over every other beam of the
    group, same cell or not.
    """
    return _report(ue_id, beam, plan, channels, noise_w)


def sinr_expert(ue_id, gnb_id, plan, channels, noise_w):
    """SINR report of a UE served by an expert gNB's single beam.

    Interference comes from the other expert gNBs' beams; the serving beam
    also carries NOMA factors, so the same residual intra-beam term applies.
    """
    beams = plan.gnb_beams(gnb_id)
    if len(beams) != 1:
        raise DomainError(f"expert gNB {gnb_id} must run exactly one beam")
    return _report(ue_id, beams[0], plan, channels, noise_w)


def sinr_all(plan, channels, noise_w):
    """Reports for every served UE, keyed by UE id."""
    out = {}
    for beam in plan.beams:
        for ue_id in beam.members:
            out[ue_id] = _report(ue_id, beam, plan, channels, noise_w)
    return out


def sum_rate(sinrs_linear, bandwidth_hz):
    """Shannon aggregate: sum of bw * log2(1 + sinr), bits per second."""
    s = np.asarray(sinrs_linear, dtype=float)
    if s.size == 0:
        return 0.0
    if np.any(s < 0):
        raise DomainError("SINR must be >= 0")
    return float(np.sum(bandwidth_hz * np.log2(1.0 + s)))
