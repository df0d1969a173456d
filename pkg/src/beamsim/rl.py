"""Tabular Q-learning core: two-level SINR state, sigmoid reward, Q-update,
epsilon-greedy selection and the packed association/beam-count action code."""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

S0 = 0  # average SINR meets the threshold
S1 = 1  # below threshold
N_STATES = 2

SNAPSHOT_VERSION = 1


def observe_state(avg_sinr_db, threshold_db):
    """s0 iff the average SINR meets the threshold (boundary inclusive)."""
    return S0 if avg_sinr_db >= threshold_db else S1


def avg_sinr(per_ue_sinr_db):
    """Arithmetic mean in the dB domain; -inf sentinel when nobody is served."""
    vals = np.asarray(per_ue_sinr_db, dtype=float)
    if vals.size == 0:
        return float("-inf")
    return float(vals.mean())


def reward(avg_sinr_db, threshold_db):
    """Sigmoid reward 1 / (1 + exp(-0.5*(avg - 0.5*threshold))), in (0, 1).

    The -inf sentinel (no served UE) maps to the floor 0.0.
    """
    if avg_sinr_db == float("-inf"):
        return 0.0
    x = -0.5 * (avg_sinr_db - 0.5 * threshold_db)
    # Guard exp overflow for very negative averages.
    if x > 700.0:
        return 0.0
    return 1.0 / (1.0 + np.exp(x))


@dataclass(frozen=True)
class ActionCode:
    """Joint action: one association bit per candidate UE plus, for learner
    gNBs, the number of beams k in 1..k_max. Expert actions carry bits only.

    Packed index = (k - 1) * 2^n_candidates + bits, with candidate i on bit i.
    """

    assoc_bits: tuple  # 0/1 per candidate UE
    k: int | None = None  # None for expert actions

    @property
    def n_associated(self):
        return int(sum(self.assoc_bits))


@dataclass(frozen=True)
class ActionSet:
    """Enumerates the joint action space of one agent."""

    candidate_ues: tuple  # UE ids, ascending; bit i refers to candidate i
    k_max: int | None = None  # None: association-only (expert)

    @property
    def n_candidates(self):
        return len(self.candidate_ues)

    @property
    def n_actions(self):
        n = 2 ** self.n_candidates
        return n * self.k_max if self.k_max else n

    def encode(self, action):
        bits = 0
        for i, b in enumerate(action.assoc_bits):
            if b:
                bits |= 1 << i
        if self.k_max is None:
            if action.k is not None:
                raise DomainError("expert actions carry no beam count")
            return bits
        if not 1 <= action.k <= self.k_max:
            raise DomainError(f"beam count {action.k} outside 1..{self.k_max}")
        return (action.k - 1) * (2 ** self.n_candidates) + bits

    def decode(self, index):
        if not 0 <= index < self.n_actions:
            raise DomainError(f"action index {index} out of range")
        n = 2 ** self.n_candidates
        if self.k_max is None:
            k, bits = None, index
        else:
            k, bits = index // n + 1, index % n
        assoc = tuple((bits >> i) & 1 for i in range(self.n_candidates))
        return ActionCode(assoc_bits=assoc, k=k)

    def claimed_ues(self, index):
        a = self.decode(index)
        return [u for u, b in zip(self.candidate_ues, a.assoc_bits) if b]

    def to_dict(self):
        return {
            "candidate_ues": list(self.candidate_ues),
            "k_max": self.k_max,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(candidate_ues=tuple(d["candidate_ues"]), k_max=d["k_max"])


class QTable:
    """Dense state x action value table with per-cell visit counts."""

    def __init__(self, n_states, n_actions):
        if n_states < 1 or n_actions < 1:
            raise DomainError("QTable dimensions must be positive")
        self.values = np.zeros((n_states, n_actions))
        self.visits = np.zeros((n_states, n_actions), dtype=np.int64)

    @property
    def n_states(self):
        return self.values.shape[0]

    @property
    def n_actions(self):
        return self.values.shape[1]

    def copy(self):
        out = QTable(self.n_states, self.n_actions)
        out.values = self.values.copy()
        out.visits = self.visits.copy()
        return out


def q_update(table, s, a, r, s_next, alpha, gamma):
    """Temporal-difference update of a single cell:
    q(s,a) += alpha * (r + gamma * max_a' q(s_next, a') - q(s,a)).
    """
    if not 0.0 <= alpha <= 1.0:
        raise DomainError("alpha outside [0, 1]")
    if not 0.0 <= gamma < 1.0:
        raise DomainError("gamma outside [0, 1)")
    if not (0 <= s < table.n_states and 0 <= s_next < table.n_states):
        raise DomainError("state index out of range")
    if not 0 <= a < table.n_actions:
        raise DomainError("action index out of range")
    best_next = float(table.values[s_next].max())
    table.values[s, a] += alpha * (r + gamma * best_next - table.values[s, a])
    table.visits[s, a] += 1
    return table


def epsilon_greedy(row, epsilon, rng):
    """Pick an action index from one row of values: uniform with probability
    epsilon, otherwise the argmax with lowest-index tie-break."""
    if not 0.0 <= epsilon <= 1.0:
        raise DomainError("epsilon outside [0, 1]")
    if rng.random() < epsilon:
        return int(rng.integers(len(row)))
    return int(np.argmax(row))


def select_action(table, s, epsilon, rng):
    """Epsilon-greedy over the table's row for state s; returns the index."""
    if not 0 <= s < table.n_states:
        raise DomainError("state index out of range")
    return epsilon_greedy(table.values[s], epsilon, rng)


def save_snapshot(path, table, action_set, extra=None):
    """Serialize a Q-table with its action-set descriptor (JSON, versioned)."""
    doc = {
        "version": SNAPSHOT_VERSION,
        "n_states": table.n_states,
        "n_actions": table.n_actions,
        "action_set": action_set.to_dict(),
        "values": [[float(v) for v in row] for row in table.values],
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as f:
        json.dump(doc, f, indent=None, separators=(",", ":"), sort_keys=True)
    return doc


def load_snapshot(path):
    with open(path) as f:
        doc = json.load(f)
    if doc.get("version") != SNAPSHOT_VERSION:
        raise DomainError(f"unsupported snapshot version {doc.get('version')!r}")
    action_set = ActionSet.from_dict(doc["action_set"])
    table = QTable(doc["n_states"], doc["n_actions"])
    table.values = np.asarray(doc["values"], dtype=float).reshape(table.values.shape)
    if action_set.n_actions != table.n_actions:
        raise DomainError("snapshot action set does not match table width")
    return table, action_set, doc
