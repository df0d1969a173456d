"""Value transfer between the association-only task and the joint
association/beam-count task via inter-task mapping.

The learner's state maps to the expert's state unchanged; a learner action
maps to a representative expert action of the same interference class; the
imported value adds to the locally learned one.
"""

import enum
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError
from .rl import ActionCode, ActionSet, QTable, q_update

BUNDLE_VERSION = 1


class InterferenceClass(enum.Enum):
    INTRA_ONLY = "intra"
    INTER_ONLY = "inter"
    BOTH = "both"


def classify_interference(action, n_associated=None):
    """Total classification of a learner action by the interference it incurs.

    k = 1 stacks every served UE into one beam: intra-beam only. k at least
    the number of claimed UEs allows one UE per beam: inter-beam only.
    Anything in between incurs both.
    """
    if action.k is None:
        raise DomainError("expert actions have no interference class")
    if n_associated is None:
        n_associated = action.n_associated
    if action.k == 1:
        return InterferenceClass.INTRA_ONLY
    if action.k >= n_associated:
        return InterferenceClass.INTER_ONLY
    return InterferenceClass.BOTH


def _rep_bits(n_candidates, kind):
    if kind == InterferenceClass.INTRA_ONLY:
        return (1,) * n_candidates
    half = n_candidates // 2
    return tuple(1 if i < half else 0 for i in range(n_candidates))


@dataclass
class TransferBundle:
    """Frozen expert knowledge: Q-table snapshot, its action-set descriptor
    and the class-representative action map."""

    expert_table: QTable
    expert_actions: ActionSet
    converged: bool = True

    def __post_init__(self):
        if self.expert_actions.k_max is not None:
            raise ConfigurationError("expert action set must be association-only")
        if self.expert_table.n_actions != self.expert_actions.n_actions:
            raise ConfigurationError("expert table width does not match its action set")
        self.rep_index = {
            kind: self.expert_actions.encode(
                ActionCode(assoc_bits=_rep_bits(self.expert_actions.n_candidates, kind), k=None)
            )
            for kind in InterferenceClass
        }

    def checksum(self):
        return hash(self.expert_table.values.tobytes())


def map_action(action, bundle):
    """Representative expert action for the learner action's class.

    Intra-beam-only maps to the all-ones association; the other classes map
    to claiming the lower-index half (floor) of the expert's candidates.
    """
    kind = classify_interference(action)
    bits = _rep_bits(bundle.expert_actions.n_candidates, kind)
    return ActionCode(assoc_bits=bits, k=None)


def expert_contribution(bundle, action_set):
    """Matrix of imported expert values, shape (n_states, n_learner_actions).

    Entry [s, a] is the expert value at (s, representative of a's class);
    state and value mapping are identities.
    """
    class_rep = np.empty(action_set.n_actions, dtype=int)
    for a in range(action_set.n_actions):
        kind = classify_interference(action_set.decode(a))
        class_rep[a] = bundle.rep_index[kind]
    return bundle.expert_table.values[:, class_rep]


def combined_q(local, bundle, s, a, action_set=None):
    """Final learner value Q(s,a) = imported expert value + local value.

    With no bundle the imported term is zero (plain Q-learning fallback).
    """
    if bundle is None:
        return float(local.values[s, a])
    if action_set is None:
        raise DomainError("combined_q needs the learner action set to classify a")
    kind = classify_interference(action_set.decode(a))
    return float(bundle.expert_table.values[s, bundle.rep_index[kind]] + local.values[s, a])


def tql_step(local, s, a, r, s_next, alpha, gamma):
    """Learning update of the local table only; the expert table is read-only."""
    return q_update(local, s, a, r, s_next, alpha, gamma)


def save_bundle(path, bundle):
    doc = {
        "version": BUNDLE_VERSION,
        "kind": "transfer_bundle",
        "converged": bool(bundle.converged),
        "expert": {
            "n_states": bundle.expert_table.n_states,
            "n_actions": bundle.expert_table.n_actions,
            "action_set": bundle.expert_actions.to_dict(),
            "values": [[float(v) for v in row] for row in bundle.expert_table.values],
        },
        "mapping": {
            "state": "identity",
            "value": "identity",
            "action": "class_representative",
            "representatives": {
                kind.value: bundle.rep_index[kind] for kind in InterferenceClass
            },
        },
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=None, separators=(",", ":"), sort_keys=True)


def load_bundle(path):
    with open(path) as f:
        doc = json.load(f)
    if doc.get("version") != BUNDLE_VERSION or doc.get("kind") != "transfer_bundle":
        raise ConfigurationError(f"not a transfer bundle: {path}")
    exp = doc["expert"]
    actions = ActionSet.from_dict(exp["action_set"])
    table = QTable(exp["n_states"], exp["n_actions"])
    table.values = np.asarray(exp["values"], dtype=float).reshape(table.values.shape)
    return TransferBundle(expert_table=table, expert_actions=actions,
                          converged=bool(doc.get("converged", True)))
