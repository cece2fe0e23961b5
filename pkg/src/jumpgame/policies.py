"""Control policies: maps from (step, states) to indices into a control set.

A policy may additionally react to the opponent's same-step control index
(a discrete nonanticipative strategy) and, for diagnostic purposes only, see
the raw noise of the paths being simulated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class Policy:
    rule: Callable
    reacts: bool = False
    reads_noise: bool = False
    name: str = "policy"

    def __call__(self, step: int, states, opponent=None, noise=None) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        kwargs = {}
        if self.reacts:
            if opponent is None:
                raise ConfigurationError(f"{self.name} reacts to the opponent but no opponent action was given")
            kwargs["opponent"] = np.asarray(opponent)
        if self.reads_noise:
            kwargs["noise"] = noise
        out = np.asarray(self.rule(step, states, **kwargs))
        return np.broadcast_to(out, (len(states),)).astype(np.int64)


def constant_policy(index: int = 0) -> Policy:
    return Policy(lambda step, states: np.full(len(states), index, dtype=np.int64), name=f"constant[{index}]")


def feedback_policy(rule: Callable, name: str = "feedback") -> Policy:
    """Markov policy ``rule(step, states) -> indices``."""
    return Policy(rule, name=name)


def reaction_policy(rule: Callable, name: str = "reaction") -> Policy:
    """Strategy ``rule(step, states, opponent) -> indices`` reacting to the opponent's same-step action."""
    return Policy(rule, reacts=True, name=name)


def threshold_policy(threshold: float, below: int, above: int, axis: int = 0) -> Policy:
    def rule(step, states):
        return np.where(states[:, axis] < threshold, below, above)
    return Policy(rule, name=f"threshold[{threshold}]")


def order_players(u_policy: Policy, v_policy: Policy):
    """Return the move order ``("u", "v")`` or ``("v", "u")`` implied by the reaction flags."""
    if u_policy.reacts and v_policy.reacts:
        raise ConfigurationError("at most one player may react to the other's same-step action")
    return ("v", "u") if u_policy.reacts else ("u", "v")


def choose(step, states, u_policy: Policy, v_policy: Policy, noise=None):
    """Control indices for both players at one step, honouring reaction order."""
    first, _ = order_players(u_policy, v_policy)
    if first == "u":
        iu = u_policy(step, states, noise=noise)
        iv = v_policy(step, states, opponent=iu, noise=noise)
    else:
        iv = v_policy(step, states, noise=noise)
        iu = u_policy(step, states, opponent=iv, noise=noise)
    return iu, iv


def control_groups(iu: np.ndarray, iv: np.ndarray):
    """Yield ``(u_index, v_index, node_mask)`` for every control pair in use."""
    pairs = np.unique(np.stack([iu, iv], axis=1), axis=0)
    for a, b in pairs:
        yield int(a), int(b), (iu == a) & (iv == b)
