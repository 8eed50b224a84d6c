"""Rollout policies for the simulation stage.

``random_rollout`` walks uniformly random legal actions to a terminal state.
``dfs_rollout`` is a policy-guided depth-first search: legal actions are
tried in descending normalized policy probability, dead ends backtrack, and
the search target advances net by net, so it finds a completing action
sequence whenever one exists within its node budget.  Both cross net
boundaries through the ordinary state transition.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

import numpy as np

from .grid import (
    Action,
    Outcome,
    RoutingState,
    apply_action,
    is_terminal,
    legal_actions,
    state_matrix,
)
from .policy import PolicyParams, forward
from .rng import SplitMix64

#: Rollout node budget as a multiple of the vertex count.
BUDGET_FACTOR = 4


def normalize_policy(probs, legal: List[Action]) -> Dict[Action, float]:
    """Restrict ``probs`` to the legal actions and rescale to sum 1.

    Falls back to the uniform distribution when the legal mass is zero.
    """
    if not legal:
        raise ValueError("no legal actions to normalize over")
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (4,) or (probs < 0).any():
        raise ValueError("probs must be a nonnegative 4-vector")
    total = sum(float(probs[a]) for a in legal)
    if total <= 0.0:
        return {a: 1.0 / len(legal) for a in legal}
    return {a: float(probs[a]) / total for a in legal}


def random_rollout(state: RoutingState, rng) -> RoutingState:
    """Apply uniformly random legal actions until success or a dead end."""
    if isinstance(rng, int):
        rng = SplitMix64(rng)
    while True:
        if is_terminal(state) is not Outcome.ONGOING:
            return state
        acts = legal_actions(state)
        state = apply_action(state, acts[rng.next_below(len(acts))])


def _fingerprint(state: RoutingState) -> Tuple:
    return (state.occupied, state.head, state.current_net)


def _ordered_actions(state: RoutingState, policy: Optional[PolicyParams]) -> List[Action]:
    acts = legal_actions(state)
    if policy is None or len(acts) <= 1:
        return acts
    probs = forward(policy, state_matrix(state))
    weights = normalize_policy(probs, acts)
    return sorted(acts, key=lambda a: (-weights[a], int(a)))


def dfs_rollout(state: RoutingState, policy: Optional[PolicyParams] = None,
                budget: Optional[int] = None) -> RoutingState:
    """Depth-first search for a completing action sequence.

    Returns the first success state found in policy order.  When the whole
    subtree is exhausted the first dead end encountered is returned; when
    the node budget runs out first, the search stops and reports the closest
    thing to a failure it has seen.  A policy of None means uniform, which
    degenerates to deterministic DFS in canonical action order.
    """
    if budget is None:
        budget = BUDGET_FACTOR * state.problem.vertex_count
    if is_terminal(state) is not Outcome.ONGOING:
        return state
    exhausted = set()
    first_fail: Optional[RoutingState] = None
    expansions = 0
    # Each frame: [state, ordered actions, next action index].
    stack: List[list] = [[state, _ordered_actions(state, policy), 0]]
    while stack:
        frame = stack[-1]
        s, acts, i = frame
        if i >= len(acts):
            exhausted.add(_fingerprint(s))
            stack.pop()
            continue
        frame[2] = i + 1
        child = apply_action(s, acts[i])
        if _fingerprint(child) in exhausted:
            continue
        expansions += 1
        outcome = is_terminal(child)
        if outcome is Outcome.SUCCESS:
            return child
        if outcome is Outcome.FAILURE:
            exhausted.add(_fingerprint(child))
            if first_fail is None:
                first_fail = child
            if expansions >= budget:
                return first_fail
            continue
        if expansions >= budget:
            return first_fail if first_fail is not None else child
        stack.append([child, _ordered_actions(child, policy), 0])
    return first_fail if first_fail is not None else state
