"""Monte Carlo tree search over routing states.

Each call to :func:`search` builds a fresh tree and runs a fixed number of
selection / expansion / rollout / backpropagation iterations.  Every node
keeps both the mean and the maximum of the rewards backpropagated through
it; ``uct_mode`` only chooses which statistic drives selection and the final
move, so one tree serves both policies.  :func:`route` drives a whole
circuit, one searched vertex at a time, building a fresh tree per move.

This module is the readable reference implementation; ``route`` dispatches
to the compiled engine by default and the two are held to identical
behavior on seeded test cases.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

from .grid import (
    Action,
    Outcome,
    RoutingProblem,
    RoutingState,
    apply_action,
    initial_state,
    is_terminal,
    legal_actions,
    total_wire_length,
    validate_problem,
)
from .policy import PolicyParams
from .rng import SplitMix64
from .rollout import BUDGET_FACTOR, dfs_rollout, random_rollout


class UctMode(Enum):
    AVERAGE = "avg"
    MAXIMUM = "max"


ROLLOUT_RANDOM = "random"
ROLLOUT_DNN_DFS = "dnn-dfs"


@dataclass
class SearchConfig:
    iterations: int
    exploration_cp: float = 0.5
    uct_mode: UctMode = UctMode.MAXIMUM
    rollout_policy: str = ROLLOUT_DNN_DFS
    seed: int = 0
    rollout_budget: Optional[int] = None  # None -> BUDGET_FACTOR * |V|

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if self.exploration_cp <= 0:
            raise ValueError("exploration_cp must be positive")
        if isinstance(self.uct_mode, str):
            self.uct_mode = UctMode(self.uct_mode)
        if self.rollout_policy not in (ROLLOUT_RANDOM, ROLLOUT_DNN_DFS):
            raise ValueError(f"unknown rollout policy {self.rollout_policy!r}")


@dataclass
class RouteResult:
    """Outcome of routing one circuit."""

    success: bool
    paths: tuple
    total_length: int
    iterations_used: int
    wall_time: float
    budget_exhausted_rollouts: int = 0


class TreeNode:
    """Search tree node carrying visit count, mean and maximum reward."""

    __slots__ = ("state", "incoming_action", "parent", "children", "untried",
                 "visit_count", "reward_sum", "reward_max", "outcome")

    def __init__(self, state: RoutingState, incoming_action: Optional[Action],
                 parent: Optional["TreeNode"]):
        self.state = state
        self.incoming_action = incoming_action
        self.parent = parent
        self.children: List["TreeNode"] = []
        self.outcome = is_terminal(state)
        self.untried = legal_actions(state) if self.outcome is Outcome.ONGOING else []
        self.visit_count = 0
        self.reward_sum = 0.0
        self.reward_max = 0.0

    @property
    def mean_reward(self) -> float:
        return self.reward_sum / self.visit_count if self.visit_count else 0.0


def reward(state: RoutingState) -> float:
    """Terminal reward: 1/|V| on failure, 1/(total wire length) on success."""
    outcome = is_terminal(state)
    if outcome is Outcome.ONGOING:
        raise ValueError("reward is defined on terminal states only")
    if outcome is Outcome.FAILURE:
        return 1.0 / state.problem.vertex_count
    return 1.0 / total_wire_length(state)


def uct_score(node: TreeNode, mode: UctMode, cp: float) -> float:
    """Upper confidence bound of ``node`` among its siblings."""
    if node.parent is None:
        raise ValueError("uct_score needs a parented node")
    if node.visit_count == 0:
        return math.inf
    exploit = node.reward_max if mode is UctMode.MAXIMUM else node.mean_reward
    return exploit + cp * math.sqrt(2.0 * math.log(node.parent.visit_count) / node.visit_count)


def _rollout_reward(state: RoutingState, cfg: SearchConfig,
                    policy: Optional[PolicyParams], rng: SplitMix64) -> float:
    if cfg.rollout_policy == ROLLOUT_RANDOM:
        terminal = random_rollout(state, rng)
    else:
        budget = cfg.rollout_budget
        if budget is None:
            budget = BUDGET_FACTOR * state.problem.vertex_count
        terminal = dfs_rollout(state, policy, budget)
    if is_terminal(terminal) is Outcome.ONGOING:  # rollout stopped on budget
        return 1.0 / state.problem.vertex_count
    return reward(terminal)


def _select_child(node: TreeNode, mode: UctMode, cp: float) -> TreeNode:
    # Children were created in canonical action order; a strict comparison
    # therefore breaks ties canonically.
    best = None
    best_score = -math.inf
    log_np = math.log(node.visit_count)
    for child in node.children:
        exploit = child.reward_max if mode is UctMode.MAXIMUM else child.mean_reward
        score = exploit + cp * math.sqrt(2.0 * log_np / child.visit_count)
        if score > best_score:
            best_score = score
            best = child
    return best


def _search_impl(state: RoutingState, cfg: SearchConfig,
                 policy: Optional[PolicyParams],
                 rng: SplitMix64) -> Tuple[Optional[Action], int]:
    """Returns (best action or None, iterations actually run)."""
    if is_terminal(state) is not Outcome.ONGOING:
        raise ValueError("search requires an ongoing state")
    acts = legal_actions(state)
    if not acts:
        return None, 0
    if len(acts) == 1:
        # Forced move: no amount of search can change the returned action.
        return acts[0], 0
    root = TreeNode(state, None, None)
    for _ in range(cfg.iterations):
        node = root
        while node.outcome is Outcome.ONGOING and not node.untried and node.children:
            node = _select_child(node, cfg.uct_mode, cfg.exploration_cp)
        if node.outcome is Outcome.ONGOING and node.untried:
            action = node.untried.pop(0)
            child = TreeNode(apply_action(node.state, action), action, node)
            node.children.append(child)
            node = child
        if node.outcome is Outcome.ONGOING:
            r = _rollout_reward(node.state, cfg, policy, rng)
        else:
            r = reward(node.state)
        while node is not None:
            node.visit_count += 1
            node.reward_sum += r
            if r > node.reward_max:
                node.reward_max = r
            node = node.parent
    best = None
    best_stat = -math.inf
    best_visits = -1
    for child in root.children:
        if child.visit_count == 0:
            continue
        stat = child.reward_max if cfg.uct_mode is UctMode.MAXIMUM else child.mean_reward
        if stat > best_stat or (stat == best_stat and child.visit_count > best_visits):
            best = child
            best_stat = stat
            best_visits = child.visit_count
    return best.incoming_action, cfg.iterations


def search(state: RoutingState, cfg: SearchConfig,
           policy: Optional[PolicyParams] = None,
           rng: Optional[SplitMix64] = None) -> Optional[Action]:
    """Best action from ``state`` after cfg.iterations MCTS iterations.

    Returns None when the state has no legal actions.
    """
    if rng is None:
        rng = SplitMix64(cfg.seed)
    action, _ = _search_impl(state, cfg, policy, rng)
    return action


def route(problem: RoutingProblem, cfg: SearchConfig,
          policy: Optional[PolicyParams] = None,
          engine: str = "fast") -> RouteResult:
    """Route all nets of ``problem`` per the sequential search driver.

    Per net the starting head is drawn uniformly from its two pins (one draw
    per net, fixed for the whole call), then vertices are added one searched
    action at a time; reaching the net's free pin advances to the next net.
    A fresh search tree is built per move.
    """
    validate_problem(problem)
    if engine == "fast":
        from .engine import route_fast

        return route_fast(problem, cfg, policy)
    if engine != "reference":
        raise ValueError(f"unknown engine {engine!r}")
    t0 = time.perf_counter()
    rng = SplitMix64(cfg.seed)
    choices = tuple(rng.next_below(2) for _ in problem.nets)
    state = initial_state(problem, choices)
    iterations = 0
    success = False
    while True:
        outcome = is_terminal(state)
        if outcome is Outcome.SUCCESS:
            success = True
            break
        if outcome is Outcome.FAILURE:
            break
        action, used = _search_impl(state, cfg, policy, rng)
        iterations += used
        if action is None:  # unreachable: FAILURE is caught above
            break
        state = apply_action(state, action)
    return RouteResult(
        success=success,
        paths=state.all_paths,
        total_length=total_wire_length(state),
        iterations_used=iterations,
        wall_time=time.perf_counter() - t0,
    )
