"""Compiled routing engine.

``route_fast`` runs the same sequential MCTS driver as the pure reference in
:mod:`mctsroute.mcts`, compiled with numba: the board lives in flat arrays
with do/undo journals, the rollout CNN is evaluated incrementally (a move
touches a handful of cells, so only the affected conv windows, pool cells
and dense-layer contributions are refreshed), and deterministic rollout
results are memoized by board fingerprint, which is exact because the
guided depth-first rollout is a pure function of the state.

Behavioral parity with the reference on seeded cases is enforced by tests:
both sides share the SplitMix64 draw protocol, a common log table for the
UCT exploration term, and identical tie-break rules.
"""

from __future__ import annotations

import math
import time
from typing import Optional

import numpy as np

from ..grid import Point, RoutingProblem
from ..mcts import ROLLOUT_DNN_DFS, ROLLOUT_RANDOM, RouteResult, SearchConfig, UctMode
from ..policy import PolicyError, PolicyParams
from ..rng import SplitMix64
from ..rollout import BUDGET_FACTOR
from .kernels import run_route

_ZOBRIST_CACHE: dict = {}
_POLICY_CACHE: dict = {}

#: Exact cross-rollout memoization of deterministic DFS rollout rewards.
USE_ROLLOUT_MEMO = True


def _zobrist(n: int, k: int):
    key = (n, k)
    if key not in _ZOBRIST_CACHE:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(271828)))
        _ZOBRIST_CACHE[key] = (
            rng.integers(0, 2**63, size=n, dtype=np.uint64) << np.uint64(1),
            rng.integers(0, 2**63, size=n + 1, dtype=np.uint64) << np.uint64(1),
            rng.integers(0, 2**63, size=k + 1, dtype=np.uint64) << np.uint64(1),
        )
    return _ZOBRIST_CACHE[key]


def _pack_problem(problem: RoutingProblem):
    w, h = problem.width, problem.height
    n = w * h
    k = len(problem.nets)
    nbr = np.full((n, 4), -1, dtype=np.int32)
    for y in range(h):
        for x in range(w):
            i = y * w + x
            if y + 1 < h:
                nbr[i, 0] = i + w
            if y - 1 >= 0:
                nbr[i, 1] = i - w
            if x - 1 >= 0:
                nbr[i, 2] = i - 1
            if x + 1 < w:
                nbr[i, 3] = i + 1
    obst = np.zeros(n, dtype=np.uint8)
    for p in problem.obstacles:
        obst[p.y * w + p.x] = 1
    pin_net = np.zeros(n, dtype=np.int16)
    pins = np.zeros((k, 2), dtype=np.int32)
    for net in problem.nets:
        pins[net.id - 1, 0] = net.pin_a.y * w + net.pin_a.x
        pins[net.id - 1, 1] = net.pin_b.y * w + net.pin_b.x
        pin_net[pins[net.id - 1, 0]] = net.id
        pin_net[pins[net.id - 1, 1]] = net.id
    return nbr, obst, pin_net, pins


def _pack_policy(params: PolicyParams):
    cached = _POLICY_CACHE.get(id(params))
    if cached is not None and cached[0] is params:
        return cached[1]
    params.check_shapes()
    convw_t = np.ascontiguousarray(
        params.conv_w.astype(np.float32).transpose(1, 2, 3, 0)
    )  # (c, u, v, f)
    packed = (
        convw_t,
        np.ascontiguousarray(params.conv_b, dtype=np.float32),
        np.ascontiguousarray(params.fc1_w, dtype=np.float32),
        np.ascontiguousarray(params.fc1_b, dtype=np.float32),
        np.ascontiguousarray(params.fc2_w, dtype=np.float32),
        np.ascontiguousarray(params.fc2_b, dtype=np.float32),
        params.input_h,
        params.input_w,
    )
    _POLICY_CACHE[id(params)] = (params, packed)
    return packed


_DUMMY_POLICY = None


def _dummy_policy_arrays():
    global _DUMMY_POLICY
    if _DUMMY_POLICY is None:
        f = 1
        _DUMMY_POLICY = (
            np.zeros((4, 5, 5, f), dtype=np.float32),
            np.zeros(f, dtype=np.float32),
            np.zeros((f, 1), dtype=np.float32),
            np.zeros(1, dtype=np.float32),
            np.zeros((1, 4), dtype=np.float32),
            np.zeros(4, dtype=np.float32),
            2,
            2,
        )
    return _DUMMY_POLICY


def route_fast(problem: RoutingProblem, cfg: SearchConfig,
               policy: Optional[PolicyParams] = None) -> RouteResult:
    """Engine-backed equivalent of ``mcts.route(..., engine="reference")``."""
    t0 = time.perf_counter()
    w, h = problem.width, problem.height
    n = w * h
    k = len(problem.nets)
    nbr, obst, pin_net, pins = _pack_problem(problem)
    zob_occ, zob_head, zob_net = _zobrist(n, k)

    use_cnn = cfg.rollout_policy == ROLLOUT_DNN_DFS and policy is not None
    if use_cnn:
        convw_t, convb, fc1w, fc1b, fc2w, fc2b, net_h, net_w = _pack_policy(policy)
        if h > net_h or w > net_w:
            raise PolicyError(f"board {w}x{h} exceeds policy input {net_w}x{net_h}")
    else:
        convw_t, convb, fc1w, fc1b, fc2w, fc2b, net_h, net_w = _dummy_policy_arrays()

    sm = SplitMix64(cfg.seed)
    start_choice = np.array([sm.next_below(2) for _ in range(k)], dtype=np.uint8)
    sm_state = np.array([sm.state], dtype=np.uint64)

    budget = cfg.rollout_budget if cfg.rollout_budget is not None else BUDGET_FACTOR * n
    logtbl = np.zeros(cfg.iterations + 2, dtype=np.float64)
    for i in range(1, cfg.iterations + 2):
        logtbl[i] = math.log(i)

    route_cells = np.zeros(n + k + 2, dtype=np.int32)
    net_off = np.zeros(k + 1, dtype=np.int32)

    status, iters, budget_exhausted, route_len, nets_done = run_route(
        np.int64(w), np.int64(h), np.int64(k),
        nbr, obst, pin_net, pins, start_choice,
        np.int64(cfg.iterations), np.float64(cfg.exploration_cp),
        np.uint8(1 if cfg.uct_mode is UctMode.MAXIMUM else 0),
        np.uint8(1 if cfg.rollout_policy == ROLLOUT_DNN_DFS else 0),
        np.int64(budget),
        np.uint8(1 if USE_ROLLOUT_MEMO else 0),
        logtbl, sm_state,
        np.uint8(1 if use_cnn else 0),
        convw_t, convb, fc1w, fc1b, fc2w, fc2b,
        np.int64(net_h), np.int64(net_w),
        zob_occ, zob_head, zob_net,
        route_cells, net_off,
    )

    def cell_point(idx: int) -> Point:
        return Point(int(idx) % w, int(idx) // w)

    paths = []
    for i in range(int(nets_done)):
        lo, hi = int(net_off[i]), int(net_off[i + 1])
        paths.append(tuple(cell_point(c) for c in route_cells[lo:hi]))
    if int(nets_done) < k:
        lo = int(net_off[int(nets_done)])
        partial = tuple(cell_point(c) for c in route_cells[lo:int(route_len)])
        if partial:
            paths.append(partial)

    return RouteResult(
        success=bool(status),
        paths=tuple(paths),
        total_length=int(route_len),
        iterations_used=int(iters),
        wall_time=time.perf_counter() - t0,
        budget_exhausted_rollouts=int(budget_exhausted),
    )
