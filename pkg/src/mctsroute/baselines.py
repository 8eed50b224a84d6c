"""Sequential maze-routing baselines and desk-scale optimality oracles.

Lee's algorithm and A* route one net at a time against a blocked set; both
return true shortest paths (A* uses the admissible Manhattan heuristic), so
their lengths always agree.  ``exhaustive_optimal`` enumerates every
non-intersecting routing of a tiny instance to give an exact minimum-length
reference for tests.
"""

from __future__ import annotations

import heapq
import itertools
import time
from typing import Iterable, Optional, Sequence

from .grid import (
    ACTION_DELTAS,
    GridError,
    Net,
    Point,
    RoutingProblem,
    validate_routing,
)
from .mcts import RouteResult


def _blocked_for_net(problem: RoutingProblem, blocked: Iterable, net: Net) -> set:
    """Cells net ``net`` may never enter: blocked set, obstacles, foreign pins."""
    cells = set(blocked)
    cells.update(problem.obstacles)
    for other in problem.nets:
        if other.id != net.id:
            cells.update(other.pins)
    return cells


def lee_route_net(problem: RoutingProblem, blocked: Iterable, net: Net, _stats: Optional[dict] = None):
    """Shortest path for ``net`` by breadth-first wavefront from pin_a.

    Returns the vertex path pin_a..pin_b or None when unreachable.  Backtrace
    ties break in canonical action order.
    """
    avoid = _blocked_for_net(problem, blocked, net)
    if net.pin_a in avoid or net.pin_b in avoid:
        return None
    dist = {net.pin_a: 0}
    frontier = [net.pin_a]
    expanded = 0
    found = False
    while frontier and not found:
        nxt = []
        for p in frontier:
            expanded += 1
            for dx, dy in ACTION_DELTAS:
                q = Point(p.x + dx, p.y + dy)
                if not problem.in_bounds(q) or q in avoid or q in dist:
                    continue
                dist[q] = dist[p] + 1
                if q == net.pin_b:
                    found = True
                nxt.append(q)
        frontier = nxt
    if _stats is not None:
        _stats["expanded"] = expanded
    if net.pin_b not in dist:
        return None
    # Trace back from pin_b along decreasing distance labels.
    path = [net.pin_b]
    cur = net.pin_b
    while cur != net.pin_a:
        for dx, dy in ACTION_DELTAS:
            q = Point(cur.x + dx, cur.y + dy)
            if dist.get(q, -1) == dist[cur] - 1:
                cur = q
                path.append(q)
                break
    path.reverse()
    return tuple(path)


def astar_route_net(problem: RoutingProblem, blocked: Iterable, net: Net, _stats: Optional[dict] = None):
    """Shortest path for ``net`` by A* with the Manhattan heuristic.

    Tie-breaking: lowest f, then lowest h, then insertion order (neighbors
    are pushed in canonical action order).
    """
    avoid = _blocked_for_net(problem, blocked, net)
    if net.pin_a in avoid or net.pin_b in avoid:
        return None
    goal = net.pin_b

    def h(p: Point) -> int:
        return abs(p.x - goal.x) + abs(p.y - goal.y)

    g = {net.pin_a: 0}
    parent = {}
    seq = itertools.count()
    heap = [(h(net.pin_a), h(net.pin_a), next(seq), net.pin_a)]
    closed = set()
    expanded = 0
    while heap:
        f, _, _, p = heapq.heappop(heap)
        if p in closed:
            continue
        if p == goal:
            if _stats is not None:
                _stats["expanded"] = expanded
            path = [p]
            while p in parent:
                p = parent[p]
                path.append(p)
            path.reverse()
            return tuple(path)
        closed.add(p)
        expanded += 1
        for dx, dy in ACTION_DELTAS:
            q = Point(p.x + dx, p.y + dy)
            if not problem.in_bounds(q) or q in avoid or q in closed:
                continue
            gq = g[p] + 1
            if gq < g.get(q, 1 << 30):
                g[q] = gq
                parent[q] = p
                hq = h(q)
                heapq.heappush(heap, (gq + hq, hq, next(seq), q))
    if _stats is not None:
        _stats["expanded"] = expanded
    return None


_ROUTERS = {"astar": astar_route_net, "lee": lee_route_net}


def sequential_route(problem: RoutingProblem, algorithm: str = "astar",
                     order: Optional[Sequence] = None) -> RouteResult:
    """Route nets greedily one by one; earlier paths become obstacles.

    ``order`` optionally overrides the net-id routing order.  Fails on the
    first unroutable net.
    """
    if algorithm not in _ROUTERS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    route_net = _ROUTERS[algorithm]
    t0 = time.perf_counter()
    net_order = list(order) if order is not None else [n.id for n in problem.nets]
    paths = {}
    blocked = set()
    success = True
    for net_id in net_order:
        net = problem.nets[net_id - 1]
        path = route_net(problem, blocked, net)
        if path is None:
            success = False
            break
        paths[net_id] = path
        blocked.update(path)
    ordered = tuple(paths[n.id] for n in problem.nets if n.id in paths)
    return RouteResult(
        success=success,
        paths=ordered,
        total_length=sum(len(p) for p in ordered),
        iterations_used=0,
        wall_time=time.perf_counter() - t0,
    )


def best_order_route(problem: RoutingProblem, algorithm: str = "astar") -> RouteResult:
    """Best sequential routing over all net orderings (k <= 6 enforced)."""
    k = len(problem.nets)
    if k > 6:
        raise GridError("best_order_route is limited to k <= 6")
    best = None
    for perm in itertools.permutations(range(1, k + 1)):
        result = sequential_route(problem, algorithm, order=perm)
        if result.success and (best is None or result.total_length < best.total_length):
            best = result
    return best if best is not None else sequential_route(problem, algorithm)


def shortest_length_lower_bound(problem: RoutingProblem) -> int:
    """Sum over nets of the single-net shortest-path vertex count.

    Each net is routed alone against obstacles and the other nets' pins, so
    the sum lower-bounds the total length of any valid routing.
    """
    total = 0
    for net in problem.nets:
        path = lee_route_net(problem, (), net)
        if path is None:
            raise GridError(f"net {net.id} is individually unreachable")
        total += len(path)
    return total


def exhaustive_optimal(problem: RoutingProblem) -> Optional[RouteResult]:
    """Exact minimum-total-length non-intersecting routing of a tiny instance.

    Enumerates self-avoiding paths net by net with branch-and-bound pruning.
    Refuses instances with area > 36 or more than 3 nets.
    """
    if problem.vertex_count > 36 or len(problem.nets) > 3:
        raise GridError("exhaustive_optimal is limited to area <= 36 and k <= 3")
    t0 = time.perf_counter()
    k = len(problem.nets)
    best: list = [None, 1 << 30]  # (paths, total_length)
    # Seed the bound with the best greedy routing so pruning bites early.
    greedy = best_order_route(problem)
    if greedy.success:
        best[0] = greedy.paths
        best[1] = greedy.total_length

    def remaining_bound(used: set, net_idx: int) -> Optional[int]:
        total = 0
        for i in range(net_idx, k):
            path = lee_route_net(problem, used, problem.nets[i])
            if path is None:
                return None
            total += len(path)
        return total

    def extend(net_idx: int, used: set, paths: list, length: int) -> None:
        if net_idx == k:
            if length < best[1]:
                best[0] = tuple(paths)
                best[1] = length
            return
        bound = remaining_bound(used, net_idx)
        if bound is None or length + bound >= best[1]:
            return
        net = problem.nets[net_idx]
        # Bound for the nets after this one; placing more wire only lengthens
        # their shortest paths, so it stays a valid lower bound inside walk().
        bound_rest = remaining_bound(used, net_idx + 1)
        if bound_rest is None:
            return
        avoid = _blocked_for_net(problem, used, net)
        target = net.pin_b

        def walk(path: list) -> None:
            p = path[-1]
            if p == target:
                for q in path:
                    used.add(q)
                paths.append(tuple(path))
                extend(net_idx + 1, used, paths, length + len(path))
                paths.pop()
                for q in path:
                    used.discard(q)
                return
            if (length + len(path) + abs(p.x - target.x) + abs(p.y - target.y)
                    + bound_rest >= best[1]):
                return
            for dx, dy in ACTION_DELTAS:
                q = Point(p.x + dx, p.y + dy)
                if not problem.in_bounds(q) or q in avoid or q in path_set:
                    continue
                path.append(q)
                path_set.add(q)
                walk(path)
                path.pop()
                path_set.discard(q)

        path_set = {net.pin_a}
        walk([net.pin_a])

    extend(0, set(), [], 0)
    if best[0] is None:
        return None
    validate_routing(problem, best[0])
    return RouteResult(
        success=True,
        paths=best[0],
        total_length=best[1],
        iterations_used=0,
        wall_time=time.perf_counter() - t0,
    )
