"""Routing domain: grid graph, obstacles, nets, paths, states and actions.

Coordinates are (x right, y up), zero based.  A matrix row corresponds to a
fixed y and a column to a fixed x, so ``cells[y][x]`` addresses the vertex at
point (x, y).  The four move actions follow the fixed canonical order
Up < Down < Left < Right, which every tie-break and serialization in the
package relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np


class Point(NamedTuple):
    x: int
    y: int


class Action(IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3


#: (dx, dy) per action, canonical order.
ACTION_DELTAS = ((0, 1), (0, -1), (-1, 0), (1, 0))

Path = tuple  # tuple[Point, ...]


class Outcome(Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    ONGOING = "ongoing"


class GridError(ValueError):
    """Domain-rule violation (invalid problem, state or path)."""


class IllegalActionError(GridError):
    """An action whose target vertex is not legal in the given state."""


@dataclass(frozen=True)
class Net:
    """A two-pin net; ``id`` is the 1-based routing order index."""

    id: int
    pin_a: Point
    pin_b: Point

    @property
    def pins(self) -> tuple:
        return (self.pin_a, self.pin_b)


@dataclass(frozen=True)
class RoutingProblem:
    """Grid dimensions, obstacle vertices and the ordered list of nets."""

    width: int
    height: int
    obstacles: frozenset
    nets: tuple

    @property
    def vertex_count(self) -> int:
        return self.width * self.height

    def in_bounds(self, p: Point) -> bool:
        return 0 <= p.x < self.width and 0 <= p.y < self.height

    def pin_owner(self, p: Point) -> int:
        """Net id owning pin ``p``, or 0 if ``p`` is not a pin."""
        return self._pin_map.get(p, 0)

    @property
    def _pin_map(self) -> dict:
        cached = self.__dict__.get("_pin_map_cache")
        if cached is None:
            cached = {}
            for net in self.nets:
                cached[net.pin_a] = net.id
                cached[net.pin_b] = net.id
            object.__setattr__(self, "_pin_map_cache", cached)
        return cached


def make_problem(width: int, height: int, obstacles: Iterable, nets: Sequence) -> RoutingProblem:
    """Build and validate a :class:`RoutingProblem`."""
    problem = RoutingProblem(
        width=width,
        height=height,
        obstacles=frozenset(Point(*p) for p in obstacles),
        nets=tuple(nets),
    )
    validate_problem(problem)
    return problem


def validate_problem(problem: RoutingProblem) -> None:
    if problem.width <= 0 or problem.height <= 0:
        raise GridError("grid dimensions must be positive")
    for p in problem.obstacles:
        if not problem.in_bounds(p):
            raise GridError(f"obstacle {p} out of bounds")
    if len(problem.nets) < 1:
        raise GridError("a problem needs at least one net")
    seen_pins = set()
    for i, net in enumerate(problem.nets, start=1):
        if net.id != i:
            raise GridError(f"net ids must be 1..k in order, got {net.id} at position {i}")
        if net.pin_a == net.pin_b:
            raise GridError(f"net {net.id} pins coincide")
        for pin in net.pins:
            if not problem.in_bounds(pin):
                raise GridError(f"net {net.id} pin {pin} out of bounds")
            if pin in problem.obstacles:
                raise GridError(f"net {net.id} pin {pin} is an obstacle")
            if pin in seen_pins:
                raise GridError(f"pin {pin} shared by two nets")
            seen_pins.add(pin)


@dataclass(frozen=True)
class RoutingState:
    """Progress of a sequential routing.

    Nets are routed in id order.  ``current_net`` is the 1-based index of the
    net under construction (``k + 1`` once all nets are connected), and
    ``current_path`` its partial path whose last vertex is the head.
    ``start_choices`` fixes, per net, which pin (0 = pin_a, 1 = pin_b) the
    net's path starts from; it is chosen by the caller when the state is
    created so that all transitions are a pure function of the actions taken.

    Externally a value type: transitions return new states.
    """

    problem: RoutingProblem
    completed: tuple
    current_net: int
    current_path: Path
    start_choices: tuple
    occupied: frozenset

    @property
    def head(self) -> Optional[Point]:
        return self.current_path[-1] if self.current_path else None

    @property
    def free_pin(self) -> Optional[Point]:
        """The unvisited pin of the current net."""
        if self.current_net > len(self.problem.nets):
            return None
        net = self.problem.nets[self.current_net - 1]
        start = net.pins[self.start_choices[self.current_net - 1]]
        return net.pin_b if start == net.pin_a else net.pin_a

    @property
    def all_paths(self) -> tuple:
        if self.current_path:
            return self.completed + (self.current_path,)
        return self.completed


def initial_state(problem: RoutingProblem, start_choices: Optional[Sequence] = None) -> RoutingState:
    """Fresh state with net 1 started at its chosen pin (default: pin_a)."""
    k = len(problem.nets)
    choices = tuple(start_choices) if start_choices is not None else (0,) * k
    if len(choices) != k or any(c not in (0, 1) for c in choices):
        raise GridError("start_choices must hold one 0/1 entry per net")
    start = problem.nets[0].pins[choices[0]]
    return RoutingState(
        problem=problem,
        completed=(),
        current_net=1,
        current_path=(start,),
        start_choices=choices,
        occupied=frozenset((start,)),
    )


def neighbors(p: Point, problem: RoutingProblem) -> list:
    """In-bounds orthogonal neighbors of ``p`` in canonical action order."""
    if not problem.in_bounds(p):
        raise GridError(f"point {p} out of bounds")
    out = []
    for dx, dy in ACTION_DELTAS:
        q = Point(p.x + dx, p.y + dy)
        if problem.in_bounds(q):
            out.append(q)
    return out


def action_target(state: RoutingState, action: Action) -> Point:
    dx, dy = ACTION_DELTAS[action]
    head = state.head
    return Point(head.x + dx, head.y + dy)


def is_legal_target(state: RoutingState, target: Point) -> bool:
    problem = state.problem
    if not problem.in_bounds(target):
        return False
    if target in problem.obstacles:
        return False
    if target in state.occupied:
        return False
    owner = problem.pin_owner(target)
    if owner != 0 and owner != state.current_net:
        return False
    return True


def legal_actions(state: RoutingState) -> list:
    """Actions whose target vertex may extend the current path.

    The target must be in bounds, not an obstacle, on no path, and not a pin
    of another net; the unvisited pin of the current net is legal.  An empty
    list signals a dead end.
    """
    if state.current_net > len(state.problem.nets):
        return []
    return [a for a in Action if is_legal_target(state, action_target(state, a))]


def apply_action(state: RoutingState, action: Action) -> RoutingState:
    """Extend the current path by one vertex; advance to the next net when
    the target is the current net's free pin."""
    target = action_target(state, action)
    if not is_legal_target(state, target):
        raise IllegalActionError(f"action {action.name} to {target} is illegal")
    problem = state.problem
    occupied = state.occupied | {target}
    path = state.current_path + (target,)
    if target == state.free_pin:
        completed = state.completed + (path,)
        nxt = state.current_net + 1
        if nxt > len(problem.nets):
            return RoutingState(problem, completed, nxt, (), state.start_choices, occupied)
        start = problem.nets[nxt - 1].pins[state.start_choices[nxt - 1]]
        return RoutingState(
            problem, completed, nxt, (start,), state.start_choices, occupied | {start}
        )
    return RoutingState(problem, state.completed, state.current_net, path, state.start_choices, occupied)


def is_terminal(state: RoutingState) -> Outcome:
    """Success when all nets are connected, failure on a dead end."""
    if state.current_net > len(state.problem.nets):
        return Outcome.SUCCESS
    if not legal_actions(state):
        return Outcome.FAILURE
    return Outcome.ONGOING


def total_wire_length(state: RoutingState) -> int:
    """Number of distinct vertices across all paths (paths are disjoint)."""
    return sum(len(p) for p in state.completed) + len(state.current_path)


@dataclass
class StateMatrix:
    """Integer board projection of a state.

    Cell values: the head holds the current net index, every other obstacle
    or path vertex holds -1, each unvisited pin of net n holds n, and free
    cells hold 0.  ``net_index`` and ``head`` ride along because the grid
    alone cannot distinguish the head from the current net's free pin (both
    hold the same value).
    """

    cells: np.ndarray
    net_index: int
    head: Optional[Point]

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]


def state_matrix(state: RoutingState) -> StateMatrix:
    problem = state.problem
    cells = np.zeros((problem.height, problem.width), dtype=np.int16)
    for p in problem.obstacles:
        cells[p.y, p.x] = -1
    for path in state.all_paths:
        for p in path:
            cells[p.y, p.x] = -1
    for net in problem.nets:
        for pin in net.pins:
            if pin not in state.occupied:
                cells[pin.y, pin.x] = net.id
    head = state.head
    if head is not None:
        cells[head.y, head.x] = state.current_net
    return StateMatrix(cells=cells, net_index=state.current_net, head=head)


def validate_state(state: RoutingState) -> None:
    """Check every RoutingState invariant; raises :class:`GridError`."""
    problem = state.problem
    k = len(problem.nets)
    if not (1 <= state.current_net <= k + 1):
        raise GridError("current_net out of range")
    if state.current_net <= k and not state.current_path:
        raise GridError("current path empty while a net is in progress")
    if state.current_net > k and state.current_path:
        raise GridError("current path nonempty after all nets connected")
    if len(state.completed) != state.current_net - 1:
        raise GridError("completed path count does not match current_net")
    seen = set()
    for path in state.all_paths:
        _validate_path_shape(problem, path)
        for p in path:
            if p in seen:
                raise GridError(f"vertex {p} appears in two paths")
            seen.add(p)
    if seen != state.occupied:
        raise GridError("occupied set out of sync with paths")
    for i, path in enumerate(state.completed, start=1):
        net = problem.nets[i - 1]
        start = net.pins[state.start_choices[i - 1]]
        end = net.pin_b if start == net.pin_a else net.pin_a
        if path[0] != start or path[-1] != end:
            raise GridError(f"completed path {i} does not join net {i}'s pins")
    if state.current_net <= k:
        net = problem.nets[state.current_net - 1]
        start = net.pins[state.start_choices[state.current_net - 1]]
        if state.current_path[0] != start:
            raise GridError("current path does not start at the chosen pin")
        for p in state.current_path:
            owner = problem.pin_owner(p)
            if owner not in (0, state.current_net):
                raise GridError(f"current path crosses pin of net {owner}")


def _validate_path_shape(problem: RoutingProblem, path: Path) -> None:
    if not path:
        raise GridError("empty path")
    prev = None
    seen = set()
    for p in path:
        if not problem.in_bounds(p):
            raise GridError(f"path vertex {p} out of bounds")
        if p in problem.obstacles:
            raise GridError(f"path vertex {p} is an obstacle")
        if p in seen:
            raise GridError(f"path revisits vertex {p}")
        seen.add(p)
        if prev is not None and abs(p.x - prev.x) + abs(p.y - prev.y) != 1:
            raise GridError(f"path jump {prev} -> {p}")
        prev = p


def validate_routing(problem: RoutingProblem, paths: Sequence) -> None:
    """Check that ``paths`` is a valid non-intersecting full routing."""
    if len(paths) != len(problem.nets):
        raise GridError("one path per net required")
    seen = set()
    for net, path in zip(problem.nets, paths):
        _validate_path_shape(problem, path)
        if {path[0], path[-1]} != set(net.pins):
            raise GridError(f"path for net {net.id} does not join its pins")
        for p in path:
            if p in seen:
                raise GridError(f"paths intersect at {p}")
            owner = problem.pin_owner(p)
            if owner not in (0, net.id):
                raise GridError(f"path for net {net.id} crosses pin of net {owner}")
            seen.add(p)
