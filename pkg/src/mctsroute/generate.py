"""Random solvable circuits and supervised training data.

A circuit is generated by first carving k vertex-disjoint self-avoiding
paths on the empty grid (seeded random walks with backtracking), taking each
path's endpoints as that net's pins, and then scattering obstacles only on
cells no carved path uses.  The carved paths certify routability and can be
retained as a witness; the emitted problem keeps only pins and obstacles.

Training samples take exactly one state per net of a routed circuit: all
earlier nets connected, the net connected up to a uniformly drawn head, the
label the action toward the next path vertex.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path as FsPath
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .grid import (
    ACTION_DELTAS,
    Action,
    GridError,
    Net,
    Point,
    RoutingProblem,
    RoutingState,
    StateMatrix,
    make_problem,
    state_matrix,
    validate_routing,
)
from .rng import (
    STREAM_CIRCUIT,
    STREAM_OBSTACLE,
    STREAM_SAMPLE,
    STREAM_SPLIT,
    purpose_rng,
)


class GenerationError(RuntimeError):
    """Carving could not place the requested nets within the retry budget."""


@dataclass
class GeneratorConfig:
    width: int
    height: int
    net_count: int
    obstacle_fraction: float = 0.1
    seed: int = 0
    min_path_len: Optional[int] = None  # carved-witness length range
    max_path_len: Optional[int] = None

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0 or self.net_count < 1:
            raise GenerationError("width, height and net_count must be positive")
        if not 0.0 <= self.obstacle_fraction <= 0.3:
            raise GenerationError("obstacle_fraction must lie in [0, 0.3]")
        if self.min_path_len is None:
            self.min_path_len = max(2, (self.width + self.height) // 8)
        if self.max_path_len is None:
            self.max_path_len = max(self.min_path_len, (self.width + self.height) // 2)
        cells = self.width * self.height
        needed = 2 * self.net_count + int(self.obstacle_fraction * cells)
        if needed > cells:
            raise GenerationError("grid too small for the requested pins and obstacles")


@dataclass
class TrainingSample:
    matrix: StateMatrix
    label: Action


def _carve_walk(rng: np.random.Generator, width: int, height: int,
                used: set, target_len: int, budget: int) -> Optional[Tuple]:
    """One self-avoiding walk of exactly target_len vertices, DFS backtracking."""
    free = [Point(x, y) for y in range(height) for x in range(width)
            if Point(x, y) not in used]
    if len(free) < target_len:
        return None
    start = free[int(rng.integers(len(free)))]
    walk = [start]
    walk_set = {start}
    # Per-frame randomized neighbor order; index into it on backtrack.
    frames = [(rng.permutation(4), 0)]
    expansions = 0
    while frames:
        if len(walk) == target_len:
            return tuple(walk)
        order, i = frames[-1]
        advanced = False
        while i < 4:
            d = int(order[i])
            i += 1
            dx, dy = ACTION_DELTAS[d]
            q = Point(walk[-1].x + dx, walk[-1].y + dy)
            if (0 <= q.x < width and 0 <= q.y < height
                    and q not in used and q not in walk_set):
                frames[-1] = (order, i)
                walk.append(q)
                walk_set.add(q)
                frames.append((rng.permutation(4), 0))
                advanced = True
                break
        expansions += 1
        if expansions > budget:
            return None
        if not advanced:
            frames.pop()
            walk_set.discard(walk.pop())
    return None


def generate_circuit(cfg: GeneratorConfig, return_witness: bool = False):
    """A routing problem with at least one non-intersecting full routing.

    Deterministic in cfg.seed.  With ``return_witness`` the carved witness
    paths are returned alongside the problem.
    """
    rng = purpose_rng(cfg.seed, STREAM_CIRCUIT)
    used: set = set()
    witness: List[Tuple] = []
    for _ in range(cfg.net_count):
        path = None
        for _attempt in range(60):
            target = int(rng.integers(cfg.min_path_len, cfg.max_path_len + 1))
            path = _carve_walk(rng, cfg.width, cfg.height, used, target, budget=40 * target)
            if path is not None:
                break
        if path is None:
            raise GenerationError(
                f"could not carve net {len(witness) + 1} on {cfg.width}x{cfg.height} "
                f"(seed {cfg.seed})"
            )
        witness.append(path)
        used.update(path)
    nets = tuple(
        Net(id=i + 1, pin_a=path[0], pin_b=path[-1]) for i, path in enumerate(witness)
    )
    obstacle_rng = purpose_rng(cfg.seed, STREAM_OBSTACLE)
    n_obstacles = int(cfg.obstacle_fraction * cfg.width * cfg.height)
    free = [Point(x, y) for y in range(cfg.height) for x in range(cfg.width)
            if Point(x, y) not in used]
    if n_obstacles > len(free):
        raise GenerationError("not enough free cells for the requested obstacles")
    idx = obstacle_rng.choice(len(free), size=n_obstacles, replace=False) if n_obstacles else []
    obstacles = [free[int(i)] for i in idx]
    problem = make_problem(cfg.width, cfg.height, obstacles, nets)
    if return_witness:
        return problem, tuple(witness)
    return problem


def generate_corpus(count: int, seed: int, width: int = 30, height: int = 30,
                    k_range: Tuple = (3, 8), obstacle_fraction: float = 0.1,
                    return_witnesses: bool = False):
    """``count`` independent circuits with per-circuit net counts drawn from
    ``k_range`` (inclusive); deterministic in ``seed``."""
    if count < 1:
        raise GenerationError("count must be positive")
    meta_rng = purpose_rng(seed, STREAM_SPLIT)
    problems = []
    witnesses = []
    for _ in range(count):
        k = int(meta_rng.integers(k_range[0], k_range[1] + 1))
        sub_seed = int(meta_rng.integers(2**62))
        for retry in range(16):
            cfg = GeneratorConfig(width, height, k, obstacle_fraction, seed=sub_seed + retry)
            try:
                problem, witness = generate_circuit(cfg, return_witness=True)
                break
            except GenerationError:
                continue
        else:
            raise GenerationError(f"corpus circuit generation failed (seed {seed})")
        problems.append(problem)
        witnesses.append(witness)
    if return_witnesses:
        return problems, witnesses
    return problems


def _orient(path: Tuple, net: Net) -> Tuple:
    if path[0] == net.pin_a or path[0] == net.pin_b:
        return path
    raise GridError(f"solution path for net {net.id} does not start at a pin")


def state_before_vertex(problem: RoutingProblem, solution: Sequence, net_id: int,
                        vertex_index: int) -> RoutingState:
    """State where nets before ``net_id`` are fully routed and net ``net_id``
    is connected up to ``vertex_index`` along its solution path."""
    choices = []
    for net, path in zip(problem.nets, solution):
        _orient(path, net)
        choices.append(0 if path[0] == net.pin_a else 1)
    completed = tuple(tuple(solution[i]) for i in range(net_id - 1))
    current = tuple(solution[net_id - 1][: vertex_index + 1])
    occupied = frozenset(p for path in completed for p in path) | frozenset(current)
    return RoutingState(
        problem=problem,
        completed=completed,
        current_net=net_id,
        current_path=current,
        start_choices=tuple(choices),
        occupied=occupied,
    )


def _step_action(a: Point, b: Point) -> Action:
    for action, (dx, dy) in zip(Action, ACTION_DELTAS):
        if b.x - a.x == dx and b.y - a.y == dy:
            return action
    raise GridError(f"{a} -> {b} is not a unit step")


def extract_training_samples(problem: RoutingProblem, solution: Sequence,
                             seed: int = 0) -> List[TrainingSample]:
    """Exactly one (state matrix, next action) sample per net of a routed
    circuit; the head vertex is drawn uniformly along the net's path
    excluding the final pin."""
    validate_routing(problem, solution)
    rng = purpose_rng(seed, STREAM_SAMPLE)
    samples = []
    for net, path in zip(problem.nets, solution):
        j = int(rng.integers(len(path) - 1))
        state = state_before_vertex(problem, solution, net.id, j)
        label = _step_action(path[j], path[j + 1])
        samples.append(TrainingSample(matrix=state_matrix(state), label=label))
    return samples


def split_dataset(samples: Sequence, ratio: float = 0.8, seed: int = 0):
    """Seeded shuffle followed by a floor split into (train, test)."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly between 0 and 1")
    rng = purpose_rng(seed, STREAM_SPLIT)
    order = rng.permutation(len(samples))
    cut = int(ratio * len(samples))
    train = [samples[int(i)] for i in order[:cut]]
    test = [samples[int(i)] for i in order[cut:]]
    return train, test


_DIR_NAMES = {Action.UP: "up", Action.DOWN: "down", Action.LEFT: "left", Action.RIGHT: "right"}
_DIR_VALUES = {v: k for k, v in _DIR_NAMES.items()}


def write_samples(samples: Sequence, path) -> None:
    """Dataset file: per record a ``sample`` line then the matrix rows.

    The head coordinates are appended to the sample line because the matrix
    alone cannot distinguish the head from the current net's free pin.
    """
    lines = []
    for s in samples:
        head = s.matrix.head
        lines.append(
            f"sample {s.matrix.net_index} {_DIR_NAMES[s.label]} {head.x} {head.y}"
        )
        for row in s.matrix.cells:
            lines.append(" ".join(str(int(v)) for v in row))
    FsPath(path).write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")


def read_samples(path) -> List[TrainingSample]:
    text = FsPath(path).read_text(encoding="ascii")
    lines = [ln for ln in text.split("\n") if ln.strip()]
    samples = []
    i = 0
    while i < len(lines):
        parts = lines[i].split()
        if parts[0] != "sample" or len(parts) != 5:
            raise GridError(f"bad sample header: {lines[i]!r}")
        net_id = int(parts[1])
        label = _DIR_VALUES[parts[2]]
        head = Point(int(parts[3]), int(parts[4]))
        i += 1
        rows = []
        while i < len(lines) and not lines[i].startswith("sample "):
            rows.append([int(v) for v in lines[i].split()])
            i += 1
        cells = np.array(rows, dtype=np.int16)
        samples.append(
            TrainingSample(matrix=StateMatrix(cells=cells, net_index=net_id, head=head),
                           label=label)
        )
    return samples
