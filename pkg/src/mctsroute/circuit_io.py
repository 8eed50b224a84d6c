"""Circuit text format.

One statement per line, ``#`` starts a comment, LF line endings::

    grid <width> <height>
    obstacle <x> <y>          # repeated, written sorted by (y, x)
    net <id> <x1> <y1> <x2> <y2>   # repeated, ids 1..k in order

Writers are byte-exact for a given problem.
"""

from __future__ import annotations

from pathlib import Path as FsPath

from .grid import GridError, Net, Point, RoutingProblem, make_problem


class CircuitFormatError(GridError):
    """Malformed circuit text."""


def write_circuit(problem: RoutingProblem) -> str:
    lines = [f"grid {problem.width} {problem.height}"]
    for p in sorted(problem.obstacles, key=lambda p: (p.y, p.x)):
        lines.append(f"obstacle {p.x} {p.y}")
    for net in problem.nets:
        lines.append(
            f"net {net.id} {net.pin_a.x} {net.pin_a.y} {net.pin_b.x} {net.pin_b.y}"
        )
    return "\n".join(lines) + "\n"


def read_circuit(text: str) -> RoutingProblem:
    width = height = None
    obstacles = []
    nets = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "grid" and len(parts) == 3:
                width, height = int(parts[1]), int(parts[2])
            elif parts[0] == "obstacle" and len(parts) == 3:
                obstacles.append(Point(int(parts[1]), int(parts[2])))
            elif parts[0] == "net" and len(parts) == 6:
                nets.append(
                    Net(
                        id=int(parts[1]),
                        pin_a=Point(int(parts[2]), int(parts[3])),
                        pin_b=Point(int(parts[4]), int(parts[5])),
                    )
                )
            else:
                raise CircuitFormatError(f"line {lineno}: unrecognized statement {line!r}")
        except ValueError as exc:
            if isinstance(exc, CircuitFormatError):
                raise
            raise CircuitFormatError(f"line {lineno}: bad integer in {line!r}") from exc
    if width is None:
        raise CircuitFormatError("missing grid statement")
    return make_problem(width, height, obstacles, nets)


def save_circuit(problem: RoutingProblem, path) -> None:
    FsPath(path).write_text(write_circuit(problem), encoding="ascii", newline="\n")


def load_circuit(path) -> RoutingProblem:
    return read_circuit(FsPath(path).read_text(encoding="ascii"))
