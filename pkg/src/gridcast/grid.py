"""Grid coordinates, macro-node clustering and border geometry.

A ``GridSpec(n, k)`` describes the grid ``G_k`` of side ``n**k``.  Nodes are
addressed ``(i, j)`` as (row, column) with the origin in the top-left corner.
A level-``l`` macro-node groups the ``n**l x n**l`` block of physical nodes
whose origin is ``(n**l * i', n**l * j')``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

Node = tuple[int, int]

# Direction index -> (di, dj).  Opposite of d is d ^ 1.
UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3
DIRECTIONS: tuple[Node, ...] = ((-1, 0), (1, 0), (0, -1), (0, 1))
DIRECTION_NAMES = ("up", "down", "left", "right")


def opposite(d: int) -> int:
    return d ^ 1


@dataclass(frozen=True)
class GridSpec:
    """Parameters of the fractal grid hierarchy."""

    n: int = 10
    k: int = 1

    def __post_init__(self) -> None:
        if not isinstance(self.n, int) or self.n < 4 or self.n % 2:
            raise ValueError(f"n must be an even integer >= 4, got {self.n!r}")
        if not isinstance(self.k, int) or self.k < 1:
            raise ValueError(f"k must be an integer >= 1, got {self.k!r}")

    def side(self) -> int:
        return self.n**self.k

    def num_nodes(self) -> int:
        return self.side() ** 2

    def contains(self, node: Node) -> bool:
        s = self.side()
        return 0 <= node[0] < s and 0 <= node[1] < s


@dataclass(frozen=True, order=True)
class MacroNodeId:
    """Macro-node at hierarchy ``level`` with coordinates in the level macro-grid."""

    level: int
    i: int
    j: int

    @property
    def coords(self) -> Node:
        return (self.i, self.j)


def _check_node(node: Node, side: int) -> None:
    i, j = node
    if not (0 <= i < side and 0 <= j < side):
        raise ValueError(f"node {node} outside {side}x{side} grid")


def neighbors(node: Node, side: int) -> set[Node]:
    """All grid nodes at Manhattan distance 1 from ``node``."""
    _check_node(node, side)
    return set(neighbor_list(node, side))


@lru_cache(maxsize=None)
def neighbor_list(node: Node, side: int) -> tuple[Node, ...]:
    # Ordered by direction index; used wherever iteration order must be stable.
    i, j = node
    out = []
    for di, dj in DIRECTIONS:
        a, b = i + di, j + dj
        if 0 <= a < side and 0 <= b < side:
            out.append((a, b))
    return tuple(out)


def direction_between(a: Node, b: Node) -> int:
    """Direction index pointing from ``a`` to adjacent ``b``."""
    delta = (b[0] - a[0], b[1] - a[1])
    try:
        return DIRECTIONS.index(delta)
    except ValueError:
        raise ValueError(f"{a} and {b} are not adjacent") from None


def cluster_of(node: Node, spec: GridSpec, level: int) -> MacroNodeId:
    """Level-``level`` macro-node containing ``node`` (``1 <= level < k``)."""
    if not 1 <= level < spec.k:
        raise ValueError(f"level must satisfy 1 <= level < k={spec.k}, got {level}")
    _check_node(node, spec.side())
    size = spec.n**level
    return MacroNodeId(level, node[0] // size, node[1] // size)


def cluster_origin(macro: MacroNodeId, spec: GridSpec) -> Node:
    size = spec.n**macro.level
    return (macro.i * size, macro.j * size)


def cluster_members(macro: MacroNodeId, spec: GridSpec) -> list[Node]:
    size = spec.n**macro.level
    oi, oj = cluster_origin(macro, spec)
    return [(oi + a, oj + b) for a in range(size) for b in range(size)]


def border(p: MacroNodeId, q: MacroNodeId, spec: GridSpec) -> list[Node]:
    """Physical nodes of ``G(p)`` adjacent to ``G(q)``, ascending along the shared edge.

    ``border(p, q)[t]`` and ``border(q, p)[t]`` are physical neighbors.
    """
    if p.level != q.level:
        raise ValueError("macro-nodes must be at the same level")
    d = direction_between(p.coords, q.coords)
    macro_side = spec.n ** (spec.k - p.level)
    for m in (p, q):
        if not (0 <= m.i < macro_side and 0 <= m.j < macro_side):
            raise ValueError(f"{m} outside level-{p.level} macro-grid")
    size = spec.n**p.level
    oi, oj = cluster_origin(p, spec)
    return [(oi + a, oj + b) for a, b in side_cells(size, d)]


def side_cells(size: int, d: int) -> list[Node]:
    """Local coordinates of the ``size`` cells on side ``d`` of a ``size x size`` block."""
    last = size - 1
    if d == UP:
        return [(0, t) for t in range(size)]
    if d == DOWN:
        return [(last, t) for t in range(size)]
    if d == LEFT:
        return [(t, 0) for t in range(size)]
    if d == RIGHT:
        return [(t, last) for t in range(size)]
    raise ValueError(f"bad direction {d}")


@lru_cache(maxsize=None)
def side_masks(n: int) -> tuple[int, int, int, int]:
    """Bitmask of local indices ``i*n + j`` on each side of an ``n x n`` grid."""
    masks = []
    for d in range(4):
        m = 0
        for a, b in side_cells(n, d):
            m |= 1 << (a * n + b)
        masks.append(m)
    return tuple(masks)


@lru_cache(maxsize=None)
def local_adjacency(n: int) -> tuple[tuple[int, ...], ...]:
    """Neighbor lists of an ``n x n`` grid over local indices ``i*n + j``."""
    return tuple(
        tuple(a * n + b for a, b in neighbor_list((v // n, v % n), n)) for v in range(n * n)
    )
