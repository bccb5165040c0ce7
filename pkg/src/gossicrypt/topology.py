"""Square lattice wrapped onto a torus; node ``i`` sits at ``divmod(i, side)``."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class NotSquare(ValueError):
    pass


@dataclass(frozen=True)
class GridTopology:
    side: int

    @property
    def n(self) -> int:
        return self.side * self.side

    def coords(self, node: int) -> tuple:
        return divmod(int(node), self.side)

    def node_id(self, x: int, y: int) -> int:
        return (x % self.side) * self.side + (y % self.side)

    def neighbors(self, node: int) -> list:
        """East, west, north, south; duplicates kept on tiny tori."""
        x, y = self.coords(node)
        return [self.node_id(x + 1, y), self.node_id(x - 1, y),
                self.node_id(x, y + 1), self.node_id(x, y - 1)]

    def _axis(self, a: int, b: int) -> int:
        d = (b - a) % self.side
        return min(d, self.side - d)

    def distance(self, a: int, b: int) -> int:
        (ax, ay), (bx, by) = self.coords(a), self.coords(b)
        return self._axis(ax, bx) + self._axis(ay, by)

    def distance_matrix(self) -> np.ndarray:
        idx = np.arange(self.n)
        x, y = np.divmod(idx, self.side)
        dx = np.abs(x[:, None] - x[None, :])
        dy = np.abs(y[:, None] - y[None, :])
        return np.minimum(dx, self.side - dx) + np.minimum(dy, self.side - dy)

    def cells_at_distance(self, node: int, d: int) -> list:
        x, y = self.coords(node)
        out = set()
        for dx in range(-d, d + 1):
            r = d - abs(dx)
            for dy in {r, -r}:
                cell = self.node_id(x + dx, y + dy)
                if self.distance(node, cell) == d:
                    out.add(cell)
        return sorted(out)

    def path_length_distribution(self) -> dict:
        """Distribution of the hop distance between two distinct uniform nodes."""
        d = self.distance_matrix()[0]
        vals, counts = np.unique(d[d > 0], return_counts=True)
        return {int(v): c / counts.sum() for v, c in zip(vals, counts)}


def build_topology(n: int) -> GridTopology:
    side = math.isqrt(n) if n > 0 else 0
    if n <= 0 or side * side != n:
        raise NotSquare(f"N={n} is not a positive perfect square")
    return GridTopology(side)


def _axis_moves(topo: GridTopology, a: int, b: int, rng):
    d = (b - a) % topo.side
    back = topo.side - d
    if d == 0:
        return 0, 0
    if d < back:
        return 1, d
    if back < d:
        return -1, back
    return (1 if rng.random() < 0.5 else -1), d


def shortest_path(topo: GridTopology, a: int, b: int, rng) -> list:
    """A hop-minimal path ``[a, ..., b]``, uniform over all shortest paths."""
    (ax, ay), (bx, by) = topo.coords(a), topo.coords(b)
    sx, nx = _axis_moves(topo, ax, bx, rng)
    sy, ny = _axis_moves(topo, ay, by, rng)
    moves = np.array([0] * nx + [1] * ny)
    rng.shuffle(moves)
    path = [int(a)]
    x, y = ax, ay
    for mv in moves:
        if mv == 0:
            x += sx
        else:
            y += sy
        path.append(topo.node_id(x, y))
    return path
