"""Cell adjacency, modes and the level-set tree of a piecewise-constant density."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import DomainError, HyperRect, PiecewiseDensity

__all__ = [
    "AdjacencyGraph",
    "LevelSetTree",
    "is_adjacent",
    "adjacency_matrix",
    "build_adjacency_graph",
    "detect_modes",
    "build_level_set_tree",
]


def is_adjacent(ri: HyperRect, rj: HyperRect) -> bool:
    """True unless the boxes are separated along some axis.

    Per axis the boxes are apart when the distance between centres exceeds
    the half-sum of widths. That is evaluated in the equivalent form
    ``lower_i > upper_j or lower_j > upper_i`` so that shared faces, which
    carry the identical split coordinate, compare exactly. Touching faces and
    corners count as adjacent.
    """
    if ri.dim != rj.dim:
        raise DomainError("dimension mismatch")
    for a_lo, a_hi, b_lo, b_hi in zip(ri.lower, ri.upper, rj.lower, rj.upper):
        if a_lo > b_hi or b_lo > a_hi:
            return False
    return True


def adjacency_matrix(pd: PiecewiseDensity) -> np.ndarray:
    """Symmetric boolean matrix of cell adjacency with a ``False`` diagonal."""
    lo, hi = pd.lower, pd.upper
    adj = np.ones((len(pd), len(pd)), dtype=bool)
    for j in range(pd.dim):
        adj &= ~((lo[:, None, j] > hi[None, :, j]) | (lo[None, :, j] > hi[:, None, j]))
    np.fill_diagonal(adj, False)
    return adj


@dataclass(frozen=True)
class AdjacencyGraph:
    """Cells as nodes ``0..l-1``; node ``l`` is the virtual zero-density region if present."""

    n_cells: int
    neighbors: tuple[tuple[int, ...], ...]
    virtual: int | None = None

    @property
    def n_nodes(self) -> int:
        return self.n_cells + (self.virtual is not None)

    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i, nb in enumerate(self.neighbors) for j in nb if i < j]

    def components(self, include_virtual: bool = True) -> list[list[int]]:
        limit = self.n_nodes if include_virtual else self.n_cells
        seen = [False] * limit
        out = []
        for start in range(limit):
            if seen[start]:
                continue
            seen[start] = True
            stack, comp = [start], []
            while stack:
                u = stack.pop()
                comp.append(u)
                for v in self.neighbors[u]:
                    if v < limit and not seen[v]:
                        seen[v] = True
                        stack.append(v)
            out.append(sorted(comp))
        return out


def build_adjacency_graph(pd: PiecewiseDensity) -> AdjacencyGraph:
    adj = adjacency_matrix(pd)
    neighbors = [list(np.flatnonzero(row)) for row in adj]
    base = AdjacencyGraph(len(pd), tuple(tuple(int(v) for v in nb) for nb in neighbors))
    comps = base.components()
    if len(comps) <= 1:
        return base
    virtual = len(pd)
    links = []
    for comp in comps:
        # lowest density, ties by id
        links.append(min(comp, key=lambda i: (pd.density[i], i)))
    for i in links:
        neighbors[i].append(virtual)
    neighbors.append(sorted(links))
    return AdjacencyGraph(len(pd), tuple(tuple(int(v) for v in nb) for nb in neighbors), virtual)


def detect_modes(pd: PiecewiseDensity, graph: AdjacencyGraph | None = None) -> list[int]:
    """Cells whose density is strictly larger than that of every neighbouring cell."""
    graph = graph or build_adjacency_graph(pd)
    modes = []
    for i in range(graph.n_cells):
        nb = [j for j in graph.neighbors[i] if j < graph.n_cells]
        if all(pd.density[i] > pd.density[j] for j in nb):
            modes.append(i)
    return modes


@dataclass(frozen=True)
class LevelSetTree:
    """Parent pointers and density colours from the decreasing-density sweep.

    ``parent[i] == -1`` marks a root. ``order`` lists the nodes in the order
    they were added.
    """

    parent: np.ndarray
    color: np.ndarray
    order: tuple[int, ...]
    virtual: int | None = None

    def __len__(self) -> int:
        return self.parent.size

    def children(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(len(self))]
        for i, p in enumerate(self.parent):
            if p >= 0:
                out[p].append(i)
        return out

    def leaves(self) -> list[int]:
        return [i for i, ch in enumerate(self.children()) if not ch and i != self.virtual]

    def roots(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.parent < 0)]

    def top_within(self, node: int, level: float) -> int:
        """Highest ancestor of ``node`` whose colour is still at least ``level``."""
        while self.parent[node] >= 0 and self.color[self.parent[node]] >= level:
            node = int(self.parent[node])
        return node

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {
                    "id": i,
                    "color": float(self.color[i]),
                    "parent": None if self.parent[i] < 0 else int(self.parent[i]),
                    "virtual": i == self.virtual,
                }
                for i in range(len(self))
            ]
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_dot(self) -> str:
        lines = ["digraph levelset {"]
        for i in range(len(self)):
            label = "virtual:0" if i == self.virtual else f"{i}:{self.color[i]:.6g}"
            lines.append(f'  n{i} [label="{label}"];')
        for i, p in enumerate(self.parent):
            if p >= 0:
                lines.append(f"  n{i} -> n{int(p)};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_level_set_tree(pd: PiecewiseDensity, graph: AdjacencyGraph | None = None) -> LevelSetTree:
    """Sweep cells by decreasing density (ties by id), merging adjacent components.

    A cell touching existing components becomes the parent of the cell most
    recently added to each of them; a cell touching none starts a new leaf.
    The virtual region, if any, is processed last.
    """
    graph = graph or build_adjacency_graph(pd)
    n = graph.n_nodes
    color = np.zeros(n)
    color[: graph.n_cells] = pd.density
    order = sorted(range(graph.n_cells), key=lambda i: (-pd.density[i], i))
    if graph.virtual is not None:
        order.append(graph.virtual)

    uf = list(range(n))

    def find(i: int) -> int:
        while uf[i] != i:
            uf[i] = uf[uf[i]]
            i = uf[i]
        return i

    parent = np.full(n, -1, dtype=np.int64)
    latest: dict[int, int] = {}
    added = np.zeros(n, dtype=bool)
    for r in order:
        roots = sorted({find(v) for v in graph.neighbors[r] if added[v]})
        for g in roots:
            parent[latest.pop(g)] = r
            uf[g] = r
        added[r] = True
        latest[r] = r
    return LevelSetTree(parent, color, tuple(order), graph.virtual)
