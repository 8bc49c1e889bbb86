"""Geometry and the piecewise-constant density shared by the rest of the package.

Cells use a half-open membership convention: a point ``x`` belongs to the cell
``[lower, upper)`` per dimension, except that the global upper boundary
``upper[j] == 1`` is closed. Under this rule every point of the unit cube lies
in exactly one leaf of a partition.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "InvariantError",
    "HyperRect",
    "SampleSet",
    "Node",
    "PartitionTree",
    "PiecewiseDensity",
    "rect_volume",
    "rescale_to_unit",
    "density_at",
    "integrate_over_rect",
    "locate_leaf",
]


class DomainError(ValueError):
    """Input outside the domain an operation is defined on."""


class InvariantError(RuntimeError):
    """A structural invariant of a partition or density was violated."""


@dataclass(frozen=True)
class HyperRect:
    """Axis-aligned box inside the unit cube."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self) -> None:
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or not lo:
            raise DomainError("lower and upper must have the same positive length")
        for j, (a, b) in enumerate(zip(lo, hi)):
            if not (0.0 <= a < b <= 1.0):
                raise DomainError(f"invalid extent [{a}, {b}] in dimension {j}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, d: int) -> "HyperRect":
        return cls((0.0,) * d, (1.0,) * d)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def widths(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.upper) + np.asarray(self.lower))

    def contains(self, x: Sequence[float]) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DomainError(f"expected a point of dimension {self.dim}")
        return bool(np.all(_member(x[None, :], np.asarray(self.lower), np.asarray(self.upper))))

    def split(self, dim: int, loc: float) -> tuple["HyperRect", "HyperRect"]:
        """Cut along ``dim`` at ``loc``; left keeps ``upper[dim] = loc``."""
        if not (self.lower[dim] < loc < self.upper[dim]):
            raise DomainError(
                f"split location {loc} not inside ({self.lower[dim]}, {self.upper[dim]})"
            )
        left_hi = list(self.upper)
        left_hi[dim] = loc
        right_lo = list(self.lower)
        right_lo[dim] = loc
        return HyperRect(self.lower, tuple(left_hi)), HyperRect(tuple(right_lo), self.upper)


def _member(points: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    # (n, d) boolean: half-open per dimension, closed where upper == 1
    return (points >= lower) & ((points < upper) | ((upper == 1.0) & (points == 1.0)))


@dataclass(frozen=True)
class SampleSet:
    """``N`` points in ``[0, 1]^d`` stored as an ``(N, d)`` float array."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] == 0:
            raise DomainError("a sample set needs at least one point of positive dimension")
        if not np.all(np.isfinite(pts)):
            raise DomainError("sample coordinates must be finite")
        if pts.min() < 0.0 or pts.max() > 1.0:
            raise DomainError("sample coordinates must lie in [0, 1]")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.size


def rect_volume(rect: HyperRect) -> float:
    return float(np.prod(rect.widths))


def rescale_to_unit(points: np.ndarray, rect: HyperRect) -> np.ndarray:
    """Map points of ``rect`` affinely onto the unit cube.

    Raises
    ------
    DomainError
        If any point lies outside ``rect``.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    lo = np.asarray(rect.lower)
    hi = np.asarray(rect.upper)
    if pts.shape[1] != rect.dim:
        raise DomainError("dimension mismatch between points and rectangle")
    if np.any(pts < lo) or np.any(pts > hi):
        raise DomainError("point outside rectangle")
    return np.clip((pts - lo) / (hi - lo), 0.0, 1.0)


@dataclass(frozen=True)
class Node:
    """One node of a partition tree.

    Internal nodes carry ``split_dim``/``split_loc`` and child ids; leaves have
    them set to ``None``. Count, mass and density are stored for every node.
    """

    id: int
    cell: HyperRect
    depth: int
    count: int
    mass: float
    density: float
    split_dim: int | None = None
    split_loc: float | None = None
    left: int | None = None
    right: int | None = None

    @property
    def is_leaf(self) -> bool:
        return self.split_dim is None


@dataclass(frozen=True)
class PartitionTree:
    """Binary partition of ``[0, 1]^d``; node ids are preorder indices."""

    dimension: int
    nodes: tuple[Node, ...]
    theta: float | None = None
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        for i, node in enumerate(self.nodes):
            if node.id != i:
                raise InvariantError("node ids must equal their preorder index")

    @property
    def root(self) -> Node:
        return self.nodes[0]

    def leaves(self) -> list[Node]:
        return [n for n in self.nodes if n.is_leaf]

    def depth(self) -> int:
        return max(n.depth for n in self.nodes)

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Vectorised descent; returns the leaf id for each row of ``points``."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[None, :]
        if pts.shape[1] != self.dimension:
            raise DomainError("dimension mismatch")
        if np.any(pts < 0.0) or np.any(pts > 1.0):
            raise DomainError("point outside the root cell")
        split_dim = np.array([-1 if n.split_dim is None else n.split_dim for n in self.nodes])
        split_loc = np.array([np.nan if n.split_loc is None else n.split_loc for n in self.nodes])
        left = np.array([-1 if n.left is None else n.left for n in self.nodes])
        right = np.array([-1 if n.right is None else n.right for n in self.nodes])
        idx = np.zeros(pts.shape[0], dtype=np.int64)
        rows = np.arange(pts.shape[0])
        active = split_dim[idx] >= 0
        while np.any(active):
            cur = idx[active]
            go_left = pts[rows[active], split_dim[cur]] < split_loc[cur]
            idx[active] = np.where(go_left, left[cur], right[cur])
            active = split_dim[idx] >= 0
        return idx

    def check(self, atol: float = 1e-12) -> None:
        """Raise :class:`InvariantError` if the partition is malformed."""
        leaves = self.leaves()
        total = sum(n.mass for n in leaves)
        if abs(total - 1.0) > atol:
            raise InvariantError(f"leaf masses sum to {total!r}")
        for n in leaves:
            vol = rect_volume(n.cell)
            if n.density < 0 or abs(n.density * vol - n.mass) > atol:
                raise InvariantError(f"leaf {n.id}: density does not match mass / volume")
        for n in self.nodes:
            if n.is_leaf:
                continue
            lc, rc = n.cell.split(n.split_dim, n.split_loc)
            if self.nodes[n.left].cell != lc or self.nodes[n.right].cell != rc:
                raise InvariantError(f"children of node {n.id} do not partition its cell")
        vol = sum(rect_volume(n.cell) for n in leaves)
        if abs(vol - rect_volume(self.root.cell)) > 1e-9:
            raise InvariantError("leaf cells do not tile the root cell")

    # serialisation -----------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"dimension": self.dimension, "theta": self.theta}
        if self.meta:
            out["meta"] = self.meta
        out["nodes"] = [
            {
                "id": n.id,
                "lower": list(n.cell.lower),
                "upper": list(n.cell.upper),
                "split_dim": n.split_dim,
                "split_loc": n.split_loc,
                "left": n.left,
                "right": n.right,
                "count": n.count,
                "mass": n.mass,
                "density": n.density,
            }
            for n in self.nodes
        ]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PartitionTree":
        nodes = tuple(
            Node(
                id=int(r["id"]),
                cell=HyperRect(tuple(r["lower"]), tuple(r["upper"])),
                depth=0,
                count=int(r["count"]),
                mass=float(r["mass"]),
                density=float(r["density"]),
                split_dim=r["split_dim"],
                split_loc=r["split_loc"],
                left=r["left"],
                right=r["right"],
            )
            for r in data["nodes"]
        )
        depths = [0] * len(nodes)
        for n in nodes:
            if not n.is_leaf:
                depths[n.left] = depths[n.id] + 1
                depths[n.right] = depths[n.id] + 1
        nodes = tuple(
            Node(n.id, n.cell, depths[n.id], n.count, n.mass, n.density,
                 n.split_dim, n.split_loc, n.left, n.right)
            for n in nodes
        )
        return cls(int(data["dimension"]), nodes, data.get("theta"), dict(data.get("meta", {})))

    @classmethod
    def from_json(cls, text: str) -> "PartitionTree":
        return cls.from_dict(json.loads(text))

    def density(self) -> "PiecewiseDensity":
        return PiecewiseDensity.from_tree(self)


def locate_leaf(tree: PartitionTree, x: Sequence[float]) -> Node:
    return tree.nodes[int(tree.locate(np.asarray(x, dtype=float))[0])]


@dataclass(frozen=True)
class PiecewiseDensity:
    """Flattened list of leaf cells with their densities.

    Attributes
    ----------
    lower, upper : ndarray, shape (l, d)
        Cell corners.
    density, mass : ndarray, shape (l,)
    count : ndarray, shape (l,)
        Sample counts per cell.
    tree : PartitionTree, optional
        When present, point lookup descends the tree instead of scanning cells.
    """

    lower: np.ndarray
    upper: np.ndarray
    density: np.ndarray
    mass: np.ndarray
    count: np.ndarray
    tree: PartitionTree | None = field(default=None, compare=False, repr=False)
    _leaf_index: dict[int, int] | None = field(default=None, compare=False, repr=False)

    @classmethod
    def from_tree(cls, tree: PartitionTree) -> "PiecewiseDensity":
        leaves = tree.leaves()
        return cls(
            lower=np.array([n.cell.lower for n in leaves]),
            upper=np.array([n.cell.upper for n in leaves]),
            density=np.array([n.density for n in leaves]),
            mass=np.array([n.mass for n in leaves]),
            count=np.array([n.count for n in leaves], dtype=np.int64),
            tree=tree,
            _leaf_index={n.id: i for i, n in enumerate(leaves)},
        )

    @classmethod
    def from_cells(
        cls,
        cells: Sequence[HyperRect],
        masses: Sequence[float],
        counts: Sequence[int] | None = None,
    ) -> "PiecewiseDensity":
        lower = np.array([c.lower for c in cells])
        upper = np.array([c.upper for c in cells])
        mass = np.asarray(masses, dtype=float)
        vol = np.prod(upper - lower, axis=1)
        if counts is None:
            counts = np.zeros(len(cells), dtype=np.int64)
        return cls(lower, upper, mass / vol, mass, np.asarray(counts, dtype=np.int64))

    @property
    def dim(self) -> int:
        return self.lower.shape[1]

    def __len__(self) -> int:
        return self.lower.shape[0]

    @property
    def volumes(self) -> np.ndarray:
        return np.prod(self.upper - self.lower, axis=1)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def cells(self) -> Iterator[HyperRect]:
        for lo, hi in zip(self.lower, self.upper):
            yield HyperRect(tuple(lo), tuple(hi))

    def cell_index(self, points: np.ndarray) -> np.ndarray:
        """Index of the cell containing each point (``-1`` if none)."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[None, :]
        if pts.shape[1] != self.dim:
            raise DomainError(f"expected points of dimension {self.dim}")
        if self.tree is not None and self._leaf_index is not None:
            leaf_ids = self.tree.locate(pts)
            lookup = np.full(len(self.tree.nodes), -1, dtype=np.int64)
            for node_id, i in self._leaf_index.items():
                lookup[node_id] = i
            return lookup[leaf_ids]
        out = np.full(pts.shape[0], -1, dtype=np.int64)
        chunk = max(1, 2_000_000 // max(1, len(self) * self.dim))
        for start in range(0, pts.shape[0], chunk):
            block = pts[start:start + chunk]
            inside = np.all(
                _member(block[:, None, :], self.lower[None], self.upper[None]), axis=2
            )
            hit = inside.any(axis=1)
            out[start:start + chunk] = np.where(hit, inside.argmax(axis=1), -1)
        return out

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Vectorised density; zero outside every cell."""
        idx = self.cell_index(points)
        return np.where(idx >= 0, self.density[np.maximum(idx, 0)], 0.0)

    def integrate_box(self, lower: Sequence[float], upper: Sequence[float]) -> float:
        lo = np.maximum(self.lower, np.asarray(lower, dtype=float))
        hi = np.minimum(self.upper, np.asarray(upper, dtype=float))
        overlap = np.prod(np.clip(hi - lo, 0.0, None), axis=1)
        return float(np.sum(self.density * overlap))

    def check(self, atol: float = 1e-12) -> None:
        if np.any(self.density < 0):
            raise InvariantError("negative density")
        total = float(np.sum(self.density * self.volumes))
        if abs(total - 1.0) > atol:
            raise InvariantError(f"density integrates to {total!r}")


def density_at(pd: PiecewiseDensity, x: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (pd.dim,):
        raise DomainError(f"expected a point of dimension {pd.dim}")
    return float(pd.evaluate(x[None, :])[0])


def integrate_over_rect(pd: PiecewiseDensity, query: HyperRect) -> float:
    """Exact probability of ``query`` under the piecewise-constant density."""
    if query.dim != pd.dim:
        raise DomainError("dimension mismatch")
    return pd.integrate_box(query.lower, query.upper)
