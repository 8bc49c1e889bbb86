"""Sequential binary partitioning driven by a discrepancy test.

Each sweep visits the current leaves; a leaf whose points fail the uniformity
test is cut along the dimension and bin boundary with the largest gap between
the empirical and uniform fractions. Sweeps stop when nothing changes.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .core import DomainError, HyperRect, Node, PartitionTree, SampleSet, rect_volume, rescale_to_unit
from .discrepancy import Decision, SplitDecisionConfig, should_split

__all__ = [
    "GapTable",
    "EstimatorConfig",
    "Estimate",
    "compute_gaps",
    "select_split",
    "split_masses",
    "split_cell",
    "estimate_density",
    "max_depth_guard",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GapTable:
    """Gaps ``g[k-1, j]`` between the empirical fraction below the k-th cut and k/m."""

    gaps: np.ndarray
    m: int
    cell: HyperRect
    count: int

    def cut(self, j: int, k: int) -> float:
        lo, hi = self.cell.lower[j], self.cell.upper[j]
        return lo + (hi - lo) * k / self.m


def compute_gaps(points: np.ndarray, cell: HyperRect, m: int) -> GapTable:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] == 0:
        raise DomainError("cannot compute gaps of an empty cell")
    if m < 2:
        raise DomainError("m must be at least 2")
    n = pts.shape[0]
    lo = np.asarray(cell.lower)
    hi = np.asarray(cell.upper)
    k = np.arange(1, m)
    cuts = lo[None, :] + (hi - lo)[None, :] * k[:, None] / m  # (m-1, d)
    below = np.empty((m - 1, pts.shape[1]))
    for j in range(pts.shape[1]):
        below[:, j] = np.searchsorted(np.sort(pts[:, j]), cuts[:, j], side="left")
    gaps = np.abs(below / n - (k / m)[:, None])
    return GapTable(gaps, m, cell, n)


def select_split(table: GapTable) -> tuple[int, int, float]:
    """Return ``(dim, k, location)`` of the largest gap.

    Ties go to the smallest dimension, then the smallest ``k``.
    """
    flat = np.argmax(table.gaps.T)  # row-major over (dim, k)
    j, kk = divmod(int(flat), table.m - 1)
    k = kk + 1
    return j, k, table.cut(j, k)


def split_masses(parent_mass: float, n_left: int, n_cell: int, pseudo_count: float = 0.0) -> tuple[float, float]:
    left = parent_mass * (n_left + pseudo_count) / (n_cell + 2.0 * pseudo_count)
    return left, parent_mass - left


@dataclass(frozen=True)
class _Leaf:
    cell: HyperRect
    index: np.ndarray
    mass: float

    @property
    def count(self) -> int:
        return int(self.index.size)

    @property
    def density(self) -> float:
        return self.mass / rect_volume(self.cell)


def split_cell(
    leaf: _Leaf, points: np.ndarray, dim: int, loc: float, pseudo_count: float = 0.0
) -> tuple[_Leaf, _Leaf]:
    """Cut a leaf and share its mass between the two halves.

    ``points`` is the full sample array that ``leaf.index`` refers to.
    """
    left_cell, right_cell = leaf.cell.split(dim, loc)
    goes_left = points[leaf.index, dim] < loc
    left_idx = leaf.index[goes_left]
    right_idx = leaf.index[~goes_left]
    m_left, m_right = split_masses(leaf.mass, left_idx.size, leaf.count, pseudo_count)
    return _Leaf(left_cell, left_idx, m_left), _Leaf(right_cell, right_idx, m_right)


@dataclass(frozen=True)
class EstimatorConfig:
    m: int = 3
    theta: float = 1.0
    epsilon: float = 1e-3
    pseudo_count: float = 0.0
    max_depth: int = 50
    c: float = 10.0
    mode: str = "auto"
    grid_res: int = 64
    exact_guard: int = 2_000_000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.m < 2:
            raise DomainError("m must be at least 2")
        if self.max_depth < 1:
            raise DomainError("max_depth must be at least 1")
        if self.pseudo_count < 0:
            raise DomainError("pseudo_count must be non-negative")
        self.split_config()  # validates the remaining fields

    def split_config(self) -> SplitDecisionConfig:
        return SplitDecisionConfig(
            theta=self.theta,
            c=self.c,
            epsilon=self.epsilon,
            mode=self.mode,
            grid_res=self.grid_res,
            exact_guard=self.exact_guard,
        )

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class Estimate:
    tree: PartitionTree
    report: dict[str, Any] = field(default_factory=dict)

    @property
    def density(self):
        return self.tree.density()


def _build_tree(
    root: HyperRect, records: list[dict], theta: float, d: int, meta: dict
) -> tuple[PartitionTree, dict[int, int]]:
    # records use build-order ids; renumber in preorder
    order: list[int] = []
    stack = [0]
    while stack:
        i = stack.pop()
        order.append(i)
        rec = records[i]
        if rec["children"] is not None:
            stack.append(rec["children"][1])
            stack.append(rec["children"][0])
    new_id = {old: new for new, old in enumerate(order)}
    nodes = []
    for old in order:
        rec = records[old]
        cell = rec["cell"]
        if rec["children"] is None:
            split_dim = split_loc = left = right = None
        else:
            split_dim, split_loc = rec["split"]
            left, right = (new_id[c] for c in rec["children"])
        nodes.append(
            Node(
                id=new_id[old],
                cell=cell,
                depth=rec["depth"],
                count=rec["count"],
                mass=rec["mass"],
                density=rec["mass"] / rect_volume(cell),
                split_dim=split_dim,
                split_loc=split_loc,
                left=left,
                right=right,
            )
        )
    return PartitionTree(d, tuple(nodes), theta, meta), new_id


def estimate_density(samples: SampleSet | np.ndarray, cfg: EstimatorConfig | None = None) -> Estimate:
    """Build the discrepancy-controlled binary partition of ``[0, 1]^d``.

    Returns the partition tree and a run report with the sweep count, the leaf
    count and every split decision taken.
    """
    cfg = cfg or EstimatorConfig()
    if not isinstance(samples, SampleSet):
        samples = SampleSet(np.asarray(samples, dtype=float))
    pts = samples.points
    n_total, d = pts.shape
    split_cfg = cfg.split_config()
    root = HyperRect.unit(d)

    records: list[dict] = [
        {"cell": root, "depth": 0, "count": n_total, "mass": 1.0, "children": None, "split": None}
    ]
    live: dict[int, _Leaf] = {0: _Leaf(root, np.arange(n_total), 1.0)}
    decisions: list[tuple[int, Decision]] = []
    sweeps = 0
    while True:
        sweeps += 1
        planned: list[tuple[int, int, float]] = []
        for rid, leaf in list(live.items()):
            if leaf.count == 0 or records[rid]["depth"] >= cfg.max_depth:
                del live[rid]
                continue
            gaps = compute_gaps(pts[leaf.index], leaf.cell, cfg.m)
            local = rescale_to_unit(pts[leaf.index], leaf.cell)
            decision = should_split(local, n_total, split_cfg)
            decisions.append((rid, decision))
            if not decision.split:
                del live[rid]
                continue
            j, _, loc = select_split(gaps)
            if not (leaf.cell.lower[j] < loc < leaf.cell.upper[j]):
                # cell too thin to cut in floating point
                del live[rid]
                continue
            planned.append((rid, j, loc))
        if not planned:
            break
        for rid, j, loc in planned:
            leaf = live.pop(rid)
            left, right = split_cell(leaf, pts, j, loc, cfg.pseudo_count)
            depth = records[rid]["depth"] + 1
            kids = []
            for child in (left, right):
                kids.append(len(records))
                live[len(records)] = child
                records.append(
                    {
                        "cell": child.cell,
                        "depth": depth,
                        "count": child.count,
                        "mass": child.mass,
                        "children": None,
                        "split": None,
                    }
                )
            records[rid]["children"] = tuple(kids)
            records[rid]["split"] = (j, loc)
        log.debug("sweep %d: %d splits, %d live leaves", sweeps, len(planned), len(live))

    meta = {"seed": cfg.seed, "config": cfg.to_dict()}
    tree, new_id = _build_tree(root, records, cfg.theta, d, meta)
    report = {
        "config": cfg.to_dict(),
        "sweeps": sweeps,
        "leaves": len(tree.leaves()),
        "decisions": [
            {
                "leaf_id": new_id[rid],
                "rung": dec.rung,
                "value": dec.value,
                "threshold": dec.threshold,
                "split": dec.split,
            }
            for rid, dec in decisions
        ],
    }
    return Estimate(tree, report)


def max_depth_guard(tree: PartitionTree, max_depth: int) -> bool:
    return all(n.depth <= max_depth for n in tree.leaves())
