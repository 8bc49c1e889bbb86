"""Star discrepancy of point sets in the unit cube.

The exact routine enumerates the critical anchor grid (distinct point
coordinates plus 1 in every dimension) and counts dominated points with a
d-dimensional cumulative histogram, so its cost is the grid size rather than
grid size times ``n``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Literal

import numpy as np

from .core import DomainError

__all__ = [
    "DiscrepancySizeError",
    "SplitDecisionConfig",
    "Decision",
    "star_discrepancy_1d",
    "star_discrepancy_exact",
    "star_discrepancy_grid",
    "l2_star_discrepancy",
    "projection_lower_bound",
    "split_threshold",
    "alpha_factor",
    "should_split",
    "exact_grid_size",
]

EXACT_GUARD = 2_000_000
GRID_GUARD = 2_000_000

Mode = Literal["exact", "grid", "l2", "auto"]


class DiscrepancySizeError(ValueError):
    """The exact anchor grid is too large to enumerate."""


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise DomainError("need at least one point")
    return pts


def star_discrepancy_1d(values) -> float:
    """Closed form ``1/(2n) + max_i |x_(i) - (2i-1)/(2n)|``."""
    x = np.sort(np.asarray(values, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise DomainError("need at least one value")
    centers = (2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n)
    return float(1.0 / (2.0 * n) + np.max(np.abs(x - centers)))


def _dominance_counts(bins: list[np.ndarray], shape: tuple[int, ...]) -> np.ndarray:
    # bins[j][i] = first anchor index along j whose box counts point i;
    # a bin equal to shape[j] means "never counted"
    full = tuple(k + 1 for k in shape)
    flat = np.ravel_multi_index(bins, full)
    hist = np.bincount(flat, minlength=math.prod(full)).reshape(full)
    for axis in range(len(shape)):
        hist = np.cumsum(hist, axis=axis)
    return hist[tuple(slice(0, k) for k in shape)]


def _local_extremes(pts: np.ndarray, anchors: list[np.ndarray], right_ranks, left_ranks) -> float:
    n = pts.shape[0]
    shape = tuple(a.size for a in anchors)
    open_counts = _dominance_counts(right_ranks, shape)
    closed_counts = _dominance_counts(left_ranks, shape)
    vol = anchors[0]
    for a in anchors[1:]:
        vol = np.multiply.outer(vol, a)
    over = np.max(vol - open_counts / n)
    under = np.max(closed_counts / n - vol)
    return float(min(1.0, max(0.0, over, under)))


def exact_grid_size(points) -> int:
    pts = _as_points(points)
    return math.prod(np.union1d(pts[:, j], [1.0]).size for j in range(pts.shape[1]))


def star_discrepancy_exact(points, guard: int = EXACT_GUARD) -> float:
    """Exact star discrepancy.

    The supremum over anchored boxes ``[0, a)`` is attained (as a value or a
    one-sided limit) on the grid of distinct point coordinates plus 1. For
    each grid anchor the open count ``#{x < a}`` bounds volume excess and the
    closed count ``#{x <= a}`` bounds the point excess; points with a
    coordinate equal to 1 never enter a box along that axis.

    Raises
    ------
    DiscrepancySizeError
        If the anchor grid has more than ``guard`` points.
    """
    pts = _as_points(points)
    d = pts.shape[1]
    anchors = [np.union1d(pts[:, j], [1.0]) for j in range(d)]
    size = math.prod(a.size for a in anchors)
    if size > guard:
        raise DiscrepancySizeError(f"anchor grid of {size} points exceeds guard {guard}")
    closed_ranks = []
    open_ranks = []
    for j in range(d):
        r = np.searchsorted(anchors[j], pts[:, j])
        # x < a_i  iff  i > rank(x)
        open_ranks.append(r + 1)
        closed_ranks.append(np.where(pts[:, j] >= 1.0, anchors[j].size, r))
    return _local_extremes(pts, anchors, open_ranks, closed_ranks)


def star_discrepancy_grid(points, k: int = 64) -> float:
    """Local discrepancy maximised over anchors in ``{1/k, ..., 1}^d``.

    A lower bound on the true star discrepancy; nested grids (``k`` dividing
    ``k'``) give non-decreasing values.
    """
    if k < 2:
        raise DomainError("grid resolution must be at least 2")
    pts = _as_points(points)
    d = pts.shape[1]
    grid = np.arange(1, k + 1, dtype=float) / k
    grid[-1] = 1.0
    anchors = [grid] * d
    open_ranks = []
    closed_ranks = []
    for j in range(d):
        col = pts[:, j]
        open_ranks.append(np.searchsorted(grid, col, side="right"))
        closed_ranks.append(np.where(col >= 1.0, k, np.searchsorted(grid, col, side="left")))
    return _local_extremes(pts, anchors, open_ranks, closed_ranks)


def l2_star_discrepancy(points, chunk: int = 1024) -> float:
    """Warnock's closed form for the L2 star discrepancy, evaluated directly."""
    x = _as_points(points)
    n, d = x.shape
    first = 3.0 ** (-d)
    second = 2.0 ** (1 - d) / n * math.fsum(np.prod(1.0 - x * x, axis=1).tolist())
    y = 1.0 - x
    partial = []
    for start in range(0, n, chunk):
        block = y[start:start + chunk]
        partial.extend(np.sum(np.prod(np.minimum(block[:, None, :], y[None, :, :]), axis=2), axis=1).tolist())
    # the three terms nearly cancel in higher dimensions
    value = math.fsum([first, -second, math.fsum(partial) / (n * n)])
    return math.sqrt(max(value, 0.0))


def projection_lower_bound(points) -> float:
    pts = _as_points(points)
    return max(star_discrepancy_1d(pts[:, j]) for j in range(pts.shape[1]))


def split_threshold(n_cell: int, n_total: int, theta: float) -> float:
    return theta * math.sqrt(n_total) / n_cell


def alpha_factor(n_cell: int, n_total: int, d: int, theta: float, c: float = 10.0) -> float:
    """Per-cell relaxation factor multiplying the optimal-discrepancy bound."""
    return math.sqrt(n_total / (n_cell * d)) * theta / c


@dataclass(frozen=True)
class SplitDecisionConfig:
    theta: float = 1.0
    c: float = 10.0
    epsilon: float = 1e-3
    mode: Mode = "auto"
    grid_res: int = 64
    exact_guard: int = EXACT_GUARD
    grid_guard: int = GRID_GUARD

    def __post_init__(self) -> None:
        if not self.theta > 0:
            raise DomainError("theta must be positive")
        if not self.c > 0:
            raise DomainError("c must be positive")
        if not 0 < self.epsilon < 1:
            raise DomainError("epsilon must lie in (0, 1)")
        if self.mode not in ("exact", "grid", "l2", "auto"):
            raise DomainError(f"unknown discrepancy mode {self.mode!r}")
        if self.grid_res < 2:
            raise DomainError("grid resolution must be at least 2")


@dataclass(frozen=True)
class Decision:
    """Outcome of one split test and the rung of the ladder that settled it."""

    split: bool
    rung: str
    threshold: float
    value: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _evaluate(points: np.ndarray, cfg: SplitDecisionConfig) -> tuple[str, float]:
    d = points.shape[1]
    if cfg.mode == "l2":
        return "l2", l2_star_discrepancy(points)
    if cfg.mode in ("exact", "auto") and exact_grid_size(points) <= cfg.exact_guard:
        return "exact", star_discrepancy_exact(points, guard=cfg.exact_guard)
    if cfg.mode in ("exact", "grid", "auto") and (cfg.grid_res + 1) ** d <= cfg.grid_guard:
        return "grid", star_discrepancy_grid(points, cfg.grid_res)
    return "l2", l2_star_discrepancy(points)


def should_split(points, n_total: int, cfg: SplitDecisionConfig) -> Decision:
    """Decide whether a cell's points are too far from uniform.

    ``points`` are the cell's points already rescaled to the unit cube. The
    threshold is ``theta * sqrt(n_total) / n_cell``; the cheapest conclusive
    test wins:

    1. ``trivial``: threshold >= 1, discrepancy can never exceed it.
    2. ``epsilon``: threshold <= epsilon, split without checking.
    3. ``projection``: the largest 1-D projection discrepancy already exceeds it.
    4. ``exact`` / ``grid`` / ``l2`` per ``cfg.mode``.
    """
    pts = _as_points(points)
    t = split_threshold(pts.shape[0], n_total, cfg.theta)
    if t >= 1.0:
        return Decision(False, "trivial", t)
    if t <= cfg.epsilon:
        return Decision(True, "epsilon", t)
    proj = projection_lower_bound(pts)
    if proj > t:
        return Decision(True, "projection", t, proj)
    rung, value = _evaluate(pts, cfg)
    return Decision(value > t, rung, t, value)
