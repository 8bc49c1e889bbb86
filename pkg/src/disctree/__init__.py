"""Piecewise-constant density estimation on binary partitions of the unit cube,
grown wherever the star discrepancy of a cell's points is too large."""

from .analysis import build_adjacency_graph, build_level_set_tree, detect_modes, is_adjacent
from .core import (
    DomainError,
    HyperRect,
    InvariantError,
    PartitionTree,
    PiecewiseDensity,
    SampleSet,
    density_at,
    integrate_over_rect,
    locate_leaf,
    rect_volume,
    rescale_to_unit,
)
from .discrepancy import (
    DiscrepancySizeError,
    SplitDecisionConfig,
    l2_star_discrepancy,
    projection_lower_bound,
    should_split,
    star_discrepancy_1d,
    star_discrepancy_exact,
    star_discrepancy_grid,
)
from .estimator import EstimatorConfig, compute_gaps, estimate_density, select_split

__version__ = "0.1.0"
