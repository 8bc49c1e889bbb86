import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from disctree.core import DomainError
from disctree.discrepancy import (
    DiscrepancySizeError,
    SplitDecisionConfig,
    alpha_factor,
    l2_star_discrepancy,
    projection_lower_bound,
    should_split,
    split_threshold,
    star_discrepancy_1d,
    star_discrepancy_exact,
    star_discrepancy_grid,
)

from oracles import brute_star_discrepancy, naive_warnock, quadrature_l2, sampled_local_discrepancy


def test_1d_examples():
    assert star_discrepancy_1d([0.5]) == pytest.approx(0.5)
    assert star_discrepancy_1d([0.25, 0.75]) == pytest.approx(0.25)
    assert star_discrepancy_1d([(2 * i - 1) / 8 for i in range(1, 5)]) == pytest.approx(0.125)
    with pytest.raises(DomainError):
        star_discrepancy_1d([])


def test_1d_example_by_brute_force():
    assert brute_star_discrepancy(np.array([0.25, 0.75])) == pytest.approx(0.25)


def test_exact_corner_cases():
    assert star_discrepancy_exact([[1.0, 1.0]]) == pytest.approx(1.0)
    assert star_discrepancy_exact([[1.0, 1.0, 1.0]]) == pytest.approx(1.0)
    assert star_discrepancy_exact([[0.0, 0.0]]) == pytest.approx(1.0)


def test_exact_size_guard():
    pts = np.random.default_rng(0).random((200, 3))
    with pytest.raises(DiscrepancySizeError):
        star_discrepancy_exact(pts, guard=10_000)


def test_exact_matches_1d_formula():
    rng = np.random.default_rng(7)
    for _ in range(200):
        x = rng.random(rng.integers(1, 51))
        assert star_discrepancy_exact(x[:, None]) == pytest.approx(star_discrepancy_1d(x), abs=1e-12)


def test_exact_is_a_supremum():
    rng = np.random.default_rng(8)
    for _ in range(20):
        pts = rng.random((15, 2))
        anchors = rng.random((5000, 2))
        assert sampled_local_discrepancy(pts, anchors) <= star_discrepancy_exact(pts) + 1e-12


def test_grid_examples():
    rng = np.random.default_rng(1)
    for _ in range(10):
        pts = rng.random((rng.integers(2, 21), 2))
        exact = star_discrepancy_exact(pts)
        approx = star_discrepancy_grid(pts, 256)
        assert approx <= exact + 1e-12
        assert exact - approx < 2 * 2 / 256
    lattice = (2 * np.arange(1, 5) - 1) / 8
    pts = np.array([(a, b) for a in lattice for b in lattice])
    assert abs(star_discrepancy_grid(pts, 64) - star_discrepancy_exact(pts)) < 2 * 2 / 64


def test_grid_includes_full_box():
    pts = np.array([[1.0, 0.2], [0.3, 1.0], [0.5, 0.5]])
    inside = np.sum(np.all(pts < 1.0, axis=1))
    assert star_discrepancy_grid(pts, 2) >= abs(inside / 3 - 1.0)


def test_grid_monotone_on_nested_grids():
    rng = np.random.default_rng(2)
    for _ in range(20):
        pts = rng.random((20, 2))
        vals = [star_discrepancy_grid(pts, k) for k in (2, 4, 8, 16, 32, 64)]
        assert all(a <= b + 1e-15 for a, b in zip(vals, vals[1:]))
        assert vals[-1] <= star_discrepancy_exact(pts) + 1e-12


def test_l2_examples():
    assert l2_star_discrepancy([[0.0]]) == pytest.approx(math.sqrt(1 / 3))
    assert l2_star_discrepancy([[1.0]]) == pytest.approx(math.sqrt(1 / 3))
    assert quadrature_l2([[0.0]]) == pytest.approx(math.sqrt(1 / 3))


def test_l2_chunking_does_not_change_value():
    pts = np.random.default_rng(4).random((300, 3))
    assert l2_star_discrepancy(pts, chunk=7) == pytest.approx(l2_star_discrepancy(pts), rel=1e-12)
    assert l2_star_discrepancy(pts) == pytest.approx(naive_warnock(pts), rel=1e-12)


def test_projection_examples():
    rng = np.random.default_rng(5)
    t = rng.random(12)
    assert projection_lower_bound(t[:, None]) == star_discrepancy_1d(t)
    diag = np.stack([t, t, t], axis=1)
    assert projection_lower_bound(diag) == pytest.approx(star_discrepancy_1d(t))


def test_bounds_below_exact_on_random_sets():
    rng = np.random.default_rng(6)
    for _ in range(100):
        d = int(rng.integers(1, 4))
        pts = rng.random((int(rng.integers(1, 25)), d))
        exact = star_discrepancy_exact(pts)
        assert 0.0 <= exact <= 1.0
        assert projection_lower_bound(pts) <= exact + 1e-12
        l2 = l2_star_discrepancy(pts)
        assert 0.0 <= l2 <= exact + 1e-12


def test_should_split_trivial_rung():
    dec = should_split(np.random.default_rng(0).random((1, 2)), 100, SplitDecisionConfig(theta=1.0))
    assert dec.threshold == pytest.approx(10.0)
    assert (dec.split, dec.rung) == (False, "trivial")


def test_should_split_epsilon_rung():
    # threshold = sqrt(1e8) / 1e7 = 1e-3 <= epsilon: split without computing anything
    pts = np.zeros((10 ** 7, 1), dtype=np.float32)
    dec = should_split(pts, 10 ** 8, SplitDecisionConfig(theta=1.0, epsilon=1e-3))
    assert (dec.split, dec.rung, dec.value) == (True, "epsilon", None)
    assert dec.threshold == pytest.approx(1e-3)


def test_alpha_forms_agree():
    n_total, n_cell, d, theta, c = 10 ** 4, 10 ** 2, 2, 1.0, 10.0
    alpha = alpha_factor(n_cell, n_total, d, theta, c)
    assert alpha == pytest.approx(math.sqrt(50) / 10)
    assert alpha * c * math.sqrt(d) / math.sqrt(n_cell) == pytest.approx(split_threshold(n_cell, n_total, theta))
    assert split_threshold(n_cell, n_total, theta) == pytest.approx(1.0)


def test_should_split_projection_and_exact_rungs():
    clustered = np.full((400, 2), 0.01) + np.random.default_rng(0).random((400, 2)) * 0.01
    dec = should_split(clustered, 400, SplitDecisionConfig())
    assert (dec.split, dec.rung) == (True, "projection")
    lattice = (2 * np.arange(1, 21) - 1) / 40
    grid_pts = np.array([(a, b) for a in lattice for b in lattice])
    dec = should_split(grid_pts, 400 * 4, SplitDecisionConfig())
    assert dec.rung == "exact" and not dec.split


@pytest.mark.parametrize("mode, rung", [("l2", "l2"), ("grid", "grid"), ("exact", "exact")])
def test_should_split_mode_selection(mode, rung):
    pts = np.random.default_rng(1).random((50, 2))
    dec = should_split(pts, 2500 / 4, SplitDecisionConfig(mode=mode))
    assert dec.rung == rung


def test_exact_mode_falls_back_to_grid():
    pts = np.random.default_rng(1).random((3000, 2))
    dec = should_split(pts, 3000 ** 2 / 100, SplitDecisionConfig(mode="exact"))
    assert dec.rung == "grid"


def test_config_validation():
    with pytest.raises(DomainError):
        SplitDecisionConfig(theta=0)
    with pytest.raises(DomainError):
        SplitDecisionConfig(epsilon=1.0)
    with pytest.raises(DomainError):
        SplitDecisionConfig(mode="fast")
    with pytest.raises(DomainError):
        SplitDecisionConfig(grid_res=1)


@settings(max_examples=60, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(1, 30), st.integers(1, 3)), elements=st.floats(0, 1)),
    st.floats(0.05, 5.0),
    st.floats(1.0, 4.0),
)
def test_should_split_monotone_in_theta(pts, theta, factor):
    n_total = 4 * pts.shape[0]
    low = should_split(pts, n_total, SplitDecisionConfig(theta=theta))
    high = should_split(pts, n_total, SplitDecisionConfig(theta=theta * factor))
    assert not (high.split and not low.split)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 3)), elements=st.floats(0, 1)))
def test_exact_agrees_with_brute_force(pts):
    assert star_discrepancy_exact(pts) == pytest.approx(brute_star_discrepancy(pts), abs=1e-12)
