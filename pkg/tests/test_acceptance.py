"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s`` to see the report.
"""

import math
import time

import numpy as np
import pytest

from disctree.analysis import build_adjacency_graph, build_level_set_tree, detect_modes
from disctree.discrepancy import l2_star_discrepancy, star_discrepancy_1d, star_discrepancy_exact
from disctree.estimator import EstimatorConfig, estimate_density
from disctree.evaluation import (
    MixtureSpec,
    quadrant_mixture,
    beta_pair_mixture,
    convergence_slope,
    coordinate_sum,
    integration_error,
    run_experiment,
)

from oracles import brute_star_discrepancy, flood_fill_components, naive_warnock, quadrature_l2


@pytest.fixture
def report(capsys):
    def emit(tag, ok, detail):
        with capsys.disabled():
            print(f"\n[{tag}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return emit


def _random_set(rng, n, d):
    kind = rng.integers(3)
    if kind == 0:
        return rng.random((n, d))
    if kind == 1:
        # coarse lattice: lots of ties and exact zeros
        return rng.integers(0, 5, (n, d)) / 4
    pts = rng.random((n, d))
    pts[: n // 2] = pts[0]
    return pts


def test_c1_exact_discrepancy_oracle(report):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        n, d = int(rng.integers(1, 51)), int(rng.integers(1, 4))
        pts = _random_set(rng, n, d)
        exact = star_discrepancy_exact(pts)
        worst = max(worst, abs(exact - brute_star_discrepancy(pts)))
        if d == 1:
            worst = max(worst, abs(exact - star_discrepancy_1d(pts[:, 0])))
    elapsed = time.perf_counter() - t0
    report("C1", worst <= 1e-12 and elapsed < 60, f"max |exact - oracle| = {worst:.2e}, {elapsed:.1f}s")


def test_c2_warnock(report):
    rng = np.random.default_rng(7)
    quad = naive = 0.0
    for _ in range(60):
        pts = rng.random((int(rng.integers(1, 6)), int(rng.integers(1, 3))))
        quad = max(quad, abs(l2_star_discrepancy(pts) - quadrature_l2(pts)))
    for _ in range(40):
        pts = rng.random((int(rng.integers(1, 201)), int(rng.integers(1, 7))))
        ref = naive_warnock(pts)
        naive = max(naive, abs(l2_star_discrepancy(pts) - ref) / ref)
    # both sides use exactly rounded sums; only the per-row grouping differs
    report("C2", quad <= 1e-6 and naive <= 1e-12, f"vs quadrature {quad:.2e}, vs naive (rel) {naive:.2e}")


def test_c3_integration_bound(report):
    spec, f, theta = beta_pair_mixture(2), coordinate_sum(), 1.0
    cfg = EstimatorConfig(theta=theta, mode="exact", grid_res=256)
    t0 = time.perf_counter()
    ratios, rungs = [], set()
    for n in (1000, 10_000):
        for seed in range(5):
            pts = spec.sample(n, np.random.default_rng([3, n, seed]))
            est = estimate_density(pts, cfg)
            rungs |= {r["rung"] for r in est.report["decisions"]}
            ratios.append(integration_error(est.density, pts, f) / (theta * f.vhk(2) / math.sqrt(n)))
    elapsed = time.perf_counter() - t0
    forced = rungs <= {"trivial", "epsilon", "projection", "exact", "grid"}
    ok = max(ratios) <= 1.0 and forced and elapsed < 300
    report("C3", ok, f"max error/bound = {max(ratios):.3f} over {len(ratios)} runs, rungs {sorted(rungs)}, {elapsed:.1f}s")


def test_c4_convergence_slope(report):
    t0 = time.perf_counter()
    res = convergence_slope(beta_pair_mixture(2), coordinate_sum(), [1000, 10_000, 100_000], replicas=5, seed=0)
    elapsed = time.perf_counter() - t0
    means = res.errors.mean(axis=1)
    ok = -0.7 <= res.slope <= -0.3 and elapsed < 900
    report("C4", ok, f"slope {res.slope:.3f} (mean errors {np.round(means, 5).tolist()}), {elapsed:.1f}s")


def test_c5_hellinger(report):
    t0 = time.perf_counter()
    _, summary = run_experiment("hellinger", [1000, 10_000, 100_000], replicas=5, seed=0)
    elapsed = time.perf_counter() - t0
    h = [summary["mean_errors"][k] for k in ("1000", "10000", "100000")]
    ok = 0.08 <= h[1] <= 0.30 and h[2] < h[1] < h[0] and elapsed < 1200
    report("C5", ok, f"H = {np.round(h, 4).tolist()} at N = 1e3, 1e4, 1e5, {elapsed:.1f}s")


@pytest.fixture(scope="module")
def mode_runs():
    spec = quadrant_mixture(2)
    runs = []
    for seed in range(10):
        pts = spec.sample(10_000, np.random.default_rng(seed))
        pd = estimate_density(pts, EstimatorConfig(seed=seed)).density
        graph = build_adjacency_graph(pd)
        runs.append((pd, graph, detect_modes(pd, graph)))
    return spec, runs


def test_c6_modes(report, mode_runs):
    spec, runs = mode_runs
    good, counts = 0, []
    for pd, _, modes in runs:
        counts.append(len(modes))
        if len(modes) != 4:
            continue
        dist = np.abs(pd.centers[modes][:, None, :] - spec.means[None, :, :]).max(axis=2)
        nearest = dist.argmin(axis=1)
        if len(set(nearest.tolist())) == 4 and np.all(dist.min(axis=1) <= 0.15):
            good += 1
    report("C6", good >= 8, f"{good}/10 seeds with 4 well-placed modes (counts {counts})")


def test_c7_level_set_tree(report, mode_runs):
    _, runs = mode_runs
    problems, checked = [], 0
    for k, (pd, graph, modes) in enumerate(runs):
        tree = build_level_set_tree(pd, graph)
        if sorted(tree.leaves()) != sorted(modes):
            problems.append(f"run {k}: leaves != modes")
        if any(p >= 0 and tree.color[p] > tree.color[i] for i, p in enumerate(tree.parent)):
            problems.append(f"run {k}: parent denser than child")
        if len(pd) <= 200:
            checked += 1
            for level in np.unique(pd.density):
                groups: dict[int, set] = {}
                for i in np.flatnonzero(pd.density >= level):
                    groups.setdefault(tree.top_within(int(i), level), set()).add(int(i))
                if {frozenset(s) for s in groups.values()} != flood_fill_components(pd.lower, pd.upper, pd.density, level):
                    problems.append(f"run {k}: components differ at level {level:.4g}")
                    break
    ok = not problems and checked > 0
    report("C7", ok, f"{checked} partitions flood-fill checked; issues: {problems or 'none'}")


def test_c8_rect_probability(report):
    _, summary = run_experiment("rect", [1000, 10_000], replicas=5, seed=0)
    e3, e4 = summary["mean_errors"]["1000"], summary["mean_errors"]["10000"]
    ratio = e3 / e4
    report("C8", ratio >= math.sqrt(10) / 2, f"mean error {e3:.4f} -> {e4:.4f}, ratio {ratio:.3f} (need >= {math.sqrt(10) / 2:.3f})")


def _random_mixture(rng, d):
    k = int(rng.integers(1, 5))
    if rng.random() < 0.5:
        means = rng.uniform(0.2, 0.8, (k, d))
        covs = np.stack([np.diag(rng.uniform(0.003, 0.05, d)) for _ in range(k)])
        return MixtureSpec(rng.dirichlet(np.ones(k)), "gaussian", means=means, covariances=covs)
    return MixtureSpec(rng.dirichlet(np.ones(k)), "beta", alphas=rng.uniform(1, 20, (k, d)), betas=rng.uniform(1, 20, (k, d)))


def test_c9_structural_invariants(report):
    rng = np.random.default_rng(99)
    failures = []
    for run in range(100):
        d = int(rng.integers(1, 5))
        n = int(rng.integers(50, 10_001))
        theta = float(rng.choice([0.5, 1.0, 2.0]))
        pts = _random_mixture(rng, d).sample(n, rng)
        cfg = EstimatorConfig(theta=theta, m=int(rng.integers(2, 5)), seed=run)
        est = estimate_density(pts, cfg)
        tree, pd = est.tree, est.density
        if abs(pd.mass.sum() - 1) > 1e-12 or abs(np.sum(pd.density * pd.volumes) - 1) > 1e-12:
            failures.append(f"run {run}: mass")
        if sum(leaf.count for leaf in tree.leaves()) != n or np.bincount(pd.cell_index(pts), minlength=len(pd)).tolist() != pd.count.tolist():
            failures.append(f"run {run}: point conservation")
        if any(node.count <= theta * math.sqrt(n) for node in tree.nodes if not node.is_leaf):
            failures.append(f"run {run}: small cell split")
        if estimate_density(pts.copy(), cfg).tree.to_json() != tree.to_json():
            failures.append(f"run {run}: nondeterministic")
    report("C9", not failures, f"100 runs, failures: {failures or 'none'}")
