"""Synthetic mixtures, reference integrands and the accuracy experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Sequence

import numpy as np
from scipy import special, stats

from .core import DomainError, PiecewiseDensity, SampleSet
from .estimator import EstimatorConfig, estimate_density

__all__ = [
    "MixtureSpec",
    "BoxUniform",
    "ReferenceFunction",
    "quadrant_mixture",
    "beta_pair_mixture",
    "demo_mixtures",
    "constant_function",
    "sqrt_sum",
    "coordinate_sum",
    "squared_sqrt_sum",
    "sample_mixture",
    "cell_integrals",
    "integration_error",
    "convergence_slope",
    "SlopeResult",
    "HellingerResult",
    "hellinger_distance",
    "rect_probability_error",
    "sample_from_estimate",
    "REFERENCE_FUNCTIONS",
    "EXPERIMENTS",
    "run_experiment",
]

REFERENCE_DRAWS = 1_000_000
MIN_ACCEPTANCE = 1e-3


@dataclass(frozen=True)
class MixtureSpec:
    """Finite mixture on ``[0, 1]^d``.

    Gaussian mixtures are truncated to the cube as a whole (sample, then
    reject outside). Beta-product components already live on the cube.
    """

    weights: np.ndarray
    family: str
    means: np.ndarray | None = None
    covariances: np.ndarray | None = None
    alphas: np.ndarray | None = None
    betas: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DomainError("weights must be positive and sum to 1")
        object.__setattr__(self, "weights", w)
        if self.family == "gaussian":
            mu = np.atleast_2d(np.asarray(self.means, dtype=float))
            cov = np.asarray(self.covariances, dtype=float)
            if cov.ndim == 2:
                cov = np.broadcast_to(cov, (mu.shape[0],) + cov.shape).copy()
            if cov.shape != (mu.shape[0], mu.shape[1], mu.shape[1]):
                raise DomainError("covariances must be (k, d, d)")
            if np.any(np.diagonal(cov, axis1=1, axis2=2) <= 0):
                raise DomainError("covariance diagonals must be positive")
            object.__setattr__(self, "means", mu)
            object.__setattr__(self, "covariances", cov)
        elif self.family == "beta":
            a = np.atleast_2d(np.asarray(self.alphas, dtype=float))
            b = np.atleast_2d(np.asarray(self.betas, dtype=float))
            if a.shape != b.shape or np.any(a <= 0) or np.any(b <= 0):
                raise DomainError("beta parameters must be positive (k, d) arrays")
            object.__setattr__(self, "alphas", a)
            object.__setattr__(self, "betas", b)
        else:
            raise DomainError(f"unknown family {self.family!r}")
        if self._params.shape[0] != w.size:
            raise DomainError("one parameter row per component is required")

    @property
    def _params(self) -> np.ndarray:
        return self.means if self.family == "gaussian" else self.alphas

    @property
    def dim(self) -> int:
        return self._params.shape[1]

    @property
    def diagonal(self) -> bool:
        if self.family != "gaussian":
            return True
        off = self.covariances - np.einsum("kii->ki", self.covariances)[:, :, None] * np.eye(self.dim)
        return bool(np.all(off == 0))

    # sampling ----------------------------------------------------------

    def _draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.choice(self.weights.size, size=n, p=self.weights)
        if self.family == "beta":
            return rng.beta(self.alphas[comp], self.betas[comp])
        out = np.empty((n, self.dim))
        for k in range(self.weights.size):
            sel = comp == k
            out[sel] = rng.multivariate_normal(self.means[k], self.covariances[k], size=int(sel.sum()))
        return out

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.family == "beta":
            return self._draw(n, rng)
        kept: list[np.ndarray] = []
        have = drawn = 0
        while have < n:
            batch = max(1024, 2 * (n - have))
            x = self._draw(batch, rng)
            drawn += batch
            ok = x[np.all((x >= 0.0) & (x <= 1.0), axis=1)]
            kept.append(ok)
            have += ok.shape[0]
            if drawn >= 10_000 and have / drawn < MIN_ACCEPTANCE:
                raise DomainError(
                    f"truncation acceptance rate {have / drawn:.2e} below {MIN_ACCEPTANCE:g} "
                    f"after {drawn} draws"
                )
        return np.concatenate(kept)[:n]

    # density -----------------------------------------------------------

    def _component_pdf(self, x: np.ndarray) -> np.ndarray:
        # (n, k) untruncated component densities
        if self.family == "beta":
            return np.stack(
                [np.prod(stats.beta.pdf(x, a, b), axis=1) for a, b in zip(self.alphas, self.betas)],
                axis=1,
            )
        return np.stack(
            [stats.multivariate_normal.pdf(x, m, c).reshape(-1) for m, c in zip(self.means, self.covariances)],
            axis=1,
        )

    def _component_box(self, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
        # (k,) untruncated component probabilities of one box; analytic cases only
        if self.family == "beta":
            cdf = stats.beta.cdf
            return np.prod(cdf(upper, self.alphas, self.betas) - cdf(lower, self.alphas, self.betas), axis=1)
        sd = np.sqrt(np.einsum("kii->ki", self.covariances))
        hi = stats.norm.cdf((upper - self.means) / sd)
        lo = stats.norm.cdf((lower - self.means) / sd)
        return np.prod(hi - lo, axis=1)

    def _reference_draws(self) -> np.ndarray:
        if "ref" not in self._cache:
            self._cache["ref"] = self.sample(REFERENCE_DRAWS, np.random.default_rng(20_240_917))
        return self._cache["ref"]

    def normalizer(self) -> float:
        """Probability that the untruncated mixture falls in the cube."""
        if self.family == "beta":
            return 1.0
        if "z" not in self._cache:
            if self.diagonal:
                z = float(self.weights @ self._component_box(np.zeros(self.dim), np.ones(self.dim)))
            else:
                rng = np.random.default_rng(20_240_918)
                x = self._draw(REFERENCE_DRAWS, rng)
                z = float(np.mean(np.all((x >= 0) & (x <= 1), axis=1)))
            self._cache["z"] = z
        return self._cache["z"]

    def pdf(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        inside = np.all((x >= 0.0) & (x <= 1.0), axis=1)
        val = self._component_pdf(x) @ self.weights / self.normalizer()
        return np.where(inside, val, 0.0)

    def box_probability(self, lower, upper) -> float:
        lower = np.clip(np.asarray(lower, dtype=float), 0.0, 1.0)
        upper = np.clip(np.asarray(upper, dtype=float), 0.0, 1.0)
        if self.diagonal:
            return float(self.weights @ self._component_box(lower, upper) / self.normalizer())
        ref = self._reference_draws()
        return float(np.mean(np.all((ref >= lower) & (ref < upper), axis=1)))

    def expectation(self, f: "ReferenceFunction") -> tuple[float, float]:
        """``E_p f`` and its standard error (zero when computed in closed form)."""
        if self.family == "beta" and f.beta_mean is not None:
            vals = [f.beta_mean(a, b) for a, b in zip(self.alphas, self.betas)]
            return float(self.weights @ np.asarray(vals)), 0.0
        y = f(self._reference_draws())
        return float(y.mean()), float(y.std(ddof=1) / math.sqrt(y.size))


@dataclass(frozen=True)
class BoxUniform:
    """Uniform density on an axis box inside the unit cube."""

    lower: np.ndarray
    upper: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.lower)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        return lo + (hi - lo) * rng.random((n, lo.size))

    def pdf(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        inside = np.all((x >= lo) & (x <= hi), axis=1)
        return np.where(inside, 1.0 / np.prod(hi - lo), 0.0)

    def box_probability(self, lower, upper) -> float:
        lo = np.maximum(np.asarray(self.lower, dtype=float), lower)
        hi = np.minimum(np.asarray(self.upper, dtype=float), upper)
        return float(np.prod(np.clip(hi - lo, 0, None)) / np.prod(np.subtract(self.upper, self.lower)))


def quadrant_mixture(d: int) -> MixtureSpec:
    """Four equally weighted Gaussians at the quadrant centres, ``Sigma = 0.01 I``."""
    if d < 2:
        raise DomainError("the four-mode mixture needs d >= 2")
    means = np.full((4, d), 0.5)
    means[:, :2] = [[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]]
    return MixtureSpec(np.full(4, 0.25), "gaussian", means=means, covariances=0.01 * np.eye(d))


def beta_pair_mixture(d: int) -> MixtureSpec:
    """Even mixture of the Beta(15, 5) and Beta(5, 15) product densities."""
    return MixtureSpec(
        np.array([0.5, 0.5]),
        "beta",
        alphas=np.array([[15.0] * d, [5.0] * d]),
        betas=np.array([[5.0] * d, [15.0] * d]),
    )


def demo_mixtures() -> dict[str, MixtureSpec]:
    """The three 2-D visual test densities."""
    return {
        "gaussian": MixtureSpec(
            np.array([1.0]), "gaussian", means=[[0.5, 0.5]], covariances=[[0.08, 0.02], [0.02, 0.02]]
        ),
        "gaussian_pair": MixtureSpec(
            np.array([0.5, 0.5]),
            "gaussian",
            means=[[0.5, 0.25], [0.5, 0.75]],
            covariances=np.array([[[0.04, 0.01], [0.01, 0.01]]] * 2),
        ),
        "beta_triple": MixtureSpec(
            np.full(3, 1 / 3),
            "beta",
            alphas=[[2, 5], [4, 2], [1, 3]],
            betas=[[5, 2], [2, 4], [3, 1]],
        ),
    }


def sample_mixture(spec: MixtureSpec, n: int, seed: int) -> SampleSet:
    return SampleSet(spec.sample(n, np.random.default_rng(seed)))


# reference integrands ------------------------------------------------------


@dataclass(frozen=True)
class ReferenceFunction:
    """Integrand with a closed-form box integral.

    ``box_integral(lower, upper)`` takes ``(l, d)`` arrays and returns the
    ``l`` integrals. ``vhk`` maps the dimension to the Hardy-Krause variation
    on the unit cube. ``beta_mean(a, b)``, when given, is the expectation under
    a product of Beta(a_j, b_j) marginals.
    """

    name: str
    func: Callable[[np.ndarray], np.ndarray]
    box_integral: Callable[[np.ndarray, np.ndarray], np.ndarray] | None
    vhk: Callable[[int], float]
    beta_mean: Callable[[np.ndarray, np.ndarray], float] | None = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.func(np.atleast_2d(np.asarray(x, dtype=float)))


def _others(widths: np.ndarray, j: int) -> np.ndarray:
    return np.prod(np.delete(widths, j, axis=1), axis=1)


def _sqrt_antider(lo, hi):
    return (2.0 / 3.0) * (hi ** 1.5 - lo ** 1.5)


def _sqrt_box(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    w = hi - lo
    return sum(_sqrt_antider(lo[:, j], hi[:, j]) * _others(w, j) for j in range(lo.shape[1]))


def _linear_box(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    w = hi - lo
    return sum(0.5 * (hi[:, j] ** 2 - lo[:, j] ** 2) * _others(w, j) for j in range(lo.shape[1]))


def _squared_sqrt_box(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    d = lo.shape[1]
    w = hi - lo
    total = _linear_box(lo, hi)
    for j, k in combinations(range(d), 2):
        rest = np.prod(np.delete(w, [j, k], axis=1), axis=1)
        total = total + 2.0 * _sqrt_antider(lo[:, j], hi[:, j]) * _sqrt_antider(lo[:, k], hi[:, k]) * rest
    return total


def _beta_sqrt_mean(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.exp(special.betaln(a + 0.5, b) - special.betaln(a, b))


def _beta_squared_sqrt_mean(a, b) -> float:
    s = _beta_sqrt_mean(a, b)
    linear = float(np.sum(np.asarray(a) / (np.asarray(a) + np.asarray(b))))
    return linear + float(s.sum() ** 2 - np.sum(s ** 2))


def constant_function(value: float = 1.0) -> ReferenceFunction:
    return ReferenceFunction(
        "constant",
        lambda x: np.full(x.shape[0], value),
        lambda lo, hi: value * np.prod(hi - lo, axis=1),
        lambda d: 0.0,
        lambda a, b: value,
    )


def sqrt_sum() -> ReferenceFunction:
    """``sum_j sqrt(x_j)``; variation ``d``."""
    return ReferenceFunction(
        "sqrt_sum",
        lambda x: np.sum(np.sqrt(x), axis=1),
        _sqrt_box,
        lambda d: float(d),
        lambda a, b: float(np.sum(_beta_sqrt_mean(a, b))),
    )


def coordinate_sum() -> ReferenceFunction:
    """``sum_j x_j``; only the single-coordinate terms of the variation survive, giving ``d``."""
    return ReferenceFunction(
        "coordinate_sum",
        lambda x: np.sum(x, axis=1),
        _linear_box,
        lambda d: float(d),
        lambda a, b: float(np.sum(np.asarray(a) / (np.asarray(a) + np.asarray(b)))),
    )


def squared_sqrt_sum() -> ReferenceFunction:
    """``(sum_j sqrt(x_j))^2``; variation ``3 d^2 - 2 d``."""
    return ReferenceFunction(
        "squared_sqrt_sum",
        lambda x: np.sum(np.sqrt(x), axis=1) ** 2,
        _squared_sqrt_box,
        lambda d: float(3 * d * d - 2 * d),
        _beta_squared_sqrt_mean,
    )


REFERENCE_FUNCTIONS = {
    "f1": sqrt_sum,
    "f2": coordinate_sum,
    "f3": squared_sqrt_sum,
}


def _midpoint_box(f: ReferenceFunction, lo: np.ndarray, hi: np.ndarray, per_dim: int = 3) -> np.ndarray:
    d = lo.shape[1]
    offsets = (np.arange(per_dim) + 0.5) / per_dim
    grid = np.stack(np.meshgrid(*([offsets] * d), indexing="ij"), axis=-1).reshape(-1, d)
    w = hi - lo
    nodes = lo[:, None, :] + w[:, None, :] * grid[None, :, :]
    vals = f(nodes.reshape(-1, d)).reshape(lo.shape[0], -1)
    return vals.mean(axis=1) * np.prod(w, axis=1)


def cell_integrals(pd: PiecewiseDensity, f: ReferenceFunction) -> np.ndarray:
    """``int_{r_i} f`` for every cell; closed form when available."""
    if f.box_integral is not None:
        return np.asarray(f.box_integral(pd.lower, pd.upper), dtype=float)
    return _midpoint_box(f, pd.lower, pd.upper)


def integrate_against(pd: PiecewiseDensity, f: ReferenceFunction) -> float:
    return float(np.sum(pd.density * cell_integrals(pd, f)))


def integration_error(pd: PiecewiseDensity, samples: SampleSet | np.ndarray, f: ReferenceFunction) -> float:
    """Gap between ``int f p_hat`` and the sample mean of ``f``."""
    pts = samples.points if isinstance(samples, SampleSet) else np.asarray(samples, dtype=float)
    return abs(integrate_against(pd, f) - float(np.mean(f(pts))))


# experiments -------------------------------------------------------------


@dataclass
class SlopeResult:
    slope: float
    intercept: float
    stderr: float
    sizes: list[int]
    errors: np.ndarray  # (sizes, replicas)
    reference: float
    reference_stderr: float

    def rows(self) -> list[tuple[int, int, float]]:
        return [
            (n, r, float(self.errors[i, r]))
            for i, n in enumerate(self.sizes)
            for r in range(self.errors.shape[1])
        ]

    def summary(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "stderr": self.stderr,
            "reference": self.reference,
            "reference_stderr": self.reference_stderr,
            "mean_errors": dict(zip(map(str, self.sizes), self.errors.mean(axis=1).tolist())),
        }


def _loglog_fit(sizes: Sequence[int], errors: np.ndarray) -> tuple[float, float, float]:
    mean_err = np.asarray(errors, dtype=float)
    if mean_err.ndim == 2:
        mean_err = mean_err.mean(axis=1)
    if np.any(mean_err <= 0):
        return math.nan, math.nan, math.nan
    fit = stats.linregress(np.log(np.asarray(sizes, dtype=float)), np.log(mean_err))
    return float(fit.slope), float(fit.intercept), float(fit.stderr)


def convergence_slope(
    spec: MixtureSpec,
    f: ReferenceFunction,
    sizes: Sequence[int],
    replicas: int = 5,
    seed: int = 0,
    cfg: EstimatorConfig | None = None,
) -> SlopeResult:
    """Log-log slope of ``|int f p_hat - int f p|`` against sample size."""
    if len(sizes) < 3:
        raise DomainError("need at least three sample sizes")
    cfg = cfg or EstimatorConfig()
    truth, truth_se = spec.expectation(f)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes) * replicas)
    errors = np.empty((len(sizes), replicas))
    for i, n in enumerate(sizes):
        for r in range(replicas):
            rng = np.random.default_rng(seeds[i * replicas + r])
            pts = spec.sample(int(n), rng)
            pd = estimate_density(pts, cfg).density
            errors[i, r] = abs(integrate_against(pd, f) - truth)
    slope, intercept, se = _loglog_fit(sizes, errors)
    return SlopeResult(slope, intercept, se, [int(n) for n in sizes], errors, truth, truth_se)


@dataclass(frozen=True)
class HellingerResult:
    distance: float
    stderr: float
    skipped: int


def hellinger_distance(pd: PiecewiseDensity, truth, draws: int = 100_000, seed: int = 0) -> HellingerResult:
    """Hellinger distance by importance sampling from the true density.

    ``H^2 = 1 - E_p sqrt(p_hat / p)``; draws where ``p`` vanishes are skipped
    and counted.
    """
    rng = np.random.default_rng(seed)
    y = truth.sample(draws, rng)
    p = truth.pdf(y)
    ok = p > 0
    ratio = np.sqrt(pd.evaluate(y[ok]) / p[ok])
    if ratio.size == 0:
        raise DomainError("true density vanished on every draw")
    h2 = 1.0 - float(ratio.mean())
    se2 = float(ratio.std(ddof=1) / math.sqrt(ratio.size)) if ratio.size > 1 else 0.0
    h = math.sqrt(min(1.0, max(0.0, h2)))
    se = se2 / (2.0 * h) if h > 0 else math.sqrt(se2)
    return HellingerResult(h, se, int((~ok).sum()))


def random_boxes(d: int, trials: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    corners = rng.random((trials, 2, d))
    return corners.min(axis=1), corners.max(axis=1)


def rect_probability_error(pd: PiecewiseDensity, truth, trials: int = 1000, seed: int = 0) -> float:
    """Largest ``|P_hat(A) - P(A)|`` over random boxes ``A`` inside the cube."""
    if trials < 1:
        raise DomainError("need at least one trial")
    lo, hi = random_boxes(pd.dim, trials, np.random.default_rng(seed))
    worst = 0.0
    for a, b in zip(lo, hi):
        worst = max(worst, abs(pd.integrate_box(a, b) - truth.box_probability(a, b)))
    return worst


def sample_from_estimate(pd: PiecewiseDensity, n: int, seed: int) -> SampleSet:
    """Draw a cell by mass, then a uniform point inside it."""
    rng = np.random.default_rng(seed)
    p = np.clip(pd.mass, 0.0, None)
    cell = rng.choice(len(pd), size=n, p=p / p.sum())
    u = rng.random((n, pd.dim))
    pts = pd.lower[cell] + (pd.upper[cell] - pd.lower[cell]) * u
    return SampleSet(np.clip(pts, 0.0, 1.0))


EXPERIMENTS = ("slope", "hellinger", "rect")


def run_experiment(
    name: str,
    sizes: Sequence[int],
    replicas: int = 5,
    seed: int = 0,
    d: int = 2,
    cfg: EstimatorConfig | None = None,
    function: str = "f2",
    draws: int = 100_000,
    trials: int = 1000,
) -> tuple[list[tuple[int, int, float]], dict]:
    """Run one named experiment; returns ``(size, replica, error)`` rows and a summary."""
    cfg = cfg or EstimatorConfig()
    if name == "slope":
        res = convergence_slope(beta_pair_mixture(d), REFERENCE_FUNCTIONS[function](), sizes, replicas, seed, cfg)
        summary = res.summary()
        summary.update(experiment=name, function=function, dimension=d, seed=seed)
        return res.rows(), summary
    if name not in EXPERIMENTS:
        raise DomainError(f"unknown experiment {name!r}")
    spec = quadrant_mixture(d)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes) * replicas)
    errors = np.empty((len(sizes), replicas))
    for i, n in enumerate(sizes):
        for r in range(replicas):
            child = seeds[i * replicas + r]
            data_seed, eval_seed = (int(s) for s in child.generate_state(2))
            pts = spec.sample(int(n), np.random.default_rng(data_seed))
            pd = estimate_density(pts, cfg).density
            if name == "hellinger":
                errors[i, r] = hellinger_distance(pd, spec, draws, eval_seed).distance
            else:
                errors[i, r] = rect_probability_error(pd, spec, trials, eval_seed)
    slope, intercept, se = _loglog_fit(sizes, errors)
    rows = [(int(n), r, float(errors[i, r])) for i, n in enumerate(sizes) for r in range(replicas)]
    summary = {
        "experiment": name,
        "dimension": d,
        "seed": seed,
        "slope": slope,
        "intercept": intercept,
        "stderr": se,
        "mean_errors": dict(zip(map(str, sizes), errors.mean(axis=1).tolist())),
    }
    return rows, summary
