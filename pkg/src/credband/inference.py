"""Conjugate posterior under the scale prior and empirical-Bayes smoothness.

Prior: theta_i ~ N(0, i**-(1+2 alpha)) independently.  With kappa = 1 the
posterior of coordinate i is normal with mean ``n Y_i / (i**(1+2a) + n)``
and variance ``1 / (i**(1+2a) + n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .fourier import Grid, synthesize
from .sequence import (
    ALPHA_MAX,
    ALPHA_MIN,
    CoefficientSequence,
    Direct,
    KappaSpec,
    ModelConfig,
    RandomStream,
    as_coeffs,
    sample_data,
)

EB_GRID_POINTS = 256
EB_XATOL = 1e-4

_LOG2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PriorSpec:
    alpha: float
    alpha_min: float = ALPHA_MIN
    alpha_max: float = ALPHA_MAX

    def __post_init__(self):
        if not self.alpha_min <= self.alpha <= self.alpha_max:
            raise ValueError(
                f"alpha={self.alpha} outside [{self.alpha_min}, {self.alpha_max}]"
            )

    def variances(self, size: int) -> np.ndarray:
        i = np.arange(1, size + 1, dtype=float)
        return i ** -(1.0 + 2.0 * self.alpha)


@dataclass(frozen=True)
class PosteriorState:
    means: np.ndarray
    variances: np.ndarray
    alpha: float
    n: float
    kappa: KappaSpec = field(default_factory=Direct)

    def __post_init__(self):
        m = np.array(self.means, dtype=float).ravel()
        v = np.array(self.variances, dtype=float).ravel()
        if m.shape != v.shape:
            raise ValueError("means and variances must have equal length")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("variances must be finite and nonnegative")
        m.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    def __len__(self) -> int:
        return self.means.size


def posterior_variances(alpha: float, model: ModelConfig) -> np.ndarray:
    """``(i**(1+2 alpha) + n kappa_i**2)**-1``; free of the data."""
    i = np.arange(1, model.n_trunc + 1, dtype=float)
    k = model.kappas()
    return 1.0 / (i ** (1.0 + 2.0 * alpha) + model.n * k * k)


def posterior_update(Y, prior: PriorSpec | float, model: ModelConfig) -> PosteriorState:
    y = as_coeffs(Y)
    if y.size != model.n_trunc:
        raise ValueError(f"Y has length {y.size}, model expects n_trunc={model.n_trunc}")
    alpha = prior.alpha if isinstance(prior, PriorSpec) else float(prior)
    i = np.arange(1, model.n_trunc + 1, dtype=float)
    k = model.kappas()
    denom = i ** (1.0 + 2.0 * alpha) + model.n * k * k
    return PosteriorState(
        means=model.n * k * y / denom,
        variances=1.0 / denom,
        alpha=alpha,
        n=model.n,
        kappa=model.kappa,
    )


def posterior_mean_function(state: PosteriorState, grid: Grid) -> np.ndarray:
    return synthesize(state.means, grid)


def sample_posterior_coeffs(state: PosteriorState, rng: RandomStream) -> CoefficientSequence:
    xi = rng.generator().standard_normal(state.means.size)
    return CoefficientSequence(state.means + np.sqrt(state.variances) * xi)


def sample_posterior_batch(state: PosteriorState, draws: int, rng: RandomStream) -> np.ndarray:
    """``(draws, len(state))`` independent posterior draws."""
    xi = rng.generator().standard_normal((draws, state.means.size))
    return state.means + np.sqrt(state.variances) * xi


def contraction_rate(alpha: float, n: float) -> float:
    """Sup-norm rate ``n**(-alpha/(2 alpha+1)) * sqrt(log n)``."""
    return n ** (-alpha / (2.0 * alpha + 1.0)) * math.sqrt(math.log(n))


# -- marginal likelihood -----------------------------------------------------


def _loglik_parts(Y, model: ModelConfig):
    y = as_coeffs(Y)
    if y.size != model.n_trunc:
        raise ValueError(f"Y has length {y.size}, model expects n_trunc={model.n_trunc}")
    logi = np.log(np.arange(1, y.size + 1, dtype=float))
    k2 = model.kappas() ** 2
    return y * y, logi, k2, 1.0 / model.n


def _loglik_many(alphas: np.ndarray, y2, logi, k2, noise_var) -> np.ndarray:
    out = np.empty(len(alphas))
    for j, a in enumerate(alphas):
        var = k2 * np.exp(-(1.0 + 2.0 * a) * logi) + noise_var
        out[j] = -0.5 * np.sum(_LOG2PI + np.log(var) + y2 / var)
    return out


def coordinate_logliks(Y, alpha: float, model: ModelConfig) -> np.ndarray:
    """Per-coordinate marginal log densities; :func:`marginal_loglik` is their sum."""
    y2, logi, k2, noise_var = _loglik_parts(Y, model)
    var = k2 * np.exp(-(1.0 + 2.0 * alpha) * logi) + noise_var
    return -0.5 * (_LOG2PI + np.log(var) + y2 / var)


def marginal_loglik(Y, alpha: float, model: ModelConfig) -> float:
    """Log density of Y when theta is integrated out under the alpha-prior.

    Coordinates are independent with ``Y_i ~ N(0, kappa_i**2 i**-(1+2a) + 1/n)``.
    All ``i <= n_trunc`` are included.
    """
    return float(_loglik_many(np.array([alpha]), *_loglik_parts(Y, model))[0])


def empirical_bayes_alpha(
    Y,
    model: ModelConfig,
    bounds: tuple[float, float] = (ALPHA_MIN, ALPHA_MAX),
    grid_points: int = EB_GRID_POINTS,
) -> float:
    """Maximize the marginal likelihood over ``alpha`` in ``bounds``.

    A log-spaced grid locates the best cell (first maximum wins, so ties
    go to the smaller alpha); a bounded Brent search then refines inside
    the neighbouring cells to ``1e-4``.  Deterministic.
    """
    lo, hi = bounds
    if not 0 < lo < hi:
        raise ValueError(f"invalid alpha bounds {bounds}")
    parts = _loglik_parts(Y, model)
    grid = np.geomspace(lo, hi, grid_points)
    vals = _loglik_many(grid, *parts)
    j = int(np.argmax(vals))
    a, b = grid[max(j - 1, 0)], grid[min(j + 1, grid_points - 1)]

    def neg(x):
        return -_loglik_many(np.array([x]), *parts)[0]

    res = minimize_scalar(neg, bounds=(a, b), method="bounded", options={"xatol": EB_XATOL})
    cands = [(vals[j], grid[j]), (-res.fun, float(res.x))]
    if j == 0:
        cands.append((vals[0], lo))
    if j == grid_points - 1:
        cands.append((vals[-1], hi))
    best = max(v for v, _ in cands)
    return float(min(x for v, x in cands if v == best))


@dataclass(frozen=True)
class EBBracket:
    alpha_lo: float
    alpha_hi: float
    alphas: np.ndarray

    @property
    def width(self) -> float:
        return self.alpha_hi - self.alpha_lo

    def iqr(self) -> float:
        q1, q3 = np.quantile(self.alphas, [0.25, 0.75])
        return float(q3 - q1)


def bracket_from_alphas(alphas) -> EBBracket:
    a = np.asarray(alphas, dtype=float)
    lo, hi = np.quantile(a, [0.025, 0.975])
    return EBBracket(float(lo), float(hi), a)


def eb_bracket_probe(
    truth,
    model: ModelConfig,
    reps: int,
    rng: RandomStream,
    bounds: tuple[float, float] = (ALPHA_MIN, ALPHA_MAX),
) -> EBBracket:
    """Empirical 2.5% / 97.5% quantiles of alpha-hat over ``reps`` datasets."""
    if reps < 30:
        raise ValueError("eb_bracket_probe needs reps >= 30")
    if hasattr(truth, "family"):
        from .truths import generate_truth

        truth = generate_truth(truth)
    alphas = [
        empirical_bayes_alpha(sample_data(truth, model, rng.child("eb-rep", r)), model, bounds)
        for r in range(reps)
    ]
    return bracket_from_alphas(alphas)
