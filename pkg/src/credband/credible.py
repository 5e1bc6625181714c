"""Credible balls (L2) and bands (sup over a grid) around the posterior mean.

Radii are Monte Carlo quantiles of the centred posterior law, which only
depends on the posterior variances.  Draws are generated in fixed chunks of
``RNG_CHUNK`` rows, chunk ``k`` from ``rng.child("mc", k)``, so results do not
depend on how many workers evaluate the chunks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from .fourier import SQRT2, Grid, sup_norms_many, synthesize
from .inference import PosteriorState, contraction_rate
from .sequence import RandomStream, as_coeffs

MIN_DRAWS = 10_000
DEFAULT_DRAWS = 100_000
RNG_CHUNK = 256
DROP_REL = 1e-14

NormKind = Literal["l2", "sup"]


@dataclass(frozen=True)
class CredibleSet:
    center: np.ndarray
    radius: float
    norm_kind: NormKind
    credibility: float
    inflation: float = 1.0
    grid: Grid | None = None
    mc_meta: dict | None = None

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.norm_kind not in ("l2", "sup"):
            raise ValueError(f"unknown norm kind {self.norm_kind!r}")
        if self.norm_kind == "sup" and self.grid is None:
            raise ValueError("sup-norm sets need a grid")
        if not 0 < self.credibility < 1:
            raise ValueError("credibility must lie in (0, 1)")
        if self.inflation < 1:
            raise ValueError("inflation must be >= 1")
        c = np.array(as_coeffs(self.center), dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "center", c)

    @property
    def effective_radius(self) -> float:
        return self.inflation * self.radius


def _variances(state) -> np.ndarray:
    if isinstance(state, PosteriorState):
        return state.variances
    return np.asarray(state, dtype=float).ravel()


def _check_args(gamma: float, draws: int):
    if not 0 < gamma <= 0.5:
        raise ValueError(f"gamma must lie in (0, 0.5], got {gamma}")
    if draws < MIN_DRAWS:
        raise ValueError(f"draws must be >= {MIN_DRAWS}, got {draws}")


def effective_support(variances: np.ndarray) -> tuple[int, float]:
    """Index past which variances fall below ``1e-14 * max`` and a bound on
    the expected sup of the dropped part, ``sqrt(2) sqrt(2/pi) sum sqrt(v_i)``.
    """
    v = np.asarray(variances, dtype=float)
    if v.size == 0 or v.max() <= 0:
        return max(v.size, 1), 0.0
    big = np.nonzero(v >= DROP_REL * v.max())[0]
    k = int(big[-1]) + 1
    dropped = SQRT2 * math.sqrt(2.0 / math.pi) * float(np.sum(np.sqrt(v[k:])))
    return k, dropped


def order_statistic_quantile(samples: np.ndarray, p: float) -> float:
    """The ``ceil(p * len)``-th order statistic (1-based), no interpolation."""
    s = np.asarray(samples)
    r = math.ceil(round(p * s.size, 9))
    r = min(max(r, 1), s.size)
    return float(np.partition(s, r - 1)[r - 1])


def quantile_standard_error(samples: np.ndarray, p: float) -> float:
    """Order-statistic standard error of the p-quantile.

    Half the distance between the order statistics at ranks
    ``D p -/+ sqrt(D p (1-p))``, i.e. a binomial one-sigma interval.
    """
    s = np.sort(np.asarray(samples))
    D = s.size
    h = math.sqrt(D * p * (1.0 - p))
    lo = min(max(int(math.floor(D * p - h)), 1), D) - 1
    hi = min(max(int(math.ceil(D * p + h)), 1), D) - 1
    return float(0.5 * (s[hi] - s[lo]))


def _chunks(draws: int):
    return [(k, min(RNG_CHUNK, draws - k * RNG_CHUNK)) for k in range(math.ceil(draws / RNG_CHUNK))]


def _run_chunks(fn, draws: int, workers: int) -> np.ndarray:
    jobs = _chunks(draws)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda kv: fn(*kv), jobs))
    else:
        parts = [fn(k, m) for k, m in jobs]
    return np.concatenate(parts)


def sup_norm_samples(
    state, grid: Grid, draws: int, rng: RandomStream, workers: int = 1
) -> np.ndarray:
    """Grid sup norms of ``draws`` realisations of ``Z = sum sqrt(v_i) xi_i phi_i``."""
    v = _variances(state)
    k, _ = effective_support(v)
    sd = np.sqrt(v[:k])

    def chunk(idx, m):
        xi = rng.child("mc", idx).generator().standard_normal((m, k))
        return sup_norms_many(xi * sd, grid)

    return _run_chunks(chunk, draws, workers)


def l2_norm_samples(state, draws: int, rng: RandomStream, workers: int = 1) -> np.ndarray:
    """Samples of ``sqrt(sum v_i xi_i**2)``, the posterior law of ``||theta - mean||_2``."""
    v = _variances(state)

    def chunk(idx, m):
        xi = rng.child("mc", idx).generator().standard_normal((m, v.size))
        return np.sqrt((xi * xi) @ v)

    return _run_chunks(chunk, draws, workers)


def sup_radius(
    state,
    gamma: float,
    grid: Grid,
    draws: int = DEFAULT_DRAWS,
    rng: RandomStream | None = None,
    workers: int = 1,
) -> float:
    """(1 - gamma)-quantile of the grid sup of the centred posterior process."""
    _check_args(gamma, draws)
    rng = rng or RandomStream(0)
    return order_statistic_quantile(sup_norm_samples(state, grid, draws, rng, workers), 1 - gamma)


def l2_radius(
    state,
    gamma: float,
    draws: int = DEFAULT_DRAWS,
    rng: RandomStream | None = None,
    workers: int = 1,
) -> float:
    _check_args(gamma, draws)
    rng = rng or RandomStream(0)
    return order_statistic_quantile(l2_norm_samples(state, draws, rng, workers), 1 - gamma)


def build_set(
    state: PosteriorState,
    gamma: float,
    norm_kind: NormKind,
    grid: Grid | None = None,
    draws: int = DEFAULT_DRAWS,
    rng: RandomStream | None = None,
    inflation: float = 1.0,
    workers: int = 1,
) -> CredibleSet:
    rng = rng or RandomStream(0)
    if norm_kind == "sup":
        r = sup_radius(state, gamma, grid, draws, rng, workers)
    else:
        r = l2_radius(state, gamma, draws, rng, workers)
    return CredibleSet(
        center=state.means,
        radius=r,
        norm_kind=norm_kind,
        credibility=1 - gamma,
        inflation=inflation,
        grid=grid if norm_kind == "sup" else None,
        mc_meta={"draws": draws, **rng.to_dict()},
    )


def inflate(cs: CredibleSet, M: float) -> CredibleSet:
    if M < 1:
        raise ValueError(f"inflation factor must be >= 1, got {M}")
    return replace(cs, inflation=float(M))


def distance_to_center(cs: CredibleSet, theta) -> float:
    """Distance from ``theta`` to the set's center in the set's norm."""
    t = as_coeffs(theta)
    N = max(t.size, cs.center.size)
    diff = np.zeros(N)
    diff[: t.size] += t
    diff[: cs.center.size] -= cs.center
    if cs.norm_kind == "l2":
        return float(np.sqrt(np.sum(diff * diff)))
    return float(np.max(np.abs(synthesize(diff, cs.grid))))


def contains_truth(cs: CredibleSet, truth) -> bool:
    """Inclusive membership: distance <= inflation * radius."""
    return distance_to_center(cs, truth) <= cs.effective_radius


def credibility_check(
    cs: CredibleSet, state: PosteriorState, draws: int, rng: RandomStream, radius_draws: int | None = None
) -> dict:
    """Fraction of fresh posterior draws inside the un-inflated set.

    The standard error combines the binomial error of the fresh draws with
    that of the radius quantile itself (``radius_draws`` draws).
    """
    p = cs.credibility
    inside = 0
    base = replace(cs, inflation=1.0)
    for idx, m in _chunks(draws):
        xi = rng.child("calib", idx).generator().standard_normal((m, state.means.size))
        thetas = state.means + np.sqrt(state.variances) * xi
        diff = thetas - base.center
        if cs.norm_kind == "l2":
            d = np.sqrt(np.sum(diff * diff, axis=1))
        else:
            d = sup_norms_many(diff, cs.grid)
        inside += int(np.sum(d <= base.radius))
    frac = inside / draws
    var = p * (1 - p) / draws
    if radius_draws:
        var += p * (1 - p) / radius_draws
    se = math.sqrt(var)
    return {"fraction": frac, "target": p, "se": se, "ok": abs(frac - p) <= 3 * se}


def borell_radius_bound(
    state,
    gamma: float,
    grid: Grid,
    draws: int = DEFAULT_DRAWS,
    rng: RandomStream | None = None,
    workers: int = 1,
    samples: np.ndarray | None = None,
) -> float:
    """``sqrt(8 E||Z||**2 log(2/gamma))`` with ``E||Z||**2`` estimated by Monte Carlo."""
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    if samples is None:
        samples = sup_norm_samples(state, grid, draws, rng or RandomStream(0), workers)
    m2 = float(np.mean(samples * samples))
    return math.sqrt(8.0 * m2 * math.log(2.0 / gamma))


@dataclass(frozen=True)
class SlepianProbe:
    e_sup: float
    rate_ratio: float
    se: float


def slepian_lower_probe(
    state,
    alpha: float,
    n: float,
    grid: Grid,
    draws: int = DEFAULT_DRAWS,
    rng: RandomStream | None = None,
    workers: int = 1,
) -> SlepianProbe:
    """Monte Carlo ``E||Z||_inf`` and its ratio to the contraction rate."""
    s = sup_norm_samples(state, grid, draws, rng or RandomStream(0), workers)
    e = float(np.mean(s))
    return SlepianProbe(e, e / contraction_rate(alpha, n), float(np.std(s, ddof=1) / math.sqrt(s.size)))
