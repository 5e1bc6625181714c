"""Gaussian sequence model: coefficient sequences, norms and data sampling.

Observations follow ``Y_i = kappa_i * theta_i + n**-0.5 * xi_i`` with
``xi_i`` i.i.d. standard normal.  Sequences are stored as finite vectors
with an implicit zero tail.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

ALPHA_MIN = 0.25
ALPHA_MAX = 8.0
N_TRUNC_FLOOR = 2048

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class CoefficientSequence:
    """Finite vector of basis coefficients; entries past the end are zero."""

    coeffs: np.ndarray

    def __post_init__(self):
        arr = np.array(self.coeffs, dtype=float).ravel()
        if arr.size < 1:
            raise ValueError("coefficient sequence must have length >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("coefficient sequence has non-finite entries")
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    def __len__(self) -> int:
        return self.coeffs.size

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.coeffs
        return self.coeffs.astype(dtype)

    def padded(self, length: int) -> np.ndarray:
        """Return the first ``length`` coefficients, zero-filled as needed."""
        out = np.zeros(length)
        m = min(length, self.coeffs.size)
        out[:m] = self.coeffs[:m]
        return out

    @classmethod
    def unit(cls, i: int, length: int | None = None, scale: float = 1.0):
        """``scale * e_i`` (1-based index)."""
        length = max(i, length or i)
        c = np.zeros(length)
        c[i - 1] = scale
        return cls(c)


def as_coeffs(theta) -> np.ndarray:
    if isinstance(theta, CoefficientSequence):
        return theta.coeffs
    return np.asarray(theta, dtype=float).ravel()


# -- kappa -------------------------------------------------------------------


@dataclass(frozen=True)
class Direct:
    """kappa_i = 1 for every i."""

    def values(self, size: int) -> np.ndarray:
        return np.ones(size)

    def to_dict(self) -> dict:
        return {"kind": "direct"}

    def __str__(self):
        return "direct"


@dataclass(frozen=True)
class PolyIllPosed:
    """kappa_i = i**-p (mildly ill-posed)."""

    p: float

    def __post_init__(self):
        if not (math.isfinite(self.p) and self.p >= 0):
            raise ValueError(f"PolyIllPosed exponent must be >= 0, got {self.p}")

    def values(self, size: int) -> np.ndarray:
        return np.arange(1, size + 1, dtype=float) ** (-self.p)

    def to_dict(self) -> dict:
        return {"kind": "poly", "p": self.p}

    def __str__(self):
        return f"poly:{self.p:g}"


KappaSpec = Direct | PolyIllPosed


def parse_kappa(text: str) -> KappaSpec:
    """Parse ``direct`` or ``poly:<p>``."""
    text = text.strip().lower()
    if text == "direct":
        return Direct()
    if text.startswith("poly:"):
        return PolyIllPosed(float(text.split(":", 1)[1]))
    raise ValueError(f"unknown kappa spec {text!r}; expected 'direct' or 'poly:<p>'")


def kappa_from_dict(d: dict) -> KappaSpec:
    if d.get("kind", "direct") == "direct":
        return Direct()
    return PolyIllPosed(float(d["p"]))


def kappa_eval(spec: KappaSpec, i: int) -> float:
    if i < 1:
        raise ValueError(f"index must be >= 1, got {i}")
    if isinstance(spec, PolyIllPosed):
        return float(i) ** (-spec.p)
    return 1.0


# -- model -------------------------------------------------------------------


def default_n_trunc(n: float, alpha_min: float = ALPHA_MIN) -> int:
    """Truncation policy: ``max(2048, ceil(4 * n**(1/(1+2*alpha_min))))``."""
    return max(N_TRUNC_FLOOR, math.ceil(4 * n ** (1.0 / (1.0 + 2.0 * alpha_min))))


def min_n_trunc(n: float, alpha_min: float = ALPHA_MIN) -> int:
    return math.ceil(n ** (1.0 / (1.0 + 2.0 * alpha_min)) - 1e-9)


@dataclass(frozen=True)
class ModelConfig:
    n: float
    kappa: KappaSpec = field(default_factory=Direct)
    n_trunc: int | None = None
    alpha_min: float = ALPHA_MIN

    def __post_init__(self):
        if not (math.isfinite(self.n) and self.n > 0):
            raise ValueError(f"n must be a positive real, got {self.n}")
        if self.n_trunc is None:
            object.__setattr__(self, "n_trunc", default_n_trunc(self.n, self.alpha_min))
        if self.n_trunc < 1:
            raise ValueError("n_trunc must be >= 1")
        need = min_n_trunc(self.n, self.alpha_min)
        if self.n_trunc < need:
            raise ValueError(
                f"n_trunc={self.n_trunc} is below the signal window "
                f"ceil(n^(1/(1+2*{self.alpha_min}))) = {need} for n={self.n:g}"
            )

    @property
    def noise_sd(self) -> float:
        return self.n ** -0.5

    def kappas(self) -> np.ndarray:
        return self.kappa.values(self.n_trunc)


# -- random streams ----------------------------------------------------------


def _tag_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & _MASK64
    digest = hashlib.blake2b(str(tag).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class RandomStream:
    """A reproducible stream identified by ``(seed, stream_id)``.

    Draws come from a counter-based Philox generator keyed through
    ``numpy.random.SeedSequence``, so identical identifiers give identical
    draws on every platform.  Child streams are derived by hashing tags into
    a new ``stream_id``; they never share state with the parent.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = int(getattr(self, name))
            if not 0 <= v <= _MASK64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer")
            object.__setattr__(self, name, v)

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, *tags) -> "RandomStream":
        entropy = [self.seed, self.stream_id] + [_tag_int(t) for t in tags]
        state = np.random.SeedSequence(entropy).generate_state(1, np.uint64)
        return RandomStream(self.seed, int(state[0]))

    def to_dict(self) -> dict:
        return {"seed": self.seed, "stream_id": self.stream_id}


# -- operations --------------------------------------------------------------


def sample_data(truth, model: ModelConfig, rng: RandomStream) -> CoefficientSequence:
    """Draw ``Y`` of length ``model.n_trunc`` from the sequence model.

    Truth coefficients beyond ``n_trunc`` are not observed.
    """
    theta = as_coeffs(truth)
    if not np.all(np.isfinite(theta)):
        raise ValueError("truth has non-finite entries")
    mean = model.kappas() * CoefficientSequence(theta).padded(model.n_trunc)
    xi = rng.generator().standard_normal(model.n_trunc)
    return CoefficientSequence(mean + model.noise_sd * xi)


def holder_norm(theta, alpha: float) -> float:
    """``sum_i i**alpha * |theta_i|``, the norm defining B(alpha, R)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    c = as_coeffs(theta)
    i = np.arange(1, c.size + 1, dtype=float)
    return float(np.sum(i**alpha * np.abs(c)))


def sobolev_norm_sq(theta, alpha: float) -> float:
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    c = as_coeffs(theta)
    i = np.arange(1, c.size + 1, dtype=float)
    return float(np.sum(i ** (2 * alpha) * c * c))


def truncation_tail_bound(alpha: float, n_trunc: int) -> float:
    """Upper bound ``N**(-2 alpha) / (2 alpha)`` on ``sum_{i>N} i**-(1+2 alpha)``."""
    if alpha <= 0 or n_trunc < 1:
        raise ValueError("need alpha > 0 and n_trunc >= 1")
    return float(n_trunc) ** (-2.0 * alpha) / (2.0 * alpha)
