"""Reproducible true coefficient sequences."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.fft

from .fourier import SQRT2
from .sequence import CoefficientSequence, RandomStream, as_coeffs, holder_norm


@dataclass(frozen=True)
class PolyDecay:
    """theta_i = c * i**-(1/2 + alpha)."""

    alpha: float
    c: float = 1.0
    kind = "poly"


@dataclass(frozen=True)
class AlternatingDecay:
    """theta_i = c * (-1)**i * i**-(1/2 + alpha)."""

    alpha: float
    c: float = 1.0
    kind = "alt"


@dataclass(frozen=True)
class RandomHolder:
    """Random member of B(alpha, R), scaled onto its boundary."""

    alpha: float
    R: float = 1.0
    seed: int = 0
    kind = "holder"


@dataclass(frozen=True)
class LocalBump:
    """``height * exp(-w**2 / (w**2 - d**2))`` for periodic distance ``d < w``."""

    center: float = 0.5
    width: float = 0.1
    height: float = 1.0
    kind = "bump"


Family = PolyDecay | AlternatingDecay | RandomHolder | LocalBump
FAMILIES = {cls.kind: cls for cls in (PolyDecay, AlternatingDecay, RandomHolder, LocalBump)}


@dataclass(frozen=True)
class TruthSpec:
    family: Family
    n_trunc: int = 2048

    def __post_init__(self):
        if self.n_trunc < 1:
            raise ValueError("n_trunc must be >= 1")
        _validate(self.family)

    def with_length(self, n_trunc: int) -> "TruthSpec":
        return TruthSpec(self.family, n_trunc)

    @property
    def alpha(self) -> float | None:
        return getattr(self.family, "alpha", None)

    def to_dict(self) -> dict:
        return {"family": self.family.kind, **asdict(self.family), "n_trunc": self.n_trunc}

    @classmethod
    def from_dict(cls, d: dict) -> "TruthSpec":
        d = dict(d)
        fam = FAMILIES[d.pop("family")]
        n_trunc = int(d.pop("n_trunc", 2048))
        return cls(fam(**d), n_trunc)

    def label(self) -> str:
        params = ",".join(f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}"
                          for k, v in asdict(self.family).items())
        return f"{self.family.kind}:{params}"


def _validate(f: Family):
    if isinstance(f, (PolyDecay, AlternatingDecay, RandomHolder)):
        if not (math.isfinite(f.alpha) and f.alpha > 0):
            raise ValueError(f"{f.kind}: alpha must be positive, got {f.alpha}")
    if isinstance(f, (PolyDecay, AlternatingDecay)) and not math.isfinite(f.c):
        raise ValueError(f"{f.kind}: c must be finite")
    if isinstance(f, RandomHolder) and not f.R > 0:
        raise ValueError(f"holder: R must be positive, got {f.R}")
    if isinstance(f, LocalBump):
        if not 0 < f.width < 0.5:
            raise ValueError(f"bump: width must lie in (0, 0.5), got {f.width}")
        if not 0 <= f.center < 1:
            raise ValueError(f"bump: center must lie in [0, 1), got {f.center}")
        if not math.isfinite(f.height):
            raise ValueError("bump: height must be finite")


def parse_truth(text: str, n_trunc: int = 2048) -> TruthSpec:
    """Parse ``family:params``, e.g. ``poly:alpha=1,c=1`` or ``bump:0.5,0.1,1``."""
    fam_name, _, params = text.partition(":")
    fam_name = fam_name.strip().lower()
    if fam_name not in FAMILIES:
        raise ValueError(f"unknown truth family {fam_name!r}; choose from {sorted(FAMILIES)}")
    cls = FAMILIES[fam_name]
    names = list(cls.__dataclass_fields__)
    kwargs = {}
    for pos, item in enumerate(p for p in params.split(",") if p.strip()):
        key, eq, val = item.partition("=")
        if eq:
            key = key.strip()
        else:
            key, val = names[pos], key
        if key not in names:
            raise ValueError(f"{fam_name}: unknown parameter {key!r}")
        kwargs[key] = int(val) if key == "seed" else float(val)
    return TruthSpec(cls(**kwargs), n_trunc)


def _bump_coeffs(f: LocalBump, n_trunc: int) -> np.ndarray:
    # quadrature grid resolves every retained frequency with 4x oversampling
    G = max(1 << 14, 1 << math.ceil(math.log2(4 * n_trunc)))
    x = np.arange(G) / G
    d = np.abs(x - f.center)
    d = np.minimum(d, 1.0 - d)
    vals = np.zeros(G)
    inside = d < f.width
    w2 = f.width**2
    vals[inside] = f.height * np.exp(-w2 / (w2 - d[inside] ** 2))
    F = scipy.fft.rfft(vals) / G  # F_m = (1/G) sum f(x_j) e^{-2 pi i m x_j}
    theta = np.zeros(n_trunc)
    theta[0] = F[0].real
    M = min(n_trunc // 2, G // 2 - 1)
    m = np.arange(1, M + 1)
    theta[2 * m - 1] = SQRT2 * F[m].real
    n_sin = min((n_trunc - 1) // 2, M)
    ms = np.arange(1, n_sin + 1)
    theta[2 * ms] = -SQRT2 * F[ms].imag
    return theta


def generate_truth(spec: TruthSpec) -> CoefficientSequence:
    f, N = spec.family, spec.n_trunc
    i = np.arange(1, N + 1, dtype=float)
    if isinstance(f, PolyDecay):
        return CoefficientSequence(f.c * i ** -(0.5 + f.alpha))
    if isinstance(f, AlternatingDecay):
        sign = np.where(np.arange(1, N + 1) % 2 == 0, 1.0, -1.0)
        return CoefficientSequence(f.c * sign * i ** -(0.5 + f.alpha))
    if isinstance(f, RandomHolder):
        xi = RandomStream(f.seed).child("random-holder").generator().standard_normal(N)
        raw = xi * i ** -(f.alpha + 1.5)
        theta = raw * (f.R / holder_norm(raw, f.alpha))
        # rounding may leave the norm a few ulps above R
        while holder_norm(theta, f.alpha) > f.R:
            theta *= 1.0 - 2.0**-52
        return CoefficientSequence(theta)
    if isinstance(f, LocalBump):
        return CoefficientSequence(_bump_coeffs(f, N))
    raise TypeError(f"unsupported truth family {type(f).__name__}")


def classify_truth(theta, alpha: float, R: float) -> bool:
    """Membership in ``B(alpha, R)`` over the stored coefficients."""
    return holder_norm(as_coeffs(theta), alpha) <= R
