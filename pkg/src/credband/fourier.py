"""Trigonometric basis on [0, 1) and synthesis on uniform grids.

Indexing: phi_1 = 1, phi_{2m} = sqrt(2) cos(2 pi m x),
phi_{2m+1} = sqrt(2) sin(2 pi m x).

Synthesis goes through a real inverse FFT.  Frequencies at or above G/2
are folded (aliased) onto the half spectrum first, which is exact at the
grid points, so the result equals direct summation up to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .sequence import as_coeffs, default_n_trunc

SQRT2 = math.sqrt(2.0)
GRID_FLOOR = 4096
GRID_CAP = 16384
GRID_BIAS_FACTOR = 1e-3

# rows per FFT batch are capped so a batch stays near 32 MB of complex data
_BATCH_ELEMS = 1 << 21


@dataclass(frozen=True)
class Grid:
    """Uniform half-open grid ``x_j = j / size`` on [0, 1)."""

    size: int

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 2:
            raise ValueError(f"grid size must be an integer >= 2, got {self.size}")

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.size) / self.size

    @property
    def mesh(self) -> float:
        return 1.0 / self.size


def basis_eval(i: int, x: float) -> float:
    if i < 1:
        raise ValueError(f"basis index must be >= 1, got {i}")
    if not 0.0 <= x < 1.0:
        raise ValueError(f"x must lie in [0, 1), got {x}")
    if i == 1:
        return 1.0
    m = i // 2
    if i % 2 == 0:
        return SQRT2 * math.cos(2.0 * math.pi * m * x)
    return SQRT2 * math.sin(2.0 * math.pi * m * x)


def basis_matrix(n_coef: int, x: np.ndarray) -> np.ndarray:
    """Dense ``(len(x), n_coef)`` matrix of basis values; for small problems."""
    x = np.asarray(x, dtype=float)
    out = np.empty((x.size, n_coef))
    out[:, 0] = 1.0
    m = np.arange(1, n_coef // 2 + 1)
    ang = 2.0 * np.pi * np.outer(x, m)
    out[:, 1::2] = (SQRT2 * np.cos(ang))[:, : out[:, 1::2].shape[1]]
    if n_coef > 2:
        out[:, 2::2] = (SQRT2 * np.sin(ang))[:, : out[:, 2::2].shape[1]]
    return out


def _bin_scale(G: int) -> np.ndarray:
    # irfft weights interior bins by 2 and reads only the real part of the ends
    half = G // 2
    scale = np.full(half + 1, G / 2.0)
    scale[0] = G
    scale[half] = G if G % 2 == 0 else G / 2.0
    return scale


def _half_spectrum(coeffs: np.ndarray, G: int) -> np.ndarray:
    """Fold coefficient rows into irfft input of length G//2 + 1."""
    rows, N = coeffs.shape
    half = G // 2
    M = N // 2
    n_sin = (N - 1) // 2
    scale = _bin_scale(G)
    H = np.zeros((rows, half + 1), dtype=complex)
    # w_m = sqrt(2) (a_m - i b_m), so Re(w_m e^{2 pi i m x}) = a_m phi_2m + b_m phi_{2m+1}
    if M <= half:
        # no aliasing: write the scaled coefficients straight into place
        H.real[:, 0] = coeffs[:, 0] * scale[0]
        H.real[:, 1 : M + 1] = coeffs[:, 1 : 2 * M : 2] * (SQRT2 * scale[1 : M + 1])
        H.imag[:, 1 : n_sin + 1] = coeffs[:, 2 : 2 * n_sin + 1 : 2] * (-SQRT2 * scale[1 : n_sin + 1])
        if G % 2 == 0 and M == half:
            H.imag[:, half] = 0.0
        return H

    w = np.zeros((rows, M + 1), dtype=complex)
    w[:, 0] = coeffs[:, 0]
    w.real[:, 1:] = SQRT2 * coeffs[:, 1 : 2 * M : 2]
    w.imag[:, 1 : n_sin + 1] = -SQRT2 * coeffs[:, 2 : 2 * n_sin + 1 : 2]
    for start in range(0, M + 1, G):
        seg = w[:, start : start + G]
        k = seg.shape[1]
        lo = min(k, half + 1)
        H[:, :lo] += seg[:, :lo]
        if k > half + 1:
            # residues r in (G/2, G) map to conj at G - r
            r = np.arange(half + 1, k)
            H[:, G - r] += np.conj(seg[:, half + 1 : k])
    H *= scale
    if G % 2 == 0:
        H.imag[:, half] = 0.0
    H.imag[:, 0] = 0.0
    return H


def synthesize_many(coeffs: np.ndarray, grid: Grid | int) -> np.ndarray:
    """Synthesize each row of ``coeffs`` on the grid; returns ``(rows, G)``."""
    G = grid.size if isinstance(grid, Grid) else int(grid)
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    rows = coeffs.shape[0]
    out = np.empty((rows, G))
    step = max(1, _BATCH_ELEMS // G)
    for s in range(0, rows, step):
        H = _half_spectrum(coeffs[s : s + step], G)
        out[s : s + step] = scipy.fft.irfft(H, n=G, axis=1)
    return out


def sup_norms_many(coeffs: np.ndarray, grid: Grid | int) -> np.ndarray:
    """Row-wise grid sup norm of the synthesized functions."""
    G = grid.size if isinstance(grid, Grid) else int(grid)
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    out = np.empty(coeffs.shape[0])
    step = max(1, _BATCH_ELEMS // G)
    for s in range(0, coeffs.shape[0], step):
        vals = scipy.fft.irfft(_half_spectrum(coeffs[s : s + step], G), n=G, axis=1)
        np.maximum(vals.max(axis=1), -vals.min(axis=1), out=out[s : s + step])
    return out


def synthesize(theta, grid: Grid) -> np.ndarray:
    """``f(x_j) = sum_i theta_i phi_i(x_j)`` at every grid point."""
    return synthesize_many(as_coeffs(theta)[None, :], grid)[0]


def synthesize_direct(theta, x) -> np.ndarray:
    """Plain summation at arbitrary points; the reference for :func:`synthesize`."""
    c = as_coeffs(theta)
    return basis_matrix(c.size, np.atleast_1d(x)) @ c


def sup_norm_on_grid(values) -> float:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("sup norm of an empty list is undefined")
    return float(np.max(np.abs(v)))


def grid_bias_bound(alpha: float, n: float, G: int, n_trunc: int | None = None) -> float:
    """RMS increment bound of the posterior process across one grid cell.

    ``sqrt(sum_i (i**(1+2 alpha) + n)**-1 * 8 pi**2 i**2) / G``, from the
    Lipschitz estimate ``|phi_i(s) - phi_i(t)| <= 2 sqrt(2) pi i |s - t|``.
    """
    if alpha <= 0 or n <= 0 or G <= 0:
        raise ValueError("alpha, n and G must be positive")
    N = default_n_trunc(n) if n_trunc is None else n_trunc
    i = np.arange(1, N + 1, dtype=float)
    s = np.sum(8.0 * np.pi**2 * i * i / (i ** (1.0 + 2.0 * alpha) + n))
    return float(math.sqrt(s) / G)


def default_grid_size(
    alpha: float,
    n: float,
    n_trunc: int | None = None,
    floor: int = GRID_FLOOR,
    cap: int | None = None,
) -> int:
    """Smallest power of two >= ``floor`` whose grid bias bound is at most
    ``1e-3 * n**(-alpha/(2 alpha+1))``, optionally clipped to ``cap``.
    """
    target = GRID_BIAS_FACTOR * n ** (-alpha / (2.0 * alpha + 1.0))
    need = grid_bias_bound(alpha, n, 1, n_trunc) / target
    G = max(floor, 1 << max(0, math.ceil(math.log2(need))))
    while grid_bias_bound(alpha, n, G, n_trunc) > target:
        G *= 2
    if cap is not None:
        G = min(G, cap)
    return G
