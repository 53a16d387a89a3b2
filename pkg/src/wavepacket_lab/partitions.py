"""Smooth windows, dyadic rings and re-centred projections.

The 1-D profile ``w`` equals 1 on [-3/8, 3/8], vanishes outside [-5/8, 5/8] and
satisfies ``w(x) + w(x - 1) = 1`` on the overlap.  The d-dimensional window is
the tensor product ``phi(xi) = prod_i w(xi_i)``, so the integer translates of
``phi`` sum to one identically.  The transition is a smooth step ``S`` with the
symmetry ``S(u) + S(1 - u) = 1``; we only ever evaluate ``S`` on [0, 1/2] and
use the symmetry for the other half, which makes the partition identity hold
to rounding error rather than to quadrature accuracy.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import betainc

from .spectral import BandError, GridSpec, RealField, fft, ifft

__all__ = [
    "FLAT",
    "SUPPORT",
    "WindowFunction",
    "ProjectionSpec",
    "SpatialCutoff",
    "build_window",
    "default_window",
    "project",
    "spatial_window",
    "cell_multiplier",
    "fattened_cell_multiplier",
    "projection_multiplier",
    "cell_indices",
    "cells_covering",
    "bernstein_constant",
    "square_function_ratio",
]

FLAT = 3.0 / 8.0
SUPPORT = 5.0 / 8.0
_WIDTH = SUPPORT - FLAT

_GL_X, _GL_W = leggauss(64)


def _bump(u: np.ndarray) -> np.ndarray:
    # exp(-1/(1 - s^2)) with s = 2u - 1, supported on (0, 1)
    out = np.zeros_like(u, dtype=float)
    m = (u > 0) & (u < 1)
    s = 2.0 * u[m] - 1.0
    out[m] = np.exp(-1.0 / (1.0 - s * s))
    return out


_BUMP_HALF = 0.25 * float(np.sum(_GL_W * _bump((_GL_X + 1) / 4)))


def _bump_step_half(u: np.ndarray) -> np.ndarray:
    """Normalised cumulative bump integral for 0 <= u <= 1/2."""
    nodes = (_GL_X[None, :] + 1.0) * 0.5 * u[:, None]
    vals = np.sum(_GL_W * _bump(nodes), axis=1) * 0.5 * u
    return 0.5 * vals / _BUMP_HALF


def smooth_step(u: np.ndarray, order: int | None = None) -> np.ndarray:
    """Smooth monotone step from 0 (u <= 0) to 1 (u >= 1) with S(u) + S(1-u) = 1.

    ``order=None`` integrates the C-infinity bump; an integer r uses the
    regularised incomplete beta function I_u(r+1, r+1), which is C^r.
    """
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    flat = u.ravel()
    low = flat <= 0.5
    v = np.where(low, flat, 1.0 - flat)
    if order is None:
        half = _bump_step_half(v)
    else:
        a = float(order) + 1.0
        half = betainc(a, a, v)
    out = np.where(low, half, 1.0 - half)
    return out.reshape(u.shape)


@dataclass(frozen=True)
class WindowFunction:
    """Tensor-product window with flat radius 3/8 and support radius 5/8."""

    order: int | None = None
    flat: float = FLAT
    support: float = SUPPORT

    def profile(self, x: np.ndarray) -> np.ndarray:
        """The 1-D profile w."""
        x = np.asarray(x, dtype=float)
        a = np.abs(x)
        out = np.zeros(a.shape)
        out[a <= FLAT] = 1.0
        m = (a > FLAT) & (a < SUPPORT)
        if np.any(m):
            out[m] = 1.0 - smooth_step((a[m] - FLAT) / _WIDTH, self.order)
        return out

    def __call__(self, *xi: np.ndarray) -> np.ndarray:
        """phi(xi) for broadcastable coordinate arrays, or one (..., d) array."""
        if len(xi) == 1 and np.ndim(xi[0]) >= 1 and np.shape(xi[0])[-1:] and not np.isscalar(xi[0]):
            arr = np.asarray(xi[0], dtype=float)
            if arr.ndim >= 2:
                return np.prod(self.profile(arr), axis=-1)
        out = np.ones(())
        for c in xi:
            out = out * self.profile(c)
        return out

    def ring(self, *xi: np.ndarray) -> np.ndarray:
        """psi(xi) = phi(xi) - phi(2 xi)."""
        doubled = [2.0 * np.asarray(c, dtype=float) for c in xi]
        return self(*xi) - self(*doubled)

    def partition_error(self, points: np.ndarray) -> float:
        """max |sum_k phi(xi - k) - 1| over sample points of shape (P, d)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        base = np.floor(pts)
        d = pts.shape[1]
        total = np.zeros(len(pts))
        # only k in {floor, floor + 1}^d can contribute
        for corner in range(2**d):
            offs = np.array([(corner >> i) & 1 for i in range(d)], dtype=float)
            total += np.prod(self.profile(pts - base - offs), axis=1)
        return float(np.max(np.abs(total - 1.0)))


def build_window(smoothness_order: int | None = None) -> WindowFunction:
    """Window with the C-infinity bump step (default) or a C^r polynomial step."""
    if smoothness_order is not None and int(smoothness_order) < 1:
        raise ValueError("smoothness_order must be >= 1 or None")
    return WindowFunction(None if smoothness_order is None else int(smoothness_order))


default_window = build_window()


# ---------------------------------------------------------------------------
# Lattice evaluation helpers
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=4096)
def _axis_profile(grid: GridSpec, shift: float, scale: float, window: WindowFunction) -> np.ndarray:
    a = window.profile((grid.freq_axis() - shift) / scale)
    a.setflags(write=False)
    return a


def _outer(grid: GridSpec, axes: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones(())
    for i, a in enumerate(axes):
        shp = [1] * grid.d
        shp[i] = grid.n
        out = out * a.reshape(shp)
    return np.broadcast_to(out, grid.shape)


def cell_multiplier(grid: GridSpec, k: Sequence[int], window: WindowFunction = default_window,
                    scale: float = 1.0) -> np.ndarray:
    """phi((xi - k) / scale) on the lattice."""
    return _outer(grid, [_axis_profile(grid, float(ki), float(scale), window) for ki in k])


def fattened_cell_multiplier(grid: GridSpec, k: Sequence[int], radius: int = 2,
                             window: WindowFunction = default_window) -> np.ndarray:
    """sum over |k' - k|_inf <= radius of phi(xi - k'), a tensor product of 1-D sums."""
    axes = []
    for ki in k:
        s = np.zeros(grid.n)
        for j in range(-radius, radius + 1):
            s = s + _axis_profile(grid, float(ki + j), 1.0, window)
        axes.append(s)
    return _outer(grid, axes)


def cell_indices(grid: GridSpec, k: Sequence[int], radius: float = SUPPORT) -> tuple[np.ndarray, ...]:
    """FFT-order lattice indices per axis with |xi_i - k_i| < radius."""
    out = []
    for ki in k:
        lo = math.ceil((ki - radius) / grid.dxi - 1e-9)
        hi = math.floor((ki + radius) / grid.dxi + 1e-9)
        m = np.arange(lo, hi + 1)
        out.append(np.mod(m, grid.n))
    return tuple(out)


@dataclass(frozen=True)
class ProjectionSpec:
    """Re-centred Littlewood-Paley projection P_{N;k} (or its fattened sum)."""

    N: int
    k: tuple[int, ...]
    fattened: bool = False

    def __post_init__(self) -> None:
        N = int(self.N)
        if N < 1 or N & (N - 1):
            raise ValueError(f"N must be a dyadic integer >= 1, got {self.N}")
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "k", tuple(int(c) for c in self.k))

    @property
    def scales(self) -> list[int]:
        """Dyadic scales M summed by the projection (clipped at M >= 1)."""
        if not self.fattened:
            return [self.N]
        lo = max(1, self.N // 2**10) if self.N >= 2**10 else 1
        lo = max(lo, 1)
        e_lo = max(0, int(math.log2(self.N)) - 10)
        e_hi = int(math.log2(self.N)) + 10
        return [2**e for e in range(e_lo, e_hi + 1)]

    def support_radius(self) -> float:
        """Largest |xi_i| touched by the multiplier's non-flat part."""
        kmax = max((abs(c) for c in self.k), default=0)
        if self.fattened:
            M_lo = self.scales[0]
            return kmax + (SUPPORT * M_lo if M_lo > 1 else SUPPORT)
        return kmax + SUPPORT * self.N


def projection_multiplier(grid: GridSpec, spec: ProjectionSpec,
                          window: WindowFunction = default_window) -> np.ndarray:
    """Multiplier of P_{N;k} (psi((xi-k)/N) for N > 1, phi(xi-k) for N = 1)."""
    if len(spec.k) != grid.d:
        raise ValueError("projection centre has the wrong dimension")
    k = spec.k
    if not spec.fattened:
        if spec.N == 1:
            return cell_multiplier(grid, k, window)
        return cell_multiplier(grid, k, window, spec.N) - cell_multiplier(grid, k, window, spec.N / 2)
    # telescoping sum over the dyadic range
    scales = spec.scales
    top = cell_multiplier(grid, k, window, scales[-1])
    if scales[0] == 1:
        return np.array(top)
    return top - cell_multiplier(grid, k, window, scales[0] / 2)


def project(f: RealField, spec: ProjectionSpec, window: WindowFunction = default_window) -> RealField:
    """Apply P_{N;k} (or the fattened projection) spectrally."""
    g = f.grid
    g.require_band(spec.support_radius(), f"projection N={spec.N}, k={spec.k}")
    m = projection_multiplier(g, spec, window)
    out = ifft(g, fft(g, f.values) * m)
    real = f.real and all(c == 0 for c in spec.k)
    return RealField(g, out.real if real else out, real=real)


@dataclass(frozen=True)
class SpatialCutoff:
    """Physical cut-off: phi(x - l) for scale 1, psi((x - l)/scale) for scale >= 2."""

    scale: int
    center: tuple[float, ...]

    def __post_init__(self) -> None:
        s = int(self.scale)
        if s < 1 or s & (s - 1):
            raise ValueError(f"scale must be a dyadic integer >= 1, got {self.scale}")
        object.__setattr__(self, "scale", s)
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def __call__(self, *x: np.ndarray, window: WindowFunction = default_window) -> np.ndarray:
        shifted = [(np.asarray(xi, dtype=float) - c) / self.scale for xi, c in zip(x, self.center)]
        if self.scale == 1:
            return window(*shifted)
        return window.ring(*shifted)

    def on_grid(self, grid: GridSpec, window: WindowFunction = default_window) -> np.ndarray:
        if self.scale == 1:
            axes = [window.profile(grid.axis() - c) for c in self.center]
            return _outer(grid, axes)
        return np.broadcast_to(self(*grid.coords(), window=window), grid.shape)


def spatial_window(f: RealField, cutoff: SpatialCutoff, window: WindowFunction = default_window) -> RealField:
    if len(cutoff.center) != f.grid.d:
        raise ValueError("cut-off centre has the wrong dimension")
    return RealField(f.grid, f.values * cutoff.on_grid(f.grid, window), real=f.real)


def cells_covering(grid: GridSpec, values: np.ndarray, tol: float = 0.0) -> list[tuple[int, ...]]:
    """Integer cells l whose window phi_l meets the support of ``values``.

    A cell is kept when max |phi_l f| exceeds ``tol * max |f|``.
    """
    a = np.abs(values)
    peak = float(a.max()) if a.size else 0.0
    if peak == 0.0:
        return []
    mask = a > tol * peak
    idx = np.nonzero(mask)
    ax = grid.axis()
    lo = [math.floor(ax[i].min() - SUPPORT) for i in idx]
    hi = [math.ceil(ax[i].max() + SUPPORT) for i in idx]
    cells = []
    rng = [range(a_, b_ + 1) for a_, b_ in zip(lo, hi)]
    import itertools

    for l in itertools.product(*rng):
        w = SpatialCutoff(1, l).on_grid(grid)
        prod = np.abs(w * values)
        if prod.max() > tol * peak and prod.max() > 0:
            cells.append(tuple(int(c) for c in l))
    return cells


# ---------------------------------------------------------------------------
# Measured-constant probes
# ---------------------------------------------------------------------------


def bernstein_constant(f: RealField, spec: ProjectionSpec, p: float, q: float) -> float:
    """C = ||P f||_q / (N^{d(1/p - 1/q)} ||P f||_p) for one field (p <= q)."""
    from .spectral import lebesgue_norm

    if p > q:
        raise ValueError("Bernstein probe requires p <= q")
    Pf = project(f, spec)
    num = lebesgue_norm(Pf, q)
    den = lebesgue_norm(Pf, p)
    if den == 0.0:
        return 0.0
    d = f.grid.d
    inv = (0.0 if math.isinf(p) else 1.0 / p) - (0.0 if math.isinf(q) else 1.0 / q)
    return num / (spec.N ** (d * inv) * den)


def square_function_ratio(f: RealField, cells: Sequence[Sequence[int]], window: WindowFunction = default_window,
                          floor: float = 1e-3) -> float:
    """max over x of sum_k |P_k f|^2 / (|phi_check| * |f|^2), restricted to where
    the denominator exceeds ``floor`` times its maximum."""
    g = f.grid
    F = fft(g, f.values)
    sq = np.zeros(g.shape)
    for k in cells:
        sq += np.abs(ifft(g, F * cell_multiplier(g, k, window))) ** 2
    # |phi_check| sampled on the grid; index n/2 is the origin, so roll it to 0
    kern = np.abs(ifft(g, cell_multiplier(g, (0,) * g.d, window)))
    kern = np.roll(kern, shift=[-(g.n // 2)] * g.d, axis=tuple(range(g.d)))
    dens = np.abs(f.values) ** 2
    conv = np.real(np.fft.ifftn(np.fft.fftn(kern) * np.fft.fftn(dens))) * g.cell_volume
    mask = conv > floor * conv.max()
    return float(np.max(sq[mask] / conv[mask]))
