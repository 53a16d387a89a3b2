"""Periodic grids, Fourier transforms and norms.

The whole space R^d is modelled by the torus [-L, L)^d sampled at n points per
axis.  The continuous transform

    f_hat(xi) = (2 pi)^(-d/2) * integral exp(-i x.xi) f(x) dx

is discretised by a Riemann sum with weight h^d, which makes the discrete
coefficients directly comparable with closed-form transforms.  Coefficients are
stored in the native FFT ordering; ``GridSpec.freqs`` returns the matching
frequency lattice (pi/L) * m.
"""

from __future__ import annotations

import functools
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

__all__ = [
    "GridSpec",
    "RealField",
    "SpectralField",
    "MixedNormSpec",
    "Trajectory",
    "GridError",
    "BandError",
    "forward_transform",
    "inverse_transform",
    "apply_multiplier",
    "lebesgue_norm",
    "sobolev_norm",
    "mixed_norm",
    "save_snapshot",
    "load_snapshot",
    "fft",
    "ifft",
]

SNAPSHOT_MAGIC = b"WPL1"


class GridError(ValueError):
    """Invalid grid parameters or mismatched grids."""


class BandError(ValueError):
    """A requested frequency band is not resolved by the grid."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on [-L, L)^d with n points per axis."""

    d: int
    n: int
    L: float = 16 * math.pi

    def __post_init__(self) -> None:
        if not (1 <= int(self.d) <= 4):
            raise GridError(f"d must be in 1..4, got {self.d}")
        n = int(self.n)
        if n < 2 or n & (n - 1):
            raise GridError(f"n must be a power of two >= 2, got {self.n}")
        if not (self.L > 0 and math.isfinite(self.L)):
            raise GridError(f"L must be positive, got {self.L}")
        if math.pi / self.L > 1 / 8 + 1e-12:
            raise GridError(f"frequency spacing pi/L = {math.pi / self.L:.4g} exceeds 1/8")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self) -> float:
        return 2 * self.L / self.n

    @property
    def dxi(self) -> float:
        """Frequency lattice spacing pi/L."""
        return math.pi / self.L

    @property
    def nyquist(self) -> float:
        """Largest resolved |xi_i|, i.e. n pi / (2L)."""
        return self.n * math.pi / (2 * self.L)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def volume(self) -> float:
        return (2 * self.L) ** self.d

    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.n)

    def freq_axis(self) -> np.ndarray:
        return _freq_axis(self)

    def coords(self) -> list[np.ndarray]:
        """Sparse broadcastable coordinate arrays (one per axis)."""
        return _coords(self)

    def freqs(self) -> list[np.ndarray]:
        """Sparse broadcastable frequency arrays in FFT ordering."""
        return _freqs(self)

    def abs_freq(self) -> np.ndarray:
        return _abs_freq(self)

    def require_band(self, radius: float, what: str = "band") -> None:
        """Raise BandError unless every |xi_i| <= radius is resolved."""
        if radius > self.nyquist + 1e-12:
            raise BandError(
                f"{what} reaches |xi_i| = {radius:g} beyond the grid Nyquist {self.nyquist:g}"
            )

    def with_n(self, n: int) -> "GridSpec":
        return GridSpec(self.d, n, self.L)


@functools.lru_cache(maxsize=64)
def _freq_axis(g: GridSpec) -> np.ndarray:
    a = np.fft.fftfreq(g.n, d=1.0 / g.n) * g.dxi
    a.setflags(write=False)
    return a


@functools.lru_cache(maxsize=64)
def _coords(g: GridSpec) -> list[np.ndarray]:
    ax = g.axis()
    out = []
    for i in range(g.d):
        shp = [1] * g.d
        shp[i] = g.n
        a = ax.reshape(shp)
        a.setflags(write=False)
        out.append(a)
    return out


@functools.lru_cache(maxsize=64)
def _freqs(g: GridSpec) -> list[np.ndarray]:
    ax = _freq_axis(g)
    out = []
    for i in range(g.d):
        shp = [1] * g.d
        shp[i] = g.n
        a = ax.reshape(shp)
        out.append(a)
    return out


@functools.lru_cache(maxsize=16)
def _abs_freq(g: GridSpec) -> np.ndarray:
    r2 = np.zeros(g.shape)
    for f in _freqs(g):
        r2 = r2 + f * f
    r = np.sqrt(r2)
    r.setflags(write=False)
    return r


@functools.lru_cache(maxsize=64)
def _checker(g: GridSpec) -> np.ndarray:
    # (-1)^m per axis; equals (-1)^j in FFT ordering because n is even.
    s = np.ones(g.shape)
    for i in range(g.d):
        shp = [1] * g.d
        shp[i] = g.n
        s = s * ((-1.0) ** np.arange(g.n)).reshape(shp)
    s.setflags(write=False)
    return s


# ---------------------------------------------------------------------------
# Array-level transforms (used internally for speed)
# ---------------------------------------------------------------------------


def fft(grid: GridSpec, values: np.ndarray) -> np.ndarray:
    """Continuous-normalised forward transform of a sampled array."""
    c = grid.cell_volume / (2 * math.pi) ** (grid.d / 2)
    axes = tuple(range(-grid.d, 0))
    return sfft.fftn(values, axes=axes, workers=-1) * (_checker(grid) * c)


def ifft(grid: GridSpec, coeffs: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft` (complex output)."""
    c = (grid.n * grid.dxi) ** grid.d / (2 * math.pi) ** (grid.d / 2)
    axes = tuple(range(-grid.d, 0))
    return sfft.ifftn(coeffs * (_checker(grid) * c), axes=axes, workers=-1)


# ---------------------------------------------------------------------------
# Field containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RealField:
    """Samples of a function on the spatial lattice.

    ``real=True`` marks a real-valued field; complex input with negligible
    imaginary part is accepted and stored as real.
    """

    grid: GridSpec
    values: np.ndarray
    real: bool = True

    def __post_init__(self) -> None:
        v = np.asarray(self.values)
        if v.shape != self.grid.shape:
            raise GridError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if self.real:
            if np.iscomplexobj(v):
                peak = float(np.max(np.abs(v))) if v.size else 0.0
                if float(np.max(np.abs(v.imag))) > 1e-10 * max(peak, 1e-300):
                    raise ValueError("field flagged real has a non-negligible imaginary part")
                v = v.real
            v = np.asarray(v, dtype=float)
        else:
            v = np.asarray(v, dtype=complex)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: GridSpec, func: Callable[..., np.ndarray], real: bool = True) -> "RealField":
        vals = np.broadcast_to(func(*grid.coords()), grid.shape)
        return cls(grid, np.array(vals), real=real)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "RealField":
        return cls(grid, np.zeros(grid.shape))

    def __add__(self, other: "RealField") -> "RealField":
        _same_grid(self.grid, other.grid)
        return _auto(self.grid, self.values + other.values, self.real and other.real)

    def __sub__(self, other: "RealField") -> "RealField":
        _same_grid(self.grid, other.grid)
        return _auto(self.grid, self.values - other.values, self.real and other.real)

    def scale(self, c: complex) -> "RealField":
        real = self.real and np.isreal(c)
        return _auto(self.grid, self.values * (c.real if real else c), real)


def _auto(grid: GridSpec, values: np.ndarray, real: bool) -> RealField:
    if real:
        return RealField(grid, np.real(values), True)
    return RealField(grid, values, False)


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients on the frequency lattice (FFT ordering)."""

    grid: GridSpec
    coefficients: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.coefficients, dtype=complex)
        if c.shape != self.grid.shape:
            raise GridError(f"coefficient shape {c.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "coefficients", c)


def _same_grid(a: GridSpec, b: GridSpec) -> None:
    if a != b:
        raise GridError(f"grid mismatch: {a} vs {b}")


def forward_transform(f: RealField) -> SpectralField:
    return SpectralField(f.grid, fft(f.grid, f.values))


def inverse_transform(F: SpectralField, real: bool | None = None, grid: GridSpec | None = None) -> RealField:
    """Invert :func:`forward_transform`.

    With ``real=None`` the result is flagged real when its imaginary part is below
    1e-12 of the peak magnitude (as produced by Hermitian-symmetric input).
    """
    if grid is not None:
        _same_grid(grid, F.grid)
    v = ifft(F.grid, F.coefficients)
    if real is None:
        peak = float(np.max(np.abs(v))) if v.size else 0.0
        real = float(np.max(np.abs(v.imag))) <= 1e-12 * max(peak, 1e-300)
    if real:
        return RealField(F.grid, v.real, True)
    return RealField(F.grid, v, False)


Multiplier = Callable[..., np.ndarray] | np.ndarray


def multiplier_values(grid: GridSpec, m: Multiplier) -> np.ndarray:
    """Evaluate a multiplier on the lattice.

    ``m`` is either an array on the lattice or a callable receiving the sparse
    frequency arrays ``xi_1, ..., xi_d``.
    """
    if callable(m):
        vals = m(*grid.freqs())
    else:
        vals = m
    return np.broadcast_to(np.asarray(vals), grid.shape)


def apply_multiplier(F: SpectralField, m: Multiplier) -> SpectralField:
    return SpectralField(F.grid, F.coefficients * multiplier_values(F.grid, m))


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------


def _check_exponent(p: float, name: str = "p") -> float:
    p = float(p)
    if math.isnan(p) or p < 1:
        raise ValueError(f"exponent {name} must satisfy 1 <= {name} <= inf, got {p}")
    return p


def _lp(values: np.ndarray, p: float, weight: float, axes=None) -> np.ndarray | float:
    a = np.abs(values)
    if math.isinf(p):
        return a.max(axis=axes) if a.size else 0.0
    return (np.sum(a**p, axis=axes) * weight) ** (1.0 / p)


def lebesgue_norm(f: RealField, p: float) -> float:
    """(sum |f|^p h^d)^(1/p), or max |f| for p = inf."""
    p = _check_exponent(p)
    return float(_lp(f.values, p, f.grid.cell_volume))


def sobolev_norm(f: RealField, s: float) -> float:
    """Inhomogeneous H^s norm with weight <xi>^s = (1 + |xi|^2)^(s/2)."""
    g = f.grid
    F = fft(g, f.values)
    w = (1.0 + g.abs_freq() ** 2) ** (s / 2)
    return float(np.sqrt(np.sum(np.abs(F * w) ** 2) * g.dxi**g.d))


@dataclass(frozen=True)
class MixedNormSpec:
    """L^q_t L^p_x exponents with an optional space-time restriction.

    ``region`` is a callable ``region(t, *coords) -> bool mask`` evaluated per
    time sample; ``t_range`` restricts the time integration interval.
    """

    q: float
    p: float
    region: Callable[..., np.ndarray] | None = None
    t_range: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "q", _check_exponent(self.q, "q"))
        object.__setattr__(self, "p", _check_exponent(self.p, "p"))

    @property
    def q_infinite(self) -> bool:
        return math.isinf(self.q)

    @property
    def p_infinite(self) -> bool:
        return math.isinf(self.p)


@dataclass(frozen=True)
class Trajectory:
    """Time-indexed samples of a field on one grid."""

    grid: GridSpec
    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values)
        if v.shape != (len(t),) + self.grid.shape:
            raise GridError(f"trajectory values shape {v.shape} inconsistent with {len(t)} times")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def field_at(self, j: int) -> RealField:
        v = self.values[j]
        return RealField(self.grid, v, real=not np.iscomplexobj(v))


def spatial_norms(traj: Trajectory, p: float, region=None) -> np.ndarray:
    """Per-sample L^p_x norms, optionally restricted by a region mask."""
    p = _check_exponent(p)
    g = traj.grid
    out = np.empty(len(traj.times))
    any_point = False
    for j, t in enumerate(traj.times):
        vals = traj.values[j]
        if region is not None:
            mask = np.broadcast_to(region(t, *g.coords()), g.shape)
            vals = vals[mask]
            any_point |= vals.size > 0
        else:
            any_point = True
        out[j] = float(_lp(vals, p, g.cell_volume)) if vals.size else 0.0
    if not any_point:
        raise ValueError("mixed-norm region contains no sample points")
    return out


def time_norm(times: np.ndarray, values: np.ndarray, q: float) -> float:
    """L^q in time by the trapezoid rule (max for q = inf)."""
    q = _check_exponent(q, "q")
    values = np.abs(np.asarray(values, dtype=float))
    if values.size == 0:
        raise ValueError("empty time window")
    if math.isinf(q):
        return float(values.max())
    if values.size == 1:
        return 0.0
    return float(np.trapezoid(values**q, times) ** (1.0 / q))


def mixed_norm(traj: Trajectory, spec: MixedNormSpec) -> float:
    """L^q_t L^p_x norm of a uniformly sampled trajectory."""
    times = traj.times
    sel = np.ones(len(times), dtype=bool)
    if spec.t_range is not None:
        a, b = spec.t_range
        sel = (times >= a - 1e-12) & (times <= b + 1e-12)
        if not sel.any():
            raise ValueError("mixed-norm time range contains no samples")
    sub = Trajectory(traj.grid, times[sel], traj.values[sel])
    per_t = spatial_norms(sub, spec.p, spec.region)
    return time_norm(sub.times, per_t, spec.q)


# ---------------------------------------------------------------------------
# Binary snapshots
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sIIdB")


def save_snapshot(path: str | Path, f: RealField | SpectralField) -> None:
    """Write a WPL1 snapshot (header, then row-major little-endian f64 data)."""
    if isinstance(f, SpectralField):
        data, is_complex = f.coefficients, True
    else:
        data, is_complex = f.values, not f.real
    g = f.grid
    arr = np.ascontiguousarray(data, dtype="<c16" if is_complex else "<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, g.d, g.n, g.L, 1 if is_complex else 0))
        fh.write(arr.tobytes(order="C"))


def load_snapshot(path: str | Path) -> RealField:
    """Read a WPL1 snapshot written by :func:`save_snapshot`."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError("snapshot truncated")
    magic, d, n, L, flag = _HEADER.unpack_from(raw, 0)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"bad snapshot magic {magic!r}")
    if flag not in (0, 1):
        raise ValueError(f"bad real/complex flag {flag}")
    grid = GridSpec(d, n, L)
    dtype = "<c16" if flag else "<f8"
    count = n**d
    body = raw[_HEADER.size:]
    if len(body) != count * np.dtype(dtype).itemsize:
        raise ValueError("snapshot payload size does not match header")
    vals = np.frombuffer(body, dtype=dtype).reshape(grid.shape).copy()
    return RealField(grid, vals, real=not flag)


def restrict_coefficients(coeffs: np.ndarray, src: GridSpec, dst: GridSpec) -> np.ndarray:
    """Copy coefficients onto a grid with the same L and fewer/more points.

    Modes outside the destination lattice are dropped; new modes are zero.
    Exact for fields whose spectrum fits inside the smaller lattice.
    """
    if src.L != dst.L or src.d != dst.d:
        raise GridError("restriction requires equal L and d")
    m = min(src.n, dst.n) // 2
    idx = np.r_[0:m, -m:0]
    out = np.zeros(dst.shape, dtype=complex)
    sl_src = np.ix_(*([idx % src.n] * src.d))
    sl_dst = np.ix_(*([idx % dst.n] * dst.d))
    out[sl_dst] = coeffs[sl_src]
    return out


def smallest_grid(template: GridSpec, radius: float) -> GridSpec:
    """Smallest grid with the template's L whose Nyquist exceeds ``radius``."""
    n = 2
    while n * math.pi / (2 * template.L) <= radius:
        n *= 2
    return GridSpec(template.d, n, template.L)


def as_field(grid: GridSpec, values: np.ndarray | RealField | Sequence) -> RealField:
    if isinstance(values, RealField):
        _same_grid(grid, values.grid)
        return values
    v = np.asarray(values)
    return RealField(grid, v, real=not np.iscomplexobj(v) or bool(np.allclose(v.imag, 0, atol=0)))
