"""Sub-gaussian coefficients and the Wiener/microlocal randomisations.

Coefficients ``X_{k,l}`` are produced by numpy's counter-based Philox generator.
Values are drawn in blocks: every pair ``(l, tile)``, where ``tile`` is the
8^d-cube of frequencies containing ``k``, gets its own Philox key derived from
``(seed, l, tile)`` through :class:`numpy.random.SeedSequence`.  A value
therefore depends only on ``(seed, k, l)`` and never on the order of requests.

Conjugate symmetry is imposed on lookup: ``k`` is mapped to its representative
in ``I u {0}`` (``I`` is the lexicographically positive half of Z^d \\ {0}) and
the value is conjugated when the representative is ``-k``.
"""

from __future__ import annotations

import csv
import functools
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from ._accel import corner_accumulate
from .partitions import (
    SUPPORT,
    SpatialCutoff,
    cell_indices,
    cell_multiplier,
    cells_covering,
    default_window,
)
from .spectral import BandError, GridSpec, RealField, fft, ifft, restrict_coefficients, smallest_grid

__all__ = [
    "SubGaussianLaw",
    "RandomCoefficients",
    "SignForm",
    "TruncationResult",
    "TruncationError",
    "RandomizationPlan",
    "sample_coefficients",
    "microlocal_randomize",
    "wiener_randomize",
    "to_sign_form",
    "truncate_high",
    "band_members",
    "in_band",
    "grid_kmax",
    "band_bounds",
    "lex_positive",
    "inverse_gradient",
]

TILE = 8
_DOMAIN_COEFF = 0x5EED
_DOMAIN_SIGN = 0x516E


# ---------------------------------------------------------------------------
# Laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubGaussianLaw:
    """Symmetric unit-variance law: ``rademacher``, ``gaussian`` or ``uniform``."""

    name: str = "rademacher"

    _NAMES = ("rademacher", "gaussian", "uniform")

    def __post_init__(self) -> None:
        name = str(self.name).lower()
        aliases = {"normal": "gaussian", "sign": "rademacher", "rad": "rademacher"}
        name = aliases.get(name, name)
        if name not in self._NAMES:
            raise ValueError(f"unknown law {self.name!r}; expected one of {self._NAMES}")
        object.__setattr__(self, "name", name)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.name == "rademacher":
            return np.where(rng.random(size) < 0.5, -1.0, 1.0)
        if self.name == "gaussian":
            return rng.standard_normal(size)
        return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size)

    def moment(self, p: float) -> float:
        """Exact E|X|^p."""
        if self.name == "rademacher":
            return 1.0
        if self.name == "gaussian":
            return 2 ** (p / 2) * math.gamma((p + 1) / 2) / math.sqrt(math.pi)
        return math.sqrt(3.0) ** p / (p + 1)


def _law(law: SubGaussianLaw | str) -> SubGaussianLaw:
    return law if isinstance(law, SubGaussianLaw) else SubGaussianLaw(law)


# ---------------------------------------------------------------------------
# Index set helpers
# ---------------------------------------------------------------------------


def lex_positive(k: np.ndarray) -> np.ndarray:
    """True where the first non-zero coordinate of k is positive (rows of (P, d))."""
    k = np.atleast_2d(k)
    out = np.zeros(len(k), dtype=bool)
    decided = np.zeros(len(k), dtype=bool)
    for i in range(k.shape[1]):
        c = k[:, i]
        newly = ~decided & (c != 0)
        out[newly] = c[newly] > 0
        decided |= newly
    return out


def band_bounds(N: int) -> tuple[int, int]:
    """Smallest and largest |k|_inf in dyadic band N.

    Band 1 is {0}; band 2 is 1 <= |k|_inf <= 2 so that the unit shell is not
    dropped; band N >= 4 is N/2 < |k|_inf <= N.
    """
    if N == 1:
        return 0, 0
    if N == 2:
        return 1, 2
    return N // 2 + 1, N


def in_band(k: np.ndarray, N: int) -> np.ndarray:
    """Rows of k that belong to dyadic band N (see :func:`band_bounds`)."""
    k = np.atleast_2d(k)
    m = np.abs(k).max(axis=1)
    lo, hi = band_bounds(int(N))
    return (m >= lo) & (m <= hi)


def band_members(d: int, N: int) -> np.ndarray:
    """All integer k in dyadic band N as an (M, d) array (lexicographic order)."""
    if N == 1:
        return np.zeros((1, d), dtype=np.int64)
    rng = range(-N, N + 1)
    ks = np.array(list(itertools.product(rng, repeat=d)), dtype=np.int64)
    return ks[in_band(ks, N)]


def grid_kmax(grid: GridSpec) -> int:
    """Largest |k|_inf whose frequency window lies inside the grid's frequency box.

    Cells beyond it would touch the unpaired Nyquist planes and break the
    conjugate symmetry of the randomised spectrum.
    """
    return int(math.floor(grid.nyquist - SUPPORT + 1e-9))


def _zigzag(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.int64)
    return np.where(a >= 0, 2 * a, -2 * a - 1)


# ---------------------------------------------------------------------------
# Coefficients
# ---------------------------------------------------------------------------


@dataclass
class RandomCoefficients:
    """Lazily materialised family X_{k,l} plus independent signs eps_k.

    ``complex_valued=True`` draws X = (A + iB)/sqrt(2) for k != 0 with A, B
    independent copies of the law; X_{0,l} stays real.
    """

    seed: int
    law: SubGaussianLaw = field(default_factory=SubGaussianLaw)
    d: int = 2
    complex_valued: bool = False
    overrides: dict | None = None

    def __post_init__(self) -> None:
        self.seed = int(self.seed) & 0xFFFFFFFFFFFFFFFF
        self.law = _law(self.law)
        self._blocks: dict = {}

    # -- block generation ------------------------------------------------
    def _block(self, domain: int, l: tuple[int, ...], tile: tuple[int, ...]) -> np.ndarray:
        key = (domain, l, tile)
        blk = self._blocks.get(key)
        if blk is None:
            entropy = [self.seed & 0xFFFFFFFF, self.seed >> 32, domain, self.d]
            entropy += [int(z) for z in _zigzag(np.array(l))] + [int(z) for z in _zigzag(np.array(tile))]
            ss = np.random.SeedSequence(entropy)
            rng = np.random.Generator(np.random.Philox(ss))
            if domain == _DOMAIN_SIGN:
                blk = np.where(rng.random((TILE,) * self.d) < 0.5, -1.0, 1.0)
            else:
                blk = self.law.sample(rng, (2,) + (TILE,) * self.d)
            if len(self._blocks) > 200_000:
                self._blocks.clear()
            self._blocks[key] = blk
        return blk

    def _raw(self, domain: int, k: np.ndarray, l: np.ndarray) -> np.ndarray:
        """Raw draws for canonical k (no symmetry), shape (P,) or (2, P)."""
        tiles = np.floor_divide(k, TILE)
        local = k - tiles * TILE
        P = len(k)
        out = np.empty((P,) if domain == _DOMAIN_SIGN else (2, P))
        keys = np.concatenate([l, tiles], axis=1)
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        inv = inv.ravel()
        for u, row in enumerate(uniq):
            sel = np.nonzero(inv == u)[0]
            blk = self._block(domain, tuple(int(c) for c in row[: self.d]), tuple(int(c) for c in row[self.d:]))
            idx = tuple(local[sel, i] for i in range(self.d))
            if domain == _DOMAIN_SIGN:
                out[sel] = blk[idx]
            else:
                out[:, sel] = blk[(slice(None),) + idx]
        return out

    def values(self, k: np.ndarray | Sequence, l: np.ndarray | Sequence) -> np.ndarray:
        """X_{k,l} for rows of k and l (broadcast to a common length)."""
        k = np.atleast_2d(np.asarray(k, dtype=np.int64))
        l = np.atleast_2d(np.asarray(l, dtype=np.int64))
        k, l = np.broadcast_arrays(k, l)
        if k.shape[1] != self.d:
            raise ValueError(f"expected {self.d}-dimensional indices")
        zero = ~np.any(k != 0, axis=1)
        flip = ~zero & ~lex_positive(k)
        kc = np.where(flip[:, None], -k, k)
        raw = self._raw(_DOMAIN_COEFF, kc, l)
        if self.complex_valued:
            vals = (raw[0] + 1j * raw[1]) / math.sqrt(2.0)
            vals = np.where(zero, raw[0] + 0j, vals)
            vals = np.where(flip, np.conj(vals), vals)
        else:
            vals = raw[0]
        if self.overrides:
            vals = np.array(vals)
            for j in range(len(k)):
                key = (tuple(int(c) for c in k[j]), tuple(int(c) for c in l[j]))
                if key in self.overrides:
                    vals[j] = self.overrides[key]
        return vals

    def value(self, k: Sequence[int], l: Sequence[int]) -> complex | float:
        return self.values([k], [l])[0]

    def signs(self, k: np.ndarray | Sequence) -> np.ndarray:
        """Independent random signs eps_k with eps_{-k} = eps_k."""
        k = np.atleast_2d(np.asarray(k, dtype=np.int64))
        zero = ~np.any(k != 0, axis=1)
        flip = ~zero & ~lex_positive(k)
        kc = np.where(flip[:, None], -k, k)
        return self._raw(_DOMAIN_SIGN, kc, np.zeros_like(kc))

    def table(self, kmin: Sequence[int], kmax: Sequence[int], l: Sequence[int]) -> np.ndarray:
        """Dense array of X_{k,l} over the box kmin <= k <= kmax for fixed l."""
        axes = [np.arange(a, b + 1) for a, b in zip(kmin, kmax)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.d)
        vals = self.values(grid, np.asarray(l, dtype=np.int64)[None, :])
        return vals.reshape(tuple(len(a) for a in axes))

    def dump_csv(self, path: str | Path, ks: Iterable[Sequence[int]], ls: Iterable[Sequence[int]]) -> None:
        """Write rows (k_1..k_d, l_1..l_d, re, im) for every pair in ks x ls."""
        ks = np.atleast_2d(np.asarray(list(ks), dtype=np.int64))
        ls = np.atleast_2d(np.asarray(list(ls), dtype=np.int64))
        pairs_k = np.repeat(ks, len(ls), axis=0)
        pairs_l = np.tile(ls, (len(ks), 1))
        vals = np.asarray(self.values(pairs_k, pairs_l), dtype=complex)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"k{i + 1}" for i in range(self.d)] + [f"l{i + 1}" for i in range(self.d)] + ["re", "im"])
            for kk, ll, v in zip(pairs_k, pairs_l, vals):
                w.writerow([*map(int, kk), *map(int, ll), repr(float(v.real)), repr(float(v.imag))])


def sample_coefficients(law: SubGaussianLaw | str, seed: int, d: int, complex_valued: bool = False) -> RandomCoefficients:
    """Coefficient family for dimension d; values are generated on demand."""
    return RandomCoefficients(seed=seed, law=_law(law), d=d, complex_valued=complex_valued)


class UnitCoefficients(RandomCoefficients):
    """All X_{k,l} = 1 and all signs = 1 (deterministic reference)."""

    def __init__(self, d: int):
        super().__init__(seed=0, law=SubGaussianLaw("rademacher"), d=d)

    def values(self, k, l):
        k = np.atleast_2d(np.asarray(k))
        l = np.atleast_2d(np.asarray(l))
        return np.ones(max(len(k), len(l)))

    def signs(self, k):
        return np.ones(len(np.atleast_2d(k)))


# ---------------------------------------------------------------------------
# Randomisation plans
# ---------------------------------------------------------------------------

BandSpec = int | Callable[[np.ndarray], np.ndarray] | None


def _band_mask(band: BandSpec, k: np.ndarray) -> np.ndarray:
    if band is None:
        return np.ones(len(k), dtype=bool)
    if callable(band):
        return np.asarray(band(k), dtype=bool)
    return in_band(k, int(band))


class RandomizationPlan:
    """Precomputed spectra of the pieces phi_l f, reusable across seeds.

    ``cells`` defaults to every unit cell whose window meets the support of f
    above a relative threshold ``tol``.
    """

    def __init__(self, f: RealField, cells: Sequence[Sequence[int]] | None = None, tol: float = 1e-14):
        self.field = f
        self.grid = f.grid
        g = self.grid
        if cells is None:
            cells = cells_covering(g, f.values, tol)
        self.cells = [tuple(int(c) for c in l) for l in cells]
        self.hats = {l: fft(g, f.values * SpatialCutoff(1, l).on_grid(g)) for l in self.cells}
        self._cropped: dict = {}
        self._stack_cache: dict = {}

    # lattice geometry for the 2^d overlapping windows
    @staticmethod
    @functools.lru_cache(maxsize=32)
    def _corner_geometry(grid: GridSpec):
        xi = grid.freq_axis()
        base = np.floor(xi).astype(np.int64)
        w0 = default_window.profile(xi - base)
        w1 = default_window.profile(xi - base - 1)
        return base, w0, w1

    def hats_on(self, grid: GridSpec) -> dict:
        if grid == self.grid:
            return self.hats
        if grid not in self._cropped:
            self._cropped[grid] = {l: restrict_coefficients(h, self.grid, grid) for l, h in self.hats.items()}
        return self._cropped[grid]

    def _tables(self, grid: GridSpec, coeffs: RandomCoefficients, ls: Sequence[tuple[int, ...]],
                band: BandSpec, signs: bool):
        base, _, _ = self._corner_geometry(grid)
        d = grid.d
        kmin = int(base.min())
        K = int(base.max()) + 2 - kmin
        axes = [np.arange(kmin, kmin + K)] * d
        kgrid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        cap = grid_kmax(grid)
        active = np.nonzero(_band_mask(band, kgrid) & (np.abs(kgrid).max(axis=1) <= cap))[0]
        ka = kgrid[active]
        dtype = complex
        tables = np.zeros((len(ls), K**d), dtype=dtype)
        eps = coeffs.signs(ka) if (signs and len(ka)) else None
        for j, l in enumerate(ls):
            if not len(ka):
                break
            vals = coeffs.values(ka, np.asarray(l, dtype=np.int64)[None, :])
            if eps is not None:
                vals = vals * eps
            tables[j, active] = vals
        return tables, kmin, K

    @staticmethod
    def active_points(grid: GridSpec, band: BandSpec) -> np.ndarray:
        """Flat indices of lattice points where a window of the band can be non-zero."""
        if not isinstance(band, (int, np.integer)):
            return np.arange(grid.n**grid.d)
        N = int(band)
        xi = grid.freq_axis()
        sup = np.zeros(grid.shape)
        for i in range(grid.d):
            s = [1] * grid.d
            s[i] = grid.n
            sup = np.maximum(sup, np.abs(xi).reshape(s))
        lo = band_bounds(N)[0] - SUPPORT if N > 1 else -1.0
        return np.flatnonzero((sup < N + SUPPORT) & (sup > lo))

    def _stacked(self, grid: GridSpec, band: BandSpec):
        key = (grid, band if isinstance(band, (int, np.integer)) else None)
        hit = self._stack_cache.get(key)
        if hit is None:
            pts = self.active_points(grid, key[1])
            hats = self.hats_on(grid)
            ls = list(hats)
            H = np.empty((len(ls), len(pts)), dtype=complex)
            for j, l in enumerate(ls):
                H[j] = hats[l].ravel()[pts]
            hit = (ls, pts, H)
            self._stack_cache = {key: hit}
        return hit

    def multiplier(self, grid: GridSpec, coeffs: RandomCoefficients, l: Sequence[int], band: BandSpec = None,
                   signs: bool = False) -> np.ndarray:
        """sum_k X_{k,l} phi(xi - k) on the lattice, restricted to the band.

        With ``signs=True`` each X_{k,l} is multiplied by eps_k (that is, Y_{k,l}).
        """
        base, w0, w1 = self._corner_geometry(grid)
        tables, kmin, K = self._tables(grid, coeffs, [tuple(l)], band, signs)
        pts = np.arange(grid.n**grid.d)
        ones = np.ones((1, len(pts)), dtype=complex)
        out = corner_accumulate(ones, pts, base, np.stack([w0, w1]), tables, kmin, K, grid.d, grid.n)
        return out.reshape(grid.shape)

    def spectrum(self, coeffs: RandomCoefficients, band: BandSpec = None, grid: GridSpec | None = None,
                 wiener: bool = False, signs: bool = False) -> np.ndarray:
        """Spectrum of the randomised field (microlocal, or Wiener with l = 0)."""
        grid = grid or self.grid
        base, w0, w1 = self._corner_geometry(grid)
        if wiener:
            F = fft(self.grid, self.field.values)
            if grid != self.grid:
                F = restrict_coefficients(F, self.grid, grid)
            ls = [(0,) * grid.d]
            pts = self.active_points(grid, band)
            H = F.ravel()[pts][None, :]
        else:
            ls, pts, H = self._stacked(grid, band)
            if not ls:
                return np.zeros(grid.shape, dtype=complex)
        tables, kmin, K = self._tables(grid, coeffs, ls, band, signs)
        vals = corner_accumulate(H, pts, base, np.stack([w0, w1]), tables, kmin, K, grid.d, grid.n)
        out = np.zeros(grid.n**grid.d, dtype=complex)
        out[pts] = vals
        return out.reshape(grid.shape)

    def band_grid(self, N: int) -> GridSpec:
        """Smallest grid with the plan's L that resolves band N."""
        g = smallest_grid(self.grid, N + SUPPORT + 1e-9)
        return g if g.n <= self.grid.n else self.grid


def _check_resolved(f: RealField, band: BandSpec) -> None:
    g = f.grid
    if isinstance(band, int) and band >= 1:
        g.require_band(band + SUPPORT, f"band N={band}")


def microlocal_randomize(f: RealField, coeffs: RandomCoefficients, band: BandSpec = None,
                         plan: RandomizationPlan | None = None) -> RealField:
    """f^omega = sum_{k,l} X_{k,l} P_k(phi_l f), optionally restricted to a band."""
    _check_resolved(f, band)
    plan = plan or RandomizationPlan(f)
    vals = ifft(f.grid, plan.spectrum(coeffs, band))
    return _as_field(f.grid, vals, f.real)


def wiener_randomize(f: RealField, coeffs: RandomCoefficients, band: BandSpec = None) -> RealField:
    """f^W = sum_k X_{k,0} P_k f."""
    _check_resolved(f, band)
    g = f.grid
    plan = RandomizationPlan.__new__(RandomizationPlan)
    plan.field, plan.grid, plan.cells, plan.hats, plan._cropped, plan._stack_cache = f, g, [], {}, {}, {}
    vals = ifft(g, plan.spectrum(coeffs, band, wiener=True))
    return _as_field(g, vals, f.real)


def _as_field(grid: GridSpec, vals: np.ndarray, want_real: bool) -> RealField:
    peak = float(np.abs(vals).max()) if vals.size else 0.0
    if want_real and float(np.abs(vals.imag).max()) <= 1e-10 * max(peak, 1e-300):
        return RealField(grid, vals.real, True)
    return RealField(grid, vals, False)


# ---------------------------------------------------------------------------
# Sign form
# ---------------------------------------------------------------------------


def inverse_gradient(F: np.ndarray, grid: GridSpec, tol: float = 1e-12) -> np.ndarray:
    """Apply |xi|^{-1} to coefficients; the zero mode must vanish below ``tol``."""
    r = grid.abs_freq()
    z = r == 0
    if np.any(np.abs(F[z]) > tol):
        raise ValueError("|grad|^{-1} applied to data with a non-zero mean (zero mode exceeds 1e-12)")
    out = np.zeros_like(F, dtype=complex)
    out[~z] = F[~z] / r[~z]
    return out


@dataclass
class CellComponent:
    """Spectral patch of one frequency cell k over its window box."""

    k: tuple[int, ...]
    index: tuple[np.ndarray, ...]
    f0: np.ndarray
    f1: np.ndarray
    plus: np.ndarray
    minus: np.ndarray
    sign: float

    @property
    def norm_k(self) -> float:
        return max(abs(c) for c in self.k)


@dataclass
class SignForm:
    """Signs eps_k and cell components f_k, f_k^+ and f_k^- on the lattice.

    Patches store eps-free components (built from Y_{k,l} = eps_k X_{k,l}), so
    that f^omega = sum_k eps_k f_k.  ``zero_velocity`` is the xi = 0
    coefficient of f_1, evolved by the limit t of sin(t|xi|)/|xi|.
    """

    grid: GridSpec
    components: dict
    zero_velocity: complex = 0.0

    def ks(self) -> list[tuple[int, ...]]:
        return sorted(self.components)

    def band(self, N: int) -> list[CellComponent]:
        lo, hi = band_bounds(N)
        return [c for k, c in self.components.items() if lo <= max(abs(x) for x in k) <= hi]

    def scatter(self, comps: Iterable[CellComponent], which: str, phase: Callable | None = None,
                grid: GridSpec | None = None, with_signs: bool = True) -> np.ndarray:
        """Assemble sum_k eps_k (component) into a full coefficient array."""
        grid = grid or self.grid
        out = np.zeros(grid.shape, dtype=complex)
        for c in comps:
            patch = getattr(c, which)
            if with_signs:
                patch = c.sign * patch
            idx = np.ix_(*c.index)
            if grid != self.grid:
                idx = np.ix_(*[np.mod(_signed(ix, self.grid.n), grid.n) for ix in c.index])
            out[idx] += patch
        return out

    def cell_field(self, k: Sequence[int], which: str = "f0") -> np.ndarray:
        """Complex samples of one (eps-free) component on the grid."""
        c = self.components[tuple(k)]
        return ifft(self.grid, self.scatter([c], which, with_signs=False))

    def data(self) -> tuple[np.ndarray, np.ndarray]:
        """Reassembled (f0^omega, f1^omega) samples."""
        comps = list(self.components.values())
        F0 = self.scatter(comps, "f0")
        F1 = self.scatter(comps, "f1")
        return ifft(self.grid, F0), ifft(self.grid, F1)


def _signed(ix: np.ndarray, n: int) -> np.ndarray:
    return np.where(ix >= n // 2, ix - n, ix)


def tensor_apply(table: np.ndarray, mats: Sequence[np.ndarray]) -> np.ndarray:
    """Contract axis i of ``table`` with ``mats[i]`` of shape (K_i, n_i)."""
    out = table
    for m in mats:
        out = np.tensordot(out, m, axes=([0], [0]))
    return out


class _CellField:
    """Physical-space coefficient fields a_k(x) = sum_l X_{k,l} phi_l(x).

    The sum is a tensor contraction of the coefficient box with the per-axis
    window matrices w(x_i - l_i).
    """

    def __init__(self, grid: GridSpec, cells: Sequence[tuple[int, ...]]):
        self.grid = grid
        x = grid.axis()
        lo = int(np.floor(x.min())) - 1
        hi = int(np.floor(x.max())) + 2
        self.lrange = np.arange(lo, hi + 1)
        self.mat = default_window.profile(x[None, :] - self.lrange[:, None])
        d = grid.d
        K = len(self.lrange)
        self.shape = (K,) * d
        idx = np.array(cells, dtype=np.int64).reshape(-1, d) - lo
        self.cells = np.array(cells, dtype=np.int64).reshape(-1, d)
        self.flat = np.ravel_multi_index(tuple(idx.T), self.shape) if len(idx) else np.zeros(0, dtype=np.int64)

    def coefficient_rows(self, coeffs: RandomCoefficients, ks: np.ndarray) -> np.ndarray:
        """X_{k,l} for every k in ks and every cell l, shape (len(ks), #cells)."""
        la = self.cells
        if not len(la) or not len(ks):
            return np.zeros((len(ks), len(la)), dtype=complex)
        kk = np.repeat(ks, len(la), axis=0)
        ll = np.tile(la, (len(ks), 1))
        return np.asarray(coeffs.values(kk, ll)).reshape(len(ks), len(la))

    def __call__(self, row: np.ndarray) -> np.ndarray:
        table = np.zeros(int(np.prod(self.shape)), dtype=row.dtype)
        table[self.flat] = row
        return tensor_apply(table.reshape(self.shape), [self.mat] * self.grid.d)


def to_sign_form(f0: RealField, f1: RealField | None, coeffs: RandomCoefficients,
                 cells: Sequence[Sequence[int]] | None = None, band: BandSpec = None) -> SignForm:
    """Rewrite the microlocal randomisation of (f0, f1) as sum_k eps_k f_k.

    The deterministic data and the coefficient family are passed in; the
    randomised fields are reassembled from the returned components.  Half-wave
    components use f^{+-} = (f_0 -+ i |grad|^{-1} f_1)/2, the split for which
    e^{it|grad|} f^+ + e^{-it|grad|} f^- = cos(t|grad|) f_0 + sin(t|grad|)/|grad| f_1.
    """
    g = f0.grid
    if f1 is None:
        f1 = RealField.zeros(g)
    if cells is None:
        cells = sorted(set(cells_covering(g, f0.values, 1e-14)) | set(cells_covering(g, f1.values, 1e-14)))
    cells = [tuple(int(c) for c in l) for l in cells]
    has_f1 = bool(np.any(f1.values != 0))
    a_of = _CellField(g, cells)
    r = g.abs_freq()
    kmax = grid_kmax(g)
    rng = range(-kmax, kmax + 1)
    ks = np.array(list(itertools.product(rng, repeat=g.d)), dtype=np.int64)
    ks = ks[_band_mask(band, ks)]
    eps = coeffs.signs(ks) if len(ks) else np.zeros(0)
    rows = a_of.coefficient_rows(coeffs, ks)
    comps: dict = {}
    zero_velocity = 0.0 + 0.0j
    for j, k in enumerate(ks):
        kt = tuple(int(c) for c in k)
        a = a_of(rows[j])
        if not np.any(a):
            continue
        ix = np.ix_(*cell_indices(g, kt))
        win = cell_multiplier(g, kt)[ix]
        e = float(eps[j])
        # eps-free components: f_k = P_k(sum_l Y_{k,l} phi_l f) = eps_k P_k(a_k f)
        P0 = e * win * fft(g, a * f0.values)[ix]
        P1 = e * win * fft(g, a * f1.values)[ix] if has_f1 else np.zeros_like(P0)
        rr = r[ix]
        inv = np.zeros_like(P1)
        nz = rr > 0
        inv[nz] = P1[nz] / rr[nz]
        if np.any(~nz):
            zero_velocity += e * complex(P1[~nz].sum())
        plus = 0.5 * (P0 - 1j * inv)
        minus = 0.5 * (P0 + 1j * inv)
        comps[kt] = CellComponent(kt, cell_indices(g, kt), P0, P1, plus, minus, e)
    return SignForm(g, comps, zero_velocity)


# ---------------------------------------------------------------------------
# High-frequency truncation
# ---------------------------------------------------------------------------


class TruncationError(RuntimeError):
    """No admissible N_hi was found inside the search limit."""

    def __init__(self, message: str, violated: list[str]):
        super().__init__(message)
        self.violated = violated


@dataclass
class TruncationResult:
    N_hi: int
    eta: float
    tail: float
    z_norm: float
    wp_norm: float
    strichartz: float
    history: list = field(default_factory=list)

    def quantities(self) -> dict:
        return {"tail": self.tail, "z_norm": self.z_norm, "wp_norm": self.wp_norm, "strichartz": self.strichartz}

    def ok(self) -> bool:
        return all(v <= self.eta for v in self.quantities().values())


def tail_norm(sf: SignForm, N: int, s: float) -> float:
    """||(P_{>=N/4} f0, P_{>=N/4} f1)||_{H^s x H^{s-1}} over the cells with |k|_inf >= N/4."""
    g = sf.grid
    comps = [c for c in sf.components.values() if c.norm_k >= N / 4]
    if not comps:
        return 0.0
    F0 = sf.scatter(comps, "f0")
    F1 = sf.scatter(comps, "f1")
    w = 1.0 + g.abs_freq() ** 2
    tot = np.sum(np.abs(F0) ** 2 * w**s) + np.sum(np.abs(F1) ** 2 * w ** (s - 1))
    return float(np.sqrt(tot * g.dxi**g.d))


def truncate_high(sf: SignForm, eta: float, *, s: float, delta: float = 0.1, theta: float = 1 / 6,
                  bands: Sequence[int], t_max: float, n_times: int = 17, C_d: float = 1.0,
                  search_limit: int | None = None, wp_kwargs: dict | None = None) -> TruncationResult:
    """Smallest dyadic N >= 1/eta at which the four smallness quantities are <= eta.

    Every quantity is evaluated over the finite band list ``bands`` and the time
    horizon ``[0, t_max]``; the Strichartz term is the L^3_t L^6_x norm of the
    high-frequency free wave sum over bands >= N.
    """
    from .propagate import band_free_wave, z_norm_sign_form
    from .spectral import time_norm
    from .wavepackets import wp_norm

    if not (0 < eta <= 1):
        raise ValueError("eta must lie in (0, 1]")
    bands = sorted(int(b) for b in bands)
    N = 1
    while N < 1.0 / eta - 1e-12:
        N *= 2
    limit = search_limit if search_limit is not None else 2 * max(bands + [N])
    history = []
    times = np.linspace(0.0, t_max, n_times)
    last_bad: list[str] = []
    while N <= limit:
        hi_bands = [b for b in bands if b >= N]
        tail = tail_norm(sf, N, s)
        z = z_norm_sign_form(sf, hi_bands, theta=theta, delta=delta, s=s, t_max=t_max, n_times=n_times)
        wp = wp_norm(sf, hi_bands, delta=delta, theta=theta, C_d=C_d, **(wp_kwargs or {})) if hi_bands else 0.0
        if hi_bands:
            g = sf.grid
            per_t = []
            for t in times:
                u = sum(band_free_wave(sf, b, t) for b in hi_bands)
                per_t.append(float((np.sum(np.abs(u) ** 6) * g.cell_volume) ** (1 / 6)))
            stz = time_norm(times, np.array(per_t), 3.0)
        else:
            stz = 0.0
        q = {"tail": tail, "z_norm": z, "wp_norm": wp, "strichartz": stz}
        history.append((N, q))
        bad = [name for name, v in q.items() if v > eta]
        if not bad:
            return TruncationResult(N, eta, tail, z, wp, stz, history)
        last_bad = bad
        N *= 2
    raise TruncationError(
        f"no N_hi <= {limit} satisfies all conditions; violated: {', '.join(last_bad)}", last_bad
    )
