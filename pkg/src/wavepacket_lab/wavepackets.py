"""Wave packets, tubes, amplitude bins, bushes and the cone geometry.

A packet f_{k,l;t0} = P~_k(phi_l exp(+-i t0 |grad|) f_k) is stored as a spectral
patch over the box k + [-21/8, 21/8]^d where the fattened window lives.  Its
free evolution from time t0 concentrates on the tube

    T = {(t, x): t in [t0, t0 + N], |x - (l -+ (t - t0) k/|k|)|_2 <= 1}.

Incidence between tubes and space-time cubes is decided by the exact minimum of
the centre-to-box distance (see :mod:`wavepacket_lab._accel`).
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._accel import tube_box_min_dist2
from .partitions import SUPPORT, cell_indices, default_window, fattened_cell_multiplier
from .randomize import SignForm, band_bounds, sample_coefficients
from .spectral import GridSpec, RealField, fft, ifft

__all__ = [
    "Tube",
    "WavePacket",
    "AmplitudeBin",
    "ConeRegion",
    "CubeCover",
    "Bush",
    "BushPartition",
    "decompose",
    "decompose_band",
    "band_of",
    "bin_amplitudes",
    "cover_cubes",
    "tube_incidence",
    "greedy_bushes",
    "packet_count_constant",
    "sqrt_cancellation_stat",
    "SqrtCancellationStats",
    "wp_norm",
    "WPNormReport",
    "cover_cone",
    "off_tube_amplitude",
    "almost_orthogonality_constant",
    "write_partition_csv",
]

FAT_RADIUS = 2 + SUPPORT
TUBE_RADIUS = 1.0


def band_of(k: Sequence[int]) -> int:
    """Dyadic band containing k."""
    m = max((abs(int(c)) for c in k), default=0)
    N = 1
    while band_bounds(N)[1] < m:
        N *= 2
    return N


def _sign(sign) -> int:
    if sign in (1, "+"):
        return 1
    if sign in (-1, "-"):
        return -1
    raise ValueError(f"sign must be +1 or -1, got {sign!r}")


# ---------------------------------------------------------------------------
# Tubes and packets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Tube:
    k: tuple[int, ...]
    l: tuple[int, ...]
    sign: int
    t0: float
    N: int

    @property
    def velocity(self) -> np.ndarray:
        """-+ k/|k|_2 (zero for k = 0)."""
        k = np.asarray(self.k, dtype=float)
        nk = float(np.linalg.norm(k))
        if nk == 0:
            return np.zeros_like(k)
        return -self.sign * k / nk

    @property
    def tube(self) -> "Tube":
        return self

    @property
    def t_end(self) -> float:
        return self.t0 + self.N

    def center(self, t: float | np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.asarray(self.l, dtype=float) + np.multiply.outer(t - self.t0, self.velocity)

    def contains(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Membership of space-time points; x has shape (..., d)."""
        t = np.asarray(t, dtype=float)
        c = self.center(t)
        inside_t = (t >= self.t0) & (t <= self.t_end)
        return inside_t & (np.linalg.norm(np.asarray(x) - c, axis=-1) <= TUBE_RADIUS)


@dataclass
class WavePacket:
    k: tuple[int, ...]
    l: tuple[int, ...]
    sign: int
    t0: float
    N: int
    grid: GridSpec
    index: tuple[np.ndarray, ...]
    coeffs: np.ndarray
    norm: float = field(init=False)

    def __post_init__(self) -> None:
        self.norm = float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2) * self.grid.dxi**self.grid.d))

    @property
    def tube(self) -> Tube:
        return Tube(self.k, self.l, self.sign, self.t0, self.N)

    def spectrum(self, phase_t: float | None = None) -> np.ndarray:
        """Full coefficient array, optionally evolved to absolute time ``phase_t``."""
        out = np.zeros(self.grid.shape, dtype=complex)
        ix = np.ix_(*self.index)
        patch = self.coeffs
        if phase_t is not None and phase_t != self.t0:
            patch = patch * np.exp(self.sign * 1j * (phase_t - self.t0) * self.grid.abs_freq()[ix])
        out[ix] += patch
        return out

    def evolve(self, t: float) -> np.ndarray:
        """Samples of exp(+-i(t - t0)|grad|) f_{k,l;t0}."""
        return ifft(self.grid, self.spectrum(t))


def _fat_patch(grid: GridSpec, k: tuple[int, ...]):
    idx = cell_indices(grid, k, FAT_RADIUS)
    ix = np.ix_(*idx)
    return idx, ix, fattened_cell_multiplier(grid, k)[ix]


def _active_cells(grid: GridSpec, u: np.ndarray, tol: float) -> list[tuple[int, ...]]:
    """Cells whose window support meets {|u| > tol max|u|}."""
    a = np.abs(u)
    peak = float(a.max()) if a.size else 0.0
    if peak == 0.0:
        return []
    pts = np.argwhere(a > tol * peak)
    x = grid.axis()[pts]
    base = np.floor(x).astype(np.int64)
    found = []
    for bits in itertools.product((0, 1), repeat=grid.d):
        l = base + np.array(bits)
        ok = np.all(np.abs(x - l) < SUPPORT, axis=1)
        found.append(l[ok])
    cells = np.unique(np.concatenate(found), axis=0)
    return [tuple(int(c) for c in row) for row in cells]


class _PatchTransform:
    """Spectral patch of phi_l u computed from the window's spatial support only.

    On the lattice fft(u)(xi) = (h / sqrt(2 pi))^d sum_x u(x) exp(-i x.xi), so a
    patch over a few frequencies is a small tensor contraction.
    """

    def __init__(self, grid: GridSpec, idx: tuple[np.ndarray, ...]):
        self.grid = grid
        n = grid.n
        self.xi = [np.where(ix >= n // 2, ix - n, ix) * grid.dxi for ix in idx]
        self.x = grid.axis()
        self.c = grid.h / math.sqrt(2 * math.pi)

    def __call__(self, u: np.ndarray, l: tuple[int, ...]) -> np.ndarray:
        g = self.grid
        sel, mats = [], []
        for i, li in enumerate(l):
            m = np.nonzero(np.abs(self.x - li) < SUPPORT)[0]
            xs = self.x[m]
            w = default_window.profile(xs - li)
            sel.append(m)
            mats.append((self.c * w)[None, :] * np.exp(-1j * np.outer(self.xi[i], xs)))
        block = u[np.ix_(*sel)]
        for E in mats:
            block = np.tensordot(block, E, axes=([0], [1]))
        return block


def decompose(f_k: RealField | np.ndarray, k: Sequence[int], t0: float = 0.0, sign=1,
              grid: GridSpec | None = None, cells: Iterable[Sequence[int]] | None = None,
              tol: float = 1e-15) -> list[WavePacket]:
    """Spatial packets of exp(+-i t0 |grad|) f_k over the unit cells l.

    ``f_k`` is either a field or its full coefficient array (then ``grid`` is
    required).  Its spectrum must lie in k + [-1, 1]^d.  Cells whose window
    only sees values below ``tol`` times the peak are skipped.
    """
    k = tuple(int(c) for c in k)
    sg = _sign(sign)
    if isinstance(f_k, RealField):
        grid = f_k.grid
        F = fft(grid, f_k.values)
    else:
        if grid is None:
            raise ValueError("grid is required when passing coefficients")
        F = np.asarray(f_k)
    grid.require_band(max(abs(c) for c in k) + FAT_RADIUS, f"packet window at k={k}")
    N = band_of(k)
    if t0 != 0:
        F = F * np.exp(sg * 1j * t0 * grid.abs_freq())
    u = ifft(grid, F)
    if cells is None:
        cells = _active_cells(grid, u, tol)
    idx, ix, mult = _fat_patch(grid, k)
    patch_of = _PatchTransform(grid, idx)
    out = []
    for l in cells:
        l = tuple(int(c) for c in l)
        out.append(WavePacket(k, l, sg, float(t0), N, grid, idx, mult * patch_of(u, l)))
    return out


def decompose_band(sf: SignForm, N: int, t0: float = 0.0, sign=1, tol: float = 1e-15) -> list[WavePacket]:
    """Packets f^{+-}_{k,l;t0} for every component of band N in the sign form (signs excluded)."""
    g = sf.grid
    sg = _sign(sign)
    out = []
    for c in sf.band(N):
        F = np.zeros(g.shape, dtype=complex)
        F[np.ix_(*c.index)] = c.plus if sg == 1 else c.minus
        out.extend(decompose(F, c.k, t0, sg, grid=g, tol=tol))
    return out


def off_tube_amplitude(packet: WavePacket, times: Sequence[float], distance: float = 8.0) -> float:
    """max |exp(+-i(t - t0)|grad|) f_{k,l;t0}(x)| over points at distance >= ``distance`` from the tube.

    Times are absolute; distance is measured from the tube's cross-section at
    time t (the ball of radius 1 around its centre).
    """
    g = packet.grid
    X = g.coords()
    worst = 0.0
    for t in times:
        u = packet.evolve(t)
        c = packet.tube.center(t)
        r = np.sqrt(sum((X[i] - c[i]) ** 2 for i in range(g.d)))
        m = (r - TUBE_RADIUS) >= distance
        if np.any(m):
            worst = max(worst, float(np.abs(u[m]).max()))
    return worst


def almost_orthogonality_constant(packets: Sequence[WavePacket], total_norm: float) -> float:
    """sum_l |f_{k,l}|_2^2 / |f_k|_2^2."""
    if total_norm <= 0:
        return 0.0
    return sum(p.norm**2 for p in packets) / total_norm**2


# ---------------------------------------------------------------------------
# Amplitude bins
# ---------------------------------------------------------------------------


def dyadic_exponent(x: float) -> int:
    """m with 2^m <= x < 2^(m+1)."""
    if not x > 0:
        raise ValueError("dyadic exponent of a non-positive number")
    mant, e = math.frexp(x)
    return e - 1


@dataclass
class AmplitudeBin:
    m: int
    members: list
    N: int
    t0: float
    x0: tuple[int, ...]
    sign: int

    @property
    def mu(self) -> float:
        return len(self.members) / math.sqrt(self.N)

    @property
    def tubes(self) -> list[Tube]:
        return [p.tube for p in self.members]


def bin_amplitudes(packets: Sequence[WavePacket], x0: Sequence[int], N: int,
                   zero_tol: float = 0.0) -> list[AmplitudeBin]:
    """Group packets with |l - x0|_inf <= 3N by m, where |f_{k,l;t0}|_2 in [2^m, 2^{m+1})."""
    x0 = tuple(int(c) for c in x0)
    bins: dict = {}
    t0 = packets[0].t0 if packets else 0.0
    sign = packets[0].sign if packets else 1
    for p in packets:
        if p.norm <= zero_tol:
            continue
        if max(abs(a - b) for a, b in zip(p.l, x0)) > 3 * N:
            continue
        m = dyadic_exponent(p.norm)
        bins.setdefault(m, []).append(p)
    return [AmplitudeBin(m, bins[m], N, t0, x0, sign) for m in sorted(bins)]


def packet_count_constant(packets: Sequence[WavePacket], N: int, total_l2_sq: float) -> float:
    """sum_{x0 in N Z^d} sum_m 2^{2m} #A_m divided by sum_k |f_k|_2^2.

    Each packet contributes 2^{2m} once for every anchor x0 in N Z^d with
    |l - x0|_inf <= 3N.
    """
    if total_l2_sq <= 0:
        return 0.0
    acc = 0.0
    for p in packets:
        if p.norm <= 0:
            continue
        mult = 1
        for c in p.l:
            mult *= math.floor((c + 3 * N) / N) - math.ceil((c - 3 * N) / N) + 1
        acc += 4.0 ** dyadic_exponent(p.norm) * mult
    return acc / total_l2_sq


# ---------------------------------------------------------------------------
# Cones and cube covers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConeRegion:
    """Truncated l-infinity cone |x - x0|_inf <= c N - |t - t0|, t in [t0, t0 + N].

    ``kind`` is ``"truncated"`` (c = 2) or ``"fattened"`` (c = 16).
    """

    kind: str
    t0: float
    x0: tuple
    N: float

    def __post_init__(self) -> None:
        if self.kind not in ("truncated", "fattened"):
            raise ValueError("cone kind must be 'truncated' or 'fattened'")
        object.__setattr__(self, "x0", tuple(float(c) for c in self.x0))

    @property
    def c(self) -> int:
        return 2 if self.kind == "truncated" else 16

    @property
    def d(self) -> int:
        return len(self.x0)

    def radius(self, t: float | np.ndarray) -> np.ndarray:
        return self.c * self.N - np.abs(np.asarray(t, dtype=float) - self.t0)

    def contains(self, t: np.ndarray, x: np.ndarray, slack: float = 1e-9) -> np.ndarray:
        """Membership of points; x has shape (..., d)."""
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        in_t = (t >= self.t0 - slack) & (t <= self.t0 + self.N + slack)
        dist = np.abs(x - np.asarray(self.x0)).max(axis=-1)
        return in_t & (dist <= self.radius(t) + slack)

    def spatial_mask(self, grid: GridSpec, t: float) -> np.ndarray:
        """Grid points inside the cone's time slice (empty outside [t0, t0 + N])."""
        if t < self.t0 - 1e-12 or t > self.t0 + self.N + 1e-12:
            return np.zeros(grid.shape, dtype=bool)
        X = grid.coords()
        dist = np.zeros(grid.shape)
        for i in range(grid.d):
            dist = np.maximum(dist, np.abs(X[i] - self.x0[i]))
        return dist <= self.radius(t) + 1e-12

    def fattened(self) -> "ConeRegion":
        return ConeRegion("fattened", self.t0, self.x0, self.N)

    def descriptor(self) -> dict:
        return {"kind": self.kind, "t0": self.t0, "x0": list(self.x0), "N": self.N}


@dataclass
class CubeCover:
    """Disjoint half-open cubes of side ``side`` tiling the bounding box of a cone.

    Cube i = (i_t, i_1, ..., i_d) is [o + i side, o + (i + 1) side) with origin
    o = (t0, x0 - cN).  Only cubes meeting the cone belong to the cover.
    """

    cone: ConeRegion
    side: float

    @property
    def origin(self) -> np.ndarray:
        c = self.cone
        return np.array([c.t0] + [x - c.c * c.N for x in c.x0], dtype=float)

    @property
    def counts(self) -> tuple[int, ...]:
        c = self.cone
        nt = int(math.ceil(c.N / self.side - 1e-12))
        nx = int(math.ceil(2 * c.c * c.N / self.side - 1e-12))
        return (nt,) + (nx,) * c.d

    def box(self, idx: Sequence[int], scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
        """Corners of the cube, or of its concentric dilate by ``scale``."""
        lo = self.origin + np.asarray(idx, dtype=float) * self.side
        ctr = lo + 0.5 * self.side
        half = 0.5 * self.side * scale
        return ctr - half, ctr + half

    def in_cover(self, idx: Sequence[int]) -> bool:
        return bool(self.in_cover_array(np.asarray(idx, dtype=np.int64)[None, :])[0])

    def in_cover_array(self, idx: np.ndarray) -> np.ndarray:
        """Vectorised membership test for index rows of shape (P, d + 1)."""
        idx = np.asarray(idx, dtype=np.int64).reshape(-1, self.cone.d + 1)
        counts = np.array(self.counts)
        ok = np.all((idx >= 0) & (idx < counts), axis=1)
        lo = self.origin + idx * self.side
        hi = lo + self.side
        c = self.cone
        # the cube meets the cone iff its earliest time slice reaches the shrinking cube
        t = np.maximum(lo[:, 0], c.t0)
        ok &= t <= c.t0 + c.N
        x0 = np.asarray(c.x0)
        gap = np.maximum(np.maximum(lo[:, 1:] - x0, x0 - hi[:, 1:]), 0.0).max(axis=1)
        return ok & (gap <= c.radius(t) + 1e-12)

    def boxes(self, idx: np.ndarray, scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
        """Corners of many cubes (or their dilates) at once."""
        ctr = self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.side
        half = 0.5 * self.side * scale
        return ctr - half, ctr + half

    def locate(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Cube index of each point, shape (P, d + 1)."""
        pts = np.concatenate([np.atleast_1d(t)[:, None], np.atleast_2d(x)], axis=1)
        return np.floor((pts - self.origin) / self.side + 1e-12).astype(np.int64)

    def covers(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        """True for points that fall into a cube of the cover."""
        return self.in_cover_array(self.locate(t, x))

    def n_cubes(self) -> int:
        grid = np.stack(np.meshgrid(*[np.arange(n) for n in self.counts], indexing="ij"), -1)
        return int(self.in_cover_array(grid.reshape(-1, self.cone.d + 1)).sum())


def cover_cubes(cone: ConeRegion, delta: float) -> CubeCover:
    """Cover of the fattened cone by cubes of side N^delta."""
    return CubeCover(cone.fattened(), float(cone.N) ** delta)


# ---------------------------------------------------------------------------
# Incidence and the greedy bush selection
# ---------------------------------------------------------------------------


def _candidates(tube: Tube, cover: CubeCover, scale: float = 2.0) -> np.ndarray:
    """Cube rows whose dilate by ``scale`` may meet the tube (a superset of the true set)."""
    s = cover.side
    o = cover.origin
    grow = 0.5 * (scale - 1.0)
    d = len(tube.k)
    blocks = []
    it_lo = math.ceil((tube.t0 - o[0]) / s - 1 - grow - 1e-9)
    it_hi = math.floor((tube.t_end - o[0]) / s + grow + 1e-9)
    for it in range(it_lo, it_hi + 1):
        ta = max(tube.t0, o[0] + (it - grow) * s)
        tb = min(tube.t_end, o[0] + (it + 1 + grow) * s)
        if ta > tb:
            continue
        ca, cb = tube.center(ta), tube.center(tb)
        lo = np.ceil((np.minimum(ca, cb) - TUBE_RADIUS - o[1:]) / s - 1 - grow - 1e-9).astype(np.int64)
        hi = np.floor((np.maximum(ca, cb) + TUBE_RADIUS - o[1:]) / s + grow + 1e-9).astype(np.int64)
        mesh = np.meshgrid(*[np.arange(lo[i], hi[i] + 1) for i in range(d)], indexing="ij")
        sp = np.stack([m.ravel() for m in mesh], axis=1)
        blocks.append(np.concatenate([np.full((len(sp), 1), it, dtype=np.int64), sp], axis=1))
    if not blocks:
        return np.zeros((0, d + 1), dtype=np.int64)
    return np.concatenate(blocks)


def _tube_arrays(tubes: Sequence[Tube]):
    p = np.array([t.l for t in tubes], dtype=float)
    v = np.array([t.velocity for t in tubes], dtype=float)
    ta = np.array([t.t0 for t in tubes], dtype=float)
    tb = np.array([t.t_end for t in tubes], dtype=float)
    return p, v, ta, tb


def _meets_rows(tubes: Sequence[Tube], owner: np.ndarray, cubes: np.ndarray, cover: CubeCover,
                scale: float = 2.0, backend: str | None = None) -> np.ndarray:
    """Exact test T ∩ (scale Q) != empty for rows (tube owner[r], cube cubes[r])."""
    if not len(owner):
        return np.zeros(0, dtype=bool)
    p, v, ta, tb = _tube_arrays(tubes)
    lo, hi = cover.boxes(cubes, scale)
    d2 = tube_box_min_dist2(p[owner], v[owner], ta[owner], tb[owner], lo, hi, backend=backend)
    return d2 <= TUBE_RADIUS**2 * (1 + 1e-12)


def _meets(tubes: Sequence[Tube], cubes: Sequence[tuple[int, ...]], cover: CubeCover, scale: float = 2.0,
           backend: str | None = None) -> np.ndarray:
    """Exact test for paired lists of tubes and cubes."""
    owner = np.arange(len(tubes))
    return _meets_rows(tubes, owner, np.asarray(cubes, dtype=np.int64).reshape(len(tubes), -1), cover,
                       scale, backend)


def tube_incidence(tubes: Sequence[Tube], cover: CubeCover, scale: float = 2.0,
                   backend: str | None = None) -> dict:
    """Map cube index -> sorted list of tube positions whose tube meets the dilated cube."""
    if not len(tubes):
        return {}
    cand = [_candidates(t, cover, scale) for t in tubes]
    owner = np.concatenate([np.full(len(c), j, dtype=np.int64) for j, c in enumerate(cand)])
    cubes = np.concatenate(cand)
    keep = cover.in_cover_array(cubes)
    owner, cubes = owner[keep], cubes[keep]
    hit = _meets_rows(tubes, owner, cubes, cover, scale, backend)
    inc: dict = {}
    for c, j in zip(map(tuple, cubes[hit].tolist()), owner[hit].tolist()):
        inc.setdefault(c, []).append(j)
    return {c: sorted(set(v)) for c, v in inc.items()}


@dataclass
class Bush:
    cube: tuple[int, ...]
    members: list


@dataclass
class BushPartition:
    bin: AmplitudeBin
    cover: CubeCover
    bushes: list
    residual: list
    mu: float

    @property
    def J(self) -> int:
        return len(self.bushes)

    def verify(self, backend: str | None = None) -> dict:
        """Exhaustive check of partition, bush size, residual incidence and anchor-cube membership."""
        n = len(self.bin.members)
        seen = [j for b in self.bushes for j in b.members] + list(self.residual)
        partition = sorted(seen) == list(range(n))
        size = all(len(b.members) >= self.mu - 1e-12 for b in self.bushes)
        tubes = self.bin.tubes
        anchor = True
        for b in self.bushes:
            if not self.cover.in_cover(b.cube):
                anchor = False
                break
            ok = _meets([tubes[j] for j in b.members], [b.cube] * len(b.members), self.cover, 2.0, backend)
            if not np.all(ok):
                anchor = False
                break
        res_tubes = [tubes[j] for j in self.residual]
        inc = tube_incidence(res_tubes, self.cover, 2.0, backend)
        max_res = max((len(v) for v in inc.values()), default=0)
        residual = (max_res < self.mu) if res_tubes else True
        return {
            "partition": partition,
            "bush_size": size,
            "residual": residual,
            "anchor": anchor,
            "max_residual_incidence": max_res,
        }


def greedy_bushes(abin: AmplitudeBin, cover: CubeCover, backend: str | None = None) -> BushPartition:
    """Repeatedly take the cube whose double meets the most remaining tubes.

    Ties go to the lexicographically smallest cube index.  Selection stops once
    the best count drops below mu = N^{-1/2} #A_m; the rest forms D_m.
    """
    tubes = abin.tubes
    mu = abin.mu
    inc = {c: set(v) for c, v in tube_incidence(tubes, cover, 2.0, backend).items()}
    by_tube: dict = {}
    for c, mem in inc.items():
        for j in mem:
            by_tube.setdefault(j, set()).add(c)
    remaining = set(range(len(tubes)))
    bushes = []
    while remaining and inc:
        best = min(inc.items(), key=lambda kv: (-len(kv[1]), kv[0]))
        cube, members = best
        if len(members) < mu or not members:
            break
        chosen = sorted(members)
        bushes.append(Bush(cube, chosen))
        for j in chosen:
            remaining.discard(j)
            for c in by_tube.get(j, ()):
                s = inc.get(c)
                if s is not None:
                    s.discard(j)
                    if not s:
                        del inc[c]
    return BushPartition(abin, cover, bushes, sorted(remaining), mu)


def write_partition_csv(path: str | Path, parts: Sequence[BushPartition]) -> None:
    """Rows k..., l..., m, group with group = 'bush<j>' or 'D'."""
    rows = []
    d = None
    for part in parts:
        mem = part.bin.members
        for j, b in enumerate(part.bushes):
            for i in b.members:
                rows.append((mem[i].k, mem[i].l, part.bin.m, f"bush{j + 1}"))
        for i in part.residual:
            rows.append((mem[i].k, mem[i].l, part.bin.m, "D"))
        if mem:
            d = len(mem[0].k)
    d = d or 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"k{i + 1}" for i in range(d)] + [f"l{i + 1}" for i in range(d)] + ["m", "group"])
        for k, l, m, grp in rows:
            w.writerow([*k, *l, m, grp])


# ---------------------------------------------------------------------------
# Square-root cancellation
# ---------------------------------------------------------------------------


@dataclass
class SqrtCancellationStats:
    normalizer: float
    ratios: np.ndarray
    sup_random: np.ndarray
    deterministic: float

    def quantiles(self, qs: Sequence[float] = (0.1, 0.5, 0.9)) -> dict:
        if not len(self.ratios):
            return {float(a): 0.0 for a in qs}
        return {float(a): float(np.quantile(self.ratios, a)) for a in qs}

    @property
    def median_ratio(self) -> float:
        return float(np.median(self.ratios)) if len(self.ratios) else 0.0

    @property
    def median_relative(self) -> float:
        """Median randomised sup-norm over the all-signs-one sup-norm."""
        if self.deterministic == 0:
            return 0.0
        return float(np.median(self.sup_random)) / self.deterministic


def _group_sup(packets: Sequence[WavePacket], signs: dict, times: Sequence[float]) -> float:
    g = packets[0].grid
    S = np.zeros(g.shape, dtype=complex)
    for p in packets:
        S[np.ix_(*p.index)] += signs[p.k] * p.coeffs
    r = g.abs_freq()
    sg = packets[0].sign
    t0 = packets[0].t0
    best = 0.0
    for t in times:
        best = max(best, float(np.abs(ifft(g, S * np.exp(sg * 1j * (t - t0) * r))).max()))
    return best


def sqrt_cancellation_stat(packets: Sequence[WavePacket], seeds: Sequence[int], times: Sequence[float],
                           normalizer: float, signs: dict | None = None) -> SqrtCancellationStats:
    """sup_{t,x} |sum eps_k exp(+-i(t - t0)|grad|) f_{k,l;t0}| / normalizer per seed.

    ``times`` are absolute.  Empty groups give ratio 0.  With ``signs`` given
    (a dict k -> +-1) a single deterministic evaluation replaces the ensemble.
    """
    if not packets:
        return SqrtCancellationStats(normalizer, np.zeros(len(seeds)), np.zeros(len(seeds)), 0.0)
    d = len(packets[0].k)
    ks = sorted({p.k for p in packets})
    det = _group_sup(packets, {k: 1.0 for k in ks}, times)
    sups = []
    if signs is not None:
        sups.append(_group_sup(packets, signs, times))
    else:
        for seed in seeds:
            eps = sample_coefficients("rademacher", seed, d).signs(np.array(ks))
            sups.append(_group_sup(packets, dict(zip(ks, eps)), times))
    sups = np.array(sups)
    ratios = sups / normalizer if normalizer > 0 else np.zeros_like(sups)
    return SqrtCancellationStats(normalizer, ratios, sups, det)


# ---------------------------------------------------------------------------
# Wave packet norm
# ---------------------------------------------------------------------------


@dataclass
class WPNormReport:
    value: float
    terms: list

    def __float__(self) -> float:
        return self.value


def _anchor_window(ls: np.ndarray, N: int) -> list[tuple[int, ...]]:
    """Anchors x0 in N Z^d whose 3N-window contains one of the centers ``ls``."""
    anchors = set()
    for l in ls:
        rngs = [range(math.ceil((c - 3 * N) / N), math.floor((c + 3 * N) / N) + 1) for c in l]
        for j in itertools.product(*rngs):
            anchors.add(tuple(N * a for a in j))
    return sorted(anchors)


def wp_norm(sf: SignForm, bands: Sequence[int], *, delta: float = 0.1, theta: float = 1 / 6, C_d: float = 1.0,
            n_times: int = 5, signs: Sequence[int] = (1, -1), packet_tol: float = 1e-6,
            report: bool = False, backend: str | None = None):
    """Finite-range wave packet norm of the sign form over the listed bands.

    For each band N and each |m| <= C_d log N the bush and residual suprema over
    t0 in {0, N, ..., floor(N^theta) N}, anchors x0 in N Z^d and both half-waves
    are weighted by N^{-2 delta d}.  Time suprema use ``n_times`` samples of
    [t0, t0 + N]; the signs are those stored in the sign form.  Cells whose
    band piece stays below ``packet_tol`` of its peak are not decomposed.
    """
    d = sf.grid.d
    eps = {k: c.sign for k, c in sf.components.items()}
    total = 0.0
    terms = []
    for N in bands:
        if not sf.band(N):
            continue
        mmax = C_d * math.log(N) if N > 1 else 0.0
        weight = N ** (-2 * delta * d)
        best_bush: dict = {}
        best_res: dict = {}
        for j0 in range(int(math.floor(N**theta)) + 1):
            t0 = float(j0 * N)
            times = np.linspace(t0, t0 + N, n_times)
            for sg in signs:
                packets = [p for p in decompose_band(sf, N, t0, sg, tol=packet_tol) if p.norm > 0]
                packets = [p for p in packets if abs(dyadic_exponent(p.norm)) <= mmax]
                if not packets:
                    continue
                ls = np.array([p.l for p in packets])
                ms = np.array([dyadic_exponent(p.norm) for p in packets])
                cache: dict = {}

                def sup(ids) -> float:
                    key = tuple(ids)
                    if key not in cache:
                        cache[key] = _group_sup([packets[i] for i in key], eps, times)
                    return cache[key]

                for x0 in _anchor_window(ls, N):
                    near = np.abs(ls - np.asarray(x0)).max(axis=1) <= 3 * N
                    cover = None
                    for m in np.unique(ms[near]):
                        ids = np.nonzero(near & (ms == m))[0]
                        abin = AmplitudeBin(int(m), [packets[i] for i in ids], N, t0, x0, sg)
                        if cover is None:
                            cover = cover_cubes(ConeRegion("fattened", t0, x0, N), delta)
                        part = greedy_bushes(abin, cover, backend)
                        scale = 2.0 ** abin.m
                        for b in part.bushes:
                            val = sup(sorted(ids[i] for i in b.members)) / (scale * math.sqrt(len(b.members)))
                            best_bush[abin.m] = max(best_bush.get(abin.m, 0.0), val)
                        if part.residual and part.mu > 0:
                            val = sup(sorted(ids[i] for i in part.residual)) / (scale * math.sqrt(part.mu))
                            best_res[abin.m] = max(best_res.get(abin.m, 0.0), val)
        for m in sorted(set(best_bush) | set(best_res)):
            b = best_bush.get(m, 0.0)
            r = best_res.get(m, 0.0)
            total += weight * (b + r)
            terms.append({"N": N, "m": m, "bush": b, "residual": r, "weight": weight})
    if report:
        return WPNormReport(total, terms)
    return total


# ---------------------------------------------------------------------------
# Cone covering by smaller cones
# ---------------------------------------------------------------------------


def cover_cone(R: int, t0: float, x0: Sequence[float], N: int) -> list[ConeRegion]:
    """All truncated cones K^N at (tau, y), tau in t0 + N N_0, y in x0 + N Z^d, contained in K^R.

    K^N_{tau,y} is contained in K^R_{t0,x0} iff tau + N <= t0 + R and
    |y - x0|_inf + 2N <= 2R - (tau - t0), since both radii shrink at unit speed.
    """
    if N > R:
        raise ValueError("require N <= R")
    x0 = tuple(float(c) for c in x0)
    d = len(x0)
    out = []
    n_tau = int(math.floor((R - N) / N + 1e-12))
    for j in range(n_tau + 1):
        tau = t0 + j * N
        reach = 2 * R - (tau - t0) - 2 * N
        if reach < -1e-12:
            continue
        m = int(math.floor(reach / N + 1e-12))
        for off in itertools.product(range(-m, m + 1), repeat=d):
            y = tuple(x0[i] + N * off[i] for i in range(d))
            out.append(ConeRegion("truncated", tau, y, N))
    return out
