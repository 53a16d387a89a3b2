"""Half-wave and free-wave propagation, band evolutions, decay and Strichartz sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

from .partitions import SUPPORT, ProjectionSpec, projection_multiplier
from .randomize import (
    RandomizationPlan,
    SignForm,
    band_bounds,
    sample_coefficients,
)
from .spectral import (
    GridSpec,
    RealField,
    Trajectory,
    _checker,
    fft,
    ifft,
    time_norm,
)

__all__ = [
    "half_wave",
    "free_evolution",
    "band_evolution",
    "band_free_wave",
    "band_velocity",
    "band_multiplier",
    "evolve_trajectory",
    "dispersive_decay_profile",
    "DecayProfile",
    "FitSummary",
    "fit_loglog",
    "wave_admissible",
    "long_time_admissible",
    "StrichartzSample",
    "strichartz_sample",
    "windowed_sample",
    "z_norm",
    "z_norm_sign_form",
]


def _sign(sign) -> int:
    if sign in (1, "+", "plus", +1.0):
        return 1
    if sign in (-1, "-", "minus", -1.0):
        return -1
    raise ValueError(f"sign must be +1 or -1, got {sign!r}")


def _field(grid: GridSpec, vals: np.ndarray, want_real: bool) -> RealField:
    if want_real:
        peak = float(np.abs(vals).max()) if vals.size else 0.0
        if float(np.abs(vals.imag).max()) <= 1e-10 * max(peak, 1e-300):
            return RealField(grid, vals.real, True)
    return RealField(grid, vals, False)


def half_wave(f: RealField, t: float, sign=1) -> RealField:
    """exp(+-it|grad|) f.  The result is complex unless t = 0."""
    g = f.grid
    if t == 0:
        return f
    F = fft(g, f.values) * np.exp(_sign(sign) * 1j * t * g.abs_freq())
    return RealField(g, ifft(g, F), False)


def free_multipliers(grid: GridSpec, t: float) -> tuple[np.ndarray, np.ndarray]:
    """cos(t|xi|) and sin(t|xi|)/|xi| with the value t at xi = 0."""
    r = grid.abs_freq()
    c = np.cos(t * r)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(r > 0, np.sin(t * r) / np.where(r > 0, r, 1.0), t)
    return c, s


def free_evolution(f0: RealField, f1: RealField | None, t: float, allow_mean: bool = False,
                   tol: float = 1e-12) -> RealField:
    """W(t)(f0, f1) = cos(t|grad|) f0 + sin(t|grad|)/|grad| f1.

    The velocity must have a vanishing zero mode (|f1_hat(0)| <= tol) unless
    ``allow_mean`` is set, in which case the zero mode grows linearly in t.
    """
    g = f0.grid
    F0 = fft(g, f0.values)
    c, s = free_multipliers(g, t)
    out = F0 * c
    if f1 is not None:
        if f1.grid != g:
            raise ValueError("f0 and f1 live on different grids")
        F1 = fft(g, f1.values)
        z = (0,) * g.d
        if not allow_mean and abs(F1[z]) > tol:
            raise ValueError(f"velocity has non-zero mean (|f1_hat(0)| = {abs(F1[z]):.3e}); "
                             "pass allow_mean=True to evolve it by the limit t")
        out = out + F1 * s
    return _field(g, ifft(g, out), f0.real and (f1 is None or f1.real))


# ---------------------------------------------------------------------------
# Band evolutions from the sign form
# ---------------------------------------------------------------------------


def _band_coeffs(sf: SignForm, N: int, t: float, sign: str | int = "both") -> np.ndarray:
    g = sf.grid
    r = g.abs_freq()
    out = np.zeros(g.shape, dtype=complex)
    both = sign == "both"
    signs = (1, -1) if both else (_sign(sign),)
    for c in sf.band(N):
        ix = np.ix_(*c.index)
        rr = r[ix]
        patch = np.zeros(rr.shape, dtype=complex)
        for sg in signs:
            comp = c.plus if sg == 1 else c.minus
            patch += comp * np.exp(sg * 1j * t * rr)
        if both and np.any(rr == 0):
            # the xi = 0 velocity term of the sinc multiplier
            patch[rr == 0] += t * c.f1[rr == 0]
        out[ix] += c.sign * patch
    return out


def band_evolution(sf: SignForm, N: int, t: float, sign: str | int = "both") -> RealField:
    """F_N^+, F_N^- or F_N = F_N^+ + F_N^- at time t."""
    g = sf.grid
    vals = ifft(g, _band_coeffs(sf, N, t, sign))
    return _field(g, vals, sign == "both")


def band_velocity(sf: SignForm, N: int, t: float) -> RealField:
    """Exact time derivative of F_N at time t, taken on the symbol."""
    g = sf.grid
    r = g.abs_freq()
    out = np.zeros(g.shape, dtype=complex)
    for c in sf.band(N):
        ix = np.ix_(*c.index)
        rr = r[ix]
        patch = 1j * rr * (c.plus * np.exp(1j * t * rr) - c.minus * np.exp(-1j * t * rr))
        patch[rr == 0] += c.f1[rr == 0]
        out[ix] += c.sign * patch
    return _field(g, ifft(g, out), True)


def band_free_wave(sf: SignForm, N: int, t: float) -> np.ndarray:
    """Samples of F_N(t) (both half-waves)."""
    return band_evolution(sf, N, t, "both").values


def evolve_trajectory(f: RealField, times: Sequence[float], sign=1) -> Trajectory:
    """Half-wave trajectory exp(+-it|grad|) f at the given times."""
    g = f.grid
    F = fft(g, f.values)
    r = g.abs_freq()
    sg = _sign(sign)
    vals = np.stack([ifft(g, F * np.exp(sg * 1j * t * r)) for t in times])
    return Trajectory(g, np.asarray(times, dtype=float), vals, {"sign": sg})


def band_multiplier(grid: GridSpec, N: int) -> np.ndarray:
    """sum over k in band N of phi(xi - k), as a difference of box sums.

    The sum of phi(xi - k) over |k|_inf <= K factorises into per-axis sums, so a
    band is the difference of two such boxes.
    """
    from .partitions import default_window

    xi = grid.freq_axis()

    def box(K: int) -> np.ndarray:
        if K < 0:
            return np.zeros(grid.shape)
        ax = sum(default_window.profile(xi - j) for j in range(-K, K + 1))
        out = np.ones(())
        for i in range(grid.d):
            s = [1] * grid.d
            s[i] = grid.n
            out = out * ax.reshape(s)
        return np.broadcast_to(out, grid.shape)

    lo, hi = band_bounds(N)
    return box(hi) - box(lo - 1)


# ---------------------------------------------------------------------------
# Dispersive decay
# ---------------------------------------------------------------------------


def _bump_hat_1d(xi: np.ndarray, radius: float) -> np.ndarray:
    """Transform of the unit-mass bump exp(-1/(1 - (x/radius)^2)) by Gauss-Legendre quadrature."""
    xg, wg = np.polynomial.legendre.leggauss(256)
    x = radius * xg
    b = np.exp(-1.0 / np.maximum(1.0 - xg**2, 1e-300))
    b = np.where(np.abs(xg) < 1, b, 0.0)
    mass = radius * float(np.sum(wg * b))
    kern = np.cos(np.multiply.outer(xi, x))  # the bump is even
    return (kern @ (wg * b)) * radius / mass / math.sqrt(2 * math.pi)


@dataclass
class DecayProfile:
    k: tuple[int, ...]
    M: int
    N: int
    times: np.ndarray
    ratios: np.ndarray
    envelope: np.ndarray
    t0_ratio: float

    def fit(self, t_min: float | None = None, t_max: float | None = None,
            variable: str = "t") -> "FitSummary":
        """Log-log fit of the ratios against t (or 1 + M^2 t/N when variable='scaled')."""
        sel = np.ones(len(self.times), dtype=bool)
        if t_min is not None:
            sel &= self.times >= t_min - 1e-12
        if t_max is not None:
            sel &= self.times <= t_max + 1e-12
        x = self.times[sel]
        if variable == "scaled":
            x = 1.0 + self.M**2 * x / self.N
        return fit_loglog(x, self.ratios[sel])


def dispersive_decay_profile(k: Sequence[int], M: int, N: int, times: Sequence[float], sign=1,
                             L: float = 8 * math.pi, n: int | None = None) -> DecayProfile:
    """sup_x |exp(+-it|grad|) P_{M;k} f| / |f|_1 for a narrow unit-mass bump f.

    The computation runs in the frame modulated by k and translated with the
    group velocity k/|k|, which changes neither modulus nor supremum and keeps the
    packet inside a small grid.  The bump is a tensor product of 1-D bumps with
    radius 1/(4(N + M)), so its transform is nearly flat across the window.
    """
    k = tuple(int(c) for c in k)
    d = len(k)
    kn = max(abs(c) for c in k)
    if not (N / 2 < kn <= N or (N == 1 and kn == 0)):
        raise ValueError(f"|k|_inf = {kn} is not in band N = {N}")
    if M > N:
        raise ValueError("require M <= N")
    if abs(L / math.pi - round(L / math.pi)) > 1e-9:
        raise ValueError("L must be an integer multiple of pi so that k lies on the lattice")
    reach = M * SUPPORT if M == 1 else 2 * M * SUPPORT
    if n is None:
        n = 64
        while n * math.pi / (2 * L) < reach + 1.0:
            n *= 2
    g = GridSpec(d, n, L)
    g.require_band(reach, "decay window")
    eta = g.freqs()
    xi = [eta[i] + k[i] for i in range(d)]
    r = np.sqrt(sum(x * x for x in xi))
    mult = projection_multiplier(g, ProjectionSpec(M, (0,) * d, False))
    radius = 1.0 / (4.0 * (N + M))
    hat = np.ones(())
    for i in range(d):
        hat = hat * _bump_hat_1d(xi[i], radius)
    F = mult * hat
    knorm = math.sqrt(sum(c * c for c in k)) or 1.0
    khat = [c / knorm for c in k]
    sg = _sign(sign)
    ratios = []
    for t in times:
        # translate by -+ t khat so the packet stays centred
        phase = sg * t * (r - sum(khat[i] * eta[i] for i in range(d)))
        u = ifft(g, F * np.exp(1j * phase))
        ratios.append(float(np.abs(u).max()))
    times = np.asarray(times, dtype=float)
    env = M**d / (1.0 + (M**2 / N) * np.abs(times)) ** ((d - 1) / 2)
    t0 = float(np.abs(ifft(g, F)).max())
    return DecayProfile(k, M, N, times, np.array(ratios), env, t0)


# ---------------------------------------------------------------------------
# Fits
# ---------------------------------------------------------------------------


@dataclass
class FitSummary:
    slope: float
    intercept: float
    r2: float

    def row(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2}


def fit_loglog(x: Sequence[float], y: Sequence[float]) -> FitSummary:
    """Least-squares line through (log x, log y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        raise ValueError("need at least two positive samples for a log-log fit")
    lx, ly = np.log(x[ok]), np.log(y[ok])
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum((ly - pred) ** 2)) / ss if ss > 0 else 1.0
    return FitSummary(float(slope), float(intercept), r2)


# ---------------------------------------------------------------------------
# Probabilistic Strichartz / long-time sampling
# ---------------------------------------------------------------------------


def _inv(p: float) -> float:
    return 0.0 if math.isinf(p) else 1.0 / p


def wave_admissible(q: float, p: float, d: int) -> bool:
    """2 <= q, p <= inf, 1/q + (d-1)/(2p) <= (d-1)/4 and (q, p, d) != (2, inf, 3)."""
    if q < 2 or p < 2:
        return False
    if q == 2 and math.isinf(p) and d == 3:
        return False
    return _inv(q) + (d - 1) * _inv(p) / 2 <= (d - 1) / 4 + 1e-15


def long_time_admissible(q: float, p: float, d: int) -> bool:
    """1 <= q < inf, 2 <= p <= inf and 1/q + (d-1)/p < (d-1)/2."""
    if q < 1 or math.isinf(q) or p < 2:
        return False
    return _inv(q) + (d - 1) * _inv(p) < (d - 1) / 2


@dataclass
class StrichartzSample:
    N: int
    q: float
    p: float
    d: int
    times: np.ndarray
    seeds: list
    values: np.ndarray
    admissible: bool
    long_time: bool
    meta: dict = field(default_factory=dict)

    @property
    def conforming(self) -> bool:
        return self.admissible or self.long_time

    def quantiles(self, qs: Sequence[float] = (0.1, 0.5, 0.9)) -> dict:
        return {float(a): float(np.quantile(self.values, a)) for a in qs}

    @property
    def median(self) -> float:
        return float(np.median(self.values))


def _space_norm(u: np.ndarray, p: float, dv: float) -> float:
    a = np.abs(u)
    if math.isinf(p):
        return float(a.max())
    return float((np.sum(a**p) * dv) ** (1.0 / p))


class _WindowPhases:
    """Start and step phases exp(+-i t |xi|) for uniformly spaced windows.

    The checkerboard and normalisation of :func:`ifft` are folded into the
    start phase so every sample costs one multiply and one inverse FFT.
    """

    def __init__(self, grid: GridSpec, windows: Sequence[np.ndarray], sign: int):
        r = grid.abs_freq()
        c = (grid.n * grid.dxi) ** grid.d / (2 * math.pi) ** (grid.d / 2)
        pre = _checker(grid) * c
        self.items = []
        for ts in windows:
            ts = np.asarray(ts, dtype=float)
            dts = np.diff(ts)
            uniform = len(ts) > 1 and np.allclose(dts, dts[0], rtol=1e-12, atol=1e-14)
            start = pre * np.exp(sign * 1j * ts[0] * r)
            stepper = np.exp(sign * 1j * dts[0] * r) if uniform else None
            self.items.append((ts, start, stepper))
        self.pre = pre
        self.r = r
        self.sign = sign

    def norms(self, grid: GridSpec, F: np.ndarray, p: float) -> list[np.ndarray]:
        out = []
        dv = grid.cell_volume
        axes = tuple(range(grid.d))
        for ts, start, stepper in self.items:
            vals = np.empty(len(ts))
            Z = F * start
            for j, t in enumerate(ts):
                if stepper is None and j:
                    Z = F * self.pre * np.exp(self.sign * 1j * t * self.r)
                vals[j] = _space_norm(sfft.ifftn(Z, axes=axes, workers=-1), p, dv)
                if stepper is not None:
                    Z *= stepper
            out.append(vals)
        return out


def windowed_sample(f: RealField | RandomizationPlan, seeds: Sequence[int], N: int, q: float, p: float,
                    windows: Sequence[Sequence[float]], law: str = "rademacher", sign=1,
                    complex_valued: bool = False, on_norms: Callable | None = None) -> list[StrichartzSample]:
    """Mixed norms of exp(+-it|grad|) f_N^omega over several time windows, one sample per seed and window.

    Each seed's randomised band spectrum is built once and shared by all windows.
    """
    plan = f if isinstance(f, RandomizationPlan) else RandomizationPlan(f)
    g0 = plan.grid
    d = g0.d
    if N * 1.0 + SUPPORT > g0.nyquist:
        from .spectral import BandError

        raise BandError(f"band N={N} exceeds the grid Nyquist frequency {g0.nyquist:.3f}")
    gb = plan.band_grid(N)
    sg = _sign(sign)
    windows = [np.asarray(w, dtype=float) for w in windows]
    phases = _WindowPhases(gb, windows, sg)
    vals = [[] for _ in windows]
    for seed in seeds:
        coeffs = sample_coefficients(law, seed, d, complex_valued)
        F = plan.spectrum(coeffs, band=N, grid=gb)
        for w, (ts, per_t) in enumerate(zip(windows, phases.norms(gb, F, p))):
            if on_norms is not None:
                on_norms(seed, per_t)
            vals[w].append(time_norm(ts, per_t, q) if len(ts) > 1 else float(per_t[0]))
    adm = wave_admissible(q, p, d)
    lt = long_time_admissible(q, p, d)
    meta = {"grid_n": gb.n, "L": gb.L, "law": law, "sign": sg}
    return [StrichartzSample(N, q, p, d, ts, list(seeds), np.array(v), adm, lt, dict(meta))
            for ts, v in zip(windows, vals)]


def strichartz_sample(f: RealField | RandomizationPlan, seeds: Sequence[int], N: int, q: float, p: float,
                      times: Sequence[float], law: str = "rademacher", sign=1,
                      complex_valued: bool = False, on_norms: Callable | None = None) -> StrichartzSample:
    """Mixed norms |exp(+-it|grad|) f_N^omega|_{L^q_t L^p_x} over the time samples, one per seed.

    The band piece is computed on the smallest grid (same L) that resolves band N.
    Exponent pairs that are neither wave-admissible nor satisfy the long-time
    condition are still evaluated and flagged as non-conforming.
    """
    return windowed_sample(f, seeds, N, q, p, [times], law, sign, complex_valued, on_norms)[0]


# ---------------------------------------------------------------------------
# Auxiliary Z-norm
# ---------------------------------------------------------------------------


def _z_from_waves(wave: Callable[[int, float], np.ndarray], bands: Sequence[int], theta: float, delta: float,
                  s: float, t_max: float, n_times: int) -> float:
    total = 0.0
    for N in bands:
        t_all = np.linspace(0.0, t_max, n_times)
        sup_all = np.array([float(np.abs(wave(N, t)).max()) for t in t_all])
        term_inf = N ** (s - delta) * float(sup_all.max())
        t_start = N ** (1.0 + theta)
        term_one = 0.0
        if t_start < t_max:
            t_long = np.linspace(t_start, t_max, n_times)
            sup_long = np.array([float(np.abs(wave(N, t)).max()) for t in t_long])
            term_one = N ** (s + theta / 2 - 1 - delta) * time_norm(t_long, sup_long, 1.0)
        total += term_one + term_inf
    return float(total)


def z_norm(f0: RealField, f1: RealField | None, bands: Sequence[int], *, theta: float = 1 / 6,
           delta: float = 0.1, s: float = 0.5, t_max: float = 32.0, n_times: int = 17) -> float:
    """Finite-range Z-norm with the band pieces f_{j,N} = sum_{k in band N} P_k f_j.

    The L^1_t L^inf_x part runs over [N^{1+theta}, t_max] and the L^inf_t L^inf_x
    part over [0, t_max]; both use ``n_times`` uniform samples.
    """
    g = f0.grid
    F0 = fft(g, f0.values)
    F1 = fft(g, f1.values) if f1 is not None else np.zeros_like(F0)
    cache: dict = {}

    def wave(N: int, t: float) -> np.ndarray:
        if N not in cache:
            m = band_multiplier(g, N)
            cache[N] = (F0 * m, F1 * m)
        A, B = cache[N]
        c, sn = free_multipliers(g, t)
        return ifft(g, A * c + B * sn)

    return _z_from_waves(wave, bands, theta, delta, s, t_max, n_times)


def z_norm_sign_form(sf: SignForm, bands: Sequence[int], *, theta: float = 1 / 6, delta: float = 0.1,
                     s: float = 0.5, t_max: float = 32.0, n_times: int = 17) -> float:
    """Z-norm of the randomised data, with band pieces F_N taken from the sign form."""
    return _z_from_waves(lambda N, t: band_free_wave(sf, N, t), bands, theta, delta, s, t_max, n_times)
