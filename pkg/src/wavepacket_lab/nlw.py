"""Pseudospectral integrator for the forced cubic wave equation

    -v_tt + Laplace v = (v + F)^3

with energy-momentum accounting on l-infinity cones and light-cone shells.

The linear group is applied exactly in frequency space and the cubic term is
integrated by a fourth-order Runge-Kutta scheme in the rotated frame
(integrating-factor RK4).  Cubic products are dealiased by the 2/3 rule.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._accel import shell_integrals
from .randomize import SignForm
from .spectral import GridSpec, RealField, fft, ifft, save_snapshot
from .wavepackets import ConeRegion, band_of, cover_cone

__all__ = [
    "SolverError",
    "Forcing",
    "SolverState",
    "SolverTrajectory",
    "step",
    "integrate",
    "energy",
    "tensor_fields",
    "local_energy",
    "LocalIncrement",
    "local_increment_check",
    "energy_increment_residual",
    "FluxReport",
    "flux",
    "localize_forcing",
    "LedgerRow",
    "increment_ledger",
    "induction_constant",
    "write_ledger_csv",
    "self_convergence_order",
]


class SolverError(RuntimeError):
    """Non-finite values or energy blow-up during time stepping."""


# ---------------------------------------------------------------------------
# Real-FFT helpers (internal normalisation; physical integrals use h^d sums)
# ---------------------------------------------------------------------------


class _Spectral:
    def __init__(self, grid: GridSpec):
        self.grid = grid
        n, d = grid.n, grid.d
        k = np.fft.fftfreq(n, 1.0 / n) * grid.dxi
        kr = np.fft.rfftfreq(n, 1.0 / n) * grid.dxi
        axes = [k] * (d - 1) + [kr]
        self.xi = []
        for i, a in enumerate(axes):
            shp = [1] * d
            shp[i] = len(a)
            self.xi.append(a.reshape(shp))
        shape = tuple(len(a) for a in axes)
        r2 = np.zeros(shape)
        for x in self.xi:
            r2 = r2 + x * x
        self.r2 = r2
        self.r = np.sqrt(r2)
        cut = (2.0 / 3.0) * grid.nyquist
        mask = np.ones(shape, dtype=bool)
        for x in self.xi:
            mask &= np.abs(x) < cut
        self.dealias = mask
        self.axes = tuple(range(d))

    def fwd(self, v: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(v, axes=self.axes)

    def inv(self, V: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(V, s=self.grid.shape, axes=self.axes)

    def group(self, tau: float):
        c = np.cos(tau * self.r)
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.where(self.r > 0, np.sin(tau * self.r) / np.where(self.r > 0, self.r, 1.0), tau)
        return c, s

    def grad(self, v: np.ndarray) -> list[np.ndarray]:
        V = self.fwd(v)
        return [self.inv(1j * x * V) for x in self.xi]


_CACHE: dict = {}


def _spectral(grid: GridSpec) -> _Spectral:
    sp = _CACHE.get(grid)
    if sp is None:
        if len(_CACHE) > 8:
            _CACHE.clear()
        sp = _CACHE[grid] = _Spectral(grid)
    return sp


# ---------------------------------------------------------------------------
# Forcing
# ---------------------------------------------------------------------------


@dataclass
class Forcing:
    """Real forcing F(t) sampled on the grid, optionally split into dyadic bands."""

    grid: GridSpec
    kind: str
    evaluator: Callable[[float], np.ndarray] | None = None
    descriptor: dict = field(default_factory=dict)
    bands: dict = field(default_factory=dict)

    def __call__(self, t: float) -> np.ndarray:
        if self.evaluator is None:
            return np.zeros(self.grid.shape)
        return np.asarray(self.evaluator(t), dtype=float)

    @property
    def is_zero(self) -> bool:
        return self.evaluator is None

    def band_part(self, N: int) -> Callable[[float], np.ndarray]:
        fn = self.bands.get(N)
        if fn is None:
            return lambda t: np.zeros(self.grid.shape)
        return fn

    @classmethod
    def zero(cls, grid: GridSpec) -> "Forcing":
        return cls(grid, "zero", None, {"kind": "zero"})

    @classmethod
    def free_wave(cls, f0: RealField, f1: RealField | None = None) -> "Forcing":
        """F = W(t)(f0, f1), the free wave launched by deterministic data."""
        g = f0.grid
        F0 = fft(g, f0.values)
        F1 = fft(g, f1.values) if f1 is not None else np.zeros_like(F0)
        r = g.abs_freq()

        def ev(t: float) -> np.ndarray:
            c = np.cos(t * r)
            with np.errstate(invalid="ignore", divide="ignore"):
                s = np.where(r > 0, np.sin(t * r) / np.where(r > 0, r, 1.0), t)
            return ifft(g, F0 * c + F1 * s).real

        return cls(g, "free", ev, {"kind": "free"})

    @classmethod
    def from_sign_form(cls, sf: SignForm, bands: Sequence[int] | None = None) -> "Forcing":
        """F = sum_N F_N built from a sign form, keeping the listed bands (all if None)."""
        from .propagate import band_free_wave

        g = sf.grid
        if bands is None:
            bands = sorted({band_of(k) for k in sf.components})
        bands = [int(N) for N in bands]
        parts = {N: (lambda t, N=N: band_free_wave(sf, N, t).real) for N in bands}

        def ev(t: float) -> np.ndarray:
            out = np.zeros(g.shape)
            for fn in parts.values():
                out = out + fn(t)
            return out

        return cls(g, "band" if len(bands) == 1 else "free", ev, {"kind": "sign-form", "bands": bands}, parts)

    @classmethod
    def custom(cls, grid: GridSpec, fn: Callable[[float], np.ndarray], descriptor: dict | None = None) -> "Forcing":
        return cls(grid, "custom", fn, descriptor or {"kind": "custom"})


def _cone_mask(grid: GridSpec, cone: ConeRegion, t: float) -> np.ndarray:
    return cone.spatial_mask(grid, t)


def localize_forcing(F: Forcing, cone: ConeRegion) -> Forcing:
    """Sharp restriction 1_K F (zero outside the cone's time window)."""
    g = F.grid
    if F.is_zero:
        return Forcing.zero(g)

    def ev(t: float) -> np.ndarray:
        m = _cone_mask(g, cone, t)
        if not m.any():
            return np.zeros(g.shape)
        return np.where(m, F(t), 0.0)

    bands = {N: (lambda t, fn=fn: np.where(_cone_mask(g, cone, t), fn(t), 0.0)) for N, fn in F.bands.items()}
    desc = dict(F.descriptor)
    desc["localized"] = cone.descriptor()
    return Forcing(g, "localized", ev, desc, bands)


# ---------------------------------------------------------------------------
# State and stepping
# ---------------------------------------------------------------------------


@dataclass
class SolverState:
    grid: GridSpec
    t: float
    v: np.ndarray
    vt: np.ndarray
    forcing: Forcing

    def __post_init__(self) -> None:
        self.v = np.asarray(self.v, dtype=float)
        self.vt = np.asarray(self.vt, dtype=float)
        if self.v.shape != self.grid.shape or self.vt.shape != self.grid.shape:
            raise ValueError("state fields do not match the grid")

    @classmethod
    def from_data(cls, v0: RealField, v1: RealField | None = None, forcing: Forcing | None = None,
                  t: float = 0.0) -> "SolverState":
        g = v0.grid
        if not v0.real or (v1 is not None and not v1.real):
            raise ValueError("solver fields must be real")
        vt = v1.values if v1 is not None else np.zeros(g.shape)
        return cls(g, float(t), np.array(v0.values, dtype=float), np.array(vt, dtype=float),
                   forcing or Forcing.zero(g))


def _nonlinear(sp: _Spectral, V: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Spectrum of -(v + F)^3, dealiased."""
    v = sp.inv(V)
    w = v + F
    return -sp.fwd(w * w * w) * sp.dealias


def _rotate(sp: _Spectral, tau: float, V: np.ndarray, W: np.ndarray):
    c, s = sp.group(tau)
    return c * V + s * W, -sp.r2 * s * V + c * W


def _check(state_t: float, v: np.ndarray, vt: np.ndarray) -> None:
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(vt))):
        bad = int(np.size(v) - np.isfinite(v).sum())
        raise SolverError(f"non-finite values at t = {state_t:.6g} ({bad} bad samples in v)")


def step(state: SolverState, dt: float, *, check_stability: bool = True) -> SolverState:
    """One integrating-factor RK4 step of length dt."""
    g = state.grid
    if check_stability and dt > g.h / 4 + 1e-15:
        raise ValueError(f"time step {dt:g} exceeds the stability bound h/4 = {g.h / 4:g}")
    sp = _spectral(g)
    t = state.t
    F = state.forcing
    V0 = sp.fwd(state.v)
    W0 = sp.fwd(state.vt)
    z = np.zeros_like(V0)
    h2 = 0.5 * dt

    k1 = _nonlinear(sp, V0, F(t))
    Vh, Wh = _rotate(sp, h2, V0, W0)
    # increments live in the velocity slot; the stage displacement of k2 is zero
    Va, _ = _rotate(sp, h2, z, h2 * k1)
    k2 = _nonlinear(sp, Vh + Va, F(t + h2))
    k3 = _nonlinear(sp, Vh, F(t + h2))
    V1, W1 = _rotate(sp, dt, V0, W0)
    Vc, _ = _rotate(sp, h2, z, dt * k3)
    k4 = _nonlinear(sp, V1 + Vc, F(t + dt))

    Ve, We = _rotate(sp, dt, z, k1)
    Vm, Wm = _rotate(sp, h2, z, k2 + k3)
    Vn = V1 + dt / 6.0 * (Ve + 2.0 * Vm)
    Wn = W1 + dt / 6.0 * (We + 2.0 * Wm + k4)
    v = sp.inv(Vn)
    vt = sp.inv(Wn)
    _check(t + dt, v, vt)
    return SolverState(g, t + dt, v, vt, F)


@dataclass
class SolverTrajectory:
    grid: GridSpec
    times: np.ndarray
    v: np.ndarray
    vt: np.ndarray
    forcing: Forcing
    dt: float
    meta: dict = field(default_factory=dict)
    _t00: dict = field(default_factory=dict, repr=False, compare=False)
    _force: dict = field(default_factory=dict, repr=False, compare=False)

    def t00(self, j: int) -> np.ndarray:
        """Cached energy density at sample j."""
        out = self._t00.get(j)
        if out is None:
            out = self._t00[j] = tensor_fields(self.state(j))[0]
        return out

    def forcing_at(self, j: int) -> np.ndarray:
        """Cached forcing samples at sample j."""
        out = self._force.get(j)
        if out is None:
            out = self._force[j] = self.forcing(float(self.times[j]))
        return out

    def band_at(self, N: int, j: int) -> np.ndarray:
        """Cached band forcing F_N at sample j."""
        key = ("band", N, j)
        out = self._force.get(key)
        if out is None:
            out = self._force[key] = self.forcing.band_part(N)(float(self.times[j]))
        return out

    def index(self, t: float, tol: float = 1e-9) -> int:
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > tol * max(1.0, abs(t)):
            raise ValueError(f"time {t:g} is not a stored sample")
        return j

    def state(self, j: int) -> SolverState:
        return SolverState(self.grid, float(self.times[j]), self.v[j], self.vt[j], self.forcing)

    def window(self, a: float, b: float) -> np.ndarray:
        """Sample indices with a <= t <= b."""
        eps = 1e-9 * max(1.0, abs(b))
        return np.nonzero((self.times >= a - eps) & (self.times <= b + eps))[0]

    def energies(self) -> np.ndarray:
        return np.array([energy(self.state(j)) for j in range(len(self.times))])

    def save_checkpoints(self, out_dir: str | Path, seed: int | None = None, every: int = 1) -> Path:
        """WPL1 snapshots of v and v_t plus a text manifest."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        names = []
        for j in range(0, len(self.times), every):
            a = f"v_{j:05d}.wpl1"
            b = f"vt_{j:05d}.wpl1"
            save_snapshot(out / a, RealField(self.grid, self.v[j]))
            save_snapshot(out / b, RealField(self.grid, self.vt[j]))
            names.append((float(self.times[j]), a, b))
        lines = [
            f"grid d={self.grid.d} n={self.grid.n} L={self.grid.L!r}",
            f"dt {self.dt!r}",
            f"forcing {json.dumps(self.forcing.descriptor, sort_keys=True, default=str)}",
            f"seed {seed if seed is not None else 'none'}",
        ]
        lines += [f"t={t!r} {a} {b}" for t, a, b in names]
        path = out / "trajectory_manifest.txt"
        path.write_text("\n".join(lines) + "\n")
        return path


def integrate(state: SolverState, t_end: float, dt: float, *, record_every: int = 1,
              blowup_factor: float = 1e8, check_stability: bool = True) -> SolverTrajectory:
    """Advance to t_end with steps of (at most) dt, recording every ``record_every`` steps."""
    n_steps = max(1, int(math.ceil((t_end - state.t) / dt - 1e-9)))
    dt_eff = (t_end - state.t) / n_steps
    E0 = max(energy(state), 1e-300)
    times, vs, vts = [state.t], [state.v.copy()], [state.vt.copy()]
    cur = state
    for i in range(1, n_steps + 1):
        cur = step(cur, dt_eff, check_stability=check_stability)
        if i % record_every == 0 or i == n_steps:
            times.append(cur.t)
            vs.append(cur.v)
            vts.append(cur.vt)
            E = energy(cur)
            if E > blowup_factor * E0 and E > 1.0:
                raise SolverError(f"energy grew from {E0:.3e} to {E:.3e} by t = {cur.t:.6g}")
    return SolverTrajectory(state.grid, np.array(times), np.array(vs), np.array(vts), state.forcing, dt_eff)


def self_convergence_order(state: SolverState, t_end: float, dt: float) -> tuple[float, list[float]]:
    """Order log2(|u_dt - u_dt/2| / |u_dt/2 - u_dt/4|) from a Richardson triple."""
    finals = []
    for m in (1, 2, 4):
        tr = integrate(state, t_end, dt / m, record_every=10**9)
        finals.append(tr.v[-1])
    e1 = float(np.sqrt(np.sum((finals[0] - finals[1]) ** 2)))
    e2 = float(np.sqrt(np.sum((finals[1] - finals[2]) ** 2)))
    if e2 == 0:
        return math.inf, [e1, e2]
    return math.log2(e1 / e2), [e1, e2]


# ---------------------------------------------------------------------------
# Energy-momentum tensor and energies
# ---------------------------------------------------------------------------


def tensor_fields(state: SolverState) -> tuple[np.ndarray, list[np.ndarray]]:
    """T^00 = (v_t^2 + |grad v|^2)/2 + v^4/4 and T^{j0} = -v_t d_j v."""
    sp = _spectral(state.grid)
    grads = sp.grad(state.v)
    g2 = sum(gj * gj for gj in grads)
    v = state.v
    T00 = 0.5 * (state.vt**2 + g2) + 0.25 * v**4
    T0j = [-state.vt * gj for gj in grads]
    return T00, T0j


def energy(state: SolverState) -> float:
    """Total energy as the lattice sum of T^00."""
    T00, _ = tensor_fields(state)
    return float(T00.sum() * state.grid.cell_volume)


def _cube_weights(grid: GridSpec, x0: Sequence[float], R: float) -> np.ndarray:
    """Fractional cell weights of the cube |x - x0|_inf <= R (periodic distance)."""
    h = grid.h
    L = grid.L
    ax = grid.axis()
    w = np.ones(())
    for i, c in enumerate(x0):
        dist = np.abs(np.mod(ax - c + L, 2 * L) - L)
        wi = np.clip((R - dist) / h + 0.5, 0.0, 1.0)
        shp = [1] * grid.d
        shp[i] = grid.n
        w = w * wi.reshape(shp)
    return np.broadcast_to(w, grid.shape)


def local_energy(traj: SolverTrajectory, cone: ConeRegion, t: float) -> float:
    """Integral of T^00 over |x - x0|_inf <= cN - |t - t0| (c = 2 or 16)."""
    if t < cone.t0 - 1e-9 or t > cone.t0 + cone.N + 1e-9:
        raise ValueError(f"time {t:g} outside the cone window [{cone.t0:g}, {cone.t0 + cone.N:g}]")
    j = traj.index(t)
    T00 = traj.t00(j)
    w = _cube_weights(traj.grid, cone.x0, float(cone.radius(t)))
    return float((T00 * w).sum() * traj.grid.cell_volume)


def _ball_energy(state: SolverState, x0: Sequence[float], R: float) -> float:
    T00, _ = tensor_fields(state)
    g = state.grid
    X = g.coords()
    r2 = sum((X[i] - x0[i]) ** 2 for i in range(g.d))
    return float((T00 * (r2 <= R * R)).sum() * g.cell_volume)


@dataclass
class LocalIncrement:
    cone: ConeRegion
    sup_energy: float
    initial: float
    cubic_term: float
    forcing_term: float

    @property
    def bound(self) -> float:
        return self.initial + 6.0 * self.cubic_term + 3.0 * self.forcing_term

    @property
    def excess(self) -> float:
        """sup E - bound (non-positive when the increment inequality holds)."""
        return self.sup_energy - self.bound

    def holds(self, tol: float) -> bool:
        return self.excess <= tol


def local_increment_check(traj: SolverTrajectory, cone: ConeRegion) -> LocalIncrement:
    """Both sides of the local energy increment inequality on one cone.

    Space-time integrals over the cone use the fractional cube weights and the
    trapezoid rule on the stored samples.
    """
    idx = traj.window(cone.t0, cone.t0 + cone.N)
    if len(idx) < 2:
        raise ValueError("trajectory does not sample the cone window")
    g = traj.grid
    dv = g.cell_volume
    E, a, b, ts = [], [], [], []
    for j in idx:
        t = float(traj.times[j])
        st = traj.state(j)
        w = _cube_weights(g, cone.x0, float(cone.radius(t)))
        E.append(float((traj.t00(j) * w).sum() * dv))
        F = np.abs(traj.forcing_at(j))
        vt = np.abs(st.vt)
        a.append(float((F * st.v**2 * vt * w).sum() * dv))
        b.append(float((F**3 * vt * w).sum() * dv))
        ts.append(t)
    ts = np.array(ts)
    return LocalIncrement(cone, max(E), E[0], float(np.trapezoid(a, ts)), float(np.trapezoid(b, ts)))


def energy_increment_residual(traj: SolverTrajectory, a: float, b: float) -> float:
    """|E(b) - E(a) + int_a^b int N v_t| with N = (v + F)^3 - v^3 (trapezoid in time)."""
    idx = traj.window(a, b)
    if len(idx) < 2:
        raise ValueError("need at least two samples in [a, b]")
    g = traj.grid
    vals, ts = [], []
    for j in idx:
        t = float(traj.times[j])
        v, vt = traj.v[j], traj.vt[j]
        F = traj.forcing_at(j)
        N = (v + F) ** 3 - v**3
        vals.append(float((N * vt).sum() * g.cell_volume))
        ts.append(t)
    Ea = energy(traj.state(idx[0]))
    Eb = energy(traj.state(idx[-1]))
    return abs(Eb - Ea + float(np.trapezoid(vals, ts)))


# ---------------------------------------------------------------------------
# Averaged light-cone flux
# ---------------------------------------------------------------------------


@dataclass
class FluxReport:
    width: float
    anchors_t: np.ndarray
    anchors_x: np.ndarray
    values: np.ndarray

    @property
    def value(self) -> float:
        return float(self.values.max()) if len(self.values) else 0.0


def default_anchors(cone: ConeRegion, per_axis: int = 3, n_t: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Anchor grid t' in [t0, t0 + N], |x' - x0|_inf <= 4N."""
    N = cone.N
    ts = np.linspace(cone.t0, cone.t0 + N, n_t)
    offs = np.linspace(-4 * N, 4 * N, per_axis) if per_axis > 1 else np.zeros(1)
    xs = np.array(np.meshgrid(*[offs + c for c in cone.x0], indexing="ij")).reshape(cone.d, -1).T
    at = np.repeat(ts, len(xs))
    ax = np.tile(xs, (len(ts), 1))
    return at, ax


def flux(traj: SolverTrajectory, cone: ConeRegion, width: float, anchors: tuple | None = None,
         values: np.ndarray | None = None, backend: str | None = None) -> FluxReport:
    """Integrals of w^4/4 over the shells ||x - x'|_2 - |t - t'|| <= width, t in [t0, t0 + N].

    ``values`` may replace the trajectory field w (same sample layout).
    """
    idx = traj.window(cone.t0, cone.t0 + cone.N)
    g = traj.grid
    at, ax = anchors if anchors is not None else default_anchors(cone)
    ts = traj.times[idx]
    w = traj.v[idx] if values is None else np.asarray(values)[idx]
    integrand = (0.25 * w**4 * g.cell_volume).reshape(len(idx), -1)
    if len(ts) > 1:
        dt = np.diff(ts)
        wts = np.zeros(len(ts))
        wts[:-1] += 0.5 * dt
        wts[1:] += 0.5 * dt
    else:
        wts = np.zeros(1)
    at = np.asarray(at, float)
    ax = np.asarray(ax, float).reshape(len(at), g.d)
    # only points within reach of some shell matter
    X = g.coords()
    pts = np.stack([np.broadcast_to(X[i], g.shape).ravel() for i in range(g.d)], axis=1)
    reach = float(np.max(np.abs(ts[:, None] - at[None, :]))) + width if len(at) else 0.0
    lo = ax.min(axis=0) - reach - g.h
    hi = ax.max(axis=0) + reach + g.h
    keep = np.all((pts >= lo) & (pts <= hi), axis=1)
    vals = shell_integrals(pts[keep], integrand[:, keep], wts, ts, at, ax, width, backend=backend)
    return FluxReport(float(width), np.asarray(at), np.asarray(ax), vals)


# ---------------------------------------------------------------------------
# Increment ledger
# ---------------------------------------------------------------------------


@dataclass
class LedgerRow:
    N: int
    t0: float
    x0: tuple
    lhs: float
    e_hat: float
    flux: float
    rhs: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else 0.0


def _cone_integral(traj: SolverTrajectory, cone: ConeRegion, N: int) -> float:
    """int_K |F_N| |v|^2 |v_t| with fractional weights and the trapezoid rule."""
    idx = traj.window(cone.t0, cone.t0 + cone.N)
    g = traj.grid
    vals, ts = [], []
    for j in idx:
        t = float(traj.times[j])
        w = _cube_weights(g, cone.x0, float(cone.radius(t)))
        vals.append(float((np.abs(traj.band_at(N, j)) * traj.v[j] ** 2 * np.abs(traj.vt[j]) * w).sum() * g.cell_volume))
        ts.append(t)
    return float(np.trapezoid(vals, ts)) if len(ts) > 1 else 0.0


def increment_ledger(traj: SolverTrajectory, scales: Sequence[int], *, R: int | None = None,
                     delta: float = 0.1, theta: float = 1 / 6, s: float = 0.9, eta: float = 1.0,
                     x0: Sequence[float] | None = None, flux_width: float | None = None,
                     backend: str | None = None) -> list[LedgerRow]:
    """Measured single-scale increments against the bracket eta N^{3/4 - s + 8 delta} E^{1/2} (E + F)^{1/2}.

    Cones are the sub-cones of the top cone K^R at (0, x0) with t0/N <= floor(N^theta)
    that fit in the trajectory.  E is the sup of the fattened local energy and F the
    averaged flux with width N^{10 delta} (or ``flux_width``).
    """
    g = traj.grid
    x0 = tuple(x0) if x0 is not None else (0.0,) * g.d
    R = R or max(scales)
    t_end = float(traj.times[-1])
    rows = []
    for N in scales:
        for cone in cover_cone(R, 0.0, x0, N):
            if cone.t0 / N > math.floor(N**theta) + 1e-12 or cone.t0 + N > t_end + 1e-9:
                continue
            lhs = _cone_integral(traj, cone, N)
            fat = cone.fattened()
            e_hat = max(local_energy(traj, fat, float(t)) for t in traj.times[traj.window(cone.t0, cone.t0 + N)])
            width = flux_width if flux_width is not None else float(N) ** (10 * delta)
            fl = flux(traj, cone, width, backend=backend).value
            rhs = eta * N ** (0.75 - s + 8 * delta) * math.sqrt(e_hat) * math.sqrt(e_hat + fl)
            rows.append(LedgerRow(int(N), float(cone.t0), tuple(cone.x0), lhs, e_hat, fl, rhs))
    return rows


def induction_constant(traj: SolverTrajectory, R: int, x0: Sequence[float] | None = None) -> dict:
    """Measured C_1 in sup E~ <= 2 E_{|x - x0| <= 16R}(t0) + C_1 |F|^6_{L^3 L^6(K^R)}."""
    g = traj.grid
    x0 = tuple(x0) if x0 is not None else (0.0,) * g.d
    cone = ConeRegion("truncated", 0.0, x0, R)
    idx = traj.window(0.0, R)
    e_tilde = max(local_energy(traj, cone.fattened(), float(traj.times[j])) for j in idx)
    e_ball = _ball_energy(traj.state(idx[0]), x0, 16 * R)
    l6, ts = [], []
    for j in idx:
        t = float(traj.times[j])
        w = _cube_weights(g, x0, float(cone.radius(t)))
        F = traj.forcing_at(j)
        l6.append(float((F**6 * w).sum() * g.cell_volume) ** 0.5)
        ts.append(t)
    f6 = float(np.trapezoid(l6, ts)) ** 2 if len(ts) > 1 else 0.0
    excess = e_tilde - 2 * e_ball
    c1 = max(excess, 0.0) / f6 if f6 > 0 else (0.0 if excess <= 0 else math.inf)
    return {"E_tilde": e_tilde, "E_ball": e_ball, "F_L3L6_pow6": f6, "C1": c1}


def write_ledger_csv(path: str | Path, rows: Sequence[LedgerRow]) -> None:
    import csv

    d = len(rows[0].x0) if rows else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scale", "t0"] + [f"x0_{i + 1}" for i in range(d)] + ["lhs", "rhs", "ratio", "E_hat", "flux"])
        for r in rows:
            w.writerow([r.N, repr(r.t0), *[repr(c) for c in r.x0], repr(r.lhs), repr(r.rhs), repr(r.ratio),
                        repr(r.e_hat), repr(r.flux)])
