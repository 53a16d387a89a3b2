"""Named experiments and the scenario builders they share with the acceptance tests.

Every experiment takes a validated :class:`ExperimentConfig` and an
:class:`OutputSink`, writes its CSV and SVG files through the sink and returns
a flat summary dict that ends up in the run manifest.
"""

from __future__ import annotations

import math
import time
import traceback
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .mcstats import exact_rademacher_moment, khintchine_moment, suprema_bound_check
from .nlw import (
    Forcing,
    SolverError,
    SolverState,
    energy_increment_residual,
    increment_ledger,
    induction_constant,
    integrate,
    local_increment_check,
    self_convergence_order,
    write_ledger_csv,
)
from .outputs import OutputSink, RunManifest, Series
from .partitions import build_window, cell_multiplier
from .propagate import dispersive_decay_profile, fit_loglog, free_evolution, windowed_sample
from .randomize import RandomizationPlan, band_members, sample_coefficients, to_sign_form
from .spectral import GridSpec, RealField, fft, ifft
from .wavepackets import (
    AmplitudeBin,
    ConeRegion,
    Tube,
    almost_orthogonality_constant,
    bin_amplitudes,
    cover_cone,
    cover_cubes,
    decompose,
    decompose_band,
    greedy_bushes,
    off_tube_amplitude,
    packet_count_constant,
    sqrt_cancellation_stat,
    wp_norm,
    write_partition_csv,
)

__all__ = [
    "REGISTRY",
    "run",
    "rng_for",
    "bump",
    "ray_datum",
    "rough_datum",
    "coincident_bush",
    "random_tube_instance",
    "data_packet_instance",
    "solver_reference_data",
    "cover_point_test",
    "ledger_trajectory",
    "local_increment_trajectory",
]

_DOMAIN_EXP = 0x5750_4C45


def rng_for(seed: int, tag: int) -> np.random.Generator:
    """Philox stream for (seed, tag); tags keep experiment streams apart."""
    seed = int(seed) & (2**64 - 1)
    ss = np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, _DOMAIN_EXP, tag])
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# Scenario builders
# ---------------------------------------------------------------------------


def _field(grid: GridSpec, vals: np.ndarray) -> RealField:
    return RealField(grid, np.broadcast_to(vals, grid.shape).copy())


def bump(grid: GridSpec, radius: float, center: Sequence[float] | None = None) -> np.ndarray:
    """exp(-1/(1 - r^2/radius^2)) inside the ball, zero outside."""
    X = grid.coords()
    c = center if center is not None else (0.0,) * grid.d
    r2 = sum((X[i] - c[i]) ** 2 for i in range(grid.d))
    u = r2 / radius**2
    return np.where(u < 1, np.exp(-1 / np.maximum(1 - u, 1e-300)), 0.0)


def ray_datum(grid: GridSpec, s: float, radius: float = 2.0, terms: int = 40) -> RealField:
    """Compact bump times sum_j j^{-s-1/2} cos(j x_1): roughly H^s with spectrum along one axis."""
    X = grid.coords()
    ser = sum(j ** (-s - 0.5) * np.cos(j * X[0]) for j in range(1, terms))
    return _field(grid, bump(grid, radius) * ser)


def rough_datum(grid: GridSpec, s: float, rng: np.random.Generator, cutoff: float = 9.0,
                envelope: float = 50.0, peak: float = 0.8) -> RealField:
    """Noise with spectrum (1 + |xi|)^{-s-1} below ``cutoff``, under a wide Gaussian, scaled to ``peak``."""
    X = grid.coords()
    r = grid.abs_freq()
    Fh = fft(grid, rng.standard_normal(grid.shape)) * (1 + r) ** (-s - 1) * (r <= cutoff)
    f = ifft(grid, Fh).real * np.exp(-sum(x**2 for x in X) / envelope)
    return RealField(grid, peak * f / np.abs(f).max())


def coincident_bush(grid: GridSpec, N: int, size: int, rng: np.random.Generator) -> list:
    """``size`` unit-norm packets at l = 0 with distinct frequencies drawn from band N."""
    X = grid.coords()
    ks = band_members(grid.d, N)
    if size > len(ks):
        raise ValueError(f"band {N} has only {len(ks)} cells, asked for {size}")
    sel = ks[rng.choice(len(ks), size, replace=False)]
    out = []
    for k in sel:
        u = np.exp(1j * sum(k[i] * X[i] for i in range(grid.d)))
        p = decompose(fft(grid, u), tuple(int(c) for c in k), grid=grid, cells=[(0,) * grid.d])[0]
        p.coeffs /= p.norm
        p.norm = 1.0
        out.append(p)
    return out


def random_tube_instance(rng: np.random.Generator, N: int, d: int = 2, max_tubes: int = 200,
                         min_tubes: int = 20, spread: int = 12) -> list[Tube]:
    """Random tubes of band N with centers near the origin and random half-wave signs."""
    n = int(rng.integers(min_tubes, max_tubes + 1))
    tubes = []
    for _ in range(n):
        k = tuple(int(c) for c in rng.integers(-N, N + 1, d))
        while max(map(abs, k)) <= N // 2:
            k = tuple(int(c) for c in rng.integers(-N, N + 1, d))
        l = tuple(int(c) for c in rng.integers(-spread, spread + 1, d))
        tubes.append(Tube(k, l, int(rng.choice([1, -1])), 0.0, N))
    return tubes


def data_packet_instance(grid: GridSpec, N: int, rng: np.random.Generator, tol: float = 3e-2,
                         n_cells: int = 2) -> tuple[list, float]:
    """Packets of a rough compact datum at a few cells of band N, and the datum's l2 mass there."""
    X = grid.coords()
    ks = band_members(grid.d, N)
    ks = ks[rng.choice(len(ks), n_cells, replace=False)]
    r = rng.uniform(1.0, 2.0)
    c = rng.uniform(-4, 4, grid.d)
    B = np.maximum(1 - sum((X[i] - c[i]) ** 2 for i in range(grid.d)) / r**2, 0) ** 3
    Gh = fft(grid, B * rng.standard_normal(grid.shape))
    packets, total = [], 0.0
    for k in ks:
        F = Gh * cell_multiplier(grid, tuple(int(a) for a in k))
        total += float(np.sum(np.abs(F) ** 2)) * grid.dxi**grid.d
        packets += decompose(F, tuple(int(a) for a in k), grid=grid, tol=tol)
    return packets, total


def solver_reference_data(grid: GridSpec, amplitude: float = 1.0) -> tuple[RealField, RealField]:
    """Smooth off-center data with nonzero velocity for the solver checks."""
    X = grid.coords()
    x, y = X[0], X[1] if grid.d > 1 else 0.0
    v0 = 2.0 * amplitude * np.exp(-((x - 1) ** 2 + y**2) / 4)
    v1 = 0.5 * amplitude * x * np.exp(-(x**2 + (y - 1) ** 2) / 6)
    return _field(grid, v0), _field(grid, v1)


def cover_point_test(R: int, N: int, samples: int, rng: np.random.Generator, d: int = 2) -> dict:
    """Point tests for the cover of K^R_{0,0} by the cones K^N returned by cover_cone.

    Containment samples points inside randomly chosen small cones and checks they
    lie in K^R; coverage samples points of K^R and checks each lies in some K^N.
    """
    big = ConeRegion("truncated", 0.0, (0.0,) * d, R)
    cones = cover_cone(R, 0.0, (0.0,) * d, N)
    t0s = np.array([c.t0 for c in cones])
    ys = np.array([c.x0 for c in cones])
    # containment
    pick = rng.integers(0, len(cones), samples)
    ts = t0s[pick] + rng.uniform(0, N, samples)
    rad = 2 * N - (ts - t0s[pick])
    xs = ys[pick] + rng.uniform(-1, 1, (samples, d)) * rad[:, None]
    contain_fail = int(np.count_nonzero(~big.contains(ts, xs)))
    # coverage
    tb = rng.uniform(0, R, samples)
    xb = rng.uniform(-1, 1, (samples, d)) * (2 * R - tb)[:, None]
    covered = np.zeros(samples, dtype=bool)
    for c in cones:
        covered |= c.contains(tb, xb)
    return {"R": R, "N": N, "cones": len(cones), "samples": samples,
            "containment_failures": contain_fail, "coverage_failures": int(np.count_nonzero(~covered))}


def ledger_trajectory(grid: GridSpec, s: float, t_end: float, *, seed: int = 11, datum_seed: int = 3,
                      law: str = "gaussian", top_band: int = 8, peak: float = 0.8, dt_factor: float = 8.0,
                      record_every: int = 2):
    """Forced NLW driven by the free wave of a randomised rough datum."""
    f0 = rough_datum(grid, s, np.random.default_rng(datum_seed), peak=peak)
    sf = to_sign_form(f0, None, sample_coefficients(law, seed, grid.d),
                      band=lambda k: np.abs(k).max(axis=1) <= top_band)
    F = Forcing.from_sign_form(sf)
    v0 = _field(grid, 0.5 * bump_gauss(grid, (1.0,) + (0.0,) * (grid.d - 1), 6.0))
    return integrate(SolverState.from_data(v0, None, F), t_end, grid.h / dt_factor, record_every=record_every)


def bump_gauss(grid: GridSpec, center: Sequence[float], width: float) -> np.ndarray:
    X = grid.coords()
    return np.exp(-sum((X[i] - center[i]) ** 2 for i in range(grid.d)) / width)


def local_increment_trajectory(grid: GridSpec, t_end: float, *, seed: int = 7, dt_factor: float = 8.0,
                               record_every: int = 2):
    """Forced NLW with low-frequency random forcing (bands 1 and 2) and an off-center bump."""
    f0 = _field(grid, bump_gauss(grid, (0.0,) * grid.d, 8.0))
    sf = to_sign_form(f0, None, sample_coefficients("gaussian", seed, grid.d),
                      band=lambda k: np.abs(k).max(axis=1) <= 2)
    F = Forcing.from_sign_form(sf)
    v0 = _field(grid, 0.5 * bump_gauss(grid, (3.0,) + (0.0,) * (grid.d - 1), 6.0))
    return integrate(SolverState.from_data(v0, None, F), t_end, grid.h / dt_factor, record_every=record_every)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def exp_partition_check(cfg: ExperimentConfig, sink: OutputSink) -> dict:
    w = build_window()
    rows = []
    for d in (1, 2, 3):
        pts = rng_for(cfg.seed, 1 + d).uniform(-8, 8, (cfg.samples, d))
        rows.append({"d": d, "samples": cfg.samples, "max_error": w.partition_error(pts)})
    sink.csv("partition.csv", ["d", "samples", "max_error"], rows)
    sink.plot("partition.svg", [Series([r["d"] for r in rows], [max(r["max_error"], 1e-17) for r in rows],
                                       "max error", fit=False)],
              "partition of unity", "dimension d", "max |sum phi - 1|", logx=False)
    return {"max_error": max(r["max_error"] for r in rows)}


def exp_dispersive_decay(cfg: ExperimentConfig, sink: OutputSink) -> dict:
    rows, fits, series = [], [], []
    target = -(cfg.d - 1) / 2
    for N in cfg.bands:
        if cfg.M > N:
            raise ValueError(f"M = {cfg.M} exceeds band {N}")
        k = (N,) + (0,) * (cfg.d - 1)
        times = np.geomspace(1.0, N, cfg.n_times)
        prof = dispersive_decay_profile(k, cfg.M, N, times, L=cfg.L)
        fit = prof.fit(1.0, N)
        for t, r, e in zip(prof.times, prof.ratios, prof.envelope):
            rows.append({"N": N, "M": cfg.M, "t": float(t), "ratio": float(r), "envelope": float(e)})
        fits.append({"N": N, "M": cfg.M, "slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2,
                     "target": target})
        series.append(Series(prof.times, prof.ratios, f"N={N}"))
    sink.csv("decay.csv", ["N", "M", "t", "ratio", "envelope"], rows)
    sink.csv("decay_fit.csv", ["N", "M", "slope", "intercept", "r2", "target"], fits)
    sink.plot("decay.svg", series, f"dispersive decay, d={cfg.d}, M={cfg.M}", "t", "sup|u| / |f|_1",
              reference_slope=target)
    return {f"slope_N{f['N']}": f["slope"] for f in fits} | {"target": target}


def exp_strichartz_mc(cfg: ExperimentConfig, sink: OutputSink) -> dict:
    g = cfg.grid()
    plan = RandomizationPlan(ray_datum(g, cfg.s, cfg.radius))
    rows, med = [], []
    for N in cfg.bands:
        st = windowed_sample(plan, range(cfg.seed, cfg.seed + cfg.ensemble), N, cfg.q, cfg.p,
                             [np.linspace(0, N / 4, cfg.n_times)], law=cfg.law)[0]
        qs = st.quantiles()
        rows.append({"N": N, "q10": qs[0.1], "median": qs[0.5], "q90": qs[0.9], "seeds": cfg.ensemble,
                     "conforming": st.conforming})
        med.append(qs[0.5])
    fit = fit_loglog(cfg.bands, med)
    target = 1 / cfg.q - cfg.s
    sink.csv("strichartz.csv", ["N", "q10", "median", "q90", "seeds", "conforming"], rows)
    sink.csv("strichartz_fit.csv", ["slope", "intercept", "r2", "target"],
             [{"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2, "target": target}])
    sink.plot("strichartz.svg", [Series(cfg.bands, med, "median")], "ensemble median mixed norm", "N",
              "median norm", reference_slope=target)
    return {"slope": fit.slope, "target": target}


def exp_longtime_decay(cfg: ExperimentConfig, sink: OutputSink) -> dict:
    g = cfg.grid()
    N = cfg.bands[0]
    plan = RandomizationPlan(_field(g, bump(g, cfg.radius)))
    Ts = [r * N for r in cfg.T_ratios]
    samples = windowed_sample(plan, range(cfg.seed, cfg.seed + cfg.ensemble), N, cfg.q, cfg.p,
                              [np.linspace(T, 2 * T, cfg.n_times) for T in Ts], law=cfg.law)
    rows, med = [], []
    for r, T, st in zip(cfg.T_ratios, Ts, samples):
        qs = st.quantiles()
        rows.append({"T_over_N": r, "T": T, "q10": qs[0.1], "median": qs[0.5], "q90": qs[0.9],
                     "seeds": cfg.ensemble})
        med.append(qs[0.5])
    fit = fit_loglog(Ts, med)
    d = cfg.d
    inv_p = 0.0 if math.isinf(cfg.p) else 1 / cfg.p
    target = 1 / cfg.q + (d - 1) * inv_p - (d - 1) / 2
    sink.csv("longtime.csv", ["T_over_N", "T", "q10", "median", "q90", "seeds"], rows)
    sink.csv("longtime_fit.csv", ["slope", "intercept", "r2", "target"],
             [{"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2, "target": target}])
    sink.plot("longtime.svg", [Series(Ts, med, "median")], f"long-time decay, N={N}", "T", "median norm on [T, 2T]",
              reference_slope=target)
    return {"slope": fit.slope, "target": target}


def exp_khintchine_mc(cfg: ExperimentConfig, sink: OutputSink) -> dict:
    rows, worst = [], 0.0
    for n in cfg.lengths:
        a = rng_for(cfg.seed, 100 + n).standard_normal(n)
        for law in cfg.laws:
            rep = khintchine_moment(a, law, list(cfg.ps), cfg.trials, seed=cfg.seed + n)
            worst = max(worst, float(rep.ratio.max()))
            for r in rep.rows():
                rows.append({"length": n, **r})
    sink.csv("khintchine.csv", ["length", "law", "p", "trials", "estimate", "ratio", "ci_lo", "ci_hi"], rows)
    rep = khintchine_moment([1.0] * 4, "rademacher", 4.0, cfg.trials, seed=cfg.seed, bootstrap=200)
    exact = exact_rademacher_moment([1.0] * 4, 4.0)
    z = (rep.estimate[0] - exact) / rep.stderr[0] if rep.stderr[0] > 0 else 0.0
    sink.csv("oracle.csv", ["p", "estimate", "stderr", "ci_lo", "ci_hi", "exact", "z"],
             [{"p": 4.0, "estimate": float(rep.estimate[0]), "stderr": float(rep.stderr[0]),
               "ci_lo": float(rep.ci_lo[0]), "ci_hi": float(rep.ci_hi[0]), "exact": exact, "z": float(z)}])
    sup = suprema_bound_check((10, 100, 1000), cfg.law, min(cfg.trials, 20_000), seed=cfg.seed)
    sink.csv("suprema.csv", ["law", "J", "mean_max", "ratio"],
             [{"law": sup.law, "J": int(J), "mean_max": float(m), "ratio": float(r)}
              for J, m, r in zip(sup.J, sup.mean_max, sup.ratio)])
    series = []
    for law in cfg.laws:
        sel = [r for r in rows if r["law"] == law and r["length"] == cfg.lengths[-1]]
        series.append(Series([r["p"] for r in sel], [r["ratio"] for r in sel], law, fit=False))
    sink.plot("khintchine.svg", series, f"moment ratio, length {cfg.lengths[-1]}", "p",
              "estimate / (sqrt(p) |a|_2)")
    return {"worst_ratio": worst, "p4_estimate": float(rep.estimate[0]), "p4_exact": exact, "p4_z": float(z),
            "suprema_max_ratio": sup.max_ratio}


def exp_wavepacket_decompose(cfg: ExperimentConfig, sink: OutputSink) -> dict:
    g = cfg.grid()
    N = cfg.bands[0]
    rng = rng_for(cfg.seed, 7)
    X = g.coords()
    r2 = sum(x**2 for x in X)
    f = np.exp(-sum((X[i] - (1.0 if i == 0 else -2.0)) ** 2 for i in range(g.d)) / 8)
    f = f * (1 + 0.3 * rng.standard_normal(g.shape)) * np.exp(-r2 / 30)
    k = (3 * N // 4, N // 4 + 1) + (0,) * (g.d - 2)
    F = fft(g, f) * cell_multiplier(g, k)
    packets = decompose(F, k, t0=0.0, sign=1, grid=g)
    S = sum(p.spectrum() for p in packets)
    recon = float(np.abs(S - F).max() / np.abs(F).max())
    total = math.sqrt(float(np.sum(np.abs(F) ** 2)) * g.dxi**g.d)
    ao = almost_orthogonality_constant(packets, total)
    big = max(packets, key=lambda p: p.norm)
    off = off_tube_amplitude(big, np.linspace(0, N, 5), 8.0)
    sink.csv("packets.csv", [f"l{i + 1}" for i in range(g.d)] + ["norm"],
             [list(p.l) + [p.norm] for p in sorted(packets, key=lambda p: p.l)])
    summary = {"k": list(k), "packets": len(packets), "reconstruction": recon, "almost_orthogonality": ao,
               "off_tube_rel_packet": off / big.norm, "off_tube_rel_total": off / total}
    sink.csv("decompose.csv", ["packets", "reconstruction", "almost_orthogonality", "off_tube_rel_packet",
                               "off_tube_rel_total"], [summary])
    dist = [1.0, 2.0, 4.0, 8.0, 12.0]
    amps = [off_tube_amplitude(big, np.linspace(0, N, 5), r) / big.norm for r in dist]
    sink.csv("off_tube.csv", ["distance", "relative_amplitude"], list(zip(dist, amps)))
    sink.plot("off_tube.svg", [Series(dist, amps, "largest packet")], "amplitude outside the fattened tube",
              "distance", "sup / packet norm")
    return summary


def exp_bush_partition(cfg: ExperimentConfig, sink: OutputSink) -> dict:
    N = cfg.bands[0]
    d = cfg.d
    cover = cover_cubes(ConeRegion("truncated", 0.0, (0.0,) * d, N), cfg.delta)
    rng = rng_for(cfg.seed, 8)
    rows, first = [], None
    for i in range(cfg.instances):
        tubes = random_tube_instance(rng, N, d)
        part = greedy_bushes(AmplitudeBin(0, tubes, N, 0.0, (0,) * d, 1), cover)
        v = part.verify()
        if first is None:
            first = part
        rows.append({"instance": i, "tubes": len(tubes), "mu": part.mu, "bushes": part.J,
                     "residual": len(part.residual), "partition": v["partition"], "bush_size": v["bush_size"],
                     "residual_incidence": v["residual"], "anchor": v["anchor"],
                     "max_residual_incidence": v["max_residual_incidence"]})
    sink.csv("instances.csv", list(rows[0]) if rows else ["instance"], rows)
    if first is not None:
        write_partition_csv(sink.path("partition_instance0.csv"), [first])
        sink.register(sink.path("partition_instance0.csv"))
    # packet-count constant on packets of actual data
    g = cfg.grid()
    consts = []
    for j in range(max(1, min(5, cfg.instances // 10))):
        pk, tot = data_packet_instance(g, N, rng_for(cfg.seed, 900 + j))
        consts.append({"instance": j, "packets": len(pk), "constant": packet_count_constant(pk, N, tot)})
    sink.csv("count_constant.csv", ["instance", "packets", "constant"], consts)
    sink.plot("bushes.svg", [Series([r["tubes"] for r in rows], [max(r["bushes"], 0.5) for r in rows],
                                    "bushes", fit=False)], "greedy bushes per instance", "tubes", "bushes")
    ok = all(r["partition"] and r["bush_size"] and r["residual_incidence"] and r["anchor"] for r in rows)
    return {"all_verified": ok, "instances": len(rows), "max_count_constant": max(c["constant"] for c in consts)}


def exp_sqrt_cancel(cfg: ExperimentConfig, sink: OutputSink) -> dict:
    g = cfg.grid()
    N = cfg.bands[0]
    rng = rng_for(cfg.seed, 9)
    seeds = range(cfg.seed, cfg.seed + cfg.ensemble)
    times = np.linspace(0, N, cfg.n_times)
    rows = []
    for nb in cfg.sizes:
        pk = coincident_bush(g, N, nb, rng)
        st = sqrt_cancellation_stat(pk, seeds, times, math.sqrt(nb))
        # random over deterministic sup, and the sup normalised by sqrt(#B)
        rel = st.median_relative
        rows.append({"size": nb, "median_ratio": rel, "scaled_ratio": rel * math.sqrt(nb),
                     "normalized_stat": st.median_ratio, "deterministic": st.deterministic})
    sink.csv("sqrt_cancel.csv", ["size", "median_ratio", "scaled_ratio", "normalized_stat", "deterministic"], rows)
    sink.plot("sqrt_cancel.svg", [Series(cfg.sizes, [r["median_ratio"] for r in rows], "random / deterministic")],
              "square-root cancellation", "#B", "median sup ratio", reference_slope=-0.5)
    stats = [r["normalized_stat"] for r in rows]
    return {"scaled_ratios": [r["scaled_ratio"] for r in rows], "stat_spread": max(stats) / min(stats)}


def exp_wp_norm(cfg: ExperimentConfig, sink: OutputSink) -> dict:
    g = cfg.grid()
    X = g.coords()
    f0 = _field(g, bump(g, cfg.radius) * np.cos(3 * X[0] + (X[1] if g.d > 1 else 0.0)))
    coeffs = sample_coefficients(cfg.law, cfg.seed, g.d)
    top = max(cfg.bands)
    band = lambda k: np.abs(k).max(axis=1) <= top  # noqa: E731
    tol = 1e-2
    sf = to_sign_form(f0, None, coeffs, band=band)
    # put the largest packet at norm `amplitude` so the admissible bins are populated
    peak = max((p.norm for N in cfg.bands for p in decompose_band(sf, N, 0.0, 1, tol=tol)), default=0.0)
    if peak > 0:
        sf = to_sign_form(f0.scale(cfg.amplitude / peak), None, coeffs, band=band)
    rep = wp_norm(sf, cfg.bands, delta=cfg.delta, theta=cfg.theta, C_d=cfg.C_d, packet_tol=tol, report=True)
    sink.csv("wp_norm_terms.csv", ["N", "m", "bush", "residual", "weight"], rep.terms)
    sink.csv("wp_norm.csv", ["value", "terms"], [{"value": rep.value, "terms": len(rep.terms)}])
    pts = [t for t in rep.terms if t["bush"] > 0]
    sink.plot("wp_norm.svg", [Series([t["N"] for t in pts], [t["bush"] for t in pts], "bush sup", fit=False)],
              "wave packet norm terms", "N", "normalised sup")
    return {"value": rep.value, "terms": len(rep.terms)}


def exp_nlw_energy(cfg: ExperimentConfig, sink: OutputSink) -> dict:
    g = cfg.grid()
    v0, v1 = solver_reference_data(g, cfg.amplitude)
    st = SolverState.from_data(v0, v1)
    dt = g.h / cfg.dt_factor
    tr = integrate(st, cfg.t_max, dt, record_every=cfg.record_every)
    E = tr.energies()
    drift = float(np.abs(E - E[0]).max() / E[0])
    sink.csv("energy.csv", ["t", "energy", "relative_drift"],
             [(float(t), float(e), float(abs(e - E[0]) / E[0])) for t, e in zip(tr.times, E)])
    order, errs = self_convergence_order(st, cfg.t_max, g.h / 4)
    a = 1e-4
    small = integrate(SolverState.from_data(v0.scale(a), v1.scale(a)), cfg.t_max, dt)
    fe = free_evolution(v0.scale(a), v1.scale(a), cfg.t_max, allow_mean=True)
    free_gap = float(np.abs(small.v[-1] - fe.values).max() / a)
    X = g.coords()
    forcing = Forcing.free_wave(_field(g, 0.3 * np.exp(-sum(x**2 for x in X) / 3)))
    fst = SolverState.from_data(v0, v1, forcing)
    steps = [g.h / 4, g.h / 8, g.h / 16]
    res = [energy_increment_residual(integrate(fst, cfg.t_max, s), 0.0, cfg.t_max) for s in steps]
    orders = [math.log2(res[i] / res[i + 1]) for i in range(len(res) - 1)]
    sink.csv("convergence.csv", ["dt", "increment_residual"], list(zip(steps, res)))
    sink.csv("solver_summary.csv", ["drift", "self_convergence_order", "free_gap", "residual_order_min"],
             [(drift, order, free_gap, min(orders))])
    sink.plot("increment_residual.svg", [Series(steps, res, "residual")], "total-increment residual", "dt",
              "|residual|", reference_slope=4.0)
    if cfg.checkpoint_every:
        man = tr.save_checkpoints(sink.path("checkpoints"), cfg.seed, cfg.checkpoint_every)
        for p in sorted(man.parent.iterdir()):
            sink.register(p)
    return {"drift": drift, "self_convergence_order": order, "self_convergence_errors": errs,
            "free_gap": free_gap, "residual_orders": orders}


def exp_increment_ledger(cfg: ExperimentConfig, sink: OutputSink) -> dict:
    g = cfg.grid()
    tr = ledger_trajectory(g, cfg.s, cfg.t_max, seed=cfg.seed, law=cfg.law, top_band=max(cfg.bands),
                           peak=cfg.amplitude, dt_factor=cfg.dt_factor, record_every=cfg.record_every)
    rows = increment_ledger(tr, cfg.bands, R=cfg.R, delta=cfg.delta, theta=cfg.theta, s=cfg.s, eta=cfg.eta)
    write_ledger_csv(sink.path("ledger.csv"), rows)
    sink.register(sink.path("ledger.csv"))
    loc = []
    for N in cfg.bands:
        for cone in cover_cone(cfg.R, 0.0, (0.0,) * g.d, N):
            if cone.t0 / N > math.floor(N**cfg.theta) or cone.t0 + N > cfg.t_max + 1e-9:
                continue
            r = local_increment_check(tr, cone)
            loc.append({"scale": N, "t0": cone.t0, **{f"x0_{i + 1}": c for i, c in enumerate(cone.x0)},
                        "sup_energy": r.sup_energy, "bound": r.bound, "excess": r.excess})
    if loc:
        sink.csv("local_increment.csv", list(loc[0]), loc)
    per = {N: max(r.ratio for r in rows if r.N == N) for N in cfg.bands if any(r.N == N for r in rows)}
    sink.plot("ledger.svg", [Series(list(per), list(per.values()), "max ratio")], "increment ledger", "N",
              "max lhs / rhs")
    out = {"max_ratio": {str(k): v for k, v in per.items()},
           "spread": max(per.values()) / min(per.values()) if per and min(per.values()) > 0 else math.inf,
           "max_local_excess": max((r["excess"] for r in loc), default=0.0)}
    if cfg.c1_probe:
        out["c1_probe"] = induction_constant(tr, cfg.R)
    return out


def exp_cone_cover(cfg: ExperimentConfig, sink: OutputSink) -> dict:
    rows = []
    for N in cfg.bands:
        rows.append(cover_point_test(cfg.R, N, cfg.samples, rng_for(cfg.seed, 12 + N), cfg.d))
    sink.csv("cone_cover.csv", ["R", "N", "cones", "samples", "containment_failures", "coverage_failures"], rows)
    cubes = []
    for N in cfg.bands:
        cov = cover_cubes(ConeRegion("truncated", 0.0, (0.0,) * cfg.d, N), cfg.delta)
        cubes.append({"N": N, "side": cov.side, "cubes": cov.n_cubes})
    sink.csv("cube_cover.csv", ["N", "side", "cubes"], cubes)
    sink.plot("cones.svg", [Series([r["N"] for r in rows], [r["cones"] for r in rows], "cones")],
              f"cones covering K^{cfg.R}", "N", "number of cones")
    return {"failures": sum(r["containment_failures"] + r["coverage_failures"] for r in rows)}


REGISTRY: dict[str, Callable[[ExperimentConfig, OutputSink], dict]] = {
    "partition-check": exp_partition_check,
    "dispersive-decay": exp_dispersive_decay,
    "strichartz-mc": exp_strichartz_mc,
    "longtime-decay": exp_longtime_decay,
    "khintchine-mc": exp_khintchine_mc,
    "wavepacket-decompose": exp_wavepacket_decompose,
    "bush-partition": exp_bush_partition,
    "sqrt-cancel": exp_sqrt_cancel,
    "wp-norm": exp_wp_norm,
    "nlw-energy": exp_nlw_energy,
    "increment-ledger": exp_increment_ledger,
    "cone-cover": exp_cone_cover,
}

def run(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> RunManifest:
    """Execute one experiment; the manifest records outputs, timings and any failure."""
    sink = OutputSink(out_dir if out_dir is not None else cfg.out_dir)
    man = RunManifest(cfg.experiment, cfg.echo(), __version__)
    t = time.perf_counter()
    try:
        man.summary = REGISTRY[cfg.experiment](cfg, sink)
    except Exception as exc:  # recorded, outputs so far are kept
        man.status = "failed"
        man.error = f"{type(exc).__name__}: {exc}"
        man.summary = {"traceback": traceback.format_exc(limit=4)}
    man.timings = {"wall_seconds": time.perf_counter() - t}
    man.outputs = sink.checksums()
    man.write(sink.root / "manifest.json")
    return man
