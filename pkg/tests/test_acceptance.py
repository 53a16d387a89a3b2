"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line with the measured values.

Most criteria run the experiment pipeline end to end (the same code path as the
command line) and check the numbers recorded in the run manifest.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from wavepacket_lab.config import load_config
from wavepacket_lab.experiments import local_increment_trajectory, run
from wavepacket_lab.nlw import flux, local_increment_check
from wavepacket_lab.propagate import half_wave
from wavepacket_lab.spectral import GridSpec, RealField, lebesgue_norm
from wavepacket_lab.wavepackets import cover_cone

pytestmark = pytest.mark.acceptance


def _report(num: int, title: str, checks: dict, elapsed: float, budget: float) -> None:
    checks = dict(checks)
    checks[f"runtime {elapsed:.1f} s < {budget:g} s"] = elapsed < budget
    ok = all(checks.values())
    detail = "; ".join(f"{k} [{'ok' if v else 'fail'}]" for k, v in checks.items())
    line = f"criterion {num:2d} {'PASS' if ok else 'FAIL'}: {title}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def _run(experiment: str, tmp_path, **overrides) -> tuple[dict, float]:
    cfg = load_config(None, experiment, out=str(tmp_path / experiment), **overrides)
    t = time.perf_counter()
    man = run(cfg)
    elapsed = time.perf_counter() - t
    assert man.status == "ok", man.error
    return man.summary, elapsed


def test_c01_partition_of_unity(tmp_path):
    s, el = _run("partition-check", tmp_path, samples=100_000)
    _report(1, "partition of unity", {f"max error {s['max_error']:.2e} <= 1e-10": s["max_error"] <= 1e-10}, el, 10)


def test_c02_unitarity_and_group_law():
    t0 = time.perf_counter()
    g = GridSpec(2, 256, 8 * math.pi)
    rng = np.random.default_rng(2)
    worst_u = worst_g = 0.0
    for _ in range(100):
        f = RealField(g, rng.standard_normal(g.shape))
        s, t = rng.uniform(-20, 20, 2)
        n0 = lebesgue_norm(f, 2)
        us = half_wave(f, s)
        worst_u = max(worst_u, abs(lebesgue_norm(us, 2) - n0) / n0)
        diff = RealField(g, half_wave(us, t).values - half_wave(f, s + t).values, real=False)
        worst_g = max(worst_g, lebesgue_norm(diff, 2) / n0)
    _report(2, "propagator unitarity and group law",
            {f"norm deviation {worst_u:.1e} <= 1e-10": worst_u <= 1e-10,
             f"group law deviation {worst_g:.1e} <= 1e-10": worst_g <= 1e-10},
            time.perf_counter() - t0, 30)


def test_c03_refined_dispersive_decay(tmp_path):
    checks, total = {}, 0.0
    for d, target, tol in ((2, -0.5, 0.1), (3, -1.0, 0.15)):
        s, el = _run("dispersive-decay", tmp_path / f"d{d}", d=d, bands=(8, 16), M=1)
        total += el
        for N in (8, 16):
            slope = s[f"slope_N{N}"]
            checks[f"d={d} N={N} slope {slope:.3f} vs {target}"] = abs(slope - target) <= tol
    _report(3, "refined dispersive decay at M = 1", checks, total, 120)


def test_c04_probabilistic_strichartz_slope(tmp_path):
    s, el = _run("strichartz-mc", tmp_path, d=2, s=0.9, q=2.0, p=4.0, bands=(4, 8, 16, 32), ensemble=64)
    _report(4, "probabilistic Strichartz slope",
            {f"slope {s['slope']:.3f} vs {s['target']:.2f} +-0.15": abs(s["slope"] - s["target"]) <= 0.15}, el, 300)


def test_c05_long_time_decay_slope(tmp_path):
    s, el = _run("longtime-decay", tmp_path, d=3, q=2.0, p=math.inf, T_ratios=(1.0, 2.0, 4.0, 8.0), ensemble=32)
    _report(5, "long-time decay slope",
            {f"slope {s['slope']:.3f} vs {s['target']:.2f} +-0.2": abs(s["slope"] - s["target"]) <= 0.2}, el, 300)


def test_c06_khintchine(tmp_path):
    s, el = _run("khintchine-mc", tmp_path, ps=(2.0, 4.0, 8.0, 16.0), trials=100_000,
                 laws=("rademacher", "gaussian", "uniform"))
    _report(6, "Khintchine moments",
            {f"worst ratio {s['worst_ratio']:.3f} <= 3": s["worst_ratio"] <= 3,
             f"p=4 oracle z {s['p4_z']:.2f} within 3 sigma": abs(s["p4_z"]) <= 3}, el, 60)


def test_c07_wave_packets(tmp_path):
    s, el = _run("wavepacket-decompose", tmp_path, d=2, bands=(16,))
    _report(7, "wave packet decomposition",
            {f"reconstruction {s['reconstruction']:.1e} <= 1e-10": s["reconstruction"] <= 1e-10,
             f"almost orthogonality {s['almost_orthogonality']:.3f} <= 4": s["almost_orthogonality"] <= 4,
             f"off-tube {s['off_tube_rel_packet']:.2e} <= 1e-3": s["off_tube_rel_packet"] <= 1e-3}, el, 60)


def test_c08_bush_partition(tmp_path):
    s, el = _run("bush-partition", tmp_path, instances=50)
    _report(8, "bush partition",
            {f"{s['instances']} instances verified": s["all_verified"] and s["instances"] == 50,
             f"count constant {s['max_count_constant']:.2f} <= 8": s["max_count_constant"] <= 8}, el, 60)


def test_c09_square_root_cancellation(tmp_path):
    s, el = _run("sqrt-cancel", tmp_path, sizes=(16, 64, 256))
    sc = s["scaled_ratios"]
    _report(9, "square-root cancellation",
            {f"ratio * sqrt(#B) {', '.join(f'{x:.2f}' for x in sc)} in [1/3, 3]": all(1 / 3 <= x <= 3 for x in sc),
             f"statistic spread {s['stat_spread']:.2f} <= 4": s["stat_spread"] <= 4}, el, 180)


def test_c10_solver(tmp_path):
    s, el = _run("nlw-energy", tmp_path, d=2, n=256, t_max=1.0, dt_factor=8.0)
    ro = min(s["residual_orders"])
    _report(10, "solver accuracy",
            {f"drift {s['drift']:.1e} <= 1e-6": s["drift"] <= 1e-6,
             f"self-convergence order {s['self_convergence_order']:.2f} >= 3.5": s["self_convergence_order"] >= 3.5,
             f"increment residual order {ro:.2f} >= 1.8": ro >= 1.8}, el, 300)


def test_c11_local_energy_increment():
    t0 = time.perf_counter()
    g = GridSpec(2, 256, 24 * math.pi)
    R = 32
    tr = local_increment_trajectory(g, float(R), record_every=2)
    E0 = float(tr.energies()[0])
    tol = 1e-4 * E0
    worst, cones, mono = -math.inf, 0, True
    for N in (8, 16, 32):
        for cone in cover_cone(R, 0.0, (0.0, 0.0), N):
            if cone.t0 / N > math.floor(N ** (1 / 6)):
                continue
            worst = max(worst, local_increment_check(tr, cone).excess)
            cones += 1
        cone = cover_cone(R, 0.0, (0.0, 0.0), N)[0]
        w = float(N) ** 1.0
        vals = [flux(tr, cone, w * f).values for f in (0.5, 1.0, 2.0)]
        mono &= bool(np.all(vals[1] >= vals[0]) and np.all(vals[2] >= vals[1]))
    _report(11, "local energy increment",
            {f"max excess {worst:.1e} <= {tol:.1e} on {cones} cones": worst <= tol,
             "flux nondecreasing in width": mono}, time.perf_counter() - t0, 300)


def test_c12_cone_cover_and_ledger(tmp_path):
    c, el1 = _run("cone-cover", tmp_path, R=32, bands=(8, 16), samples=10_000)
    s, el2 = _run("increment-ledger", tmp_path)
    _report(12, "cone covering and increment ledger",
            {f"point-test failures {c['failures']}": c["failures"] == 0,
             f"ledger ratio spread {s['spread']:.2f} <= 4": s["spread"] <= 4}, el1 + el2, 300)
