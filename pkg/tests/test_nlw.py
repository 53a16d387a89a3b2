import math

import numpy as np
import pytest
from scipy.integrate import quad

from wavepacket_lab.nlw import (
    Forcing,
    SolverError,
    SolverState,
    energy,
    energy_increment_residual,
    flux,
    integrate,
    local_energy,
    self_convergence_order,
    step,
)
from wavepacket_lab.propagate import free_evolution
from wavepacket_lab.spectral import GridSpec, RealField, load_snapshot
from wavepacket_lab.wavepackets import ConeRegion

G1 = GridSpec(1, 128, 8 * math.pi)
G2 = GridSpec(2, 128, 8 * math.pi)


def _gauss(g, amp=0.5, width=2.0, center=None):
    X = g.coords()
    c = center or (0.0,) * g.d
    return RealField(g, amp * np.exp(-sum((X[i] - c[i]) ** 2 for i in range(g.d)) / width**2))


@pytest.mark.parametrize("d,n", [(1, 64), (2, 32)])
def test_energy_of_constant(d, n):
    g = GridSpec(d, n, 8 * math.pi)
    c = 0.7
    st = SolverState.from_data(RealField(g, np.full(g.shape, c)))
    assert energy(st) == pytest.approx((2 * g.L) ** d * c**4 / 4, rel=1e-12)


def test_energy_of_single_mode():
    m = 10 * G1.dxi
    x = G1.coords()[0]
    st = SolverState.from_data(RealField(G1, np.cos(m * x)), RealField(G1, 0.3 * np.sin(m * x)))
    exact = 2 * G1.L * (m**2 / 4 + 3 / 32 + 0.09 / 4)
    assert energy(st) == pytest.approx(exact, rel=1e-10)


def test_unforced_energy_drift_small():
    st = SolverState.from_data(_gauss(G1, 0.8))
    tr = integrate(st, 6.0, G1.h / 8, record_every=8)
    E = tr.energies()
    assert np.max(np.abs(E - E[0])) / E[0] < 1e-6


def test_small_data_follows_free_wave():
    f0 = _gauss(G1, 1e-5)
    tr = integrate(SolverState.from_data(f0), 3.0, G1.h / 4, record_every=10**9)
    ref = free_evolution(f0, None, 3.0).values
    assert np.max(np.abs(tr.v[-1] - ref)) < 1e-12


def test_fourth_order_self_convergence():
    st = SolverState.from_data(_gauss(G1, 1.5, 1.5))
    order, errs = self_convergence_order(st, 2.0, G1.h / 4)
    assert order > 3.3
    assert errs[1] < errs[0]


def test_forced_energy_identity_residual_shrinks():
    f = _gauss(G1, 0.6, 3.0, (2.0,))
    F = Forcing.free_wave(_gauss(G1, 0.4, 2.0))
    st = SolverState.from_data(f, forcing=F)
    res = []
    for rec in (4, 2):
        tr = integrate(st, 2.0, G1.h / 8, record_every=rec)
        res.append(energy_increment_residual(tr, 0.0, 2.0))
    assert res[1] < res[0] / 2.5


def test_step_rejects_large_dt_and_nan():
    st = SolverState.from_data(_gauss(G1))
    with pytest.raises(ValueError):
        step(st, G1.h / 2)
    bad = SolverState(G1, 0.0, np.full(G1.shape, np.nan), np.zeros(G1.shape), Forcing.zero(G1))
    with pytest.raises(SolverError):
        step(bad, G1.h / 8)


def test_blowup_detected():
    st = SolverState.from_data(_gauss(G1, 0.1))
    with pytest.raises(SolverError):
        _force_blowup(st)


def _force_blowup(st):
    F = Forcing.custom(G1, lambda t: np.full(G1.shape, 1e3 * (1 + t)))
    return integrate(SolverState(G1, 0.0, st.v, st.vt, F), 2.0, G1.h / 4, blowup_factor=10.0)


@pytest.fixture(scope="module")
def traj2():
    st = SolverState.from_data(_gauss(G2, 0.3, 2.0))
    return integrate(st, 4.0, G2.h / 4, record_every=1)


def _annulus_area(s, w):
    return math.pi * ((s + w) ** 2 - max(s - w, 0.0) ** 2)


def test_flux_matches_shell_area_oracle(traj2):
    c = 0.7
    vals = np.full(traj2.v.shape, c)
    cone = ConeRegion("truncated", 0.0, (0.0, 0.0), 4)
    at = np.array([0.0, 2.0])
    ax = np.zeros((2, 2))
    rep = flux(traj2, cone, 1.0, anchors=(at, ax), values=vals)
    for tp, got in zip(at, rep.values):
        exact = quad(lambda t: c**4 / 4 * _annulus_area(abs(t - tp), 1.0), 0.0, 4.0, points=[tp, tp + 1])[0]
        assert got == pytest.approx(exact, rel=0.03)


def test_flux_nondecreasing_in_width(traj2):
    cone = ConeRegion("truncated", 0.0, (0.0, 0.0), 4)
    prev = None
    for w in (0.25, 0.5, 1.0, 2.0):
        rep = flux(traj2, cone, w)
        if prev is not None:
            assert np.all(rep.values >= prev - 1e-15)
        prev = rep.values


def test_local_energy_bounded_by_total(traj2):
    cone = ConeRegion("fattened", 0.0, (0.0, 0.0), 4)
    E = energy(traj2.state(0))
    assert local_energy(traj2, cone, 0.0) <= E * (1 + 1e-12)
    with pytest.raises(ValueError):
        local_energy(traj2, ConeRegion("truncated", 0.0, (0.0, 0.0), 1), 3.0)


def test_checkpoint_roundtrip(tmp_path):
    st = SolverState.from_data(_gauss(G1))
    tr = integrate(st, 1.0, G1.h / 4, record_every=4)
    man = tr.save_checkpoints(tmp_path, seed=5, every=2)
    text = man.read_text()
    assert "seed 5" in text and "dt " in text
    back = load_snapshot(tmp_path / "v_00002.wpl1")
    assert np.array_equal(back.values, tr.v[2])
