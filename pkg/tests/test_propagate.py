import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wavepacket_lab.propagate import (
    band_evolution,
    band_free_wave,
    band_velocity,
    dispersive_decay_profile,
    evolve_trajectory,
    fit_loglog,
    free_evolution,
    half_wave,
    long_time_admissible,
    strichartz_sample,
    wave_admissible,
    windowed_sample,
    z_norm,
)
from wavepacket_lab.randomize import RandomizationPlan, sample_coefficients, to_sign_form
from wavepacket_lab.spectral import GridSpec, RealField, lebesgue_norm

G = GridSpec(2, 64, 8 * math.pi)


def _rand(seed):
    return RealField(G, np.random.default_rng(seed).standard_normal(G.shape))


@given(st.integers(0, 2**31), st.floats(-50, 50), st.sampled_from([1, -1]))
def test_half_wave_unitary(seed, t, sign):
    f = _rand(seed)
    u = half_wave(f, t, sign)
    assert abs(lebesgue_norm(u, 2) - lebesgue_norm(f, 2)) <= 1e-12 * lebesgue_norm(f, 2)


@given(st.integers(0, 2**31), st.floats(-20, 20), st.floats(-20, 20))
def test_half_wave_group_law(seed, s, t):
    f = _rand(seed)
    a = half_wave(half_wave(f, s), t).values
    b = half_wave(f, s + t).values
    assert np.max(np.abs(a - b)) <= 1e-11 * np.max(np.abs(f.values))


def test_half_wave_inverse():
    f = _rand(3)
    back = half_wave(half_wave(f, 2.5, 1), 2.5, -1)
    assert np.allclose(back.values, f.values, atol=1e-12)


def test_free_evolution_single_mode():
    g = GridSpec(1, 128, 8 * math.pi)
    x = g.coords()[0]
    m = 12 * g.dxi
    f0 = RealField(g, np.cos(m * x))
    f1 = RealField(g, np.cos(m * x))
    t = 1.7
    u = free_evolution(f0, f1, t)
    exact = (np.cos(m * t) + np.sin(m * t) / m) * np.cos(m * x)
    assert np.max(np.abs(u.values - exact)) < 1e-12


def test_free_evolution_mean_velocity():
    g = GridSpec(1, 64, 8 * math.pi)
    f0 = RealField.zeros(g)
    f1 = RealField(g, np.full(g.shape, 0.5))
    with pytest.raises(ValueError):
        free_evolution(f0, f1, 1.0)
    u = free_evolution(f0, f1, 2.0, allow_mean=True)
    assert np.allclose(u.values, 1.0)


def test_free_evolution_is_sum_of_half_waves():
    f0 = _rand(5)
    t = 0.8
    u = free_evolution(f0, None, t).values
    v = 0.5 * (half_wave(f0, t, 1).values + half_wave(f0, t, -1).values)
    assert np.allclose(u, v.real, atol=1e-12)


def _sign_form():
    g = GridSpec(2, 64, 8 * math.pi)
    X = g.coords()
    r2 = X[0] ** 2 + X[1] ** 2
    f0 = RealField(g, np.exp(-r2 / 16) * np.cos(X[0]))
    f1 = RealField(g, np.exp(-r2 / 16) * np.sin(X[1]))
    return g, f0, f1, to_sign_form(f0, f1, sample_coefficients("rademacher", 2, 2))


def test_band_evolutions_sum_to_free_evolution():
    g, f0, f1, sf = _sign_form()
    d0, d1 = sf.data()
    t = 1.3
    ref = free_evolution(RealField(g, d0), RealField(g, d1), t, allow_mean=True).values
    tot = sum(band_free_wave(sf, N, t) for N in (1, 2, 4))
    assert np.max(np.abs(tot - ref)) < 1e-10 * np.abs(ref).max()
    plus = band_evolution(sf, 2, t, 1).values + band_evolution(sf, 2, t, -1).values
    assert np.allclose(plus.real, band_free_wave(sf, 2, t), atol=1e-12)


def test_band_velocity_matches_difference_quotient():
    _, _, _, sf = _sign_form()
    t, e = 0.9, 1e-5
    fd = (band_free_wave(sf, 2, t + e) - band_free_wave(sf, 2, t - e)) / (2 * e)
    assert np.max(np.abs(fd - band_velocity(sf, 2, t).values)) < 1e-7


def test_evolve_trajectory_shapes():
    f = _rand(1)
    tr = evolve_trajectory(f, [0.0, 0.5, 1.0])
    assert tr.values.shape == (3,) + G.shape


def test_fit_loglog_recovers_power_law():
    x = np.geomspace(1, 100, 9)
    f = fit_loglog(x, 3 * x**-0.7)
    assert f.slope == pytest.approx(-0.7, abs=1e-12)
    assert f.intercept == pytest.approx(math.log(3), abs=1e-12)
    assert f.r2 == pytest.approx(1.0)
    with pytest.raises(ValueError):
        fit_loglog([1.0], [1.0])


def test_admissibility():
    assert not wave_admissible(2, 4, 2)
    assert wave_admissible(2, math.inf, 4)
    assert long_time_admissible(2, math.inf, 3)


def test_decay_envelope_and_slope_at_full_annulus():
    N = 8
    t = np.geomspace(1, 4 * N, 9)
    prof = dispersive_decay_profile((N, 0), N, N, t)
    assert np.all(prof.ratios <= prof.envelope)
    assert prof.fit(2 / N, 4 * N).slope == pytest.approx(-0.5, abs=0.1)


def test_decay_rejects_bad_cell():
    with pytest.raises(ValueError):
        dispersive_decay_profile((2, 0), 1, 8, [1.0])
    with pytest.raises(ValueError):
        dispersive_decay_profile((8, 0), 16, 8, [1.0])


def test_windowed_matches_single_window_sampling():
    g = GridSpec(2, 128, 8 * math.pi)
    X = g.coords()
    f = RealField(g, np.exp(-(X[0] ** 2 + X[1] ** 2)) * np.cos(3 * X[0]))
    plan = RandomizationPlan(f)
    w = [np.linspace(0, 1, 5), np.linspace(1, 2, 5)]
    many = windowed_sample(plan, range(4), 4, 2, 4, w)
    for ts, s in zip(w, many):
        one = strichartz_sample(plan, range(4), 4, 2, 4, ts)
        assert np.allclose(one.values, s.values, rtol=1e-12)
    assert not many[0].conforming
    again = windowed_sample(plan, range(4), 4, 2, 4, w)
    assert np.array_equal(again[0].values, many[0].values)


def test_z_norm_finite_and_nonnegative():
    _, f0, f1, _ = _sign_form()
    z = z_norm(f0, None, [2, 4], t_max=8.0, n_times=5)
    assert np.isfinite(z) and z >= 0
