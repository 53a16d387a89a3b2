import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wavepacket_lab.spectral import (
    BandError,
    GridError,
    GridSpec,
    MixedNormSpec,
    RealField,
    SpectralField,
    Trajectory,
    fft,
    forward_transform,
    ifft,
    inverse_transform,
    lebesgue_norm,
    load_snapshot,
    mixed_norm,
    restrict_coefficients,
    save_snapshot,
    sobolev_norm,
    time_norm,
)


def test_grid_rejects_coarse_frequency_lattice():
    with pytest.raises(GridError):
        GridSpec(2, 64, 4 * math.pi)


def test_grid_rejects_non_power_of_two():
    with pytest.raises(GridError):
        GridSpec(1, 100, 8 * math.pi)


def test_grid_derived_quantities():
    g = GridSpec(2, 128, 8 * math.pi)
    assert g.h == pytest.approx(16 * math.pi / 128)
    assert g.dxi == pytest.approx(1 / 8)
    assert g.nyquist == pytest.approx(128 * math.pi / (16 * math.pi))
    with pytest.raises(BandError):
        g.require_band(g.nyquist + 1)


def test_gaussian_transform_matches_closed_form():
    # e^{-x^2/2} is its own transform under the unitary convention
    g = GridSpec(1, 1024, 16 * math.pi)
    x = g.coords()[0]
    F = fft(g, np.exp(-x**2 / 2))
    xi = g.freqs()[0]
    inner = np.abs(xi) < 10
    exact = np.exp(-xi**2 / 2)
    assert np.max(np.abs(F[inner] - exact[inner])) <= 1e-8 * np.max(exact)


def test_constant_field_concentrates_at_zero():
    g = GridSpec(2, 32, 8 * math.pi)
    F = fft(g, np.ones(g.shape))
    mask = np.ones(g.shape, bool)
    mask[0, 0] = False
    assert np.max(np.abs(F[mask])) < 1e-12 * abs(F[0, 0])


def test_plane_wave_single_coefficient():
    g = GridSpec(2, 32, 8 * math.pi)
    X = g.coords()
    F = fft(g, np.exp(1j * (3 * g.dxi * X[0] - 5 * g.dxi * X[1])))
    big = np.abs(F) > 1e-9 * np.abs(F).max()
    assert big.sum() == 1
    r = g.freqs()
    i = np.argwhere(big)[0]
    assert r[0][i[0], 0] == pytest.approx(3 * g.dxi)
    assert r[1][0, i[1]] == pytest.approx(-5 * g.dxi)


@given(st.integers(0, 2**31 - 1), st.integers(1, 3))
def test_roundtrip(seed, d):
    g = GridSpec(d, 16, 8 * math.pi)
    v = np.random.default_rng(seed).standard_normal(g.shape)
    back = inverse_transform(forward_transform(RealField(g, v)))
    assert back.real
    assert np.max(np.abs(back.values - v)) <= 1e-12 * np.max(np.abs(v))


@given(st.integers(0, 2**31 - 1))
def test_parseval(seed):
    g = GridSpec(2, 32, 8 * math.pi)
    v = np.random.default_rng(seed).standard_normal(g.shape)
    lhs = np.sum(v**2) * g.cell_volume
    rhs = np.sum(np.abs(fft(g, v)) ** 2) * g.dxi**2
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_real_flag_rejects_complex():
    g = GridSpec(1, 16, 8 * math.pi)
    with pytest.raises(ValueError):
        RealField(g, 1j * np.ones(g.shape))
    with pytest.raises(GridError):
        SpectralField(g, np.zeros((8,)))


def test_lebesgue_norm_of_constant():
    g = GridSpec(2, 32, 8 * math.pi)
    f = RealField(g, np.full(g.shape, 2.0))
    vol = (2 * g.L) ** 2
    assert lebesgue_norm(f, 2) == pytest.approx(2 * math.sqrt(vol))
    assert lebesgue_norm(f, math.inf) == 2.0
    assert lebesgue_norm(f, 1) == pytest.approx(2 * vol)


def test_sobolev_norm_of_single_mode():
    g = GridSpec(1, 64, 8 * math.pi)
    x = g.coords()[0]
    m = 8 * g.dxi
    f = RealField(g, np.cos(m * x))
    l2 = lebesgue_norm(f, 2)
    assert sobolev_norm(f, 1.0) == pytest.approx(math.sqrt(1 + m**2) * l2, rel=1e-10)


def test_time_norm_trapezoid_and_sup():
    t = np.linspace(0, 1, 101)
    assert time_norm(t, np.ones_like(t), 2) == pytest.approx(1.0)
    assert time_norm(t, t, math.inf) == 1.0
    assert time_norm(t, t, 1) == pytest.approx(0.5)


def test_mixed_norm_of_separable_trajectory():
    g = GridSpec(1, 32, 8 * math.pi)
    t = np.linspace(0, 2, 201)
    vals = np.outer(t, np.ones(g.n))
    tr = Trajectory(g, t, vals)
    vol = 2 * g.L
    # |t| * vol^{1/2} in space, then L^2 in time over [0, 2]
    exact = math.sqrt(vol) * math.sqrt(8 / 3)
    assert mixed_norm(tr, MixedNormSpec(2, 2)) == pytest.approx(exact, rel=1e-4)


def test_mixed_norm_rejects_bad_exponent():
    with pytest.raises(ValueError):
        MixedNormSpec(0.5, 2)


def test_snapshot_roundtrip_and_header(tmp_path):
    g = GridSpec(2, 16, 8 * math.pi)
    v = np.random.default_rng(1).standard_normal(g.shape)
    p = tmp_path / "a.wpl1"
    save_snapshot(p, RealField(g, v))
    raw = p.read_bytes()
    assert raw[:4] == b"WPL1"
    assert int.from_bytes(raw[4:8], "little") == 2
    assert int.from_bytes(raw[8:12], "little") == 16
    assert raw[20] == 0
    assert len(raw) == 21 + 8 * 256
    back = load_snapshot(p)
    assert back.grid == g and np.array_equal(back.values, v)


def test_snapshot_complex_and_corrupt(tmp_path):
    g = GridSpec(1, 16, 8 * math.pi)
    v = np.random.default_rng(2).standard_normal(16) + 1j
    p = tmp_path / "c.wpl1"
    save_snapshot(p, RealField(g, v, real=False))
    back = load_snapshot(p)
    assert not back.real and np.array_equal(back.values, v)
    p.write_bytes(b"XXXX" + p.read_bytes()[4:])
    with pytest.raises(ValueError):
        load_snapshot(p)


def test_restrict_coefficients_is_exact_for_band_limited():
    big = GridSpec(2, 64, 8 * math.pi)
    small = GridSpec(2, 32, 8 * math.pi)
    X = big.coords()
    v = np.cos(X[0]) * np.sin(0.5 * X[1])
    F = restrict_coefficients(fft(big, v), big, small)
    Xs = small.coords()
    assert np.allclose(ifft(small, F).real, np.cos(Xs[0]) * np.sin(0.5 * Xs[1]), atol=1e-12)
