import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wavepacket_lab.randomize import (
    RandomizationPlan,
    SubGaussianLaw,
    UnitCoefficients,
    band_bounds,
    band_members,
    in_band,
    inverse_gradient,
    microlocal_randomize,
    sample_coefficients,
    tail_norm,
    to_sign_form,
    wiener_randomize,
)
from wavepacket_lab.spectral import GridSpec, RealField, fft

ks = st.lists(st.integers(-20, 20), min_size=2, max_size=2)


@given(ks, ks, st.integers(0, 2**63), st.booleans())
def test_conjugate_symmetry(k, l, seed, cplx):
    c = sample_coefficients("gaussian", seed, 2, complex_valued=cplx)
    a = c.values(np.array([k]), np.array([l]))[0]
    b = c.values(np.array([[-k[0], -k[1]]]), np.array([l]))[0]
    assert b == np.conj(a)


@given(st.integers(0, 2**63), st.sampled_from(["rademacher", "gaussian", "uniform"]))
def test_values_independent_of_batching(seed, law):
    c = sample_coefficients(law, seed, 2)
    rng = np.random.default_rng(seed % 2**32)
    k = rng.integers(-40, 40, (30, 2))
    l = rng.integers(-40, 40, (30, 2))
    batch = c.values(k, l)
    single = np.array([c.value(tuple(a), tuple(b)) for a, b in zip(k, l)])
    assert np.array_equal(batch, single)
    assert np.array_equal(batch, sample_coefficients(law, seed, 2).values(k, l))


def test_rademacher_values_are_signs_and_seeds_differ():
    k = np.stack(np.meshgrid(range(-5, 6), range(-5, 6)), -1).reshape(-1, 2)
    l = np.zeros_like(k)
    a = sample_coefficients("rademacher", 1, 2).values(k, l)
    b = sample_coefficients("rademacher", 2, 2).values(k, l)
    assert set(np.unique(a)) <= {-1.0, 1.0}
    assert not np.array_equal(a, b)


def test_signs_even_in_k():
    c = sample_coefficients("gaussian", 9, 2)
    k = np.array([[3, 4], [-3, -4], [0, 0]])
    s = c.signs(k)
    assert s[0] == s[1] and set(np.unique(s)) <= {-1.0, 1.0}


@pytest.mark.parametrize("law", ["rademacher", "gaussian", "uniform"])
def test_law_moments(law):
    lw = SubGaussianLaw(law)
    x = lw.sample(np.random.default_rng(0), 400_000)
    assert np.mean(x) == pytest.approx(0, abs=0.01)
    assert np.mean(x**2) == pytest.approx(1, rel=0.01)
    assert np.mean(np.abs(x) ** 4) == pytest.approx(lw.moment(4), rel=0.03)


def test_unknown_law():
    with pytest.raises(ValueError):
        SubGaussianLaw("cauchy")


def test_band_conventions():
    assert band_bounds(1) == (0, 0)
    assert band_bounds(2) == (1, 2)
    assert band_bounds(8) == (5, 8)
    m = band_members(2, 4)
    assert np.all(in_band(m, 4))
    assert len(m) == 9**2 - 5**2
    # the bands tile Z^d
    allk = np.concatenate([band_members(2, N) for N in (1, 2, 4, 8)])
    assert len({tuple(r) for r in allk}) == 17**2


def _datum(g):
    X = g.coords()
    return RealField(g, np.broadcast_to(np.exp(-(X[0] ** 2 + X[1] ** 2) / 16) * np.cos(X[0]), g.shape).copy())


def test_unit_coefficients_reproduce_datum():
    g = GridSpec(2, 64, 8 * math.pi)
    f = _datum(g)
    out = microlocal_randomize(f, UnitCoefficients(2))
    assert np.max(np.abs(out.values - f.values)) < 1e-10


def test_randomized_field_is_real_and_deterministic():
    g = GridSpec(2, 64, 8 * math.pi)
    f = _datum(g)
    c = sample_coefficients("gaussian", 4, 2)
    a = microlocal_randomize(f, c)
    b = microlocal_randomize(f, c)
    assert a.real and np.array_equal(a.values, b.values)
    w = wiener_randomize(f, c)
    assert w.real


def test_sign_form_reassembles_randomization():
    g = GridSpec(2, 64, 8 * math.pi)
    f = _datum(g)
    c = sample_coefficients("rademacher", 5, 2)
    sf = to_sign_form(f, None, c)
    f0, f1 = sf.data()
    ref = microlocal_randomize(f, c)
    assert np.max(np.abs(f0 - ref.values)) < 1e-10 * np.abs(ref.values).max()
    assert np.max(np.abs(f1)) < 1e-14


def test_band_restriction_sums_to_whole():
    g = GridSpec(2, 64, 8 * math.pi)
    f = _datum(g)
    c = sample_coefficients("gaussian", 6, 2)
    plan = RandomizationPlan(f)
    tot = sum(plan.spectrum(c, band=N) for N in (1, 2, 4))
    assert np.allclose(tot, plan.spectrum(c), atol=1e-12)


def test_inverse_gradient_rejects_mean():
    g = GridSpec(1, 64, 8 * math.pi)
    with pytest.raises(ValueError):
        inverse_gradient(fft(g, np.ones(g.shape)), g)


def test_tail_norm_monotone():
    g = GridSpec(2, 64, 8 * math.pi)
    sf = to_sign_form(_datum(g), None, sample_coefficients("gaussian", 1, 2))
    t = [tail_norm(sf, N, 0.5) for N in (1, 2, 4)]
    assert t[0] >= t[1] >= t[2] >= 0
