import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wavepacket_lab.partitions import (
    FLAT,
    SUPPORT,
    ProjectionSpec,
    SpatialCutoff,
    bernstein_constant,
    build_window,
    cell_indices,
    cell_multiplier,
    cells_covering,
    default_window,
    fattened_cell_multiplier,
    project,
    projection_multiplier,
    spatial_window,
    square_function_ratio,
)
from wavepacket_lab.spectral import GridSpec, RealField, fft


@given(st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_partition_of_unity(d, seed):
    pts = np.random.default_rng(seed).uniform(-20, 20, (500, d))
    assert default_window.partition_error(pts) <= 1e-12


@pytest.mark.parametrize("order", [None, 1, 3])
def test_window_flat_and_support(order):
    w = build_window(order)
    x = np.linspace(-1, 1, 4001)
    prof = w.profile(x)
    assert np.all(prof[np.abs(x) <= FLAT] == 1.0)
    assert np.all(prof[np.abs(x) >= SUPPORT] == 0.0)
    assert np.all((prof >= 0) & (prof <= 1))
    # monotone on the positive axis
    pos = prof[x >= 0]
    assert np.all(np.diff(pos) <= 1e-15)


def test_window_rejects_bad_order():
    with pytest.raises(ValueError):
        build_window(0)


def test_ring_is_difference():
    xi = np.linspace(-2, 2, 101)
    assert np.allclose(default_window.ring(xi), default_window(xi) - default_window(2 * xi))


def test_cell_multipliers_sum_to_one_on_lattice():
    g = GridSpec(2, 64, 8 * math.pi)
    K = int(g.nyquist) - 1
    total = sum(cell_multiplier(g, (a, b)) for a in range(-K - 1, K + 2) for b in range(-K - 1, K + 2))
    inner = (np.abs(g.freqs()[0]) < K - 1) & (np.abs(g.freqs()[1]) < K - 1)
    assert np.max(np.abs(total - 1)[inner]) <= 1e-12


def test_fattened_multiplier_is_one_on_cell_support():
    g = GridSpec(2, 64, 8 * math.pi)
    k = (1, -1)
    fat = fattened_cell_multiplier(g, k)
    sup = cell_multiplier(g, k) > 0
    assert np.all(np.abs(fat[sup] - 1) < 1e-12)


def test_cell_indices_cover_support():
    g = GridSpec(2, 64, 8 * math.pi)
    k = (2, -3)
    idx = cell_indices(g, k)
    m = np.zeros(g.shape, bool)
    m[np.ix_(*idx)] = True
    assert np.all(cell_multiplier(g, k)[~m] == 0)


def test_projection_telescopes():
    g = GridSpec(1, 256, 8 * math.pi)
    tot = projection_multiplier(g, ProjectionSpec(1, (0,)))
    for N in (2, 4, 8):
        tot = tot + projection_multiplier(g, ProjectionSpec(N, (0,)))
    assert np.allclose(tot, cell_multiplier(g, (0,), scale=8))


def test_projection_spec_validation_and_scales():
    with pytest.raises(ValueError):
        ProjectionSpec(3, (0,))
    spec = ProjectionSpec(4, (0, 0), fattened=True)
    assert spec.scales[0] == 1 and spec.scales[-1] == 4 * 2**10


def test_project_real_for_centered_spec():
    g = GridSpec(2, 64, 8 * math.pi)
    f = RealField(g, np.random.default_rng(0).standard_normal(g.shape))
    out = project(f, ProjectionSpec(2, (0, 0)))
    assert out.real
    F = fft(g, out.values)
    assert np.allclose(F, fft(g, f.values) * projection_multiplier(g, ProjectionSpec(2, (0, 0))), atol=1e-10)


def test_spatial_cutoff_partition():
    g = GridSpec(1, 256, 8 * math.pi)
    tot = sum(SpatialCutoff(1, (l,)).on_grid(g) for l in range(-30, 31))
    assert np.allclose(tot, 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        SpatialCutoff(3, (0.0,))


def test_spatial_window_and_covering():
    g = GridSpec(1, 256, 8 * math.pi)
    x = g.coords()[0]
    f = RealField(g, np.where(np.abs(x) < 1.5, 1.0, 0.0))
    cells = cells_covering(g, f.values)
    inside = np.abs(x) < 1.5
    expected = [(l,) for l in range(-5, 6) if np.any(inside & (default_window.profile(x - l) > 0))]
    assert cells == expected and (0,) in cells
    w = spatial_window(f, SpatialCutoff(1, (0,)))
    assert np.all(w.values[np.abs(x) > SUPPORT] == 0)


def test_bernstein_constant_bounded():
    g = GridSpec(2, 64, 8 * math.pi)
    rng = np.random.default_rng(3)
    f = RealField(g, rng.standard_normal(g.shape))
    c = bernstein_constant(f, ProjectionSpec(2, (0, 0)), 2, math.inf)
    assert 0 < c < 10


def test_square_function_ratio_finite():
    g = GridSpec(1, 256, 8 * math.pi)
    x = g.coords()[0]
    f = RealField(g, np.exp(-x**2) * np.cos(2 * x))
    r = square_function_ratio(f, [(k,) for k in range(-4, 5)])
    assert np.isfinite(r) and r > 0
