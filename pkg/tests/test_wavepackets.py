import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavepacket_lab.experiments import random_tube_instance
from wavepacket_lab.partitions import build_window, cell_multiplier
from wavepacket_lab.spectral import GridSpec, fft, ifft
from wavepacket_lab.wavepackets import (
    AmplitudeBin,
    ConeRegion,
    Tube,
    almost_orthogonality_constant,
    band_of,
    bin_amplitudes,
    cover_cone,
    cover_cubes,
    decompose,
    dyadic_exponent,
    greedy_bushes,
    sqrt_cancellation_stat,
)

G = GridSpec(2, 128, 8 * math.pi)


@pytest.fixture(scope="module")
def packets():
    X = G.coords()
    f = np.exp(-((X[0] - 1) ** 2 + (X[1] + 2) ** 2) / 8) * np.cos(0.7 * X[1])
    k = (2, 1)
    F = fft(G, f) * cell_multiplier(G, k, build_window())
    return F, decompose(F, k, grid=G)


def test_packets_reconstruct_component(packets):
    F, pk = packets
    S = sum(p.spectrum() for p in pk)
    assert np.abs(S - F).max() <= 1e-10 * np.abs(F).max()


def test_almost_orthogonality_bounded(packets):
    F, pk = packets
    total = math.sqrt(float(np.sum(np.abs(F) ** 2)) * G.dxi**2)
    c = almost_orthogonality_constant(pk, total)
    assert 0.1 < c <= 1.0 + 1e-12


def test_packet_evolution_preserves_norm(packets):
    _, pk = packets
    p = max(pk, key=lambda q: q.norm)
    u = p.evolve(3.0)
    assert math.sqrt(float(np.sum(np.abs(u) ** 2)) * G.h**2) == pytest.approx(p.norm, rel=1e-10)


def test_shifted_start_time_matches_free_flow(packets):
    F, _ = packets
    late = decompose(F, (2, 1), t0=2.0, grid=G)
    S = sum(p.spectrum() for p in late)
    ref = F * np.exp(1j * 2.0 * G.abs_freq())
    assert np.abs(S - ref).max() <= 1e-10 * np.abs(F).max()


def test_tube_geometry():
    t = Tube((3, 4), (1, 1), 1, 0.0, 4)
    assert np.allclose(t.velocity, [-0.6, -0.8])
    assert np.allclose(t.center(2.0), [1 - 1.2, 1 - 1.6])
    assert t.contains(np.array(2.0), t.center(2.0))
    assert not t.contains(np.array(5.0), t.center(5.0))
    assert np.allclose(Tube((0, 0), (0, 0), 1, 0.0, 1).velocity, 0)


@given(st.floats(1e-300, 1e300))
def test_dyadic_exponent_brackets(x):
    m = dyadic_exponent(x)
    assert 2.0**m <= x < 2.0 ** (m + 1)


def test_dyadic_exponent_rejects_zero():
    with pytest.raises(ValueError):
        dyadic_exponent(0.0)


def test_band_of():
    assert [band_of(k) for k in [(0, 0), (1, 0), (2, -2), (3, 0), (4, 1), (5, 0)]] == [1, 2, 2, 4, 4, 8]


def test_bin_amplitudes_window(packets):
    _, pk = packets
    bins = bin_amplitudes(pk, (0, 0), 4)
    members = [p for b in bins for p in b.members]
    assert all(max(abs(c) for c in p.l) <= 12 for p in members)
    for b in bins:
        assert all(dyadic_exponent(p.norm) == b.m for p in b.members)
        assert b.mu == pytest.approx(len(b.members) / 2)


def _bin(tubes, N):
    return AmplitudeBin(0, tubes, N, 0.0, (0, 0), 1)


def test_greedy_concurrent_tubes_form_one_bush():
    N = 16
    ks = [(16, j) for j in range(-8, 8)]
    tubes = [Tube(k, (0, 0), 1, 0.0, N) for k in ks]
    cover = cover_cubes(ConeRegion("truncated", 0.0, (0, 0), N), 0.1)
    part = greedy_bushes(_bin(tubes, N), cover)
    assert part.mu == 4.0
    assert part.J == 1 and part.residual == []
    assert sorted(part.bushes[0].members) == list(range(len(tubes)))
    v = part.verify()
    assert v["partition"] and v["bush_size"] and v["residual"] and v["anchor"]
    assert v["max_residual_incidence"] == 0


def test_greedy_separated_tubes_stay_residual():
    N = 16
    tubes = [Tube((16, 0), (0, 8 * j), 1, 0.0, N) for j in range(-8, 8)]
    cover = cover_cubes(ConeRegion("truncated", 0.0, (0, 0), N), 0.1)
    part = greedy_bushes(_bin(tubes, N), cover)
    assert part.J == 0
    assert part.residual == list(range(len(tubes)))
    v = part.verify()
    assert v["residual"] and v["max_residual_incidence"] < part.mu


def test_greedy_empty_bin():
    cover = cover_cubes(ConeRegion("truncated", 0.0, (0, 0), 16), 0.1)
    part = greedy_bushes(_bin([], 16), cover)
    assert part.J == 0 and part.residual == []


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_greedy_partition_verifies(seed):
    rng = np.random.default_rng(seed)
    N = 8
    tubes = random_tube_instance(rng, N, 2, max_tubes=60, min_tubes=10)
    cover = cover_cubes(ConeRegion("truncated", 0.0, (0, 0), N), 0.1)
    v = greedy_bushes(_bin(tubes, N), cover).verify()
    assert v["partition"] and v["bush_size"] and v["residual"] and v["anchor"]


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.1, 0.2]))
def test_cube_cover_contains_fattened_cone(seed, delta):
    rng = np.random.default_rng(seed)
    cone = ConeRegion("truncated", 1.0, (2.0, -1.0), 8)
    cover = cover_cubes(cone, delta)
    fat = cone.fattened()
    t = fat.t0 + fat.N * rng.random(500)
    x = np.array(fat.x0) + (2 * rng.random((500, 2)) - 1) * fat.radius(t)[:, None]
    assert np.all(fat.contains(t, x))
    assert np.all(cover.covers(t, x))


def test_cube_cover_excludes_far_points():
    cover = cover_cubes(ConeRegion("truncated", 0.0, (0.0, 0.0), 8), 0.1)
    assert not cover.covers(np.array([9.0]), np.array([[0.0, 0.0]]))[0]
    assert not cover.covers(np.array([4.0]), np.array([[200.0, 0.0]]))[0]


def _count_oracle(R, N, d):
    # cone at (tau, y) sits inside iff tau + N <= R and |y|_inf <= 2R - tau - 2N
    total = 0
    for j in range((R - N) // N + 1):
        m = (2 * R - j * N - 2 * N) // N
        total += (2 * m + 1) ** d
    return total


@pytest.mark.parametrize("R,N,d", [(32, 8, 2), (32, 16, 2), (16, 4, 1), (8, 8, 3)])
def test_cover_cone_count(R, N, d):
    assert len(cover_cone(R, 0.0, (0.0,) * d, N)) == _count_oracle(R, N, d)


def test_cover_cone_containment_and_coverage():
    R, N = 16, 4
    big = ConeRegion("truncated", 0.0, (0.0, 0.0), R)
    cones = cover_cone(R, 0.0, (0.0, 0.0), N)
    rng = np.random.default_rng(5)
    for c in cones:
        t = c.t0 + c.N * rng.random(50)
        x = np.array(c.x0) + (2 * rng.random((50, 2)) - 1) * c.radius(t)[:, None]
        assert np.all(big.contains(t, x))
    # a point near the apex line is reached by some small cone
    t = np.array([0.5, 5.0, 11.0])
    x = np.zeros((3, 2))
    hit = np.zeros(3, bool)
    for c in cones:
        hit |= c.contains(t, x)
    assert hit.all()
    with pytest.raises(ValueError):
        cover_cone(4, 0.0, (0.0,), 8)


def test_sqrt_cancellation_deterministic_signs(packets):
    _, pk = packets
    few = sorted(pk, key=lambda p: -p.norm)[:3]
    st_ = sqrt_cancellation_stat(few, [0], [0.0, 1.0], 1.0, signs={(2, 1): 1.0})
    assert st_.sup_random[0] == pytest.approx(st_.deterministic)
    empty = sqrt_cancellation_stat([], [0, 1], [0.0], 1.0)
    assert np.all(empty.ratios == 0)
