import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import gamma

from wavepacket_lab.mcstats import (
    exact_rademacher_moment,
    gaussian_subgaussian_norm,
    khintchine_moment,
    subgaussian_norm_estimate,
    suprema_bound_check,
)


def test_exact_moment_of_four_unit_signs():
    # S takes 0, +-2, +-4 with weights 6, 8, 2 out of 16
    assert exact_rademacher_moment([1, 1, 1, 1], 4) == pytest.approx(40 ** 0.25, rel=1e-14)
    assert exact_rademacher_moment([1, 1, 1, 1], 2) == pytest.approx(2.0, rel=1e-14)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=8))
def test_second_moment_is_l2_norm(a):
    assert exact_rademacher_moment(a, 2) == pytest.approx(math.sqrt(sum(x * x for x in a)), rel=1e-9, abs=1e-12)


def test_monte_carlo_agrees_with_enumeration():
    a = [1.0, 0.5, 0.25, 2.0, -1.0]
    rep = khintchine_moment(a, "rademacher", [2, 4, 6], trials=200_000, seed=3)
    for p in (2, 4, 6):
        j = rep.at(p)
        assert rep.estimate[j] == pytest.approx(exact_rademacher_moment(a, p), abs=5 * rep.stderr[j] + 1e-3)
        assert rep.ratio[j] <= 1.0


def test_moment_estimate_is_deterministic_per_seed():
    a = np.linspace(1, 2, 7)
    r1 = khintchine_moment(a, "gaussian", [1, 3], trials=70_000, seed=9)
    r2 = khintchine_moment(a, "gaussian", [1, 3], trials=70_000, seed=9)
    r3 = khintchine_moment(a, "gaussian", [1, 3], trials=70_000, seed=10)
    assert np.array_equal(r1.estimate, r2.estimate)
    assert not np.array_equal(r1.estimate, r3.estimate)


def test_gaussian_moments_match_closed_form():
    a = [3.0, 4.0]
    rep = khintchine_moment(a, "gaussian", [2, 4], trials=200_000, seed=1)
    for p in (2, 4):
        exact = 5.0 * (2 ** (p / 2) * gamma((p + 1) / 2) / math.sqrt(math.pi)) ** (1 / p)
        assert rep.estimate[rep.at(p)] == pytest.approx(exact, rel=0.02)


def test_rejects_sub_unit_moments():
    with pytest.raises(ValueError):
        khintchine_moment([1.0], p=0.5)


def test_subgaussian_norm_estimate_near_analytic():
    ps = (1, 2, 4, 8)
    est = subgaussian_norm_estimate("gaussian", ps, trials=200_000, seed=2)
    assert est == pytest.approx(gaussian_subgaussian_norm(ps), rel=0.03)
    assert subgaussian_norm_estimate("rademacher", ps, trials=1000) == pytest.approx(1.0)


def test_suprema_ratio_bounded_and_shared_mode_smaller():
    shared = suprema_bound_check((10, 100), "gaussian", trials=4000, seed=0)
    iid = suprema_bound_check((10, 100), "gaussian", trials=4000, seed=0, mode="iid")
    assert shared.max_ratio < 2.0 and iid.max_ratio < 2.0
    assert np.all(shared.mean_max <= iid.mean_max * 1.02)
    with pytest.raises(ValueError):
        suprema_bound_check(0)
