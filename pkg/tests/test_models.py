import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from sumshrink.engine import BLOCK
from sumshrink.models import (INF, ChangeScenario, SeedSpec, StreamModel, homogeneous, kl_number, llr,
                              observation_path, register_family, sample)


@given(st.floats(-50, 50), st.floats(-5, 5), st.floats(-5, 5))
def test_gaussian_llr_matches_log_density_ratio(x, m0, m1):
    assume(abs(m1 - m0) > 1e-3)
    model = StreamModel.gaussian(m1, pre_mean=m0)
    ref = -0.5 * (x - m1) ** 2 + 0.5 * (x - m0) ** 2
    assert llr(model, x) == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_kl_number_gaussian():
    assert kl_number(StreamModel.gaussian(1.0)) == 0.5
    assert kl_number(StreamModel.gaussian(-2.0, pre_mean=1.0)) == pytest.approx(4.5)


def test_equal_pre_and_post_rejected():
    with pytest.raises(ValueError):
        StreamModel.gaussian(0.0)


def test_llr_rejects_non_finite():
    with pytest.raises(ValueError):
        llr(StreamModel.gaussian(1.0), math.nan)


def test_scenario_validation():
    with pytest.raises(ValueError):
        ChangeScenario(1, (2, 3))
    with pytest.raises(ValueError):
        ChangeScenario(0, (0,))
    with pytest.raises(ValueError):
        ChangeScenario(1, (0, -1))
    sc = ChangeScenario(3, (0, INF, 2))
    assert sc.affected == (0, 2)
    assert not sc.is_post_change(2, 4) and sc.is_post_change(2, 5)
    assert ChangeScenario.no_change(4).affected == ()


def test_first_m_and_from_indices_agree():
    a = ChangeScenario.first_m(6, 3)
    b = ChangeScenario.from_indices(6, [0, 1, 2])
    assert a == b


def test_sample_switches_at_onset():
    model = StreamModel.gaussian(1000.0)
    sc = ChangeScenario(5, (0,))
    rng = np.random.default_rng(0)
    assert abs(sample(model, sc, 0, 4, rng)) < 10
    assert sample(model, sc, 0, 5, rng) > 900


def test_custom_family_registration():
    register_family("exp_rate",
                    llr=lambda x, p, q: math.log(q[0] / p[0]) - (q[0] - p[0]) * x,
                    kl=lambda p, q: math.log(p[0] / q[0]) + q[0] / p[0] - 1,
                    draw=lambda rng, p: rng.exponential(1 / p[0]))
    m = StreamModel("exp_rate", (1.0,), (0.5,))
    assert m.kl_number() > 0
    assert m.llr(0.0) == pytest.approx(math.log(0.5))


@given(st.integers(0, 2 ** 32), st.integers(0, 50))
def test_seed_streams_are_reproducible(seed, rep):
    a = SeedSpec(seed).rng(rep).standard_normal(5)
    b = SeedSpec(seed).rng(rep).standard_normal(5)
    assert np.array_equal(a, b)


def test_seed_streams_differ_across_replications():
    s = SeedSpec(1)
    assert not np.array_equal(s.rng(0).standard_normal(4), s.rng(1).standard_normal(4))
    assert s.offset(1).master_seed != s.master_seed


def test_observation_path_consumes_noise_in_engine_blocks():
    # block-wise draws of (BLOCK, K) concatenate to the single (n, K) draw
    K, seeds = 3, SeedSpec(9)
    path = observation_path(homogeneous(K), ChangeScenario.no_change(K), seeds, 4, 2 * BLOCK)
    g = seeds.rng(4)
    blocks = np.vstack([g.standard_normal((BLOCK, K)) for _ in range(2)])
    assert np.array_equal(path, blocks)


def test_observation_path_applies_change():
    K = 2
    sc = ChangeScenario.first_m(K, 1, nu=3, post_mean=50.0)
    path = observation_path(homogeneous(K), sc, SeedSpec(0), 0, 5)
    assert np.all(path[2:, 0] > 40) and np.all(path[:2, 0] < 10) and np.all(path[:, 1] < 10)


@pytest.mark.parametrize("mu,x,expected", [(1.0, 1.0, 0.5), (1.0, 0.0, -0.5), (-1.0, -2.0, 1.5)])
def test_llr_examples(mu, x, expected):
    assert llr(StreamModel.gaussian(mu), x) == expected


def test_kl_examples():
    assert kl_number(StreamModel.gaussian(0.25)) == 0.03125


def test_llr_drift_under_post_change_equals_kl():
    model = StreamModel.gaussian(1.0)
    x = np.random.default_rng(1).normal(1.0, 1.0, 10 ** 6)
    vals = (1.0 * x) - 0.5
    assert abs(vals.mean() - kl_number(model)) <= 3 * vals.std() / 1e3


def test_sample_laws():
    model = StreamModel.gaussian(1.0)
    rng = np.random.default_rng(2)
    pre = np.array([sample(model, ChangeScenario.no_change(1), 0, 1, rng) for _ in range(20000)])
    post = np.array([sample(model, ChangeScenario.first_m(1, 1), 0, 1, rng) for _ in range(20000)])
    assert abs(pre.mean()) <= 3 / math.sqrt(20000)
    assert abs(post.mean() - 1.0) <= 3 / math.sqrt(20000)
    sc = ChangeScenario.first_m(1, 1, nu=50)
    at49 = np.array([sample(model, sc, 0, 49, rng) for _ in range(20000)])
    at50 = np.array([sample(model, sc, 0, 50, rng) for _ in range(20000)])
    assert abs(at49.mean()) <= 3 / math.sqrt(20000) and abs(at50.mean() - 1.0) <= 3 / math.sqrt(20000)


def test_all_infinite_delays_equal_no_change_pathwise():
    K, seeds = 4, SeedSpec(5)
    never = ChangeScenario(1, (INF,) * K)
    a = observation_path(homogeneous(K), never, seeds, 2, 50)
    b = observation_path(homogeneous(K), ChangeScenario.no_change(K), seeds, 2, 50)
    assert np.array_equal(a, b)
