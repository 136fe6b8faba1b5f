import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from sumshrink.combiners import (DETECTORS, KINDS, Monitor, SchemeSpec, ShrinkageSpec, XsWindowState,
                                 censored_messages, global_stat, hard_transform, run_until_alarm,
                                 soft_transform, top_r_sum, xs_direct, xs_stat, xs_term)
from sumshrink.engine import Batch, stopping_times
from sumshrink.models import ChangeScenario, SeedSpec, homogeneous, observation_path

stats = st.lists(st.floats(0, 50), min_size=1, max_size=30)
stats_with_ties = st.lists(st.sampled_from([0.0, 0.5, 1.0, 2.0, 3.5]), min_size=1, max_size=30)


def test_transforms():
    assert hard_transform(2.0, 2.0) == 2.0 and hard_transform(1.99, 2.0) == 0.0
    assert soft_transform(3.0, 1.0) == 2.0 and soft_transform(0.5, 1.0) == 0.0


@given(stats | stats_with_ties, st.integers(1, 30))
def test_top_r_sum_matches_sorted_sum(w, r):
    r = min(r, len(w))
    assert top_r_sum(w, r) == pytest.approx(math.fsum(sorted(w, reverse=True)[:r]), abs=1e-12)


@given(stats)
def test_degenerate_global_statistics(w):
    K = len(w)
    G = lambda **kw: global_stat(ShrinkageSpec(**kw), w)  # noqa: E731
    assert G(kind="hard", b=0.0) == G(kind="sum")
    assert G(kind="soft", b=0.0) == G(kind="sum")
    assert G(kind="order", r=1) == G(kind="max")
    assert G(kind="order", r=K) == G(kind="sum")
    assert G(kind="comb", r=3, b=0.0) == G(kind="order", r=3)
    assert G(kind="comb", r=K, b=1.5) == G(kind="hard", b=1.5)


@given(stats, st.floats(0, 10), st.floats(0, 10))
def test_global_statistic_monotone_in_b(w, b1, b2):
    lo, hi = sorted((b1, b2))
    for kind in ("hard", "soft", "comb"):
        assert global_stat(ShrinkageSpec(kind, b=hi, r=3), w) <= global_stat(ShrinkageSpec(kind, b=lo, r=3), w)


@given(stats, st.integers(1, 30), st.integers(1, 30))
def test_global_statistic_monotone_in_r(w, r1, r2):
    lo, hi = sorted((min(r1, len(w)), min(r2, len(w))))
    for kind in ("order", "comb"):
        assert global_stat(ShrinkageSpec(kind, r=lo, b=1.0), w) <= global_stat(ShrinkageSpec(kind, r=hi, b=1.0), w)


def test_censored_messages():
    msgs = censored_messages([0.2, 5.0, 1.0], [1.0, 1.0, 1.0])
    assert [(m.stream, m.value) for m in msgs] == [(1, 5.0), (2, 1.0)]


def test_r_clamped_with_warning(caplog):
    assert ShrinkageSpec("order", r=50).r_for(10) == 10
    assert "clamped" in caplog.text


def test_vector_b_length_checked():
    with pytest.raises(ValueError):
        ShrinkageSpec("hard", b=(1.0, 2.0)).b_vector(3)
    with pytest.raises(ValueError):
        ShrinkageSpec("hard", b=-1.0)
    with pytest.raises(ValueError):
        SchemeSpec(a=-1.0)


@given(st.floats(-30, 30), st.sampled_from([1.0, 0.5, 0.1, 1e-3]))
def test_xs_term_against_extended_precision(u, p0):
    ref = mpmath.log(1 - mpmath.mpf(p0) + mpmath.mpf(p0) * mpmath.exp(mpmath.mpf(max(u, 0.0)) ** 2 / 2))
    assert xs_term(u, p0) == pytest.approx(float(ref), rel=1e-12, abs=1e-14)


def test_xs_term_no_overflow():
    assert math.isfinite(xs_term(100.0, 0.1))


@given(arrays(float, st.tuples(st.integers(1, 12), st.integers(1, 4)), elements=st.floats(-3, 3)),
       st.sampled_from([1.0, 0.1]))
def test_xs_full_window_equals_double_loop(x, p0):
    n, K = x.shape
    state = XsWindowState(K, window=n)
    for t in range(n):
        state.push(x[t])
        assert xs_stat(state, p0) == pytest.approx(xs_direct(x[:t + 1], p0), abs=1e-10)


@given(arrays(float, st.tuples(st.integers(1, 15), st.integers(1, 3)), elements=st.floats(-3, 3)),
       st.integers(1, 5))
def test_xs_short_window_equals_truncated_double_loop(x, window):
    n, K = x.shape
    state = XsWindowState(K, window=window)
    for t in range(n):
        state.push(x[t])
    assert xs_stat(state, 0.3) == pytest.approx(xs_direct(x, 0.3, window), abs=1e-10)


def _all_specs():
    out = []
    for det in DETECTORS:
        for kind in KINDS:
            if kind == "xs" and det != "cusum":
                continue
            sh = ShrinkageSpec(kind, b=1.0, r=3, p0=0.2, window=30)
            out.append(SchemeSpec(sh, det, a=None))
    return out


@pytest.mark.parametrize("spec", _all_specs(), ids=lambda s: s.name)
def test_compiled_engine_matches_reference_monitor(spec):
    K, n = 5, 300
    models = homogeneous(K)
    sc = ChangeScenario.first_m(K, 2, nu=100)
    seeds = SeedSpec(3)
    b = Batch(spec, models, sc, seeds, range(4))
    G = []
    b.run(math.inf, n, lambda bt: G.append(bt.g_out[:, :bt.steps.max()].copy()))
    G = np.hstack(G)
    for i in range(4):
        path = observation_path(models, sc, seeds, i, n)
        mon = Monitor(spec, models)
        ref = [mon.step(row)[0] for row in path]
        assert np.array_equal(G[i], np.array(ref))


@pytest.mark.parametrize("det", ["cusum", "sr_pos", "lp_two_sided"])
def test_stopping_times_match_reference(det):
    K = 6
    models = homogeneous(K)
    sc = ChangeScenario.first_m(K, 1)
    spec = SchemeSpec(ShrinkageSpec("soft", b=0.5), det, a=4.0)
    T, cens = stopping_times(spec, models, sc, SeedSpec(5), 10, 2000)
    for i in range(10):
        path = observation_path(models, sc, SeedSpec(5), i, 2000)
        assert run_until_alarm(spec, models, path) == T[i]
    assert not cens.any()


def test_single_stream_reduces_to_local_cusum():
    models = homogeneous(1)
    path = observation_path(models, ChangeScenario.no_change(1), SeedSpec(0), 0, 200)
    w, outs = 0.0, {}
    for kind in ("max", "sum", "order", "comb", "hard"):
        mon = Monitor(SchemeSpec(ShrinkageSpec(kind, r=1, b=0.0)), models)
        outs[kind] = [mon.step(row)[0] for row in path]
    ref = []
    for x in path[:, 0]:
        w = max(w + (x - 0.5), 0.0)
        ref.append(w)
    for v in outs.values():
        assert v == ref
