import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sumshrink.detectors import (NEGATIVE, POSITIVE, CusumState, LpConfig, LpRegisters, OneSidedLpState,
                                 SrState, TwoSidedLpState, cusum_update, log1p_exp, lp_mu_hat, lp_update,
                                 one_sided_update, sr_update, two_sided_update)

incs = st.lists(st.floats(-20, 20), min_size=1, max_size=60)
obs = st.lists(st.floats(-6, 6), min_size=1, max_size=60)
lp_cfgs = st.builds(LpConfig, st.floats(0.05, 2), st.floats(0, 3), st.just(0.0) | st.floats(0.1, 8))


@given(incs)
def test_cusum_equals_max_partial_sum(ls):
    # W_n = max_{0<=i<=n} sum_{j>i} l_j
    state = CusumState()
    for n, l in enumerate(ls, 1):
        state = cusum_update(state, l)
        tails = [math.fsum(ls[i:n]) for i in range(n + 1)]
        assert state.w == pytest.approx(max(tails), abs=1e-10)


def test_cusum_small_example():
    s = CusumState()
    out = []
    for l in [1.0, -3.0, 0.5, 0.5]:
        s = cusum_update(s, l)
        out.append(s.w)
    assert out == [1.0, 0.0, 0.5, 1.0]


@given(incs)
def test_sr_equals_direct_sum(ls):
    # R_0 = 1 gives R_n = sum_{i=0}^{n-1} exp(l_{i+1} + ... + l_n) + exp(l_1 + ... + l_n)
    state = SrState()
    for n, l in enumerate(ls, 1):
        state = sr_update(state, l)
        logs = [math.fsum(ls[i:n]) for i in range(n)] + [math.fsum(ls[:n])]
        top = max(logs)
        ref = top + math.log(math.fsum(math.exp(v - top) for v in logs))
        assert state.w_log == pytest.approx(ref, abs=1e-10)


def test_sr_first_step_from_zero():
    assert sr_update(SrState(), 0.0).w_log == pytest.approx(math.log(2.0))
    assert SrState(-3.0).positive_part() == 0.0


@given(st.floats(-800, 800))
def test_log1p_exp_stable(w):
    v = log1p_exp(w)
    assert math.isfinite(v) and v >= max(w, 0.0)


def _brute_force_registers(xs, ws, n):
    """(S, T) at step n from the observations after the last zero of W before n."""
    last_zero = 0
    for j in range(1, n):
        if ws[j] == 0.0:
            last_zero = j
    seg = xs[last_zero + 1:n]  # X_{last_zero+1}, ..., X_{n-1}
    return math.fsum(seg), len(seg)


@given(obs, lp_cfgs, st.sampled_from([POSITIVE, NEGATIVE]))
def test_lp_registers_match_brute_force(xs, cfg, side):
    xs = [0.0] + list(xs)  # 1-based, X_0 unused
    ws = [0.0]
    reg, prev = LpRegisters(), 0.0
    for n in range(1, len(xs)):
        reg = lp_update(reg, cfg, side, prev, xs[n])
        prev = xs[n]
        s, t = _brute_force_registers(xs, ws, n)
        assert reg.t == t
        assert reg.s == pytest.approx(s, abs=1e-10)
        ws.append(reg.w)


@given(obs, lp_cfgs)
def test_lp_estimates_respect_minimal_shift(xs, cfg):
    state = TwoSidedLpState()
    for x in xs:
        state = two_sided_update(state, cfg, x)
        assert lp_mu_hat(state.pos, cfg, POSITIVE) >= cfg.rho
        assert lp_mu_hat(state.neg, cfg, NEGATIVE) <= -cfg.rho
        assert state.pos.w >= 0 and state.neg.w >= 0


@given(obs, lp_cfgs)
def test_two_sided_sign_flip_symmetry(xs, cfg):
    a, b = TwoSidedLpState(), TwoSidedLpState()
    for x in xs:
        a = two_sided_update(a, cfg, x)
        b = two_sided_update(b, cfg, -x)
        assert a.pos.w == b.neg.w and a.neg.w == b.pos.w
        assert a.w == b.w


@given(obs, lp_cfgs)
def test_one_sided_is_positive_half_of_two_sided(xs, cfg):
    one, two = OneSidedLpState(), TwoSidedLpState()
    for x in xs:
        one = one_sided_update(one, cfg, x)
        two = two_sided_update(two, cfg, x)
        assert one.reg == two.pos


def test_mu_hat_zero_denominator():
    cfg = LpConfig(rho=0.3, s0=0.0, t0=0.0)
    assert lp_mu_hat(LpRegisters(), cfg, POSITIVE) == 0.3
    assert lp_mu_hat(LpRegisters(), cfg, NEGATIVE) == -0.3


def test_mu_hat_prior_default():
    assert lp_mu_hat(LpRegisters(), LpConfig()) == 0.25
    assert lp_mu_hat(LpRegisters(s=7.0, t=4), LpConfig()) == pytest.approx(1.0)


def test_bad_inputs_rejected():
    with pytest.raises(ValueError):
        cusum_update(CusumState(), math.inf)
    with pytest.raises(ValueError):
        LpConfig(rho=0.0)
    with pytest.raises(ValueError):
        LpConfig(s0=2.0, t0=1e-308)
    with pytest.raises(ValueError):
        lp_mu_hat(LpRegisters(), LpConfig(), "sideways")


def test_negative_shift_drives_negative_side():
    rng = np.random.default_rng(3)
    cfg = LpConfig()
    w1, w2 = [], []
    for _ in range(500):
        s = TwoSidedLpState()
        for x in rng.normal(-1.0, 1.0, 50):
            s = two_sided_update(s, cfg, x)
        w1.append(s.pos.w)
        w2.append(s.neg.w)
    assert np.mean(w2) > np.mean(w1)


def test_two_sided_statistic_is_max():
    s = TwoSidedLpState(LpRegisters(w=1.2), LpRegisters(w=0.4))
    assert s.w == 1.2 and TwoSidedLpState().w == 0.0
