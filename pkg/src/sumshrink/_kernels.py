"""Compiled inner loops for the replication engine.

Every arithmetic expression here mirrors the reference code in
``detectors``/``combiners`` so that both routes produce identical floats.
"""
import math

import numpy as np
from numba import njit, prange

DET_CODES = {"cusum": 0, "sr": 1, "sr_pos": 2, "lp": 3, "lp_two_sided": 4}
KIND_CODES = {"max": 0, "sum": 1, "hard": 2, "soft": 3, "order": 4, "comb": 5, "xs": 6}
STATE_WIDTH = {0: 1, 1: 1, 2: 1, 3: 4, 4: 7}


@njit(cache=True)
def _mu_pos(s, t, rho, s0, t0):
    denom = t0 + t
    if denom == 0:
        return rho
    v = (s0 + s) / denom
    return rho if rho >= v else v


@njit(cache=True)
def _mu_neg(s, t, rho, s0, t0):
    denom = t0 + t
    if denom == 0:
        return -rho
    v = (-s0 + s) / denom
    return -rho if -rho <= v else v


@njit(cache=True)
def _lp_side(st, off, x_prev, x, positive, rho, s0, t0):
    # st[off], st[off+1], st[off+2] = S, T, W
    w = st[off + 2]
    if w > 0:
        s = st[off] + x_prev
        t = st[off + 1] + 1.0
    else:
        s = 0.0
        t = 0.0
    if positive:
        mu = _mu_pos(s, t, rho, s0, t0)
    else:
        mu = _mu_neg(s, t, rho, s0, t0)
    w = w + mu * x - 0.5 * mu * mu
    if w < 0.0:
        w = 0.0
    st[off] = s
    st[off + 1] = t
    st[off + 2] = w
    return w


@njit(cache=True)
def _local_step(det, st, x, m0, m1, rho, s0, t0):
    if det == 0:
        w = st[0] + ((m1 - m0) * x - 0.5 * (m1 * m1 - m0 * m0))
        if w < 0.0:
            w = 0.0
        st[0] = w
        return w
    if det == 1 or det == 2:
        v = st[0]
        w = (max(v, 0.0) + math.log1p(math.exp(-abs(v)))) + ((m1 - m0) * x - 0.5 * (m1 * m1 - m0 * m0))
        st[0] = w
        if det == 2 and w < 0.0:
            return 0.0
        return w
    if det == 3:
        w = _lp_side(st, 0, st[3], x, True, rho, s0, t0)
        st[3] = x
        return w
    w1 = _lp_side(st, 0, st[6], x, True, rho, s0, t0)
    w2 = _lp_side(st, 3, st[6], x, False, rho, s0, t0)
    st[6] = x
    return w1 if w1 >= w2 else w2


@njit(cache=True)
def _top_r_sum(vals, r, scratch):
    K = vals.shape[0]
    if r >= K:
        acc = 0.0
        for k in range(K):
            acc += vals[k]
        return acc
    for k in range(K):
        scratch[k] = vals[k]
    part = np.partition(scratch, K - r)
    cut = part[K - r]
    room = r
    for k in range(K):
        if vals[k] > cut:
            room -= 1
    acc = 0.0
    for k in range(K):
        v = vals[k]
        if v > cut:
            acc += v
        elif v == cut and room > 0:
            acc += v
            room -= 1
        else:
            acc += 0.0
    return acc


@njit(cache=True)
def _xs_term(u, p0):
    if u <= 0.0:
        return 0.0
    y = 0.5 * u * u
    if p0 == 1.0:
        return y
    return y + math.log(p0) + math.log1p((1.0 - p0) / p0 * math.exp(-y))


@njit(cache=True)
def _global(kind, w, b, r, scratch):
    K = w.shape[0]
    if kind == 0:
        g = w[0]
        for k in range(1, K):
            if w[k] > g:
                g = w[k]
        return g
    if kind == 1:
        acc = 0.0
        for k in range(K):
            acc += w[k]
        return acc
    if kind == 2:
        acc = 0.0
        for k in range(K):
            acc += w[k] if w[k] >= b[k] else 0.0
        return acc
    if kind == 3:
        acc = 0.0
        for k in range(K):
            v = w[k] - b[k]
            acc += v if v > 0.0 else 0.0
        return acc
    if kind == 4:
        return _top_r_sum(w, r, scratch)
    cens = np.empty(K)
    for k in range(K):
        cens[k] = w[k] if w[k] >= b[k] else 0.0
    return _top_r_sum(cens, r, scratch)


@njit(parallel=True, cache=True)
def advance(det, kind, m0, m1, b, r, rho, s0, t0, p0, window,
            onset, real_pre, real_post,
            state, ring, n, Z, pos, runmax, a_stop, cap, b_tx,
            g_out, tx_out, steps):
    """Step every replication through its buffered noise.

    A replication stops at the end of its buffer, at ``cap`` steps, or once
    its running maximum of G reaches ``a_stop``; its state is then exactly
    the state after its last processed step.
    """
    R, B, K = Z.shape
    W1 = ring.shape[1]
    for i in prange(R):
        steps[i] = 0
        w = np.empty(K)
        scratch = np.empty(K)
        while pos[i] < B and n[i] < cap and runmax[i] < a_stop:
            n[i] += 1
            t = n[i]
            j = pos[i]
            cnt = 0
            if kind == 6:
                cur = t % W1
                prev = (t - 1) % W1
                for k in range(K):
                    mean = real_post[k] if t >= onset[k] else real_pre[k]
                    x = mean + Z[i, j, k]
                    ring[i, cur, k] = ring[i, prev, k] + x
                depth = t if t < window else window
                g = -np.inf
                for lag in range(depth, 0, -1):
                    past = (t - lag) % W1
                    root = math.sqrt(lag)
                    acc = 0.0
                    for k in range(K):
                        acc += _xs_term((ring[i, cur, k] - ring[i, past, k]) / root, p0)
                    if acc > g:
                        g = acc
            else:
                for k in range(K):
                    mean = real_post[k] if t >= onset[k] else real_pre[k]
                    x = mean + Z[i, j, k]
                    w[k] = _local_step(det, state[i, k], x, m0[k], m1[k], rho, s0, t0)
                    if w[k] >= b_tx[k]:
                        cnt += 1
                g = _global(kind, w, b, r, scratch)
            g_out[i, steps[i]] = g
            tx_out[i, steps[i]] = cnt
            steps[i] += 1
            pos[i] = j + 1
            if g > runmax[i]:
                runmax[i] = g


@njit(cache=True)
def records(g_out, steps, prev_max, n_end, rec_t, rec_v, rec_cnt):
    """New running-maximum values (strict increases) within the last block."""
    R = g_out.shape[0]
    for i in range(R):
        m = prev_max[i]
        c = 0
        t0 = n_end[i] - steps[i]
        for j in range(steps[i]):
            g = g_out[i, j]
            if g > m:
                m = g
                rec_t[i, c] = t0 + j + 1
                rec_v[i, c] = g
                c += 1
        rec_cnt[i] = c
