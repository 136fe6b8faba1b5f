"""Recursive local detection statistics for a single stream.

These are small immutable value types with pure update functions. They are
the readable reference; the compiled engine in ``_kernels`` repeats the same
arithmetic in the same order so both routes agree bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

POSITIVE = "positive"
NEGATIVE = "negative"


def _finite(v: float, what: str) -> float:
    if not math.isfinite(v):
        raise ValueError(f"non-finite {what}: {v!r}")
    return v


@dataclass(frozen=True)
class CusumState:
    w: float = 0.0


def cusum_update(state: CusumState, llr_increment: float) -> CusumState:
    _finite(llr_increment, "log-likelihood ratio")
    return CusumState(max(state.w + llr_increment, 0.0))


@dataclass(frozen=True)
class SrState:
    """Shiryaev-Roberts statistic on the log scale, started at log R_0 = 0."""

    w_log: float = 0.0

    def positive_part(self) -> float:
        return max(self.w_log, 0.0)


def log1p_exp(w: float) -> float:
    """log(exp(w) + 1) without overflow."""
    return max(w, 0.0) + math.log1p(math.exp(-abs(w)))


def sr_update(state: SrState, llr_increment: float) -> SrState:
    _finite(llr_increment, "log-likelihood ratio")
    return SrState(log1p_exp(state.w_log) + llr_increment)


@dataclass(frozen=True)
class LpConfig:
    """Prior and minimal shift for the adaptive mean estimate.

    ``rho`` is the smallest shift worth detecting; ``s0 / t0`` acts as a
    prior pseudo-sum and pseudo-count.
    """

    rho: float = 0.25
    s0: float = 1.0
    t0: float = 4.0

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.s0 < 0 or self.t0 < 0:
            raise ValueError("s0 and t0 must be nonnegative")
        if self.t0 > 0 and not self.s0 / self.t0 < 1e100:
            raise ValueError("prior mean s0 / t0 is not a usable finite number")


@dataclass(frozen=True)
class LpRegisters:
    """(S, T, W): sum and count of observations since W last hit zero, and W."""

    s: float = 0.0
    t: int = 0
    w: float = 0.0


def lp_mu_hat(reg: LpRegisters, cfg: LpConfig, side: str = POSITIVE) -> float:
    denom = cfg.t0 + reg.t
    if side == POSITIVE:
        if denom == 0:
            return cfg.rho
        return max(cfg.rho, (cfg.s0 + reg.s) / denom)
    if side == NEGATIVE:
        if denom == 0:
            return -cfg.rho
        return min(-cfg.rho, (-cfg.s0 + reg.s) / denom)
    raise ValueError(f"unknown side {side!r}")


def lp_update(reg: LpRegisters, cfg: LpConfig, side: str, x_prev: float, x_new: float) -> LpRegisters:
    """Advance one time step.

    The registers absorb ``x_prev`` (the observation at n-1) first, the mean
    estimate is formed from them, and only then does ``x_new`` enter W.
    """
    _finite(x_prev, "observation")
    _finite(x_new, "observation")
    if reg.w > 0:
        s, t = reg.s + x_prev, reg.t + 1
    else:
        s, t = 0.0, 0
    mu = lp_mu_hat(LpRegisters(s, t, reg.w), cfg, side)
    w = max(reg.w + mu * x_new - 0.5 * mu * mu, 0.0)
    return LpRegisters(s, t, w)


@dataclass(frozen=True)
class TwoSidedLpState:
    pos: LpRegisters = LpRegisters()
    neg: LpRegisters = LpRegisters()
    x_prev: float = 0.0

    @property
    def w(self) -> float:
        return two_sided_statistic(self)


def two_sided_statistic(state: TwoSidedLpState) -> float:
    return max(state.pos.w, state.neg.w)


def two_sided_update(state: TwoSidedLpState, cfg: LpConfig, x_new: float) -> TwoSidedLpState:
    return TwoSidedLpState(
        lp_update(state.pos, cfg, POSITIVE, state.x_prev, x_new),
        lp_update(state.neg, cfg, NEGATIVE, state.x_prev, x_new),
        x_new,
    )


@dataclass(frozen=True)
class OneSidedLpState:
    reg: LpRegisters = LpRegisters()
    x_prev: float = 0.0

    @property
    def w(self) -> float:
        return self.reg.w


def one_sided_update(state: OneSidedLpState, cfg: LpConfig, x_new: float) -> OneSidedLpState:
    return OneSidedLpState(lp_update(state.reg, cfg, POSITIVE, state.x_prev, x_new), x_new)
