"""Shrinkage transforms, sensor messages and global stopping rules.

All global statistics are accumulated left to right in stream order with
plain float additions. Dropped terms contribute an exact ``0.0``, so
degenerate schemes coincide bit for bit (hard with b=0 and SUM, order with
r=K and SUM, and so on). The compiled kernels follow the same convention.
"""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import detectors as det
from .models import StreamModel, llr

log = logging.getLogger(__name__)

KINDS = ("max", "sum", "hard", "soft", "order", "comb", "xs")
DETECTORS = ("cusum", "sr", "sr_pos", "lp", "lp_two_sided")
# SR-based global schemes run but have no optimality theory behind them yet
EXPERIMENTAL_DETECTORS = ("sr", "sr_pos")


def hard_transform(x: float, b: float) -> float:
    return x if x >= b else 0.0


def soft_transform(x: float, b: float) -> float:
    return max(x - b, 0.0)


def _top_r_mask(values: Sequence[float], r: int) -> list[bool]:
    K = len(values)
    if r >= K:
        return [True] * K
    cut = sorted(values, reverse=True)[r - 1]
    mask = [v > cut for v in values]
    room = r - sum(mask)
    for k, v in enumerate(values):
        if room == 0:
            break
        if v == cut:
            mask[k] = True
            room -= 1
    return mask


def top_r_sum(values: Sequence[float], r: int) -> float:
    """Sum of the ``r`` largest entries, ``r`` clamped to [1, len(values)]."""
    K = len(values)
    if K == 0:
        raise ValueError("empty vector")
    if not 1 <= r <= K:
        log.warning("order parameter r=%s clamped to [1, %d]", r, K)
        r = min(max(int(r), 1), K)
    mask = _top_r_mask(values, r)
    return sum(v if m else 0.0 for v, m in zip(values, mask))


@dataclass(frozen=True)
class ShrinkageSpec:
    kind: str = "sum"
    b: float | tuple = 0.0
    r: int = 1
    p0: float = 1.0
    window: int = 200

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown shrinkage kind {self.kind!r}")
        if isinstance(self.b, (list, tuple, np.ndarray)):
            object.__setattr__(self, "b", tuple(float(v) for v in self.b))
            if any(v < 0 for v in self.b):
                raise ValueError("censoring parameters must be nonnegative")
        else:
            object.__setattr__(self, "b", float(self.b))
            if self.b < 0:
                raise ValueError("censoring parameters must be nonnegative")
        if not 0 < self.p0 <= 1:
            raise ValueError("p0 must lie in (0, 1]")
        if self.window < 1:
            raise ValueError("window must be a positive integer")

    def b_vector(self, K: int) -> np.ndarray:
        if self.kind not in ("hard", "soft", "comb"):
            return np.zeros(K)
        if isinstance(self.b, tuple):
            if len(self.b) != K:
                raise ValueError(f"b has {len(self.b)} entries for {K} streams")
            return np.array(self.b)
        return np.full(K, self.b)

    def r_for(self, K: int) -> int:
        if self.kind == "max":
            return 1
        if self.kind == "order" or self.kind == "comb":
            if not 1 <= self.r <= K:
                log.warning("order parameter r=%s clamped to [1, %d]", self.r, K)
            return min(max(int(self.r), 1), K)
        return K


@dataclass(frozen=True)
class SchemeSpec:
    """A global scheme: local detector, shrinkage rule, threshold ``a``.

    ``a=None`` means "not yet calibrated". The XS rule works on raw
    observations and ignores ``detector``.
    """

    shrinkage: ShrinkageSpec = field(default_factory=ShrinkageSpec)
    detector: str = "cusum"
    a: float | None = None
    lp: det.LpConfig = field(default_factory=det.LpConfig)
    name: str = ""

    def __post_init__(self):
        if self.detector not in DETECTORS:
            raise ValueError(f"unknown detector {self.detector!r}")
        if self.detector in EXPERIMENTAL_DETECTORS:
            log.info("detector %s is experimental for global schemes", self.detector)
        if self.a is not None:
            a = float(self.a)
            if not a > 0 or math.isnan(a):
                raise ValueError(f"global threshold must be positive, got {a}")
            object.__setattr__(self, "a", a)
        if not self.name:
            object.__setattr__(self, "name", default_name(self))

    @property
    def kind(self) -> str:
        return self.shrinkage.kind

    def with_threshold(self, a: float | None) -> "SchemeSpec":
        return replace(self, a=a)

    def to_dict(self) -> dict:
        sh = self.shrinkage
        d = {"name": self.name, "kind": sh.kind, "detector": self.detector, "a": self.a}
        if sh.kind in ("hard", "soft", "comb"):
            d["b"] = list(sh.b) if isinstance(sh.b, tuple) else sh.b
        if sh.kind in ("order", "comb"):
            d["r"] = sh.r
        if sh.kind == "xs":
            d["p0"] = sh.p0
            d["window"] = sh.window
        if self.detector.startswith("lp") and sh.kind != "xs":
            d["lp"] = {"rho": self.lp.rho, "s0": self.lp.s0, "t0": self.lp.t0}
        return d


def default_name(spec: SchemeSpec) -> str:
    sh = spec.shrinkage
    parts = [sh.kind]
    if sh.kind in ("order", "comb"):
        parts.append(f"r{sh.r}")
    if sh.kind in ("hard", "soft", "comb"):
        b = sh.b if not isinstance(sh.b, tuple) else "vec"
        parts.append(f"b{b:g}" if not isinstance(b, str) else "bvec")
    if sh.kind == "xs":
        parts.append(f"p{sh.p0:g}")
    elif spec.detector != "cusum":
        parts.append(spec.detector)
    return "_".join(parts)


def global_stat(spec: SchemeSpec | ShrinkageSpec, w: Sequence[float]) -> float:
    """Global monitoring statistic G_n from the K local statistics."""
    sh = spec.shrinkage if isinstance(spec, SchemeSpec) else spec
    w = [float(v) for v in w]
    K = len(w)
    if sh.kind == "xs":
        raise ValueError("the XS statistic is computed from raw data, see xs_stat")
    if isinstance(sh.b, tuple) and sh.kind in ("hard", "soft", "comb") and len(sh.b) != K:
        raise ValueError(f"spec has {len(sh.b)} censoring parameters for {K} streams")
    b = sh.b_vector(K)
    if sh.kind == "max":
        return max(w)
    if sh.kind == "sum":
        return sum(w)
    if sh.kind == "hard":
        return sum(hard_transform(v, bk) for v, bk in zip(w, b))
    if sh.kind == "soft":
        return sum(soft_transform(v, bk) for v, bk in zip(w, b))
    r = sh.r_for(K)
    if sh.kind == "order":
        return top_r_sum(w, r)
    return top_r_sum([hard_transform(v, bk) for v, bk in zip(w, b)], r)


@dataclass(frozen=True)
class SensorMessage:
    stream: int
    value: float


def censored_messages(w: Sequence[float], b: Sequence[float]) -> list[SensorMessage]:
    """Messages actually sent: stream k reports W_k only when W_k >= b_k."""
    if len(w) != len(b):
        raise ValueError("w and b lengths differ")
    return [SensorMessage(k, float(v)) for k, (v, bk) in enumerate(zip(w, b)) if v >= bk]


def xs_term(u: float, p0: float) -> float:
    """log(1 - p0 + p0 exp(max(u, 0)^2 / 2)), overflow-safe."""
    if u <= 0.0:
        return 0.0
    y = 0.5 * u * u
    if p0 == 1.0:
        return y
    return y + math.log(p0) + math.log1p((1.0 - p0) / p0 * math.exp(-y))


class XsWindowState:
    """Cumulative sums of the last ``window`` + 1 time steps for every stream."""

    def __init__(self, K: int, window: int = 200):
        self.K = K
        self.window = window
        self.n = 0
        self.cums: deque = deque([np.zeros(K)], maxlen=window + 1)

    def push(self, x: Sequence[float]) -> None:
        last = self.cums[-1]
        self.cums.append(np.array([last[k] + float(x[k]) for k in range(self.K)]))
        self.n += 1


def xs_stat(state: XsWindowState, p0: float, n: int | None = None) -> float:
    """Windowed semi-Bayesian mixture statistic at the state's current time."""
    n = state.n if n is None else n
    if n != state.n:
        raise ValueError(f"state is at time {state.n}, not {n}")
    if n == 0:
        raise ValueError("statistic undefined before the first observation")
    cur = state.cums[-1]
    best = -math.inf
    depth = len(state.cums) - 1
    for lag in range(depth, 0, -1):
        past = state.cums[-1 - lag]
        root = math.sqrt(lag)
        acc = 0.0
        for k in range(state.K):
            acc += xs_term((cur[k] - past[k]) / root, p0)
        best = max(best, acc)
    return best


def xs_direct(x: np.ndarray, p0: float, window: int | None = None) -> float:
    """Reference double loop over candidate change times for an (n, K) path."""
    n, K = x.shape
    lo = 0 if window is None else max(0, n - window)
    best = -math.inf
    for i in range(lo, n):
        total = 0.0
        for k in range(K):
            s = float(np.sum(x[i:n, k]))
            u = max(0.0, s / math.sqrt(n - i))
            total += math.log(1 - p0 + p0 * math.exp(u * u / 2))
        best = max(best, total)
    return best


def _initial_state(detector: str):
    return {
        "cusum": det.CusumState(),
        "sr": det.SrState(),
        "sr_pos": det.SrState(),
        "lp": det.OneSidedLpState(),
        "lp_two_sided": det.TwoSidedLpState(),
    }[detector]


def _local_value(detector: str, state) -> float:
    if detector == "cusum":
        return state.w
    if detector == "sr":
        return state.w_log
    if detector == "sr_pos":
        return state.positive_part()
    return state.w


class Monitor:
    """Reference fusion-centre loop over K local detectors.

    Slow but general: works for any registered model family. The compiled
    engine is checked against it pathwise.
    """

    def __init__(self, spec: SchemeSpec, models: Sequence[StreamModel]):
        self.spec = spec
        self.models = list(models)
        self.K = len(self.models)
        self.n = 0
        if spec.kind == "xs":
            self.xs = XsWindowState(self.K, spec.shrinkage.window)
            self.states = []
        else:
            self.states = [_initial_state(spec.detector) for _ in range(self.K)]
        self.last_g = None

    @property
    def local_stats(self) -> list[float]:
        return [_local_value(self.spec.detector, s) for s in self.states]

    def _advance(self, k: int, x: float):
        s, d = self.states[k], self.spec.detector
        if d == "cusum":
            return det.cusum_update(s, llr(self.models[k], x))
        if d in ("sr", "sr_pos"):
            return det.sr_update(s, llr(self.models[k], x))
        if d == "lp":
            return det.one_sided_update(s, self.spec.lp, x)
        return det.two_sided_update(s, self.spec.lp, x)

    def step(self, x: Sequence[float]) -> tuple[float, bool]:
        return scheme_step(self, x)


def scheme_step(monitor: Monitor, x: Sequence[float]) -> tuple[float, bool]:
    """Feed one observation per stream; return (G_n, alarm)."""
    if len(x) != monitor.K:
        raise ValueError(f"expected {monitor.K} observations, got {len(x)}")
    spec = monitor.spec
    monitor.n += 1
    if spec.kind == "xs":
        monitor.xs.push(x)
        g = xs_stat(monitor.xs, spec.shrinkage.p0)
    else:
        monitor.states = [monitor._advance(k, float(v)) for k, v in enumerate(x)]
        g = global_stat(spec, monitor.local_stats)
    monitor.last_g = g
    a = math.inf if spec.a is None else spec.a
    return g, g >= a


def run_until_alarm(spec: SchemeSpec, models: Sequence[StreamModel], path: np.ndarray) -> int | None:
    """Stopping time of ``spec`` on an (n, K) observation path, None if no alarm."""
    mon = Monitor(spec, models)
    for row in path:
        _, alarm = mon.step(row)
        if alarm:
            return mon.n
    return None
