"""Batched Monte Carlo replications of a global scheme.

Each replication owns a generator from :class:`~sumshrink.models.SeedSpec`
and is advanced independently, so results do not depend on batch size or
thread count. The engine records the running maximum of G_n on every path.
For a path, the first-passage time of every threshold a up to the simulated
level can then be read off exactly, which makes threshold search a
deterministic problem on common random numbers.
"""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numba
import numpy as np

from . import _kernels as K_
from .combiners import SchemeSpec
from .models import ChangeScenario, SeedSpec, StreamModel, realised_means

BLOCK = 128
CHUNK = 512


def set_threads(threads: int | None) -> None:
    if threads:
        numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))


class Batch:
    """A resumable set of replications for one scheme and one scenario."""

    def __init__(self, spec: SchemeSpec, models: Sequence[StreamModel], scenario: ChangeScenario,
                 seeds: SeedSpec, reps: Sequence[int], b_tx: Sequence[float] | None = None,
                 block: int = BLOCK):
        K = len(models)
        if scenario.K != K:
            raise ValueError(f"scenario has {scenario.K} streams, models have {K}")
        self.spec = spec
        self.K = K
        self.reps = np.asarray(list(reps), dtype=np.int64)
        R = len(self.reps)
        sh = spec.shrinkage
        self.det = K_.DET_CODES[spec.detector]
        self.kind = K_.KIND_CODES[sh.kind]
        self.m0 = np.array([m.pre_mean for m in models], dtype=float)
        self.m1 = np.array([m.post_mean for m in models], dtype=float)
        self.real_pre, self.real_post = realised_means(models, scenario)
        self.onset = scenario.onsets()
        self.b = sh.b_vector(K).astype(float)
        self.r = sh.r_for(K)
        self.b_tx = np.zeros(K) if b_tx is None else np.broadcast_to(np.asarray(b_tx, float), (K,)).copy()
        self.state = np.zeros((R, K, K_.STATE_WIDTH[self.det]))
        if sh.kind == "xs":
            self.ring = np.zeros((R, sh.window + 1, K))
        else:
            self.ring = np.zeros((1, 1, 1))
        self.block = block
        self.rngs = [seeds.rng(int(rep)) for rep in self.reps]
        self.Z = np.empty((R, block, K))
        self.pos = np.full(R, block, dtype=np.int64)
        self.n = np.zeros(R, dtype=np.int64)
        self.runmax = np.full(R, -np.inf)
        self.g_out = np.empty((R, block))
        self.tx_out = np.zeros((R, block), dtype=np.int64)
        self.steps = np.zeros(R, dtype=np.int64)
        self._rec_t: list[list[np.ndarray]] = [[] for _ in range(R)]
        self._rec_v: list[list[np.ndarray]] = [[] for _ in range(R)]
        self._rt = np.empty((R, block), dtype=np.int64)
        self._rv = np.empty((R, block))
        self._rc = np.zeros(R, dtype=np.int64)
        self.cap = 0

    def run(self, a_stop: float, cap: int,
            on_block: Callable[["Batch"], None] | None = None) -> None:
        """Advance until every path has G reaching ``a_stop`` or ``cap`` steps."""
        self.cap = max(self.cap, int(cap))
        lp = self.spec.lp
        sh = self.spec.shrinkage
        while True:
            live = (self.runmax < a_stop) & (self.n < cap)
            if not live.any():
                return
            for i in np.flatnonzero(live & (self.pos >= self.block)):
                self.Z[i] = self.rngs[i].standard_normal((self.block, self.K))
                self.pos[i] = 0
            prev = self.runmax.copy()
            K_.advance(self.det, self.kind, self.m0, self.m1, self.b, self.r,
                       lp.rho, lp.s0, lp.t0, sh.p0, sh.window,
                       self.onset, self.real_pre, self.real_post,
                       self.state, self.ring, self.n, self.Z, self.pos, self.runmax,
                       float(a_stop), int(cap), self.b_tx,
                       self.g_out, self.tx_out, self.steps)
            K_.records(self.g_out, self.steps, prev, self.n, self._rt, self._rv, self._rc)
            for i in np.flatnonzero(self._rc):
                c = self._rc[i]
                self._rec_t[i].append(self._rt[i, :c].copy())
                self._rec_v[i].append(self._rv[i, :c].copy())
            if on_block is not None:
                on_block(self)

    def record_arrays(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        if not self._rec_t[i]:
            return np.empty(0, dtype=np.int64), np.empty(0)
        if len(self._rec_t[i]) > 1:
            self._rec_t[i] = [np.concatenate(self._rec_t[i])]
            self._rec_v[i] = [np.concatenate(self._rec_v[i])]
        return self._rec_t[i][0], self._rec_v[i][0]

    def passage_times(self, a: float) -> tuple[np.ndarray, np.ndarray]:
        """(first n with G_n >= a, censored flag) per replication.

        Censored paths report the cap. Raises if some path was stopped
        below ``a`` before reaching the cap.
        """
        R = len(self.reps)
        T = np.empty(R, dtype=np.int64)
        cens = np.zeros(R, dtype=bool)
        for i in range(R):
            t, v = self.record_arrays(i)
            j = np.searchsorted(v, a, side="left")
            if j < len(v):
                T[i] = t[j]
            elif self.n[i] >= self.cap:
                T[i] = self.cap
                cens[i] = True
            else:
                raise RuntimeError(f"path {self.reps[i]} not simulated up to level {a}")
        return T, cens

    @property
    def reached(self) -> float:
        """Largest level for which every path's passage time is known."""
        open_ = self.n < self.cap
        if not open_.any():
            return math.inf
        return float(self.runmax[open_].min())


class Ensemble:
    """Replications ``0..reps-1`` split into memory-bounded batches."""

    def __init__(self, spec: SchemeSpec, models: Sequence[StreamModel], scenario: ChangeScenario,
                 seeds: SeedSpec, reps: int, b_tx=None, chunk: int = CHUNK):
        if reps <= 0:
            raise ValueError("need at least one replication")
        self.batches = [Batch(spec, models, scenario, seeds, range(lo, min(lo + chunk, reps)), b_tx)
                        for lo in range(0, reps, chunk)]
        self.reps = reps

    def run(self, a_stop: float, cap: int, on_block=None) -> None:
        for b in self.batches:
            b.run(a_stop, cap, on_block)

    def passage_times(self, a: float) -> tuple[np.ndarray, np.ndarray]:
        parts = [b.passage_times(a) for b in self.batches]
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])

    @property
    def reached(self) -> float:
        return min(b.reached for b in self.batches)


def stopping_times(spec: SchemeSpec, models: Sequence[StreamModel], scenario: ChangeScenario,
                   seeds: SeedSpec, reps: int, cap: int) -> tuple[np.ndarray, np.ndarray]:
    """Stopping times of ``spec`` (threshold ``spec.a``) over ``reps`` paths.

    Memory is released batch by batch, so this suits long delay grids.
    """
    if spec.a is None:
        raise ValueError(f"scheme {spec.name} has no threshold")
    T, cens = [], []
    for lo in range(0, reps, CHUNK):
        b = Batch(spec, models, scenario, seeds, range(lo, min(lo + CHUNK, reps)))
        b.run(spec.a, cap)
        hit = b.runmax >= spec.a
        T.append(b.n.copy())
        cens.append(~hit)
    return np.concatenate(T), np.concatenate(cens)
