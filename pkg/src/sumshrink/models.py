"""Stream models, change scenarios and seeded random substreams.

Observations are unit-variance Gaussians by default. Other pre/post density
pairs can be plugged in through :func:`register_family`; they work with the
pure-Python monitor in :mod:`sumshrink.combiners` but not with the compiled
simulation engine, which is Gaussian only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

INF = math.inf
# onset sentinel handed to the compiled kernels for "never affected"
NEVER = np.iinfo(np.int64).max // 4


@dataclass(frozen=True)
class Family:
    llr: Callable[[float, tuple, tuple], float]
    kl: Callable[[tuple, tuple], float]
    draw: Callable[[np.random.Generator, tuple], float]


def _gauss_llr(x, pre, post):
    m0, m1 = pre[0], post[0]
    return (m1 - m0) * x - 0.5 * (m1 * m1 - m0 * m0)


def _gauss_kl(pre, post):
    return 0.5 * (post[0] - pre[0]) ** 2


def _gauss_draw(rng, params):
    return params[0] + rng.standard_normal()


FAMILIES: dict[str, Family] = {
    "gaussian_mean": Family(_gauss_llr, _gauss_kl, _gauss_draw),
}


def register_family(name: str, llr, kl, draw) -> None:
    """Add a pre/post density family usable by :class:`StreamModel`.

    ``llr(x, pre, post)`` must return log g(x)/f(x), ``kl(pre, post)`` the
    information number I(g, f), and ``draw(rng, params)`` one observation.
    """
    FAMILIES[name] = Family(llr, kl, draw)


@dataclass(frozen=True)
class StreamModel:
    family: str = "gaussian_mean"
    pre_params: tuple = (0.0,)
    post_params: tuple = (1.0,)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        object.__setattr__(self, "pre_params", tuple(float(p) for p in self.pre_params))
        object.__setattr__(self, "post_params", tuple(float(p) for p in self.post_params))
        info = self.kl_number()
        if not (math.isfinite(info) and info > 0):
            raise ValueError(f"KL number must be finite and positive, got {info}")

    @classmethod
    def gaussian(cls, post_mean: float, pre_mean: float = 0.0) -> "StreamModel":
        return cls("gaussian_mean", (pre_mean,), (post_mean,))

    @property
    def is_gaussian(self) -> bool:
        return self.family == "gaussian_mean"

    @property
    def pre_mean(self) -> float:
        return self.pre_params[0]

    @property
    def post_mean(self) -> float:
        return self.post_params[0]

    def llr(self, x: float) -> float:
        return llr(self, x)

    def kl_number(self) -> float:
        return kl_number(self)


def llr(model: StreamModel, x: float) -> float:
    """Log-likelihood ratio log g(x)/f(x) of one observation."""
    if not math.isfinite(x):
        raise ValueError(f"non-finite observation {x!r}")
    return FAMILIES[model.family].llr(x, model.pre_params, model.post_params)


def kl_number(model: StreamModel) -> float:
    return FAMILIES[model.family].kl(model.pre_params, model.post_params)


def homogeneous(K: int, post_mean: float = 1.0) -> tuple[StreamModel, ...]:
    return (StreamModel.gaussian(post_mean),) * K


@dataclass(frozen=True)
class ChangeScenario:
    """Change-point ``nu`` with per-stream delay effects.

    Stream k is post-change at time n iff ``n >= nu + delays[k]``; an
    infinite delay means the stream is never affected. ``post_means``
    optionally overrides the post-change mean actually realised on each
    stream (Gaussian models only); ``None`` means "as designed".
    """

    nu: float
    delays: tuple
    post_means: tuple | None = None

    def __post_init__(self):
        delays = tuple(INF if d is None or d == INF else int(d) for d in self.delays)
        object.__setattr__(self, "delays", delays)
        if self.nu != INF and (int(self.nu) != self.nu or self.nu < 1):
            raise ValueError(f"change-point must be a positive integer or inf, got {self.nu}")
        if any(d != INF and d < 0 for d in delays):
            raise ValueError("delay effects must be nonnegative")
        finite = [d for d in delays if d != INF]
        if finite and min(finite) != 0:
            raise ValueError("the smallest finite delay effect must be 0")
        if self.post_means is not None:
            pm = tuple(float(m) for m in self.post_means)
            if len(pm) != len(delays):
                raise ValueError("post_means length does not match delays")
            object.__setattr__(self, "post_means", pm)

    @property
    def K(self) -> int:
        return len(self.delays)

    @property
    def min_finite_delay_zero(self) -> bool:
        finite = [d for d in self.delays if d != INF]
        return not finite or min(finite) == 0

    @property
    def affected(self) -> tuple[int, ...]:
        if self.nu == INF:
            return ()
        return tuple(k for k, d in enumerate(self.delays) if d != INF)

    def is_post_change(self, k: int, n: int) -> bool:
        return self.nu != INF and self.delays[k] != INF and n >= self.nu + self.delays[k]

    def onsets(self) -> np.ndarray:
        """First post-change time per stream, ``NEVER`` when unaffected."""
        out = np.full(self.K, NEVER, dtype=np.int64)
        if self.nu == INF:
            return out
        for k, d in enumerate(self.delays):
            if d != INF:
                out[k] = int(self.nu) + d
        return out

    @classmethod
    def no_change(cls, K: int) -> "ChangeScenario":
        return cls(INF, (0,) * K)

    @classmethod
    def first_m(cls, K: int, m: int, nu: int = 1, post_mean: float | None = None) -> "ChangeScenario":
        """Streams ``0..m-1`` change instantaneously at ``nu``."""
        if not 0 <= m <= K:
            raise ValueError(f"affected count {m} outside [0, {K}]")
        delays = tuple(0 if k < m else INF for k in range(K))
        pm = None if post_mean is None else (float(post_mean),) * K
        return cls(nu, delays, pm)

    @classmethod
    def from_indices(cls, K: int, indices: Sequence[int], nu: int = 1,
                     delays: Sequence[int] | None = None,
                     post_mean: float | Sequence[float] | None = None) -> "ChangeScenario":
        d = [INF] * K
        for j, k in enumerate(indices):
            if not 0 <= k < K:
                raise ValueError(f"stream index {k} outside [0, {K})")
            d[k] = 0 if delays is None else delays[j]
        if post_mean is None:
            pm = None
        elif np.ndim(post_mean) == 0:
            pm = (float(post_mean),) * K
        else:
            pm = tuple(post_mean)
        return cls(nu, tuple(d), pm)


def realised_means(models: Sequence[StreamModel], scenario: ChangeScenario) -> tuple[np.ndarray, np.ndarray]:
    """(pre-change means, post-change means) actually used to draw data."""
    if not all(m.is_gaussian for m in models):
        raise ValueError("the compiled engine only supports the gaussian_mean family")
    pre = np.array([m.pre_mean for m in models], dtype=float)
    if scenario.post_means is None:
        post = np.array([m.post_mean for m in models], dtype=float)
    else:
        post = np.array(scenario.post_means, dtype=float)
    return pre, post


def sample(model: StreamModel, scenario: ChangeScenario, k: int, n: int,
           rng: np.random.Generator) -> float:
    """Draw X_{k,n}: from f_k before ``nu + delays[k]``, from g_k from then on."""
    if not 0 <= k < scenario.K:
        raise IndexError(f"stream {k} outside [0, {scenario.K})")
    if n < 1:
        raise ValueError("time steps start at 1")
    fam = FAMILIES[model.family]
    if not scenario.is_post_change(k, n):
        return fam.draw(rng, model.pre_params)
    if scenario.post_means is not None and model.is_gaussian:
        return fam.draw(rng, (scenario.post_means[k],))
    return fam.draw(rng, model.post_params)


@dataclass(frozen=True)
class SeedSpec:
    """Maps a replication index to its own random substream.

    Replication ``rep`` owns ``PCG64(SeedSequence(master_seed, spawn_key=(rep,)))``.
    Its draws fill a (time, stream) array row by row, so stream k of
    replication ``rep`` is column k. The path is a pure function of
    ``(master_seed, rep, K)`` and does not depend on how replications are
    batched, ordered or threaded.
    """

    master_seed: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ValueError("master_seed must fit in 64 unsigned bits")

    def rng(self, rep: int) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(rep),))
        return np.random.Generator(np.random.PCG64(ss))

    def offset(self, tag: int) -> "SeedSpec":
        """A disjoint seed family, e.g. for an independent validation run."""
        return SeedSpec((int(self.master_seed) * 0x9E3779B97F4A7C15 + int(tag) + 1) % 2 ** 64)


def observation_path(models: Sequence[StreamModel], scenario: ChangeScenario,
                     seeds: SeedSpec, rep: int, n_steps: int) -> np.ndarray:
    """Observations X_{k,n}, n = 1..n_steps, as an (n_steps, K) array.

    Uses exactly the noise the simulation engine consumes for ``rep``.
    """
    pre, post = realised_means(models, scenario)
    z = seeds.rng(rep).standard_normal((n_steps, scenario.K))
    n = np.arange(1, n_steps + 1)[:, None]
    return np.where(n >= scenario.onsets()[None, :], post, pre) + z
