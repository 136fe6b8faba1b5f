"""Detection-delay tables, communication accounting and theoretical bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .combiners import SchemeSpec
from .engine import Batch, CHUNK, stopping_times
from .models import ChangeScenario, SeedSpec, StreamModel, kl_number

DELAY_CAP = 5000


@dataclass(frozen=True)
class DelayCell:
    mean_delay: float
    se: float
    reps: int
    capped: int = 0


@dataclass(frozen=True)
class CommReport:
    mean_fraction: float
    se: float
    reps: int = 0
    horizon: int = 0


@dataclass
class ExperimentSpec:
    models: tuple
    schemes: list
    scenarios: list
    gamma: float
    reps: int = 2500
    seed: int = 0
    delay_cap: int = DELAY_CAP

    def __post_init__(self):
        K = len(self.models)
        for sc in self.scenarios:
            if sc.K != K:
                raise ValueError(f"scenario with {sc.K} streams in a {K}-stream experiment")

    @property
    def K(self) -> int:
        return len(self.models)


def simulate_delay(spec: SchemeSpec, models: Sequence[StreamModel], scenario: ChangeScenario,
                   reps: int, seeds: SeedSpec, cap: int = DELAY_CAP) -> DelayCell:
    """Mean stopping time with the change at nu=1, which equals the mean delay T - nu + 1."""
    if scenario.nu != 1:
        raise ValueError("delays are simulated with the change-point at nu=1")
    T, cens = stopping_times(spec, models, scenario, seeds, reps, cap)
    se = float(T.std(ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan
    return DelayCell(float(T.mean()), se, reps, int(cens.sum()))


@dataclass
class DelayTable:
    schemes: list
    scenarios: list
    cells: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)

    def cell(self, scheme: str, col: int) -> DelayCell:
        return self.cells[(scheme, col)]

    def se_range(self) -> list[tuple[float, float]]:
        """(smallest, largest) SE across schemes, per scenario column."""
        out = []
        for j in range(len(self.scenarios)):
            ses = [self.cells[(s.name, j)].se for s in self.schemes if (s.name, j) in self.cells]
            out.append((min(ses), max(ses)) if ses else (math.nan, math.nan))
        return out

    def means(self) -> np.ndarray:
        return np.array([[self.cells[(s.name, j)].mean_delay for j in range(len(self.scenarios))]
                         for s in self.schemes])


def run_table(exp: ExperimentSpec,
              on_cell: Callable[[SchemeSpec, int, DelayCell], None] | None = None) -> DelayTable:
    """One delay cell per (scheme, scenario), all on shared replication seeds."""
    seeds = SeedSpec(exp.seed)
    table = DelayTable(list(exp.schemes), list(exp.scenarios))
    for j, sc in enumerate(exp.scenarios):
        table.bounds[j] = info_lower_bound(exp.gamma, sc, exp.models) if sc.affected else math.nan
    for spec in exp.schemes:
        for j, sc in enumerate(exp.scenarios):
            cell = simulate_delay(spec, exp.models, sc, exp.reps, seeds, exp.delay_cap)
            table.cells[(spec.name, j)] = cell
            if on_cell is not None:
                on_cell(spec, j, cell)
    return table


def transmission_fraction(spec: SchemeSpec, models: Sequence[StreamModel], horizon: int, reps: int,
                          seeds: SeedSpec, b: Sequence[float] | float | None = None) -> CommReport:
    """Average fraction of sensors with W_k >= b_k per step, with no change.

    ``b`` defaults to the scheme's own censoring vector. The SE treats the
    per-path time averages as independent.
    """
    K = len(models)
    bvec = spec.shrinkage.b_vector(K) if b is None else np.broadcast_to(np.asarray(b, float), (K,))
    per_rep = np.zeros(reps)
    sc = ChangeScenario.no_change(K)
    for lo in range(0, reps, CHUNK):
        batch = Batch(spec.with_threshold(None), models, sc, seeds, range(lo, min(lo + CHUNK, reps)), b_tx=bvec)

        def gather(bt):
            for i in range(len(bt.reps)):
                s = bt.steps[i]
                if s:
                    per_rep[bt.reps[i]] += bt.tx_out[i, :s].sum()

        batch.run(math.inf, horizon, gather)
    frac = per_rep / (horizon * K)
    se = float(frac.std(ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan
    return CommReport(float(frac.mean()), se, reps, horizon)


def info_lower_bound(gamma: float, scenario: ChangeScenario, models: Sequence[StreamModel]) -> float:
    """First-order delay floor log(gamma) / J, J = total KL of affected streams."""
    if not scenario.affected:
        raise ValueError("scenario affects no stream")
    J = sum(kl_number(models[k]) for k in scenario.affected)
    return math.log(gamma) / J


def log_arl_bound(K: int, a: float) -> float:
    """log of e^a / sum_{j<K} a^j / j!, via log-sum-exp."""
    if not a > 0:
        raise ValueError("a must be positive")
    terms = np.array([j * math.log(a) - math.lgamma(j + 1) for j in range(K)])
    top = terms.max()
    return a - (top + math.log(np.exp(terms - top).sum()))


def arl_bound_report(K: int, a: float) -> float:
    """Lower bound on the ARL to false alarm at global threshold a for K streams."""
    lb = log_arl_bound(K, a)
    return math.exp(lb) if lb < 709 else math.inf
