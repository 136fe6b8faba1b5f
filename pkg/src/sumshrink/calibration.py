"""False-alarm calibration: ARL estimation, threshold search and heuristics."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .combiners import SchemeSpec
from .engine import Ensemble
from .models import ChangeScenario, SeedSpec, StreamModel

log = logging.getLogger(__name__)


class CalibrationError(RuntimeError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class CalibrationTarget:
    gamma: float
    reps: int = 500
    rel_tol: float = 0.02
    horizon_cap: int | None = None
    bracket: tuple[float, float] | None = None
    max_iter: int = 100

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.reps <= 0:
            raise ValueError("need at least one replication")
        if self.horizon_cap is None:
            object.__setattr__(self, "horizon_cap", int(math.ceil(10 * self.gamma)))

    @property
    def cap(self) -> int:
        return int(self.horizon_cap)


@dataclass(frozen=True)
class CalibrationResult:
    a: float
    arl_hat: float
    se: float
    iterations: int
    censored_fraction: float
    success: bool = True
    history: tuple = field(default=(), repr=False)

    def record(self, scheme: str) -> dict:
        return {"scheme": scheme, "a": self.a, "arl_hat": self.arl_hat, "se": self.se,
                "iterations": self.iterations, "censored_fraction": self.censored_fraction}


class ArlEstimate(NamedTuple):
    mean: float
    se: float
    censored_fraction: float


def _summarise(T: np.ndarray, cens: np.ndarray) -> ArlEstimate:
    se = float(T.std(ddof=1) / math.sqrt(len(T))) if len(T) > 1 else math.nan
    return ArlEstimate(float(T.mean()), se, float(cens.mean()))


def estimate_arl(spec: SchemeSpec, models: Sequence[StreamModel], target: CalibrationTarget,
                 seeds: SeedSpec) -> ArlEstimate:
    """Mean run length with no change, paths truncated at the horizon cap."""
    if spec.a is None:
        raise ValueError(f"scheme {spec.name} has no threshold")
    ens = Ensemble(spec, models, ChangeScenario.no_change(len(models)), seeds, target.reps)
    ens.run(spec.a, target.cap)
    return _summarise(*ens.passage_times(spec.a))


def calibrate_threshold(spec: SchemeSpec, models: Sequence[StreamModel], target: CalibrationTarget,
                        seeds: SeedSpec, start: float | None = None) -> CalibrationResult:
    """Find a with estimated ARL(a) close to gamma.

    All candidate thresholds are evaluated on the same replications. The
    paths are simulated once, up to the highest level tried, and every
    ARL(a) below that level is read from the recorded running maxima. The
    estimated curve is therefore monotone in a, and the search is exact on it.
    """
    gamma = target.gamma
    if target.cap < gamma:
        raise CalibrationError(f"horizon cap {target.cap} cannot reach ARL {gamma}")
    ens = Ensemble(spec.with_threshold(None), models, ChangeScenario.no_change(len(models)),
                   seeds, target.reps)
    history = []

    def arl(a):
        est = _summarise(*ens.passage_times(a))
        history.append((float(a), est.mean))
        return est

    # upper bracket: raise the simulated level until the estimate exceeds gamma
    if target.bracket is not None:
        lo, hi = (float(v) for v in target.bracket)
    else:
        if start is None:
            start = _clt_start(spec, models, gamma, seeds)
        lo, hi = 0.0, max(1.0, float(start))
    evals = 0
    while True:
        ens.run(hi, target.cap)
        est = arl(hi)
        evals += 1
        log.debug("bracket a=%.4f ARL=%.1f", hi, est.mean)
        if est.mean > gamma:
            break
        if est.censored_fraction == 1.0:
            raise CalibrationError("every path censored below gamma", {"history": history})
        if hi > 1e6 or evals > 200:
            raise CalibrationError(f"no upper bracket found up to a={hi:g}", {"history": history})
        lo = max(lo, hi)
        nxt = 2.0 * hi
        below = _summarise(*ens.passage_times(0.97 * hi)).mean
        if est.mean > below > 0:
            # local log-linear extrapolation of the simulated ARL curve to 1.25 gamma
            slope = math.log(est.mean / below) / (0.03 * hi)
            nxt = hi + math.log(1.25 * gamma / est.mean) / slope
        hi = min(max(nxt, 1.01 * hi), (1.25 if est.mean >= 2 else 2.0) * hi)

    low = arl(lo)
    if low.mean >= gamma:
        if lo > 0:
            raise CalibrationError(f"lower bracket a={lo:g} already exceeds gamma", {"history": history})
        return CalibrationResult(lo, low.mean, low.se, evals, low.censored_fraction,
                                 abs(low.mean - gamma) <= max(target.rel_tol * gamma, 2 * low.se),
                                 tuple(history))

    it = 0
    mid, est = hi, arl(hi)
    while it < target.max_iter and abs(est.mean - gamma) > target.rel_tol * gamma:
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
        it += 1
        mid = 0.5 * (lo + hi)
        est = arl(mid)
        if est.mean < gamma:
            lo = mid
        else:
            hi = mid
    ok = abs(est.mean - gamma) <= max(target.rel_tol * gamma, 2 * est.se)
    return CalibrationResult(mid, est.mean, est.se, evals + it, est.censored_fraction, ok, tuple(history))


def _clt_start(spec, models, gamma, seeds) -> float:
    try:
        mom = estimate_stationary_moments(spec, models, 200, 1000, seeds.offset(7919), reps=20)
        return clt_threshold(gamma, mom)
    except (ValueError, ZeroDivisionError):
        return 1.0


@dataclass(frozen=True)
class StationaryMoments:
    mu_H: float
    sigma_H: float
    burn_in: int
    se_mu: float = 0.0
    count: int = 0

    def __post_init__(self):
        if self.sigma_H < 0:
            raise ValueError("sigma_H must be nonnegative")


def estimate_stationary_moments(spec: SchemeSpec, models: Sequence[StreamModel], burn_in: int,
                                samples: int, seeds: SeedSpec, reps: int = 50) -> StationaryMoments:
    """Mean and SD of G_n with no change, after discarding ``burn_in`` steps.

    ``se_mu`` is the standard error of ``mu_H`` computed from per-path averages.
    """
    per_rep_sum = np.zeros(reps)
    total = [0.0, 0.0, 0]
    ens = Ensemble(spec.with_threshold(None), models, ChangeScenario.no_change(len(models)), seeds, reps)

    def gather(batch):
        for i in range(len(batch.reps)):
            s = batch.steps[i]
            if s == 0:
                continue
            first = batch.n[i] - s + 1
            keep = batch.g_out[i, max(0, burn_in + 1 - first):s]
            if keep.size:
                per_rep_sum[batch.reps[i]] += keep.sum()
                total[0] += keep.sum()
                total[1] += float(np.dot(keep, keep))
                total[2] += keep.size

    ens.run(math.inf, burn_in + samples, gather)
    n = total[2]
    mu = total[0] / n
    var = max(total[1] / n - mu * mu, 0.0)
    rep_means = per_rep_sum / samples
    se = float(rep_means.std(ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan
    return StationaryMoments(mu, math.sqrt(var), burn_in, se, n)


def chebyshev_threshold(gamma: float, theta0: float, log_mgf_sum: float = 0.0) -> float:
    """Threshold guaranteeing ARL >= gamma from an exponential Chebyshev bound.

    ``log_mgf_sum`` is sum_k psi_k(theta0), the summed log-MGF of the
    limiting shrunk statistics. The plain (log gamma + log 4)/theta0 rule is
    the case where this sum is <= 0.
    """
    if not theta0 > 0:
        raise ValueError("theta0 must be positive")
    return (math.log(gamma) + math.log(4.0) + max(log_mgf_sum, 0.0)) / theta0


def cusum_log_mgf_bound(theta: float, K: int) -> float:
    """Upper bound K * -log(1 - theta) on sum_k psi_k(theta) for CUSUM/SUM.

    Follows from P(W >= x) <= exp(-x) for the stationary CUSUM, 0 < theta < 1.
    """
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    return -K * math.log1p(-theta)


def clt_threshold(gamma: float, moments: StationaryMoments) -> float:
    if gamma <= 1:
        raise ValueError("gamma must exceed 1")
    if not moments.sigma_H > 0:
        raise ValueError("sigma_H must be positive")
    return moments.mu_H + normal_quantile(1.0 - 1.0 / gamma) * moments.sigma_H


def censoring_from_eta(eta: float, kl_numbers: Sequence[float]) -> np.ndarray:
    """Local censoring thresholds b_k = rho_k * b with b = log(1/eta) / rho_min.

    rho_k is stream k's share of the total KL information. With no change,
    on average at most a fraction eta of sensors transmit.
    """
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    info = np.asarray(kl_numbers, dtype=float)
    if info.size == 0 or not np.all(info > 0):
        raise ValueError("KL numbers must be positive")
    rho = info / info.sum()
    b = math.log(1.0 / eta) / rho.min()
    return rho * b


def bayes_b1(pi: float) -> float:
    """Soft-threshold level log((1 - pi) / pi) for prior affected fraction pi."""
    if not 0 < pi < 1:
        raise ValueError("pi must lie in (0, 1)")
    return math.log((1.0 - pi) / pi)


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


# Acklam's rational approximation coefficients
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF, rational approximation plus one Halley step."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    if p < _P_LOW:
        q = math.sqrt(-2 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    elif p <= 1 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1)
    else:
        q = math.sqrt(-2 * math.log1p(-p))
        x = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    # refine against the tail that is computed accurately
    if p < 0.5:
        e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    else:
        e = -(0.5 * math.erfc(x / math.sqrt(2.0)) - (1.0 - p))
    u = e * math.sqrt(2 * math.pi) * math.exp(x * x / 2)
    return x - u / (1 + x * u / 2)
