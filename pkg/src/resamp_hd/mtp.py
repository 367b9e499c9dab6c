"""FWER-controlling multiple tests built on threshold families.

Hypotheses are the coordinates k with null [[mu_k]] = 0, where [[x]] is
max(x, 0) (one-sided) or |x| (two-sided). A coordinate is rejected when
[[Ybar_k]] strictly exceeds the current threshold; ties survive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._parallel import map_ordered, worker_count
from .aggregators import Aggregator, OneSidedSup, TwoSidedSup
from .errors import StepDownNotConverged, UnsupportedGuaranteeError
from .resample import as_data_matrix
from .thresholds import (
    Bonferroni,
    Known,
    Method,
    QuantBonf,
    QuantUncentered,
    ThresholdFamily,
    ThresholdSpec,
)

__all__ = [
    "bracket",
    "StepDownResult",
    "run_step_down",
    "single_step",
    "step_down",
    "holm",
    "hybrid",
    "Procedure",
    "FwerEstimate",
    "PowerEstimate",
    "evaluate_fwer",
    "evaluate_power",
    "trial_outcomes",
    "worker_count",
]


def bracket(x, agg: Aggregator) -> np.ndarray:
    """[[x]] coordinatewise: positive part for one-sided, absolute value for two-sided."""
    x = np.asarray(x, dtype=np.float64)
    if isinstance(agg, OneSidedSup):
        return np.maximum(x, 0.0)
    if isinstance(agg, TwoSidedSup):
        return np.abs(x)
    raise ValueError("multiple tests need a one- or two-sided sup aggregator")


@dataclass
class StepDownResult:
    """Outcome of a (possibly single-pass) step-down run.

    ``trace`` holds (C_{j-1} as an index array, threshold t(C_{j-1})) for each
    threshold evaluation j = 1..iterations. ``iteration_rejected[k]`` is the
    iteration at which k was rejected (0 if never).
    """

    rejected: np.ndarray
    trace: list
    iterations: int
    iteration_rejected: np.ndarray
    converged: bool = True

    @property
    def rejected_mask(self) -> np.ndarray:
        m = np.zeros(self.iteration_rejected.size, dtype=bool)
        m[self.rejected] = True
        return m

    def rejected_after(self, t: int) -> np.ndarray:
        """Rejection mask had the run been stopped after at most ``t`` iterations."""
        r = self.iteration_rejected
        return (r > 0) & (r <= t)


def run_step_down(values, family: Callable[[np.ndarray], float], start=None, max_iter: int | None = None,
                  early_stop: int | None = None, offset: int = 0) -> StepDownResult:
    """Iterate C_j = {k in C_{j-1} : values_k <= t(C_{j-1})} to its fixed point.

    ``family`` maps a boolean mask to a threshold. The run stops at the first
    j with C_j = C_{j-1}, or as soon as C_j is empty (the empty set is never
    queried). ``early_stop`` caps the number of threshold evaluations and
    returns the current state; hitting ``max_iter`` (default |C_0| + 1) instead
    raises :class:`StepDownNotConverged`. ``offset`` shifts the iteration
    numbers recorded in ``iteration_rejected``.
    """
    values = np.asarray(values, dtype=np.float64)
    K = values.size
    C = np.ones(K, dtype=bool) if start is None else np.asarray(start, dtype=bool).copy()
    H = np.ones(K, dtype=bool)
    max_iter = int(C.sum()) + 1 if max_iter is None else int(max_iter)
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    rej_iter = np.zeros(K, dtype=int)
    trace = []
    j = 0
    converged = False
    while C.any():
        if early_stop is not None and j >= early_stop:
            break
        if j >= max_iter:
            raise StepDownNotConverged(f"no fixed point after {max_iter} iterations", trace)
        j += 1
        t = float(family(C))
        trace.append((np.flatnonzero(C), t))
        new = C & (values <= t)
        rej_iter[C & ~new] = j + offset
        if np.array_equal(new, C):
            converged = True
            break
        C = new
    else:
        converged = True
    rejected = np.flatnonzero(H & (rej_iter > 0))
    return StepDownResult(rejected=rejected, trace=trace, iterations=j,
                          iteration_rejected=rej_iter, converged=converged)


def _family(spec: ThresholdSpec, Y, alpha, rng) -> ThresholdFamily:
    return ThresholdFamily(spec, Y, alpha, rng)


def single_step(Y, spec: ThresholdSpec, alpha: float = 0.05, rng=None) -> StepDownResult:
    """Reject {k : [[Ybar_k]] > t_alpha(Y, H)}; recorded as one iteration."""
    Y = as_data_matrix(Y)
    fam = _family(spec, Y, alpha, rng)
    return run_step_down(bracket(Y.mean(axis=1), spec.aggregator), fam, early_stop=1)


def step_down(Y, spec: ThresholdSpec, alpha: float = 0.05, rng=None, max_iter: int | None = None,
              early_stop: int | None = None) -> StepDownResult:
    """Step-down procedure over one frozen threshold family."""
    Y = as_data_matrix(Y)
    fam = _family(spec, Y, alpha, rng)
    return run_step_down(bracket(Y.mean(axis=1), spec.aggregator), fam, max_iter=max_iter,
                         early_stop=early_stop)


def holm(Y, alpha: float = 0.05, side: str = "two", sigma=None, early_stop: int | None = None) -> StepDownResult:
    """Step-down Bonferroni. ``sigma`` is a Known/Estimated source (default Known(1))."""
    agg = OneSidedSup() if side == "one" else TwoSidedSup()
    spec = ThresholdSpec(Bonferroni(), agg, Known() if sigma is None else sigma)
    return step_down(Y, spec, alpha, rng=0, early_stop=early_stop)


def hybrid(Y, alpha: float = 0.05, alpha0: float | None = None, delta: float = 0.1, B: int = 1000,
           rng=None, sigma=None, agg: Aggregator | None = None, strict: bool = False,
           early_stop: int | None = None) -> StepDownResult:
    """Centered-quantile single step, then uncentered step-down at alpha0 on what is left.

    The first stage counts as one iteration. ``early_stop`` caps the total.
    """
    agg = TwoSidedSup() if agg is None else agg
    if isinstance(agg, OneSidedSup):
        raise UnsupportedGuaranteeError("the hybrid procedure is two-sided only")
    Y = as_data_matrix(Y)
    a0 = 0.9 * alpha if alpha0 is None else float(alpha0)
    if not 0 < a0 < alpha:
        raise ValueError(f"need 0 < alpha0 < alpha, got alpha0={a0}")
    key = int(np.random.default_rng(rng).integers(2**63))
    sig = Known() if sigma is None else sigma
    values = bracket(Y.mean(axis=1), agg)
    stage1 = ThresholdSpec(QuantBonf(B, alpha0=a0, delta=delta), agg, sig, strict=strict)
    t1 = _family(stage1, Y, alpha, [key, 1])()
    R0 = values > t1
    K = values.size
    rej_iter = np.where(R0, 1, 0)
    trace = [(np.arange(K), t1)]
    if R0.all() or (early_stop is not None and early_stop <= 1):
        return StepDownResult(np.flatnonzero(R0), trace, 1, rej_iter)
    stage2 = ThresholdSpec(QuantUncentered(B), agg, sig, strict=strict)
    fam = _family(stage2, Y, a0, [key, 2])
    rest = run_step_down(values, fam, start=~R0, offset=1,
                         early_stop=None if early_stop is None else early_stop - 1)
    rej_iter = np.where(R0, 1, rest.iteration_rejected)
    return StepDownResult(np.flatnonzero(rej_iter > 0), trace + rest.trace, 1 + rest.iterations,
                          rej_iter, rest.converged)


@dataclass(frozen=True)
class Procedure:
    """A multiple test: ``kind`` is 'single', 'sd', 'holm' or 'hybrid'.

    ``method`` is used by 'single' and 'sd'; 'hybrid' uses ``B``, ``alpha0``
    and ``delta``.
    """

    kind: str = "sd"
    method: Method = field(default_factory=QuantUncentered)
    side: str = "two"
    alpha: float = 0.05
    sigma: object = field(default_factory=Known)
    B: int = 1000
    alpha0: float | None = None
    delta: float = 0.1
    strict: bool = False

    def __post_init__(self):
        if self.kind not in ("single", "sd", "holm", "hybrid"):
            raise ValueError(f"unknown procedure kind {self.kind!r}")
        if self.side not in ("one", "two"):
            raise ValueError(f"side must be 'one' or 'two', got {self.side!r}")

    @property
    def aggregator(self) -> Aggregator:
        return OneSidedSup() if self.side == "one" else TwoSidedSup()

    @property
    def label(self) -> str:
        if self.kind in ("holm", "hybrid"):
            return self.kind
        return f"{self.kind}:{self.method.name}"

    def spec(self) -> ThresholdSpec:
        return ThresholdSpec(self.method, self.aggregator, self.sigma, strict=self.strict)

    def run(self, Y, rng=None, early_stop: int | None = None) -> StepDownResult:
        if self.kind == "single":
            return single_step(Y, self.spec(), self.alpha, rng)
        if self.kind == "sd":
            return step_down(Y, self.spec(), self.alpha, rng, early_stop=early_stop)
        if self.kind == "holm":
            return holm(Y, self.alpha, self.side, self.sigma, early_stop=early_stop)
        return hybrid(Y, self.alpha, self.alpha0, self.delta, self.B, rng, self.sigma,
                      self.aggregator, self.strict, early_stop=early_stop)


# ---------------------------------------------------------------------------
# Monte Carlo evaluation


@dataclass(frozen=True)
class TrialOutcome:
    false_rejection: bool
    power: float
    iterations: int
    power_at: tuple[float, ...]  # power after at most t iterations, for each requested cap


def _one_trial(args) -> TrialOutcome:
    procedure, scenario, seed, trial, early_stop, caps = args
    rng_data = np.random.default_rng([seed, trial, 0])
    Y = scenario.sample(rng_data)
    res = procedure.run(Y, np.random.default_rng([seed, trial, 1]), early_stop=early_stop)
    null = scenario.null_mask
    alt = ~null
    rej = res.rejected_mask
    false_rej = bool((rej & null).any())
    n_alt = int(alt.sum())
    power = float((rej & alt).sum() / n_alt) if n_alt else math.nan
    power_at = tuple(float((res.rejected_after(t) & alt).sum() / n_alt) if n_alt else math.nan for t in caps)
    return TrialOutcome(false_rej, power, res.iterations, power_at)


def trial_outcomes(procedure: Procedure, scenario, trials: int, seed: int = 0, early_stop: int | None = None,
                   caps: tuple[int, ...] = (), workers: int | None = None) -> list[TrialOutcome]:
    """Run ``trials`` independent trials; trial i uses substreams of (seed, i).

    ``scenario`` needs ``sample(rng) -> Y`` and a boolean ``null_mask``. The
    returned list is in trial order whatever the worker count.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    args = [(procedure, scenario, int(seed), i, early_stop, tuple(caps)) for i in range(trials)]
    return map_ordered(_one_trial, args, workers)


@dataclass(frozen=True)
class FwerEstimate:
    fwer: float
    stderr: float
    trials: int


@dataclass(frozen=True)
class PowerEstimate:
    power: float
    stderr: float
    mean_iterations: float
    trials: int
    power_at: dict = field(default_factory=dict)


def evaluate_fwer(procedure: Procedure, scenario, trials: int, seed: int = 0,
                  workers: int | None = None) -> FwerEstimate:
    """Fraction of trials with at least one rejected true null, with binomial stderr."""
    out = trial_outcomes(procedure, scenario, trials, seed, workers=workers)
    f = float(np.mean([o.false_rejection for o in out]))
    return FwerEstimate(f, math.sqrt(f * (1 - f) / trials), trials)


def evaluate_power(procedure: Procedure, scenario, trials: int, seed: int = 0, early_stop: int | None = None,
                   caps: tuple[int, ...] = (), workers: int | None = None) -> PowerEstimate:
    """Mean share of false nulls rejected, and mean iteration count.

    ``caps`` additionally reports the power had each run stopped after at
    most t iterations (read off the same runs).
    """
    if not (~scenario.null_mask).any():
        raise ValueError("power needs at least one false null")
    out = trial_outcomes(procedure, scenario, trials, seed, early_stop, caps, workers)
    p = np.array([o.power for o in out])
    sd = float(p.std(ddof=1)) if trials > 1 else 0.0
    at = {t: float(np.mean([o.power_at[i] for o in out])) for i, t in enumerate(caps)}
    return PowerEstimate(float(p.mean()), sd / math.sqrt(trials),
                         float(np.mean([o.iterations for o in out])), trials, at)
