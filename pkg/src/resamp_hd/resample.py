"""Resampled statistics of a K x n data matrix.

Rows are coordinates, columns are observations. Everything here is a pure
function of the data and an explicit random generator (or an explicit weight
matrix), so the threshold layer can freeze weight draws and reuse them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .aggregators import Aggregator, LpNorm
from .errors import CapacityError, InfeasibleLevelError
from .numerics import check_probability, cn_constant, gauss_upper_quantile
from .weights import Rademacher, WeightScheme, constants, enumerate_weights

__all__ = [
    "as_data_matrix",
    "empirical_mean",
    "resampled_mean",
    "resampled_means",
    "signed_means",
    "ExpectationEstimate",
    "resampled_expectation",
    "mc_expectation_correction",
    "tilde_sigma",
    "order_statistic_quantile",
    "exact_quantile_rademacher",
    "QuantileEstimate",
    "mc_quantile",
    "empirical_gamma",
    "sigma_hat",
    "sigma_inflation",
    "sigma_upper_bound",
    "loo_prediction_risk",
    "risk_interval",
]

MAX_EXACT_N = 20


def as_data_matrix(Y) -> np.ndarray:
    """Validate and return Y as a float K x n array (K >= 1, n >= 2, finite)."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[None, :]
    if Y.ndim != 2:
        raise ValueError(f"data must be a K x n matrix, got shape {Y.shape}")
    if Y.shape[1] < 2:
        raise ValueError(f"need n >= 2 observations, got n = {Y.shape[1]}")
    if not np.all(np.isfinite(Y)):
        raise ValueError("data contain non-finite entries")
    return Y


def empirical_mean(Y) -> np.ndarray:
    return as_data_matrix(Y).mean(axis=1)


def resampled_means(Y, W) -> np.ndarray:
    """Rows n^-1 sum_i (W_i - Wbar)(Y^i - Ybar) for each weight row of W; shape (B, K)."""
    Y = np.asarray(Y, dtype=np.float64)
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    if W.shape[1] != Y.shape[1]:
        raise ValueError(f"weights have length {W.shape[1]}, data have n = {Y.shape[1]}")
    Yc = Y - Y.mean(axis=1, keepdims=True)
    Wc = W - W.mean(axis=1, keepdims=True)
    return Wc @ Yc.T / Y.shape[1]


def resampled_mean(Y, w) -> np.ndarray:
    """n^-1 sum_i (w_i - wbar) Y^i for a single weight vector."""
    return resampled_means(Y, np.asarray(w)[None, :])[0]


def signed_means(Y, W) -> np.ndarray:
    """Uncentered n^-1 sum_i W_i Y^i for each weight row; shape (B, K)."""
    Y = np.asarray(Y, dtype=np.float64)
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    return W @ Y.T / Y.shape[1]


@dataclass(frozen=True)
class ExpectationEstimate:
    raw: float
    stderr: float


def _weights(scheme: WeightScheme, n: int, B: int, rng, exhaustive: bool) -> np.ndarray:
    if exhaustive:
        return enumerate_weights(scheme, n)
    if B < 1:
        raise ValueError(f"B must be >= 1, got {B}")
    scheme.validate(n)
    return scheme.draw(n, B, np.random.default_rng(rng))


def resampled_expectation(Y, agg: Aggregator, scheme: WeightScheme, B: int, rng=None,
                          exhaustive: bool = False) -> ExpectationEstimate:
    """Monte Carlo (or exhaustive) estimate of E_W[phi(resampled mean)].

    Not divided by B_W; that scaling belongs to the threshold formulas.
    """
    Y = as_data_matrix(Y)
    W = _weights(scheme, Y.shape[1], B, rng, exhaustive)
    vals = agg(resampled_means(Y, W))
    if exhaustive or vals.size == 1:
        return ExpectationEstimate(float(vals.mean()), 0.0)
    return ExpectationEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size)))


def mc_expectation_correction(Y, agg: Aggregator, c1: float, c2: float, B: int, beta: float) -> float:
    """Additive slack (c2 - c1) sqrt(log(1/beta) / (2B)) ||tilde_sigma||_p.

    Makes a B-draw Monte Carlo mean an upper bound on the exact resampled
    expectation with probability >= 1 - beta, for weights with
    W_1 - Wbar in [c1, c2]. ``beta = 1`` is accepted and gives 0.
    """
    if not c1 < c2:
        raise ValueError(f"need c1 < c2, got [{c1}, {c2}]")
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    return (c2 - c1) * math.sqrt(math.log(1.0 / beta) / (2.0 * B)) * agg.norm(tilde_sigma(Y))


def tilde_sigma(Y) -> np.ndarray:
    """Mean absolute deviation of each row from its (lower) median."""
    Y = as_data_matrix(Y)
    n = Y.shape[1]
    med = np.partition(Y, (n - 1) // 2, axis=1)[:, (n - 1) // 2]
    return np.abs(Y - med[:, None]).mean(axis=1)


def order_statistic_quantile(stats, alpha: float) -> float:
    """The (floor(alpha N) + 1)-th largest of ``stats`` (``-inf`` past the end).

    This is the infimum of {x : #{s > x} <= alpha N} and also of
    {x : #{s >= x} <= alpha N}; both readings give the same number.
    The floor is taken on the exact binary value of ``alpha``.
    """
    s = np.asarray(stats, dtype=np.float64).ravel()
    N = s.size
    m = math.floor(Fraction(float(alpha)) * N) + 1
    if m > N:
        return -math.inf
    return float(np.partition(s, N - m)[N - m])


def exact_quantile_rademacher(Y, agg: Aggregator, alpha: float) -> float:
    """q_alpha over all 2^n sign vectors, applied to Y as passed (no centering).

    Pass ``Y - Ybar`` for the centered quantile. Needs n <= 20.
    """
    Y = as_data_matrix(Y)
    check_probability(alpha, "alpha")
    n = Y.shape[1]
    if n > MAX_EXACT_N:
        raise CapacityError(f"exact enumeration needs n <= {MAX_EXACT_N}, got n = {n}; use mc_quantile")
    W = Rademacher().support(n)
    return order_statistic_quantile(agg(signed_means(Y, W)), alpha)


@dataclass(frozen=True)
class QuantileEstimate:
    q: float
    wbar_abs: np.ndarray

    @property
    def degenerate(self) -> bool:
        return self.q == -math.inf


def mc_quantile(Y, agg: Aggregator, alpha: float, B: int = 1000, rng=None, weights=None) -> QuantileEstimate:
    """Monte Carlo Rademacher quantile of phi(n^-1 sum_i W_i Y^i).

    ``weights`` (shape (B, n)) replaces the random draws, e.g. with the full
    sign-vector support for an exhaustive check.
    """
    Y = as_data_matrix(Y)
    if weights is None:
        if B < 1:
            raise ValueError(f"B must be >= 1, got {B}")
        weights = Rademacher().draw(Y.shape[1], B, np.random.default_rng(rng))
    weights = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    q = order_statistic_quantile(agg(signed_means(Y, weights)), alpha)
    return QuantileEstimate(q=q, wbar_abs=np.abs(weights.mean(axis=1)))


def empirical_gamma(wbar_abs, eta: float) -> float:
    """max{y >= 0 : #{|Wbar^j| >= y} >= eta B}: the ceil(eta B)-th largest entry."""
    v = np.asarray(wbar_abs, dtype=np.float64).ravel()
    B = v.size
    if B < 1:
        raise ValueError("need at least one draw")
    m = math.ceil(Fraction(float(eta)) * B)
    if m > B:
        return 0.0
    m = max(m, 1)
    return float(max(np.partition(v, B - m)[B - m], 0.0))


def sigma_hat(Y) -> np.ndarray:
    """Per-row standard deviation with 1/n normalization."""
    Y = as_data_matrix(Y)
    return np.sqrt(((Y - Y.mean(axis=1, keepdims=True)) ** 2).mean(axis=1))


def sigma_inflation(n: int, delta: float) -> float:
    """Factor (C_n - Phibar^-1(delta/2)/sqrt(n))^-1 turning ||sigma_hat|| into an upper bound."""
    check_probability(delta, "delta")
    denom = cn_constant(n) - gauss_upper_quantile(delta / 2.0) / math.sqrt(n)
    if denom <= 0:
        raise InfeasibleLevelError(
            f"standard-deviation bound is vacuous at n = {n}, delta = {delta} (denominator {denom:.4g})")
    return 1.0 / denom


def sigma_upper_bound(Y, agg: Aggregator, delta: float) -> float:
    """Upper confidence bound (level 1 - delta) on ||sigma|| in the norm bounding ``agg``."""
    Y = as_data_matrix(Y)
    return sigma_inflation(Y.shape[1], delta) * agg.norm(sigma_hat(Y))


def loo_prediction_risk(Y, p: float = 2.0) -> float:
    """n^-1 sum_i ||Ybar^(-i) - Y^i||_p."""
    Y = as_data_matrix(Y)
    n = Y.shape[1]
    total = Y.sum(axis=1, keepdims=True)
    loo_means = (total - Y) / (n - 1)
    return float(LpNorm(p)((loo_means - Y).T).mean())


@dataclass(frozen=True)
class RiskInterval:
    lower: float
    upper: float


def risk_interval(Y, p: float, alpha: float, scheme: WeightScheme, B: int = 1000, rng=None,
                  sigma=None, delta_sigma: float | None = None, exhaustive: bool = False) -> RiskInterval:
    """One-sided bounds on E||Ybar - mu||_p, each at level 1 - alpha.

    Jointly they hold with probability >= 1 - 2 alpha. With ``sigma=None``
    the standard deviations are bounded from the data at level
    ``delta_sigma`` (default alpha/10) and each side runs at alpha - delta_sigma.
    """
    Y = as_data_matrix(Y)
    n = Y.shape[1]
    check_probability(alpha, "alpha")
    agg = LpNorm(p)
    if sigma is None:
        delta_sigma = alpha / 10.0 if delta_sigma is None else delta_sigma
        if not 0 < delta_sigma < alpha:
            raise ValueError("delta_sigma must lie in (0, alpha)")
        sig_norm = sigma_upper_bound(Y, agg, delta_sigma)
        level = alpha - delta_sigma
    else:
        sig_norm = agg.norm(np.broadcast_to(np.asarray(sigma, dtype=np.float64), (Y.shape[0],)))
        level = alpha
    k = constants(scheme, n)
    e = resampled_expectation(Y, agg, scheme, B, rng, exhaustive=exhaustive).raw
    s = sig_norm * k.c_w * gauss_upper_quantile(level / 2.0) / n
    upper = (e + s) / k.b_w_lower if e + s >= 0 else (e + s) / k.b_w_upper
    lower = min((e - s) / k.b_w_lower, (e - s) / k.b_w_upper)
    return RiskInterval(lower=float(lower), upper=float(upper))
