"""Special functions and quantiles used by the threshold formulas.

Gaussian tail/quantile, the upper quantile of a Binomial(n, 1/2), the
centering remainder factors built on it, and the constant C_n that
calibrates the standard-deviation upper bound.
"""

from __future__ import annotations

import bisect
import math
from fractions import Fraction
from functools import lru_cache

from scipy import special

__all__ = [
    "check_probability",
    "gauss_upper_tail",
    "gauss_upper_quantile",
    "binom_upper_quantile",
    "gamma1",
    "gammak_sequence",
    "cn_constant",
]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def check_probability(value: float, name: str = "probability") -> float:
    """Return ``value`` as a float, raising ``ValueError`` unless 0 < value < 1."""
    value = float(value)
    if not (0.0 < value < 1.0):
        raise ValueError(f"{name} must lie in (0, 1), got {value!r}")
    return value


def gauss_upper_tail(x: float) -> float:
    """P(N(0, 1) >= x)."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"gauss_upper_tail needs a finite argument, got {x!r}")
    return float(0.5 * special.erfc(x / math.sqrt(2.0)))


def gauss_upper_quantile(p: float) -> float:
    """Inverse of :func:`gauss_upper_tail`: the x with P(N(0,1) >= x) = p.

    Starts from ``ndtri`` and polishes with safeguarded Newton steps on the
    tail equation, so the round trip holds to ~1e-14 relative error even for
    the very small levels produced by Bonferroni-type splits.
    """
    p = check_probability(p, "p")
    if p > 0.5:
        return -gauss_upper_quantile(1.0 - p)
    if p == 0.5:
        return 0.0
    x = -float(special.ndtri(p))
    for _ in range(3):
        dens = _INV_SQRT_2PI * math.exp(-0.5 * x * x)
        if dens == 0.0:
            break
        step = (gauss_upper_tail(x) - p) / dens
        x += step
        if abs(step) <= 1e-15 * max(1.0, abs(x)):
            break
    return x


@lru_cache(maxsize=32)
def _binom_half_tail_counts(n: int) -> tuple[int, ...]:
    """Exact integers T[k] = sum_{i >= k} C(n, i) for k = 0..n, nonincreasing."""
    counts = [0] * (n + 2)
    c = 1  # C(n, n)
    for i in range(n, -1, -1):
        counts[i] = counts[i + 1] + c
        if i > 0:
            c = c * i // (n - i + 1)
    return tuple(counts[: n + 1])


@lru_cache(maxsize=1024)
def binom_upper_quantile(n: int, eta: float) -> int:
    """Largest k in {0..n} with P(Binomial(n, 1/2) >= k) >= eta.

    Tail sums are exact integer arithmetic (no normal approximation), so the
    result is certified for any n the caller can afford; n = 1e4 takes a few
    milliseconds on first use and is cached afterwards.
    """
    n = int(n)
    if n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    eta = float(eta)
    if not (0.0 < eta <= 1.0):
        raise ValueError(f"eta must lie in (0, 1], got {eta!r}")
    frac = Fraction(eta)
    target_num, target_den = frac.numerator << n, frac.denominator
    tails = _binom_half_tail_counts(n)
    # tail(k) >= eta  <=>  T[k] * den >= num * 2^n ; predicate true on a prefix of k.
    keys = [-(t * target_den) for t in tails]
    first_false = bisect.bisect_right(keys, -target_num)
    return first_false - 1


def gamma1(n: int, eta: float) -> float:
    """Centering remainder factor (2 * Bbar(n, eta/2) - n) / n."""
    return (2 * binom_upper_quantile(n, eta / 2.0) - n) / n


def gammak_sequence(n: int, alphas, delta: float) -> list[float]:
    """Factors gamma_1..gamma_J for the iterated quantile threshold.

    gamma_k = n^{-k} prod_{i<k} (2 * Bbar(n, alphas[i] * delta / 2) - n),
    with J = len(alphas).
    """
    alphas = [check_probability(a, "alpha_i") for a in alphas]
    if not alphas:
        raise ValueError("alphas must be nonempty")
    out: list[float] = []
    acc = 1.0
    for a in alphas:
        acc *= (2 * binom_upper_quantile(n, a * delta / 2.0) - n) / n
        out.append(acc)
    return out


def cn_constant(n: int) -> float:
    """C_n = sqrt(2/n) * Gamma(n/2) / Gamma((n-1)/2).

    The Gamma ratio is the Pochhammer symbol ((n-1)/2)_{1/2}, which never
    overflows and, unlike a difference of log-Gammas, keeps full relative
    precision for large n.
    """
    n = int(n)
    if n < 2:
        raise ValueError(f"cn_constant needs n >= 2, got {n}")
    return float(math.sqrt(2.0 / n) * special.poch((n - 1) / 2.0, 0.5))
