import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resamp_hd.numerics import (
    binom_upper_quantile,
    check_probability,
    cn_constant,
    gamma1,
    gammak_sequence,
    gauss_upper_quantile,
    gauss_upper_tail,
)

mpmath.mp.dps = 40


def tail_oracle(x):
    return float(mpmath.erfc(mpmath.mpf(x) / mpmath.sqrt(2)) / 2)


def binom_bar_brute(n, eta):
    """max{k : 2^-n sum_{i>=k} C(n,i) >= eta}, exact rationals."""
    best = 0
    for k in range(n + 1):
        tail = Fraction(sum(math.comb(n, i) for i in range(k, n + 1)), 2**n)
        if tail >= Fraction(eta):
            best = k
    return best


# Frozen from the mpmath / exact-rational oracles above.
def test_tail_known_values():
    assert gauss_upper_tail(0.0) == 0.5
    assert gauss_upper_tail(1.959964) == pytest.approx(0.025, abs=1e-6)


@pytest.mark.parametrize("x", [-7.5, -3.0, -0.4, 0.0, 0.7, 1.959964, 3.3, 5.0, 7.9])
def test_tail_matches_mpmath(x):
    assert gauss_upper_tail(x) == pytest.approx(tail_oracle(x), rel=1e-12)


@given(st.floats(-8, 8))
def test_tail_symmetry(x):
    assert gauss_upper_tail(x) + gauss_upper_tail(-x) == pytest.approx(1.0, abs=1e-12)


def test_tail_rejects_nonfinite():
    with pytest.raises(ValueError):
        gauss_upper_tail(math.inf)
    with pytest.raises(ValueError):
        gauss_upper_tail(math.nan)


def test_tail_strictly_decreasing():
    x = np.linspace(-8, 8, 401)
    v = [gauss_upper_tail(t) for t in x]
    assert all(a > b for a, b in zip(v, v[1:]))


def test_quantile_values():
    assert gauss_upper_quantile(0.5) == 0.0
    assert gauss_upper_quantile(0.0125) == pytest.approx(2.241403, abs=1e-4)


@pytest.mark.parametrize("p", [1e-6, 0.01, 0.3, 1e-12, 0.05 / (2 * 16384), 0.7, 0.999])
def test_quantile_round_trip(p):
    assert gauss_upper_tail(gauss_upper_quantile(p)) == pytest.approx(p, rel=1e-10)


@pytest.mark.parametrize("p", [1e-9, 1e-4, 0.025, 0.2])
def test_quantile_matches_mpmath_inverse(p):
    lo, hi = mpmath.mpf(0), mpmath.mpf(10)
    for _ in range(120):  # bisection on the high-precision tail
        mid = (lo + hi) / 2
        if mpmath.erfc(mid / mpmath.sqrt(2)) / 2 > p:
            lo = mid
        else:
            hi = mid
    x = (lo + hi) / 2
    assert gauss_upper_quantile(p) == pytest.approx(float(x), rel=1e-10)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 2.0])
def test_quantile_rejects_outside_unit_interval(p):
    with pytest.raises(ValueError):
        gauss_upper_quantile(p)


def test_check_probability():
    assert check_probability(0.3) == 0.3
    with pytest.raises(ValueError, match="alpha"):
        check_probability(1.0, "alpha")


def test_binom_examples():
    assert binom_upper_quantile(2, 0.25) == 2
    assert binom_upper_quantile(100, 0.025) == 60
    for n in (1, 7, 50, 1000):
        assert binom_upper_quantile(n, 1.0) == 0


@pytest.mark.invariants
@pytest.mark.parametrize("n", range(1, 21))
def test_binom_matches_brute_force(n):
    prev = n + 1
    for eta in np.round(np.arange(0.01, 1.0, 0.01), 2):
        k = binom_upper_quantile(n, float(eta))
        assert k == binom_bar_brute(n, float(eta))
        assert k <= prev  # nonincreasing in eta
        prev = k


def test_binom_large_n_defining_property():
    n, eta = 10_000, 0.0005
    k = binom_upper_quantile(n, eta)

    # Upper tail counts accumulated from i = n downwards with exact integers.
    c, acc, tails = 1, 0, {}
    for i in range(n, k - 1, -1):
        acc += c
        tails[i] = acc
        c = c * i // (n - i + 1)
    assert Fraction(tails[k], 2**n) >= Fraction(eta)
    assert Fraction(tails[k + 1], 2**n) < Fraction(eta)


def test_gamma1_examples():
    assert gamma1(100, 0.05) == pytest.approx(0.2)
    assert gamma1(100, 0.05) <= math.sqrt(2 * math.log(40) / 100)
    assert gamma1(1, 1.0) == 1.0


@pytest.mark.invariants
@pytest.mark.parametrize("eta", [0.001, 0.01, 0.05, 0.1])
def test_gamma1_hoeffding_bound(eta):
    for n in range(1, 1001):
        g = gamma1(n, eta)
        assert -1.0 <= g <= 1.0
        assert g <= math.sqrt(2 * math.log(2 / eta) / n) + 1e-15


def test_gammak_reductions():
    assert gammak_sequence(100, [0.045], 0.1) == [gamma1(100, 0.045 * 0.1)]
    g1, g2 = gammak_sequence(100, [0.05, 0.05], 1.0)
    assert g2 == pytest.approx(g1**2)


@given(st.integers(1, 300), st.lists(st.floats(0.001, 0.9), min_size=1, max_size=4), st.floats(0.01, 0.99))
@settings(max_examples=50)
def test_gammak_recursion(n, alphas, delta):
    g = gammak_sequence(n, alphas, delta)
    assert len(g) == len(alphas)
    for k in range(1, len(g)):
        factor = (2 * binom_upper_quantile(n, alphas[k] * delta / 2) - n) / n
        assert g[k] == pytest.approx(g[k - 1] * factor, rel=1e-12, abs=1e-300)


def test_gammak_rejects_empty():
    with pytest.raises(ValueError):
        gammak_sequence(10, [], 0.1)


def test_cn_values():
    assert cn_constant(2) == pytest.approx(1 / math.sqrt(math.pi), abs=1e-9)
    assert 0.99 < cn_constant(100) < 1
    vals = [cn_constant(n) for n in range(2, 51)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("n", [3, 10, 57, 1000, 10**6])
def test_cn_against_mpmath(n):
    ref = mpmath.sqrt(mpmath.mpf(2) / n) * mpmath.gamma(mpmath.mpf(n) / 2) / mpmath.gamma(mpmath.mpf(n - 1) / 2)
    c = cn_constant(n)
    assert c == pytest.approx(float(ref), rel=1e-12)
    assert 0 < c < 1 and 1 - c <= 1 / n
