import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resamp_hd.aggregators import LpNorm, OneSidedSup, TwoSidedSup, conjugate
from resamp_hd.errors import UnsupportedGuaranteeError, UnsupportedSchemeError
from resamp_hd.numerics import gammak_sequence, gauss_upper_quantile
from resamp_hd.resample import resampled_expectation, sigma_hat, sigma_inflation
from resamp_hd.thresholds import (
    METHOD_NAMES,
    Bonferroni,
    BoundedSymmetric,
    Concentration,
    ConcBonf,
    Estimated,
    IteratedQuant,
    Known,
    QuantBonf,
    QuantConc,
    QuantRaw,
    QuantUncentered,
    ThresholdFamily,
    ThresholdSpec,
    confidence_region,
    evaluate_methods,
    lower_deviation_threshold,
    parse_method,
    threshold,
)
from resamp_hd.weights import Efron, Rademacher, RandomHoldOut, constants

PROVEN = [Bonferroni(), Concentration(B=200), ConcBonf(B=200), QuantBonf(200), QuantConc(200),
          IteratedQuant(200, alphas=(0.03, 0.01)), BoundedSymmetric(3.0, B=200)]
ALL = PROVEN + [QuantRaw(200), QuantUncentered(200)]
IDS = ["bonf", "conc", "conc-bonf", "quant-bonf", "quant-conc", "iter", "bounded", "raw", "uncent"]
TRANSLATION_INVARIANT = [Concentration(B=200), ConcBonf(B=200), QuantRaw(200), QuantBonf(200), QuantConc(200)]


def test_bonferroni_example():
    t = threshold(ThresholdSpec(Bonferroni()), np.zeros((2, 100)), alpha=0.05)
    assert t.value == pytest.approx(0.224140, abs=1e-6)
    assert t.value == pytest.approx(gauss_upper_quantile(0.0125) / 10, rel=1e-15)


def test_bonferroni_one_sided_and_subset():
    Y = np.zeros((5, 25))
    spec = ThresholdSpec(Bonferroni(), OneSidedSup(), Known((1.0, 2.0, 3.0, 4.0, 5.0)))
    assert threshold(spec, Y, [1, 3]).value == pytest.approx(4 * gauss_upper_quantile(0.025) / 5)


def test_concentration_zero_variance():
    spec = ThresholdSpec(Concentration(B=100), sigma=Known(0.0))
    assert threshold(spec, np.full((4, 12), 7.0), rng=0).value == 0.0


def test_concentration_formula(rng):
    Y = rng.normal(size=(6, 20))
    spec = ThresholdSpec(Concentration(B=300), sigma=Known(1.0))
    t = threshold(spec, Y, rng=3)
    k = constants(Rademacher(), 20)
    dev = gauss_upper_quantile(0.025) * (k.c_w / (20 * k.b_w_lower) + 1 / math.sqrt(20))
    assert t.components["deviation"] == pytest.approx(dev)
    assert t.value == pytest.approx(t.components["expectation"] + dev)


def test_uncentered_exact_example():
    spec = ThresholdSpec(QuantUncentered(), exact=True)
    assert threshold(spec, [[1.0, 3.0]], alpha=0.25).value == 2.0


def test_uncentered_one_sided_raises():
    with pytest.raises(UnsupportedGuaranteeError):
        threshold(ThresholdSpec(QuantUncentered(), OneSidedSup()), np.zeros((2, 5)))


@pytest.mark.parametrize("alpha0", [0.05, 0.06])
def test_alpha0_must_be_below_alpha(alpha0):
    with pytest.raises(ValueError):
        threshold(ThresholdSpec(QuantBonf(alpha0=alpha0)), np.zeros((2, 5)), alpha=0.05, rng=0)


def test_conc_bonf_decomposition(rng):
    Y = rng.normal(size=(10, 30))
    for seed in range(10):
        spec = ThresholdSpec(ConcBonf(B=200, delta=0.1), sigma=Known(1.3))
        t = threshold(spec, Y, rng=seed)
        bonf = threshold(ThresholdSpec(Bonferroni(), sigma=Known(1.3)), Y, alpha=0.05 * 0.9).value
        c = t.components
        assert t.value <= bonf
        assert c["bonf"] == bonf
        assert c["conc"] == pytest.approx(c["expectation"] + c["deviation"] + c["delta_term"])
        assert t.value == min(c["bonf"], c["conc"])


def test_quant_bonf_remainder_uses_conjugate(rng):
    Y = rng.normal(size=(4, 20))
    spec = ThresholdSpec(QuantBonf(300), OneSidedSup())
    c = threshold(spec, Y, rng=0).components
    # conjugate of the one-sided sup is two-sided: c = 2 in the Bonferroni level
    assert c["remainder_base"] == pytest.approx(gauss_upper_quantile(0.005 / 8) / math.sqrt(20))
    gamma = gammak_sequence(20, [0.045], 0.1)[0]
    assert c["gamma"] == gamma


def test_iterated_single_level_is_quant_bonf(rng):
    Y = rng.normal(size=(6, 15))
    for seed in range(5):
        a = threshold(ThresholdSpec(IteratedQuant(400, alphas=(0.045,))), Y, rng=seed).value
        b = threshold(ThresholdSpec(QuantBonf(400, alpha0=0.045)), Y, rng=seed).value
        assert a == b


def test_iterated_rejects_bad_levels():
    with pytest.raises(ValueError):
        threshold(ThresholdSpec(IteratedQuant(alphas=(0.03, 0.03))), np.zeros((2, 5)), alpha=0.05, rng=0)
    with pytest.raises(ValueError):
        IteratedQuant(terminal=IteratedQuant())


def test_bounded_symmetric_formula(rng):
    Y = rng.choice([-1.0, 1.0], size=(3, 16))
    t = threshold(ThresholdSpec(BoundedSymmetric(1.0, B=500)), Y, alpha=0.1, rng=2)
    assert t.components["deviation"] == pytest.approx(2 * math.sqrt(math.log(10)) / 4)
    with pytest.raises(ValueError):
        BoundedSymmetric(0.0)


def test_estimated_sigma_spends_level(rng):
    Y = rng.normal(size=(4, 40))
    fam = ThresholdFamily(ThresholdSpec(Bonferroni(), sigma=Estimated()), Y, 0.05, rng=0)
    assert fam.level == pytest.approx(0.045)
    np.testing.assert_allclose(fam.sigma, sigma_hat(Y) * sigma_inflation(40, 0.005))
    with pytest.raises(ValueError):
        ThresholdFamily(ThresholdSpec(Bonferroni(), sigma=Estimated(0.05)), Y, 0.05)


def test_family_is_frozen_and_seeded(rng):
    Y = rng.normal(size=(6, 20))
    spec = ThresholdSpec(QuantBonf(300))
    f1 = ThresholdFamily(spec, Y, 0.05, rng=7)
    f2 = ThresholdFamily(spec, Y, 0.05, rng=np.random.default_rng(7))
    f3 = ThresholdFamily(spec, Y, 0.05, rng=np.random.default_rng(7))
    assert f1([0, 2]) == f1([0, 2])
    assert f2() == f3()
    assert f1([]) == math.inf


@pytest.mark.parametrize("name", METHOD_NAMES)
def test_parse_method_roundtrip(name):
    assert parse_method(name).name == name


def test_parse_method_unknown():
    with pytest.raises(ValueError):
        parse_method("nope")


def test_evaluate_methods_shares_draws(rng):
    Y = rng.normal(size=(5, 20))
    out = evaluate_methods({"a": QuantBonf(300), "b": QuantBonf(300), "bonf": Bonferroni()}, Y, rng=4)
    assert out["a"] == out["b"]
    assert out["bonf"] == threshold(ThresholdSpec(Bonferroni()), Y).value


def test_strict_concentration_adds_slack(rng):
    Y = rng.normal(size=(5, 20))
    lo = threshold(ThresholdSpec(Concentration(B=300)), Y, rng=1).value
    hi = threshold(ThresholdSpec(Concentration(B=300), strict=True), Y, rng=1).value
    assert hi > lo


def test_strict_alpha0_on_grid(rng):
    Y = rng.normal(size=(5, 20))
    c = threshold(ThresholdSpec(QuantBonf(99), strict=True), Y, rng=1).components
    assert c["alpha0"] == 4 / 100
    with pytest.raises(ValueError):
        threshold(ThresholdSpec(QuantBonf(9), strict=True), Y, rng=1)


def _random_nested(rng, K):
    big = rng.random(K) < 0.7
    big[rng.integers(K)] = True
    small = big & (rng.random(K) < 0.6)
    small[rng.choice(np.flatnonzero(big))] = True
    return small, big


@pytest.mark.invariants
@pytest.mark.parametrize("strict", [False, True], ids=["mc", "strict"])
@pytest.mark.parametrize("agg", [TwoSidedSup(), OneSidedSup(), LpNorm(2.0)], ids=["two", "one", "l2"])
@pytest.mark.parametrize("method", ALL, ids=IDS)
def test_nondecreasing_in_subset(method, agg, strict):
    if isinstance(method, QuantUncentered) and isinstance(agg, OneSidedSup):
        pytest.skip("two-sided only")
    rng = np.random.default_rng(31)
    K, n = 8, 16
    for trial in range(100):
        Y = rng.normal(size=(K, n)) + rng.normal(size=(K, 1))
        fam = ThresholdFamily(ThresholdSpec(method, agg, Known(rng.uniform(0.5, 2, K)), strict=strict),
                              Y, 0.05, rng=trial)
        small, big = _random_nested(rng, K)
        assert fam(small) <= fam(big)


@pytest.mark.invariants
@pytest.mark.parametrize("method", TRANSLATION_INVARIANT, ids=lambda m: m.name)
@given(seed=st.integers(0, 2**32 - 1), shift=st.floats(-50, 50))
@settings(max_examples=25, deadline=None)
def test_translation_invariance(method, seed, shift):
    r = np.random.default_rng(seed)
    Y = r.normal(size=(5, 12))
    x = shift * r.random((5, 1))
    spec = ThresholdSpec(method, sigma=Known(1.0))
    C = r.random(5) < 0.6
    C[0] = True
    a = ThresholdFamily(spec, Y, 0.05, rng=seed)(C)
    b = ThresholdFamily(spec, Y + x, 0.05, rng=seed)(C)
    assert b == pytest.approx(a, abs=1e-11)


def test_confidence_region_zero_variance():
    Y = np.full((3, 10), 2.5)
    reg = confidence_region(Y, ThresholdSpec(ConcBonf(B=100), sigma=Known(0.0)), rng=0)
    assert reg.radius == 0.0
    assert reg.contains([2.5, 2.5, 2.5])
    assert not reg.contains([2.5, 2.5, 2.5 + 1e-12])


def test_confidence_region_radius_nonnegative():
    rng = np.random.default_rng(8)
    for seed in range(30):
        Y = rng.normal(size=(4, 12)) * rng.uniform(0.01, 5)
        assert confidence_region(Y, ThresholdSpec(QuantBonf(200)), rng=seed).radius >= 0


def test_confidence_region_guards(rng):
    Y = rng.normal(size=(3, 10))
    with pytest.raises(UnsupportedGuaranteeError):
        confidence_region(Y, ThresholdSpec(QuantRaw(100)), rng=0)
    assert confidence_region(Y, ThresholdSpec(QuantRaw(100)), rng=0, allow_unproven=True).radius >= 0
    with pytest.raises(UnsupportedGuaranteeError):
        confidence_region(Y, ThresholdSpec(QuantUncentered(100)), rng=0, allow_unproven=True)
    reg = confidence_region(Y, ThresholdSpec(Bonferroni()), agg=LpNorm(2.0))
    assert reg.agg == LpNorm(2.0)


def test_lower_deviation_limit_and_divisor(rng):
    Y = rng.choice([-1.0, 1.0], size=(3, 16))
    e = resampled_expectation(Y, TwoSidedSup(), Rademacher(), 200, np.random.default_rng(0)).raw
    k = constants(Rademacher(), 16)
    assert k.d_w == pytest.approx(1 + 1 / 4)
    v = lower_deviation_threshold(Y, TwoSidedSup(), Rademacher(), 1.0, 1 - 1e-12, B=200,
                                  rng=np.random.default_rng(0))
    assert v == pytest.approx(e / k.d_w, abs=1e-5)


def test_lower_deviation_unsupported_scheme(rng):
    with pytest.raises(UnsupportedSchemeError):
        lower_deviation_threshold(rng.normal(size=(2, 8)), TwoSidedSup(), Efron(), 1.0, 0.1)


def test_lower_deviation_coverage():
    rng = np.random.default_rng(77)
    K, n, alpha, trials = 3, 30, 0.1, 2000
    hits = 0
    for _ in range(trials):
        Y = rng.choice([-1.0, 1.0], size=(K, n))
        t = lower_deviation_threshold(Y, TwoSidedSup(), RandomHoldOut(), 1.0, alpha, B=100, rng=rng)
        hits += TwoSidedSup()(Y.mean(axis=1)) >= t
    assert hits / trials >= 1 - alpha - 3 * math.sqrt(alpha * (1 - alpha) / trials)


@pytest.mark.slow
@pytest.mark.parametrize("method", PROVEN, ids=IDS[:7])
def test_level_on_null_data(method):
    # BoundedSymmetric needs bounded data: Gaussian entries are clipped at 3.
    rng = np.random.default_rng(2024)
    K, n, alpha, trials = 8, 30, 0.05, 2000
    spec = ThresholdSpec(method, sigma=Known(1.0))
    conj = conjugate(spec.aggregator)
    exceed = 0
    for i in range(trials):
        Y = rng.normal(size=(K, n))
        if isinstance(method, BoundedSymmetric):
            Y = np.clip(Y, -3, 3)
        exceed += conj(Y.mean(axis=1)) >= ThresholdFamily(spec, Y, alpha, rng=i)()
    assert exceed / trials <= alpha + 3 * math.sqrt(alpha * (1 - alpha) / trials)
