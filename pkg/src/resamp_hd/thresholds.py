"""Rejection and confidence thresholds t_alpha(Y, C).

A threshold method is a small frozen dataclass. :class:`ThresholdFamily`
binds a :class:`ThresholdSpec` to a data matrix, a level and a random
generator, draws every resampling weight matrix it will ever need once, and
then evaluates the threshold on any coordinate subset C. Because the draws
are frozen, repeated evaluation is bit-identical and the realized family is
monotone in C whenever the formula is.

Weight draws are keyed by a tag ("quant", "uncent", "conc:<scheme>") so two
methods that use the same resampled quantity, e.g. a centered-quantile
threshold and its iterated form, see the same draws.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, ClassVar

import numpy as np

from .aggregators import Aggregator, OneSidedSup, TwoSidedSup, as_mask, conjugate
from .errors import CapacityError, UnsupportedGuaranteeError, UnsupportedSchemeError
from .numerics import check_probability, gammak_sequence, gauss_upper_quantile
from .resample import (
    as_data_matrix,
    empirical_gamma,
    sigma_hat,
    sigma_inflation,
    tilde_sigma,
)
from .weights import (
    Rademacher,
    WeightScheme,
    centered_weight_range,
    constants,
    enumerate_weights,
)

__all__ = [
    "Bonferroni",
    "Concentration",
    "ConcBonf",
    "QuantRaw",
    "QuantBonf",
    "QuantConc",
    "QuantUncentered",
    "BoundedSymmetric",
    "IteratedQuant",
    "Known",
    "Estimated",
    "ThresholdSpec",
    "ThresholdValue",
    "ThresholdFamily",
    "threshold",
    "evaluate_methods",
    "ConfidenceRegion",
    "confidence_region",
    "lower_deviation_threshold",
    "order_statistic",
    "parse_method",
    "METHOD_NAMES",
]

DEFAULT_B = 1000
# Share of the level spent on the Monte Carlo expectation slack in strict mode.
STRICT_MC_SHARE = 0.1
MC_BW_DRAWS = 100_000


def order_statistic(stats: np.ndarray, rank: int, axis: int = 0) -> np.ndarray:
    """The ``rank``-th largest value along ``axis`` (``-inf`` if rank > size, ``+inf`` if rank < 1)."""
    N = stats.shape[axis]
    shape = list(stats.shape)
    del shape[axis]
    if rank > N:
        return np.full(shape, -np.inf) if shape else -math.inf
    if rank < 1:
        return np.full(shape, np.inf) if shape else math.inf
    out = np.partition(stats, N - rank, axis=axis).take(N - rank, axis=axis)
    return out


def _mc_rank(alpha: float, N: int) -> int:
    """Order-statistic rank floor(alpha N) + 1, with alpha taken exactly."""
    return math.floor(Fraction(float(alpha)) * N) + 1


# ---------------------------------------------------------------------------
# sigma sources


@dataclass(frozen=True)
class Known:
    """Known standard deviations: a scalar (all coordinates) or a K-vector."""

    sigma: float | tuple[float, ...] = 1.0


@dataclass(frozen=True)
class Estimated:
    """Bound ||sigma|| from the data at level ``delta_sigma`` (default alpha/10)."""

    delta_sigma: float | None = None


# ---------------------------------------------------------------------------
# methods


@dataclass(frozen=True)
class Method:
    name: ClassVar[str] = "method"
    proven: ClassVar[bool] = True
    needs_sigma: ClassVar[bool] = True

    def build(self, ctx: "_Context", agg: Aggregator, alpha: float) -> Callable:
        raise NotImplementedError


@dataclass(frozen=True)
class Bonferroni(Method):
    name: ClassVar[str] = "bonf"

    def build(self, ctx, agg, alpha):
        c = 1 if isinstance(agg, OneSidedSup) else 2
        sqrt_n = math.sqrt(ctx.n)

        def f(mask):
            size = int(mask.sum())
            s = agg.norm(ctx.sigma, mask)
            v = s * gauss_upper_quantile(alpha / (c * size)) / sqrt_n
            return v, {"bonf": v}

        return f


@dataclass(frozen=True)
class Concentration(Method):
    name: ClassVar[str] = "conc"
    scheme: WeightScheme = field(default_factory=Rademacher)
    B: int = DEFAULT_B

    def _parts(self, ctx, agg, alpha):
        """(expectation term per mask, effective level, B_W, C_W)."""
        k = ctx.constants(self.scheme)
        b_w = ctx.b_w(self.scheme)
        R = ctx.centered(self.scheme, self.B)
        slack_share = 0.0
        if ctx.strict:
            slack_share = STRICT_MC_SHARE
            c1, c2 = centered_weight_range(self.scheme, ctx.n)
            width = (c2 - c1) * math.sqrt(math.log(1.0 / (slack_share * alpha)) / (2.0 * R.shape[0]))
            ts = ctx.tilde_sigma
        alpha_eff = alpha * (1.0 - slack_share)

        def expectation(mask):
            e = float(np.mean(agg(R, mask))) / b_w
            if ctx.strict:
                e += width * agg.norm(ts, mask) / b_w
            return e

        return expectation, alpha_eff, b_w, k.c_w

    def build(self, ctx, agg, alpha):
        expectation, a, b_w, c_w = self._parts(ctx, agg, alpha)
        z = gauss_upper_quantile(a / 2.0)
        factor = c_w / (ctx.n * b_w) + 1.0 / math.sqrt(ctx.n)

        def f(mask):
            e = expectation(mask)
            dev = agg.norm(ctx.sigma, mask) * z * factor
            return e + dev, {"expectation": e, "deviation": dev}

        return f


@dataclass(frozen=True)
class ConcBonf(Method):
    name: ClassVar[str] = "conc-bonf"
    scheme: WeightScheme = field(default_factory=Rademacher)
    B: int = DEFAULT_B
    delta: float = 0.1

    def __post_init__(self):
        check_probability(self.delta, "delta")

    def build(self, ctx, agg, alpha):
        expectation, a, b_w, c_w = Concentration(self.scheme, self.B)._parts(ctx, agg, alpha)
        bonf = Bonferroni().build(ctx, agg, a * (1.0 - self.delta))
        z_main = gauss_upper_quantile(a * (1.0 - self.delta) / 2.0) / math.sqrt(ctx.n)
        z_rem = c_w * gauss_upper_quantile(a * self.delta / 2.0) / (ctx.n * b_w)

        def f(mask):
            tb, _ = bonf(mask)
            s = agg.norm(ctx.sigma, mask)
            e = expectation(mask)
            tc = e + s * z_main + s * z_rem
            return min(tb, tc), {"bonf": tb, "conc": tc, "expectation": e,
                                 "deviation": s * z_main, "delta_term": s * z_rem}

        return f


@dataclass(frozen=True)
class QuantRaw(Method):
    """Raw centered Rademacher quantile q_alpha(Y - Ybar, C); no level guarantee."""

    name: ClassVar[str] = "quant-raw"
    B: int = DEFAULT_B
    proven: ClassVar[bool] = False
    needs_sigma: ClassVar[bool] = False

    def build(self, ctx, agg, alpha):
        return ctx.quantile(agg, alpha, centered=True, B=self.B)


def _split_levels(alpha: float, alpha0: float | None, alpha0_frac: float) -> float:
    a0 = alpha * alpha0_frac if alpha0 is None else float(alpha0)
    if not 0.0 < a0 < alpha:
        raise ValueError(f"need 0 < alpha0 < alpha, got alpha0={a0}, alpha={alpha}")
    return a0


@dataclass(frozen=True)
class _QuantPlus(Method):
    B: int = DEFAULT_B
    alpha0: float | None = None
    delta: float = 0.1
    alpha0_frac: float = 0.9

    def __post_init__(self):
        check_probability(self.delta, "delta")
        check_probability(self.alpha0_frac, "alpha0_frac")

    def remainder(self) -> Method:
        raise NotImplementedError

    def build(self, ctx, agg, alpha):
        a0 = _split_levels(alpha, self.alpha0, self.alpha0_frac)
        if ctx.strict and not ctx.exact:
            # alpha0 a multiple of 1/(B+1): the Monte Carlo quantile then costs no level.
            m = math.floor(Fraction(a0) * (self.B + 1))
            if m < 1:
                raise ValueError(f"strict mode needs alpha0 >= 1/(B+1); got alpha0={a0}, B={self.B}")
            a0 = m / (self.B + 1)
        main = ctx.quantile(agg, a0 * (1.0 - self.delta), centered=True, B=self.B)
        if ctx.strict and not ctx.exact:
            gamma = empirical_gamma(ctx.wbar_abs("quant", self.B), a0 * self.delta)
        else:
            gamma = gammak_sequence(ctx.n, [a0], self.delta)[0]
        rem = self.remainder().build(ctx, conjugate(agg), alpha - a0)

        def f(mask):
            q, _ = main(mask)
            r, rc = rem(mask)
            return q + gamma * r, {"quantile": q, "gamma": gamma, "remainder_base": r,
                                   "remainder": gamma * r, "alpha0": a0}

        return f


@dataclass(frozen=True)
class QuantBonf(_QuantPlus):
    name: ClassVar[str] = "quant-bonf"

    def remainder(self):
        return Bonferroni()


@dataclass(frozen=True)
class QuantConc(_QuantPlus):
    name: ClassVar[str] = "quant-conc"
    scheme: WeightScheme = field(default_factory=Rademacher)

    def remainder(self):
        return Concentration(self.scheme, self.B)


@dataclass(frozen=True)
class QuantUncentered(Method):
    """Uncentered Rademacher quantile q_alpha(Y, C); two-sided aggregators only."""

    name: ClassVar[str] = "quant-uncent"
    B: int = DEFAULT_B
    needs_sigma: ClassVar[bool] = False

    def build(self, ctx, agg, alpha):
        if isinstance(agg, OneSidedSup):
            raise UnsupportedGuaranteeError("the uncentered quantile threshold is only valid two-sided")
        return ctx.quantile(agg, alpha, centered=False, B=self.B, calibrated=ctx.strict)


@dataclass(frozen=True)
class BoundedSymmetric(Method):
    """E_W[phi]/A_W + 2M sqrt(log(1/alpha)/n) for symmetric data bounded by M."""

    name: ClassVar[str] = "bounded"
    M: float = 1.0
    scheme: WeightScheme = field(default_factory=Rademacher)
    B: int = DEFAULT_B
    needs_sigma: ClassVar[bool] = False

    def __post_init__(self):
        if not self.M > 0:
            raise ValueError(f"M must be positive, got {self.M}")

    def build(self, ctx, agg, alpha):
        a_w = ctx.constants(self.scheme).a_w
        R = ctx.centered(self.scheme, self.B)
        dev = 2.0 * self.M * math.sqrt(math.log(1.0 / alpha)) / math.sqrt(ctx.n)

        def f(mask):
            e = float(np.mean(agg(R, mask))) / a_w
            return e + dev, {"expectation": e, "deviation": dev}

        return f


@dataclass(frozen=True)
class IteratedQuant(Method):
    """Main centered quantile plus gamma-weighted conjugate quantiles and a terminal bound.

    ``alphas`` are the absolute levels alpha_0..alpha_{J-1}; the terminal
    threshold is applied to the conjugate aggregator at alpha - sum(alphas).
    ``alphas=None`` means the single level (0.9 alpha,).
    """

    name: ClassVar[str] = "iter-quant"
    B: int = DEFAULT_B
    alphas: tuple[float, ...] | None = None
    delta: float = 0.1
    terminal: Method = field(default_factory=Bonferroni)

    def __post_init__(self):
        check_probability(self.delta, "delta")
        if isinstance(self.terminal, IteratedQuant):
            raise ValueError("terminal threshold cannot itself be iterated")

    def build(self, ctx, agg, alpha):
        alphas = (0.9 * alpha,) if self.alphas is None else tuple(float(a) for a in self.alphas)
        if not alphas or sum(alphas) >= alpha:
            raise ValueError(f"need nonempty alphas with sum < alpha = {alpha}, got {alphas}")
        gammas = gammak_sequence(ctx.n, alphas, self.delta)
        cagg = conjugate(agg)
        main = ctx.quantile(agg, alphas[0] * (1.0 - self.delta), centered=True, B=self.B)
        mids = [ctx.quantile(cagg, a * (1.0 - self.delta), centered=True, B=self.B) for a in alphas[1:]]
        term = self.terminal.build(ctx, cagg, alpha - sum(alphas))

        def f(mask):
            q, _ = main(mask)
            parts = [g * m(mask)[0] for g, m in zip(gammas[:-1], mids)]
            t, _ = term(mask)
            total = q + sum(parts) + gammas[-1] * t
            return total, {"quantile": q, "intermediate": sum(parts),
                           "remainder": gammas[-1] * t, "gamma_J": gammas[-1]}

        return f


METHOD_NAMES = ("bonf", "conc", "conc-bonf", "quant-raw", "quant-bonf", "quant-conc",
                "quant-uncent", "iter-quant", "bounded")


def parse_method(name: str, B: int = DEFAULT_B, delta: float = 0.1, alpha0_frac: float = 0.9,
                 scheme: WeightScheme | None = None, M: float = 1.0) -> Method:
    """Method instance from its short name."""
    scheme = Rademacher() if scheme is None else scheme
    table = {
        "bonf": lambda: Bonferroni(),
        "conc": lambda: Concentration(scheme, B),
        "conc-bonf": lambda: ConcBonf(scheme, B, delta),
        "quant-raw": lambda: QuantRaw(B),
        "quant-bonf": lambda: QuantBonf(B, delta=delta, alpha0_frac=alpha0_frac),
        "quant-conc": lambda: QuantConc(B, delta=delta, alpha0_frac=alpha0_frac, scheme=scheme),
        "quant-uncent": lambda: QuantUncentered(B),
        "iter-quant": lambda: IteratedQuant(B, delta=delta),
        "bounded": lambda: BoundedSymmetric(M, scheme, B),
    }
    try:
        return table[name]()
    except KeyError:
        raise ValueError(f"unknown threshold method {name!r}; choose from {', '.join(METHOD_NAMES)}") from None


# ---------------------------------------------------------------------------
# spec, context and family


@dataclass(frozen=True)
class ThresholdSpec:
    """A threshold method with its aggregator and sigma source.

    ``exact`` replaces Monte Carlo draws with the full weight support (needs
    n <= 20 for Rademacher). ``strict`` adds the Monte Carlo corrections:
    the expectation slack, alpha0 on the 1/(B+1) grid with an empirical
    gamma, and a calibrated rank for the uncentered quantile.
    ``b_w="mc"`` divides by a Monte Carlo estimate of B_W instead of the
    certified lower bound.
    """

    method: Method = field(default_factory=Bonferroni)
    aggregator: Aggregator = field(default_factory=TwoSidedSup)
    sigma: Known | Estimated = field(default_factory=Known)
    strict: bool = False
    exact: bool = False
    b_w: str = "lower"

    def __post_init__(self):
        if self.b_w not in ("lower", "mc"):
            raise ValueError(f"b_w must be 'lower' or 'mc', got {self.b_w!r}")

    def with_method(self, method: Method) -> "ThresholdSpec":
        return replace(self, method=method)


class _Context:
    """Data-derived quantities and frozen weight draws shared by one family."""

    def __init__(self, Y: np.ndarray, sigma: np.ndarray, key: int, strict: bool, exact: bool, b_w: str):
        self.Y = Y
        self.K, self.n = Y.shape
        self.sigma = sigma
        self.key = key
        self.strict = strict
        self.exact = exact
        self.b_w_mode = b_w
        self.Ybar = Y.mean(axis=1)
        self._Yc = Y - self.Ybar[:, None]
        self._weights: dict = {}
        self._matrices: dict = {}
        self._constants: dict = {}
        self._ts = None

    def stream(self, tag: str) -> np.random.Generator:
        return np.random.default_rng([self.key, zlib.crc32(tag.encode())])

    def weights(self, tag: str, scheme: WeightScheme, B: int) -> np.ndarray:
        k = (tag, B)
        if k not in self._weights:
            if self.exact:
                if isinstance(scheme, Rademacher) and self.n > 20:
                    raise CapacityError(f"exact mode needs n <= 20, got n = {self.n}")
                W = enumerate_weights(scheme, self.n)
            else:
                if B < 1:
                    raise ValueError(f"B must be >= 1, got {B}")
                scheme.validate(self.n)
                W = scheme.draw(self.n, B, self.stream(tag))
            self._weights[k] = W
        return self._weights[k]

    def centered(self, scheme: WeightScheme, B: int) -> np.ndarray:
        """B x K matrix of resampled means n^-1 sum (W_i - Wbar)(Y^i - Ybar)."""
        tag = "quant" if isinstance(scheme, Rademacher) else f"conc:{scheme.name()}"
        k = ("centered", tag, B)
        if k not in self._matrices:
            W = self.weights(tag, scheme, B)
            Wc = W - W.mean(axis=1, keepdims=True)
            self._matrices[k] = Wc @ self._Yc.T / self.n
        return self._matrices[k]

    def uncentered(self, B: int) -> np.ndarray:
        k = ("uncent", B)
        if k not in self._matrices:
            W = self.weights("uncent", Rademacher(), B)
            self._matrices[k] = W @ self.Y.T / self.n
        return self._matrices[k]

    def wbar_abs(self, tag: str, B: int) -> np.ndarray:
        return np.abs(self.weights(tag, Rademacher(), B).mean(axis=1))

    def quantile(self, agg: Aggregator, level: float, centered: bool, B: int, calibrated: bool = False):
        """Mask -> Rademacher quantile of agg at ``level`` over the frozen draws.

        Centered uses sum W_i (Y^i - Ybar), which equals the centered-weight form
        for sign weights. ``calibrated`` picks rank floor(level (N+1)) so that the
        Monte Carlo randomization test has level <= ``level`` exactly.
        """
        R = self.centered(Rademacher(), B) if centered else self.uncentered(B)
        N = R.shape[0]
        if calibrated and not self.exact:
            rank = math.floor(Fraction(float(level)) * (N + 1))
        else:
            rank = _mc_rank(level, N)

        def f(mask):
            q = float(order_statistic(agg(R, mask), rank))
            return q, {"quantile": q}

        return f

    def constants(self, scheme: WeightScheme):
        k = scheme.name()
        if k not in self._constants:
            mc = MC_BW_DRAWS if self.b_w_mode == "mc" else None
            self._constants[k] = constants(scheme, self.n, mc_draws=mc, rng=self.stream(f"bw:{k}"))
        return self._constants[k]

    def b_w(self, scheme: WeightScheme) -> float:
        k = self.constants(scheme)
        if self.b_w_mode == "mc" and not k.b_w_exact:
            return k.b_w_estimate[0]
        return k.b_w_lower

    @property
    def tilde_sigma(self) -> np.ndarray:
        if self._ts is None:
            self._ts = tilde_sigma(self.Y)
        return self._ts


@dataclass(frozen=True)
class ThresholdValue:
    value: float
    components: dict


class ThresholdFamily:
    """C -> t_alpha(Y, C) for one data set, level and frozen set of draws.

    ``rng`` seeds the draws (an int, a Generator, or None); the family
    consumes exactly one integer from a Generator, so passing the same seed
    twice gives bit-identical families.
    """

    def __init__(self, spec: ThresholdSpec, Y, alpha: float, rng=None):
        Y = as_data_matrix(Y)
        alpha = check_probability(alpha, "alpha")
        self.spec = spec
        self.alpha = alpha
        self.K, self.n = Y.shape
        key = int(np.random.default_rng(rng).integers(2**63))
        level = alpha
        sigma = None
        if spec.method.needs_sigma:
            if isinstance(spec.sigma, Known):
                sigma = np.broadcast_to(np.asarray(spec.sigma.sigma, dtype=np.float64), (self.K,)).copy()
                if np.any(sigma < 0):
                    raise ValueError("standard deviations must be nonnegative")
            else:
                ds = alpha / 10.0 if spec.sigma.delta_sigma is None else float(spec.sigma.delta_sigma)
                if not 0.0 < ds < alpha:
                    raise ValueError(f"delta_sigma must lie in (0, alpha), got {ds}")
                sigma = sigma_hat(Y) * sigma_inflation(self.n, ds)
                level = alpha - ds
        self.level = level
        self.sigma = sigma
        self._ctx = _Context(Y, sigma, key, spec.strict, spec.exact, spec.b_w)
        self._fn = spec.method.build(self._ctx, spec.aggregator, level)

    def mask(self, C) -> np.ndarray:
        return as_mask(C, self.K)

    def evaluate(self, C=None) -> ThresholdValue:
        mask = self.mask(C)
        if not mask.any():
            return ThresholdValue(math.inf, {})
        v, comp = self._fn(mask)
        return ThresholdValue(float(v), comp)

    def __call__(self, C=None) -> float:
        return self.evaluate(C).value


def evaluate_methods(methods: dict, Y, alpha: float = 0.05, rng=None, aggregator: Aggregator | None = None,
                     sigma=None, strict: bool = False, C=None) -> dict:
    """Thresholds of several methods on one data set, sharing frozen weight draws.

    ``methods`` maps labels to methods; returns label -> value over C.
    """
    agg = TwoSidedSup() if aggregator is None else aggregator
    base = ThresholdSpec(Bonferroni(), agg, Known() if sigma is None else sigma, strict=strict)
    fam = ThresholdFamily(base, Y, alpha, rng)
    mask = fam.mask(C)
    out = {}
    for label, m in methods.items():
        fn = m.build(fam._ctx, agg, fam.level if m.needs_sigma else alpha)
        out[label] = float(fn(mask)[0]) if mask.any() else math.inf
    return out


def threshold(spec: ThresholdSpec, Y, C=None, alpha: float = 0.05, rng=None) -> ThresholdValue:
    """t_alpha(Y, C) with its additive components; C=None means all coordinates."""
    return ThresholdFamily(spec, Y, alpha, rng).evaluate(C)


@dataclass(frozen=True)
class ConfidenceRegion:
    """{x : agg(center - x) <= radius}."""

    center: np.ndarray
    radius: float
    agg: Aggregator

    def contains(self, x) -> bool:
        return bool(self.agg(self.center - np.asarray(x, dtype=np.float64)) <= self.radius)


def confidence_region(Y, spec: ThresholdSpec, alpha: float = 0.05, rng=None,
                      agg: Aggregator | None = None, allow_unproven: bool = False) -> ConfidenceRegion:
    """Region centered at Ybar with radius t_alpha(Y, all coordinates).

    ``agg`` overrides ``spec.aggregator``. The raw quantile needs
    ``allow_unproven=True``; the uncentered quantile is a test threshold and
    never gives a region.
    """
    if agg is not None:
        spec = replace(spec, aggregator=agg)
    m = spec.method
    if isinstance(m, QuantUncentered):
        raise UnsupportedGuaranteeError("the uncentered quantile does not give a confidence region")
    if not m.proven and not allow_unproven:
        raise UnsupportedGuaranteeError(f"{m.name} has no proven level; pass allow_unproven=True")
    fam = ThresholdFamily(spec, Y, alpha, rng)
    return ConfidenceRegion(center=as_data_matrix(Y).mean(axis=1), radius=fam(), agg=spec.aggregator)


def lower_deviation_threshold(Y, agg: Aggregator, scheme: WeightScheme, M: float, alpha: float,
                              B: int = DEFAULT_B, rng=None, exhaustive: bool = False) -> float:
    """E_W[phi]/D_W - (M/sqrt(n)) sqrt(1 + A_W^2/D_W^2) sqrt(2 log(1/alpha)).

    phi(Ybar - mu) exceeds this with probability >= 1 - alpha for symmetric
    data bounded by M. May be negative.
    """
    from .resample import resampled_expectation

    Y = as_data_matrix(Y)
    check_probability(alpha, "alpha")
    n = Y.shape[1]
    k = constants(scheme, n)
    if k.d_w is None:
        raise UnsupportedSchemeError(f"{scheme.name()} weights have no constant D_W")
    e = resampled_expectation(Y, agg, scheme, B, rng, exhaustive=exhaustive).raw
    dev = M / math.sqrt(n) * math.sqrt(1.0 + (k.a_w / k.d_w) ** 2) * math.sqrt(2.0 * math.log(1.0 / alpha))
    return e / k.d_w - dev
