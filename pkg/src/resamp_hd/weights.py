"""Resampling weight schemes and their constants A_W, B_W, C_W, D_W.

Each scheme is a small frozen dataclass that knows how to draw weight
vectors, enumerate its support when that is small, and report the closed
form constants where they are known. Where only a bracket is known for
B_W, ``b_w_lower`` is the certified lower end (A_W) and ``b_w_upper`` the
certified upper end; a Monte Carlo estimate is available on request.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

__all__ = [
    "WeightScheme",
    "Rademacher",
    "Efron",
    "Bernoulli",
    "Poisson",
    "RandomHoldOut",
    "LeaveOneOut",
    "VFoldCV",
    "ResamplingConstants",
    "SchemeIndices",
    "draw_weights",
    "enumerate_weights",
    "constants",
    "mc_weight_moments",
    "scheme_indices",
    "centered_weight_range",
    "parse_scheme",
]

# Largest support we are willing to enumerate (2**20 sign vectors).
MAX_ENUMERATION = 1 << 20


class WeightScheme:
    """Base class; concrete schemes are frozen dataclasses below."""

    label: ClassVar[str] = "scheme"
    exchangeable: ClassVar[bool] = True

    def validate(self, n: int) -> None:
        if int(n) != n or n < 2:
            raise ValueError(f"weight schemes need an integer n >= 2, got {n!r}")

    def draw(self, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def support(self, n: int) -> np.ndarray:
        """All equiprobable weight vectors, shape (N, n), when the law is uniform on them."""
        raise ValueError(f"{self.name()} weights cannot be enumerated")

    def support_size(self, n: int) -> int | None:
        return None

    def name(self) -> str:
        return self.label


@dataclass(frozen=True)
class Rademacher(WeightScheme):
    label: ClassVar[str] = "rademacher"

    def draw(self, n, size, rng):
        return 2.0 * rng.integers(0, 2, size=(size, n)).astype(np.float64) - 1.0

    def support_size(self, n):
        return 2**n

    def support(self, n):
        if 2**n > MAX_ENUMERATION:
            raise ValueError(f"2**{n} sign vectors exceed the enumeration cap (n <= 20)")
        return np.array(list(itertools.product((1.0, -1.0), repeat=n)))


@dataclass(frozen=True)
class Efron(WeightScheme):
    """Efron(q): (q/n) W is Multinomial(q; 1/n, ..., 1/n); ``q=None`` means q = n."""

    q: int | None = None
    label: ClassVar[str] = "efron"

    def size_q(self, n: int) -> int:
        return n if self.q is None else int(self.q)

    def validate(self, n):
        super().validate(n)
        q = self.size_q(n)
        if not 1 <= q <= n:
            raise ValueError(f"Efron(q) needs 1 <= q <= n, got q={q}, n={n}")

    def draw(self, n, size, rng):
        q = self.size_q(n)
        counts = rng.multinomial(q, np.full(n, 1.0 / n), size=size)
        return counts.astype(np.float64) * (n / q)

    def support_size(self, n):
        q = self.size_q(n)
        return math.comb(n + q - 1, q)

    def name(self):
        return "efron" if self.q is None else f"efron:{self.q}"


@dataclass(frozen=True)
class Bernoulli(WeightScheme):
    """p W_i iid Bernoulli(p)."""

    p: float = 0.5
    label: ClassVar[str] = "bernoulli"

    def validate(self, n):
        super().validate(n)
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"Bernoulli(p) needs 0 < p < 1, got {self.p}")

    def draw(self, n, size, rng):
        return (rng.random((size, n)) < self.p).astype(np.float64) / self.p

    def support_size(self, n):
        return 2**n

    def name(self):
        return f"bernoulli:{self.p:g}"


@dataclass(frozen=True)
class Poisson(WeightScheme):
    """mu W_i iid Poisson(mu)."""

    mu: float = 1.0
    label: ClassVar[str] = "poisson"

    def validate(self, n):
        super().validate(n)
        if not self.mu > 0.0:
            raise ValueError(f"Poisson(mu) needs mu > 0, got {self.mu}")

    def draw(self, n, size, rng):
        return rng.poisson(self.mu, size=(size, n)).astype(np.float64) / self.mu

    def name(self):
        return f"poisson:{self.mu:g}"


@dataclass(frozen=True)
class RandomHoldOut(WeightScheme):
    """W_i = (n/q) 1{i in I}, I uniform among subsets of size q; ``q=None`` means n/2."""

    q: int | None = None
    label: ClassVar[str] = "rho"

    def size_q(self, n: int) -> int:
        if self.q is None:
            if n % 2:
                raise ValueError(f"rho(n/2) needs an even n, got {n}")
            return n // 2
        return int(self.q)

    def validate(self, n):
        super().validate(n)
        q = self.size_q(n)
        # q = n gives constant weights, which are not a resampling weight vector.
        if not 1 <= q < n:
            raise ValueError(f"random hold-out needs 1 <= q < n, got q={q}, n={n}")

    def draw(self, n, size, rng):
        q = self.size_q(n)
        order = np.argsort(rng.random((size, n)), axis=1)
        w = np.zeros((size, n))
        np.put_along_axis(w, order[:, :q], n / q, axis=1)
        return w

    def support_size(self, n):
        return math.comb(n, self.size_q(n))

    def support(self, n):
        q = self.size_q(n)
        if math.comb(n, q) > MAX_ENUMERATION:
            raise ValueError("hold-out support exceeds the enumeration cap")
        rows = []
        for subset in itertools.combinations(range(n), q):
            w = np.zeros(n)
            w[list(subset)] = n / q
            rows.append(w)
        return np.array(rows)

    def name(self):
        return "rho" if self.q is None else f"rho:{self.q}"


@dataclass(frozen=True)
class LeaveOneOut(RandomHoldOut):
    """Random hold-out with q = n - 1."""

    q: int | None = field(default=None, init=False)
    label: ClassVar[str] = "loo"

    def size_q(self, n):
        return n - 1

    def support(self, n):
        w = np.full((n, n), n / (n - 1))
        np.fill_diagonal(w, 0.0)
        return w

    def name(self):
        return "loo"


@dataclass(frozen=True)
class VFoldCV(WeightScheme):
    """Regular V-fold weights W_i = V/(V-1) 1{i not in block J}, J uniform."""

    V: int = 2
    label: ClassVar[str] = "vfold"
    exchangeable: ClassVar[bool] = False

    def validate(self, n):
        super().validate(n)
        if not 2 <= self.V <= n:
            raise ValueError(f"V-fold needs 2 <= V <= n, got V={self.V}, n={n}")
        if n % self.V:
            # Irregular blocks have different constants; not supported.
            raise ValueError(f"V={self.V} must divide n={n}")

    def support(self, n):
        V = self.V
        blocks = np.arange(n) // (n // V)
        return np.array([(blocks != j) * (V / (V - 1)) for j in range(V)], dtype=np.float64)

    def draw(self, n, size, rng):
        return self.support(n)[rng.integers(0, self.V, size=size)]

    def support_size(self, n):
        return self.V

    def name(self):
        return f"vfold:{self.V}"


def draw_weights(scheme: WeightScheme, n: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw one weight vector (shape (n,)) or ``size`` of them (shape (size, n))."""
    scheme.validate(n)
    rng = np.random.default_rng(rng)
    if size is None:
        return scheme.draw(n, 1, rng)[0]
    return scheme.draw(n, int(size), rng)


def enumerate_weights(scheme: WeightScheme, n: int) -> np.ndarray:
    """The full equiprobable support of ``scheme`` as an (N, n) matrix."""
    scheme.validate(n)
    return scheme.support(n)


@dataclass(frozen=True)
class ResamplingConstants:
    """Constants of a weight law at sample size n.

    ``b_w_lower``/``b_w_upper`` bracket B_W (equal when it is known exactly).
    ``d_w`` is only set when |W_i - x0| = a almost surely, and is then a
    certified upper value. ``certified`` is False when ``a_w`` itself comes
    from Monte Carlo (Poisson with mu != 1).
    """

    scheme: str
    n: int
    a_w: float
    b_w_lower: float
    b_w_upper: float
    c_w: float
    d_w: float | None = None
    x0_a: tuple[float, float] | None = None
    b_w_estimate: tuple[float, float] | None = None
    a_w_estimate: tuple[float, float] | None = None
    certified: bool = True

    @property
    def b_w_exact(self) -> bool:
        return self.b_w_lower == self.b_w_upper


def mc_weight_moments(scheme: WeightScheme, n: int, draws: int, rng, batch: int = 10_000) -> dict:
    """Monte Carlo estimates of A_W, B_W, C_W from their defining expectations.

    Per draw we average |W_i - Wbar| and (W_i - Wbar)^2 over i (unbiased by
    exchangeability, and by block symmetry for V-fold), so the draws stay iid
    and the reported standard errors are plain sample-sd / sqrt(draws).
    Returns ``{"A": (est, se), "B": (est, se), "C": (est, se)}``.
    """
    scheme.validate(n)
    rng = np.random.default_rng(rng)
    abs_dev, root_ms, ms = [], [], []
    remaining = int(draws)
    while remaining > 0:
        m = min(batch, remaining)
        w = scheme.draw(n, m, rng)
        dev = w - w.mean(axis=1, keepdims=True)
        abs_dev.append(np.abs(dev).mean(axis=1))
        sq = (dev**2).mean(axis=1)
        ms.append(sq)
        root_ms.append(np.sqrt(sq))
        remaining -= m
    out = {}
    for key, vals in (("A", abs_dev), ("B", root_ms)):
        v = np.concatenate(vals)
        out[key] = (float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)))
    v = np.concatenate(ms)
    m2, se_m2 = float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))
    c = math.sqrt(n / (n - 1) * m2)
    out["C"] = (c, (n / (n - 1)) * se_m2 / (2.0 * c) if c > 0 else 0.0)
    return out


def constants(scheme: WeightScheme, n: int, mc_draws: int | None = None, rng=None) -> ResamplingConstants:
    """Resampling constants, closed form wherever available.

    With ``mc_draws`` (>= 1000) the B_W Monte Carlo estimate is attached.
    Poisson(mu != 1) has no closed form A_W; its A_W is then estimated with
    ``mc_draws`` (default 10**4) and the result is marked uncertified.
    """
    scheme.validate(n)
    if mc_draws is not None and mc_draws < 1000:
        raise ValueError("mc_draws must be at least 1000")
    mc = None

    def moments():
        nonlocal mc
        if mc is None:
            mc = mc_weight_moments(scheme, n, mc_draws or 10_000, np.random.default_rng(rng))
        return mc

    d_w = None
    x0_a = None
    certified = True
    a_est = None
    if isinstance(scheme, Rademacher):
        a = 1.0 - 1.0 / n
        b_lo, b_hi = a, math.sqrt(1.0 - 1.0 / n)
        c = 1.0
        d_w = 1.0 + 1.0 / math.sqrt(n)
        x0_a = (0.0, 1.0)
    elif isinstance(scheme, Efron):
        q = scheme.size_q(n)
        a = 2.0 * (1.0 - 1.0 / n) ** q
        b_lo, b_hi = a, math.sqrt((n - 1) / q)
        c = math.sqrt(n / q)
    elif isinstance(scheme, Bernoulli):
        p = scheme.p
        a = 2.0 * (1.0 - p) * (1.0 - 1.0 / n)
        c = math.sqrt(1.0 / p - 1.0)
        b_lo, b_hi = a, c * math.sqrt(1.0 - 1.0 / n)
        d_w = 1.0 / (2 * p) + abs(1.0 / (2 * p) - 1.0) + math.sqrt((1 - p) / (n * p))
        x0_a = (1.0 / (2 * p), 1.0 / (2 * p))
    elif isinstance(scheme, Poisson):
        mu = scheme.mu
        c = 1.0 / math.sqrt(mu)
        b_hi = c * math.sqrt(1.0 - 1.0 / n)
        if mu == 1.0 and 2.0 / math.e - 1.0 / math.sqrt(n) > 0:
            a = 2.0 / math.e - 1.0 / math.sqrt(n)
        else:
            a_est = moments()["A"]
            a = a_est[0]
            certified = False
        b_lo = a
    elif isinstance(scheme, RandomHoldOut):  # includes LeaveOneOut
        q = scheme.size_q(n)
        a = 2.0 * (n - q) / n
        b_lo = b_hi = math.sqrt((n - q) / q)
        c = math.sqrt(n * (n - q) / ((n - 1) * q))
        d_w = n / (2 * q) + abs(1.0 - n / (2 * q))
        x0_a = (n / (2 * q), n / (2 * q))
    elif isinstance(scheme, VFoldCV):
        V = scheme.V
        a = 2.0 / V
        b_lo = b_hi = 1.0 / math.sqrt(V - 1)
        # Effective constant from the block-mean reduction, not the raw E[(W_1-Wbar)^2].
        c = math.sqrt(n) / (V - 1)
        d_w = 1.0
        x0_a = (V / (2 * (V - 1)), V / (2 * (V - 1)))
    else:
        raise ValueError(f"no constants for scheme {scheme!r}")

    b_est = moments()["B"] if mc_draws is not None else None
    return ResamplingConstants(
        scheme=scheme.name(), n=n, a_w=a, b_w_lower=b_lo, b_w_upper=b_hi, c_w=c,
        d_w=d_w, x0_a=x0_a, b_w_estimate=b_est, a_w_estimate=a_est, certified=certified,
    )


@dataclass(frozen=True)
class SchemeIndices:
    accuracy: float
    complexity: int | None  # None: infinite support


def scheme_indices(scheme: WeightScheme, n: int) -> SchemeIndices:
    """Accuracy index C_W / B_W (with the certified lower B_W) and support size."""
    k = constants(scheme, n)
    return SchemeIndices(accuracy=k.c_w / k.b_w_lower, complexity=scheme.support_size(n))


def centered_weight_range(scheme: WeightScheme, n: int) -> tuple[float, float]:
    """Almost-sure bounds [c1, c2] on W_1 - Wbar, for the Monte Carlo slack term."""
    scheme.validate(n)
    if isinstance(scheme, Rademacher):
        h = 2.0 * (1.0 - 1.0 / n)
        return -h, h
    if isinstance(scheme, Bernoulli):
        h = (1.0 - 1.0 / n) / scheme.p
        return -h, h
    if isinstance(scheme, Efron):
        return -1.0, n - 1.0
    if isinstance(scheme, RandomHoldOut):
        return -1.0, n / scheme.size_q(n) - 1.0
    if isinstance(scheme, VFoldCV):
        return -1.0, 1.0 / (scheme.V - 1)
    raise ValueError(f"{scheme.name()} weights are unbounded; no Monte Carlo slack available")


def parse_scheme(text: str) -> WeightScheme:
    """Parse ``rademacher``, ``efron[:q]``, ``bernoulli:p``, ``poisson:mu``,
    ``rho[:q]``, ``loo`` or ``vfold:V``."""
    head, _, arg = text.strip().lower().partition(":")
    try:
        if head in ("rademacher", "rad"):
            return Rademacher()
        if head == "efron":
            return Efron(int(arg)) if arg else Efron()
        if head == "bernoulli":
            return Bernoulli(float(arg) if arg else 0.5)
        if head == "poisson":
            return Poisson(float(arg) if arg else 1.0)
        if head in ("rho", "holdout"):
            return RandomHoldOut(int(arg)) if arg else RandomHoldOut()
        if head in ("loo", "leave-one-out"):
            return LeaveOneOut()
        if head in ("vfold", "vfcv"):
            return VFoldCV(int(arg))
    except ValueError as exc:
        raise ValueError(f"bad weight scheme {text!r}: {exc}") from None
    raise ValueError(f"unknown weight scheme {text!r}")
