"""Stationary Gaussian fields on the discrete d x d torus and mean scenarios.

A field is white noise convolved (circularly) with the pseudo-Gaussian filter
F_b(t) = C_b exp(-dist(0, t)^2 / b^2), normalized so that sum F^2 = 1 and
every site has unit variance. Site (i, j) (column i, row j) is flattened to
coordinate k = i + d j, i.e. a (d, d) array indexed [j, i] in C order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import gauss_upper_quantile

__all__ = [
    "torus_distance2",
    "filter_kernel",
    "convolve_torus",
    "TorusFieldConfig",
    "sample_field",
    "sample_mean_field",
    "Zero",
    "LinearHalf",
    "ExpDecay",
    "bonferroni_reference",
    "mean_scenario_vector",
    "TorusScenario",
    "kernel_autocorrelation",
]

KERNEL_CUTOFF = 1e-16


def torus_distance2(d: int) -> np.ndarray:
    """Squared flat distance from the origin to every site, as a (d, d) array."""
    a = np.arange(d)
    m = np.minimum(a, d - a).astype(np.float64)
    return m[:, None] ** 2 + m[None, :] ** 2


def filter_kernel(d: int, b: float) -> np.ndarray:
    """F_b on the d x d torus with sum F^2 = 1; b = 0 gives the unit impulse."""
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if not b >= 0:
        raise ValueError(f"bandwidth b must be >= 0, got {b}")
    if b == 0:
        F = np.zeros((d, d))
        F[0, 0] = 1.0
        return F
    b = float(b)
    with np.errstate(over="ignore"):  # b**2 underflows for tiny b: divide twice, overflow to inf
        F = np.exp(-(torus_distance2(d) / b) / b)
    return F / math.sqrt(np.sum(F * F))


def convolve_torus(noise: np.ndarray, F: np.ndarray, method: str = "direct") -> np.ndarray:
    """Circular convolution of each (d, d) slice of ``noise`` (last two axes) with F.

    ``direct`` sums shifted copies over the sites where F exceeds
    1e-16 max(F); ``fft`` uses the 2-D real transform.
    """
    if method == "fft":
        spec = np.fft.rfft2(noise, axes=(-2, -1)) * np.fft.rfft2(F)
        return np.fft.irfft2(spec, s=F.shape, axes=(-2, -1))
    if method != "direct":
        raise ValueError(f"method must be 'direct' or 'fft', got {method!r}")
    out = np.zeros_like(noise, dtype=np.float64)
    cutoff = KERNEL_CUTOFF * F.max()
    for dj, di in zip(*np.nonzero(F > cutoff)):
        out += F[dj, di] * np.roll(noise, (dj, di), axis=(-2, -1))
    return out


@dataclass(frozen=True)
class TorusFieldConfig:
    d: int = 8
    b: float = 0.0
    n: int = 30
    mean: np.ndarray | None = None  # flattened K-vector; None is zero
    convolution: str = "direct"

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if not self.b >= 0:
            raise ValueError(f"b must be >= 0, got {self.b}")
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if self.mean is not None and np.shape(self.mean) != (self.d * self.d,):
            raise ValueError(f"mean must have length d^2 = {self.d * self.d}")

    @property
    def K(self) -> int:
        return self.d * self.d


def sample_field(config: TorusFieldConfig, rng) -> np.ndarray:
    """K x n data matrix of n iid fields (plus the configured mean)."""
    rng = np.random.default_rng(rng)
    d, n = config.d, config.n
    G = convolve_torus(rng.standard_normal((n, d, d)), filter_kernel(d, config.b), config.convolution)
    Y = G.reshape(n, d * d).T
    if config.mean is not None:
        Y = Y + np.asarray(config.mean, dtype=np.float64)[:, None]
    return np.ascontiguousarray(Y)


def sample_mean_field(d: int, b: float, n: int, size: int, rng, convolution: str = "direct") -> np.ndarray:
    """``size`` draws of Ybar - mu directly, shape (size, K): a field with variance 1/n."""
    rng = np.random.default_rng(rng)
    G = convolve_torus(rng.standard_normal((size, d, d)), filter_kernel(d, b), convolution)
    return G.reshape(size, d * d) / math.sqrt(n)


def kernel_autocorrelation(F: np.ndarray, shift: tuple[int, int]) -> float:
    """sum_t F(t) F(t + shift): the field covariance at that lag."""
    return float(np.sum(F * np.roll(F, (-shift[0], -shift[1]), axis=(0, 1))))


# ---------------------------------------------------------------------------
# mean scenarios


@dataclass(frozen=True)
class Zero:
    pass


@dataclass(frozen=True)
class LinearHalf:
    """mu_(i,j) = ((d/2 - j)_+ / (d/2)) * amplitude * t_Bonf: rows j >= d/2 are null."""

    amplitude: float = 20.0


@dataclass(frozen=True)
class ExpDecay:
    """f(k) = 0.5 t_Bonf 10^{((K/2 - k)/(K/2)) r/10} for k <= K/2, else 0; r in dB."""

    r: float = 10.0


def bonferroni_reference(K: int, n: int, alpha: float = 0.05, side: str = "two") -> float:
    """t_Bonf(H) for unit standard deviations."""
    c = 1 if side == "one" else 2
    return gauss_upper_quantile(alpha / (c * K)) / math.sqrt(n)


def mean_scenario_vector(scenario, d: int, alpha: float = 0.05, side: str = "two", n: int = 30) -> np.ndarray:
    """Flattened mean vector (k = i + d j) of a scenario on the d x d torus."""
    K = d * d
    if isinstance(scenario, Zero):
        return np.zeros(K)
    if d % 2:
        raise ValueError(f"half-split scenarios need an even d, got {d}")
    t = bonferroni_reference(K, n, alpha, side)
    if isinstance(scenario, LinearHalf):
        half = d / 2
        j = np.arange(d, dtype=np.float64)
        row = np.maximum(half - j, 0.0) / half * scenario.amplitude * t
        return np.repeat(row, d)  # row j fills k = d j .. d j + d - 1
    if isinstance(scenario, ExpDecay):
        half = K // 2
        k = np.arange(K, dtype=np.float64)
        mu = 0.5 * t * np.exp((half - k) / half * (scenario.r / 10.0) * math.log(10.0))
        mu[K // 2 + 1:] = 0.0
        return mu
    raise ValueError(f"unknown scenario {scenario!r}")


@dataclass(frozen=True)
class TorusScenario:
    """A torus field with a mean scenario, as consumed by the Monte Carlo evaluators."""

    d: int = 8
    b: float = 0.0
    n: int = 30
    scenario: object = field(default_factory=Zero)
    alpha: float = 0.05
    side: str = "two"
    convolution: str = "direct"

    @property
    def mu(self) -> np.ndarray:
        return mean_scenario_vector(self.scenario, self.d, self.alpha, self.side, self.n)

    @property
    def null_mask(self) -> np.ndarray:
        mu = self.mu
        return (np.maximum(mu, 0.0) if self.side == "one" else np.abs(mu)) == 0

    def config(self) -> TorusFieldConfig:
        return TorusFieldConfig(self.d, self.b, self.n, self.mu, self.convolution)

    def sample(self, rng) -> np.ndarray:
        return sample_field(self.config(), rng)
