"""The functions phi used to build regions and rejection sets.

An aggregator maps a K-vector (or a batch of them along the last axis) to a
scalar, optionally restricted to a coordinate subset. Evaluation over an
empty subset returns ``-inf`` so that nothing ever compares as exceeding it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "Aggregator",
    "OneSidedSup",
    "TwoSidedSup",
    "LpNorm",
    "evaluate",
    "conjugate",
    "parse_aggregator",
    "as_mask",
]


def as_mask(subset, K: int) -> np.ndarray:
    """Boolean mask of length K from ``None`` (all), a mask, or an index collection."""
    if subset is None:
        return np.ones(K, dtype=bool)
    arr = np.asarray(subset)
    if arr.dtype == bool:
        if arr.shape != (K,):
            raise ValueError(f"subset mask must have shape ({K},), got {arr.shape}")
        return arr
    mask = np.zeros(K, dtype=bool)
    idx = np.asarray(list(subset) if not isinstance(subset, np.ndarray) else subset, dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= K):
        raise ValueError("subset indices out of range")
    mask[idx] = True
    return mask


@dataclass(frozen=True)
class Aggregator:
    """Base aggregator. ``subset`` is a tuple of coordinate indices or None for all."""

    subset: tuple[int, ...] | None = field(default=None, kw_only=True)

    @property
    def norm_p(self) -> float:
        """p of the l_p norm bounding this aggregator (inf for the sup forms)."""
        return np.inf

    @property
    def normalized_norm(self) -> bool:
        return False

    def restrict(self, subset) -> "Aggregator":
        return replace(self, subset=None if subset is None else tuple(int(i) for i in subset))

    def _reduce(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _mask(self, K: int, mask):
        if mask is not None:
            return mask
        return None if self.subset is None else as_mask(self.subset, K)

    def __call__(self, x, mask: np.ndarray | None = None):
        """Evaluate on the last axis of ``x``; ``mask`` overrides ``subset``."""
        x = np.asarray(x, dtype=np.float64)
        mask = self._mask(x.shape[-1], mask)
        if mask is not None:
            if not mask.any():
                out = np.full(x.shape[:-1], -np.inf)
                return float(out) if out.ndim == 0 else out
            x = x[..., mask]
        out = self._reduce(x)
        return float(out) if np.ndim(out) == 0 else out

    def norm(self, v, mask: np.ndarray | None = None) -> float:
        """The bounding l_p norm of ``v`` over the aggregator's coordinates."""
        return LpNorm(self.norm_p, self.normalized_norm)(v, self._mask(np.shape(v)[-1], mask))


@dataclass(frozen=True)
class OneSidedSup(Aggregator):
    """x -> sup_k (x_k)_+"""

    def _reduce(self, x):
        return np.maximum(x.max(axis=-1), 0.0)


@dataclass(frozen=True)
class TwoSidedSup(Aggregator):
    """x -> sup_k |x_k|"""

    def _reduce(self, x):
        return np.abs(x).max(axis=-1)


@dataclass(frozen=True)
class LpNorm(Aggregator):
    """l_p norm, optionally normalized as (|C|^-1 sum |x_k|^p)^(1/p)."""

    p: float = 2.0
    normalized: bool = False

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError(f"l_p aggregator needs p >= 1, got {self.p}")

    @property
    def norm_p(self):
        return self.p

    @property
    def normalized_norm(self):
        return self.normalized

    def _reduce(self, x):
        a = np.abs(x)
        p = self.p
        if np.isinf(p):
            return a.max(axis=-1)
        if p == 1:
            s = a.sum(axis=-1)
        elif p == 2:
            s = np.sqrt((a * a).sum(axis=-1))
        else:
            s = (a**p).sum(axis=-1) ** (1.0 / p)
        if self.normalized:
            s = s / x.shape[-1] ** (1.0 / p)
        return s


def evaluate(agg: Aggregator, x) -> float:
    """phi restricted to ``agg.subset`` evaluated at ``x``."""
    return agg(x)


def conjugate(agg: Aggregator) -> Aggregator:
    """x -> max(phi(x), phi(-x)); the sup of positive parts becomes the sup of |x|."""
    if isinstance(agg, OneSidedSup):
        return TwoSidedSup(subset=agg.subset)
    return agg


def parse_aggregator(side: str = "two", phi: str | None = None) -> Aggregator:
    """``phi='lp:<p>[:norm]'`` if given, else the sup form for ``side``."""
    if phi:
        head, _, rest = phi.partition(":")
        if head != "lp":
            raise ValueError(f"unknown phi {phi!r}; expected lp:<p>[:norm]")
        p_text, _, flag = rest.partition(":")
        p = np.inf if p_text in ("inf", "infinity") else float(p_text or 2)
        if flag not in ("", "norm"):
            raise ValueError(f"unknown l_p flag {flag!r}")
        return LpNorm(p, normalized=flag == "norm")
    if side == "one":
        return OneSidedSup()
    if side == "two":
        return TwoSidedSup()
    raise ValueError(f"side must be 'one' or 'two', got {side!r}")
