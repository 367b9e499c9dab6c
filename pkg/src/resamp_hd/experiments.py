"""Torus-field experiments: average thresholds, power, and step-down iteration counts.

Three experiments, each returning a list of row dicts:

* ``fig1``: mean and sd of each translation-invariant threshold over trials,
  for a grid of bandwidths b (mu = 0), plus the ideal quantile and the
  single-coordinate threshold.
* ``fig2``: thresholds and power under the linear half-null scenario.
* ``fig3``: mean iteration counts and capped power of uncentered step-down
  and the hybrid procedure under the exponential-decay scenario, for a grid
  of dynamic ranges r.

Trial i draws its data from ``default_rng([seed, i, 0])`` and its weights from
``default_rng([seed, i, 1])``, so tables do not depend on the worker count.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from ._parallel import map_ordered
from .aggregators import TwoSidedSup
from .mtp import Procedure
from .numerics import gauss_upper_quantile
from .resample import order_statistic_quantile
from .simfield import ExpDecay, LinearHalf, TorusScenario, Zero, sample_mean_field
from .thresholds import (
    Bonferroni,
    ConcBonf,
    Concentration,
    QuantBonf,
    QuantConc,
    QuantRaw,
    QuantUncentered,
    evaluate_methods,
)

__all__ = [
    "ExperimentConfig",
    "desk_config",
    "paper_config",
    "run_experiment",
    "run_fig1",
    "run_fig2",
    "run_fig3",
    "FIG1_METHODS",
    "FIG2_METHODS",
    "FIG3_METHODS",
    "COLUMNS",
]

FIG1_METHODS = ("bonf", "conc", "conc-bonf", "quant-bonf", "quant-conc", "quant-raw", "ideal", "single")
FIG2_METHODS = ("bonf", "holm", "quant-bonf", "sd-quant-bonf", "quant-uncent", "sd-quant-uncent", "ideal")
FIG3_METHODS = ("sdqu", "hybrid")
FIG3_CAPS = (1, 2, 3)

COLUMNS = {
    "fig1": ("b", "method", "mean_threshold", "sd_threshold"),
    "fig2": ("b", "method", "mean_threshold", "sd_threshold", "mean_power", "power_stderr"),
    "fig3": ("r", "method", "mean_iterations", "power_cap_1", "power_cap_2", "power_cap_3",
             "power_cap_inf", "ratio_cap_1", "ratio_cap_2", "ratio_cap_3", "ratio_cap_inf"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one experiment run.

    ``b_grid`` is used by fig1/fig2, ``r_grid`` and the fixed bandwidth ``b``
    by fig3. ``ideal_trials`` sizes the auxiliary batch for the ideal quantile.
    """

    kind: str = "fig1"
    d: int = 16
    n: int = 100
    trials: int = 200
    b_grid: tuple[float, ...] = (0.0, 2.0, 4.0, 6.0)
    r_grid: tuple[float, ...] = (0.0, 10.0, 20.0)
    b: float = 4.0
    alpha: float = 0.05
    B: int = 500
    delta: float = 0.1
    alpha0_frac: float = 0.9
    seed: int = 20240601
    ideal_trials: int = 1000
    convolution: str = "direct"
    workers: int | None = None

    def __post_init__(self):
        if self.kind not in COLUMNS:
            raise ValueError(f"unknown experiment {self.kind!r}; expected fig1, fig2 or fig3")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["b_grid"] = list(self.b_grid)
        d["r_grid"] = list(self.r_grid)
        return d


def desk_config(kind: str, **overrides) -> ExperimentConfig:
    """Laptop-scale defaults (K = 256)."""
    base = {
        "fig1": dict(d=16, n=100, trials=200, B=500),
        "fig2": dict(d=16, n=100, trials=200, B=500),
        "fig3": dict(d=16, n=50, trials=100, B=500, b=4.0),
    }[kind]
    base.update(overrides)
    return ExperimentConfig(kind=kind, **base)


def paper_config(kind: str, **overrides) -> ExperimentConfig:
    """Full-scale settings: 128 x 128 torus, 1000 Monte Carlo draws per threshold."""
    b_grid = tuple(float(b) for b in range(0, 41, 2))
    base = {
        "fig1": dict(d=128, n=1000, trials=250, B=1000, b_grid=b_grid),
        "fig2": dict(d=128, n=1000, trials=250, B=1000, b_grid=b_grid),
        "fig3": dict(d=128, n=100, trials=250, B=1000, b=30.0,
                     r_grid=tuple(float(r) for r in range(0, 31, 5))),
    }[kind]
    base.update(overrides)
    return ExperimentConfig(kind=kind, convolution="fft", **base)


def _mean_sd(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    return float(x.mean()), float(x.std(ddof=1)) if x.size > 1 else 0.0


def _ideal(cfg: ExperimentConfig, b: float, null_mask: np.ndarray | None, stream: int) -> float:
    """(1 - alpha) quantile of sup_{k null} |Ybar_k - mu_k| over an auxiliary batch."""
    rng = np.random.default_rng([cfg.seed, stream, int(round(b * 1000))])
    G = sample_mean_field(cfg.d, b, cfg.n, cfg.ideal_trials, rng, cfg.convolution)
    if null_mask is not None:
        G = G[:, null_mask]
    return order_statistic_quantile(np.abs(G).max(axis=1), cfg.alpha)


# ---------------------------------------------------------------------------
# fig1


def _fig1_methods(cfg: ExperimentConfig) -> dict:
    return {
        "bonf": Bonferroni(),
        "conc": Concentration(B=cfg.B),
        "conc-bonf": ConcBonf(B=cfg.B, delta=cfg.delta),
        "quant-bonf": QuantBonf(cfg.B, delta=cfg.delta, alpha0_frac=cfg.alpha0_frac),
        "quant-conc": QuantConc(cfg.B, delta=cfg.delta, alpha0_frac=cfg.alpha0_frac),
        "quant-raw": QuantRaw(cfg.B),
    }


def _fig1_trial(args):
    cfg, b, i = args
    sc = TorusScenario(cfg.d, b, cfg.n, Zero(), cfg.alpha, convolution=cfg.convolution)
    Y = sc.sample(np.random.default_rng([cfg.seed, i, 0]))
    return evaluate_methods(_fig1_methods(cfg), Y, cfg.alpha, np.random.default_rng([cfg.seed, i, 1]),
                            TwoSidedSup())


def run_fig1(cfg: ExperimentConfig) -> list[dict]:
    rows = []
    single = gauss_upper_quantile(cfg.alpha / 2.0) / math.sqrt(cfg.n)
    for b in cfg.b_grid:
        res = map_ordered(_fig1_trial, [(cfg, b, i) for i in range(cfg.trials)], cfg.workers)
        for name in FIG1_METHODS[:6]:
            m, s = _mean_sd([r[name] for r in res])
            rows.append({"b": b, "method": name, "mean_threshold": m, "sd_threshold": s})
        rows.append({"b": b, "method": "ideal", "mean_threshold": _ideal(cfg, b, None, 7),
                     "sd_threshold": 0.0})
        rows.append({"b": b, "method": "single", "mean_threshold": single, "sd_threshold": 0.0})
    return rows


# ---------------------------------------------------------------------------
# fig2


def _fig2_procedures(cfg: ExperimentConfig) -> dict:
    qb = QuantBonf(cfg.B, delta=cfg.delta, alpha0_frac=cfg.alpha0_frac)
    qu = QuantUncentered(cfg.B)
    a = cfg.alpha
    return {
        "bonf": Procedure("single", Bonferroni(), alpha=a),
        "holm": Procedure("holm", alpha=a),
        "quant-bonf": Procedure("single", qb, alpha=a),
        "sd-quant-bonf": Procedure("sd", qb, alpha=a),
        "quant-uncent": Procedure("single", qu, alpha=a),
        "sd-quant-uncent": Procedure("sd", qu, alpha=a),
    }


def _fig2_trial(args):
    cfg, b, i = args
    sc = TorusScenario(cfg.d, b, cfg.n, LinearHalf(), cfg.alpha, convolution=cfg.convolution)
    Y = sc.sample(np.random.default_rng([cfg.seed, i, 0]))
    alt = ~sc.null_mask
    out = {}
    for name, proc in _fig2_procedures(cfg).items():
        res = proc.run(Y, np.random.default_rng([cfg.seed, i, 1]))
        out[name] = (res.trace[-1][1], float((res.rejected_mask & alt).sum() / alt.sum()))
    return out


def run_fig2(cfg: ExperimentConfig) -> list[dict]:
    rows = []
    for b in cfg.b_grid:
        res = map_ordered(_fig2_trial, [(cfg, b, i) for i in range(cfg.trials)], cfg.workers)
        for name in FIG2_METHODS[:-1]:
            m, s = _mean_sd([r[name][0] for r in res])
            p, ps = _mean_sd([r[name][1] for r in res])
            rows.append({"b": b, "method": name, "mean_threshold": m, "sd_threshold": s,
                         "mean_power": p, "power_stderr": ps / math.sqrt(cfg.trials)})
        sc = TorusScenario(cfg.d, b, cfg.n, LinearHalf(), cfg.alpha)
        rows.append({"b": b, "method": "ideal", "mean_threshold": _ideal(cfg, b, sc.null_mask, 8),
                     "sd_threshold": 0.0, "mean_power": math.nan, "power_stderr": math.nan})
    return rows


# ---------------------------------------------------------------------------
# fig3


def _fig3_trial(args):
    cfg, r, i = args
    sc = TorusScenario(cfg.d, cfg.b, cfg.n, ExpDecay(r), cfg.alpha, convolution=cfg.convolution)
    Y = sc.sample(np.random.default_rng([cfg.seed, i, 0]))
    alt = ~sc.null_mask
    procs = {
        "sdqu": Procedure("sd", QuantUncentered(cfg.B), alpha=cfg.alpha),
        "hybrid": Procedure("hybrid", alpha=cfg.alpha, B=cfg.B, delta=cfg.delta,
                            alpha0=cfg.alpha0_frac * cfg.alpha),
    }
    out = {}
    for name, proc in procs.items():
        res = proc.run(Y, np.random.default_rng([cfg.seed, i, 1]))
        caps = [float((res.rejected_after(t) & alt).sum() / alt.sum()) for t in FIG3_CAPS]
        caps.append(float((res.rejected_mask & alt).sum() / alt.sum()))
        out[name] = (res.iterations, caps)
    return out


def run_fig3(cfg: ExperimentConfig) -> list[dict]:
    rows = []
    for r in cfg.r_grid:
        res = map_ordered(_fig3_trial, [(cfg, r, i) for i in range(cfg.trials)], cfg.workers)
        # Reference: uncapped uncentered step-down power.
        pmax = float(np.mean([x["sdqu"][1][-1] for x in res]))
        for name in FIG3_METHODS:
            it = float(np.mean([x[name][0] for x in res]))
            pw = np.mean([x[name][1] for x in res], axis=0)
            row = {"r": r, "method": name, "mean_iterations": it}
            for label, v in zip(("1", "2", "3", "inf"), pw):
                row[f"power_cap_{label}"] = float(v)
                row[f"ratio_cap_{label}"] = float(v / pmax) if pmax > 0 else math.nan
            rows.append(row)
    return rows


PAPER_SCALE_K = 128 * 128


def run_experiment(cfg: ExperimentConfig) -> list[dict]:
    """Run one experiment; warns when the setting is at or near full scale."""
    if cfg.d * cfg.d >= PAPER_SCALE_K // 4:
        warnings.warn(f"K = {cfg.d ** 2} with {cfg.trials} trials per grid point will take hours",
                      RuntimeWarning, stacklevel=2)
    return {"fig1": run_fig1, "fig2": run_fig2, "fig3": run_fig3}[cfg.kind](cfg)
