"""Contemporaneous and iterated aggregation of independent GWI copies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analytic_limits import ModelParams, stationary_tail_constant
from .gwi_sim import CENTERING, PathEnsemble, SimConfig, replicate_column_sums, simulate_ensemble
from .heavy_tail import ParetoIntLaw, imm_mean


class RegimeError(ValueError):
    pass


@dataclass(frozen=True)
class Centering:
    """Per-copy center subtracted before scaling: truncated mean, none, or full mean."""

    kind: str
    value: float = 0.0
    a: float | None = None
    stderr: float = 0.0

    def __post_init__(self):
        if self.kind not in ("truncated", "none", "mean"):
            raise ValueError(f"unknown centering {self.kind!r}")
        if self.kind == "truncated" and not (self.a and self.a > 0):
            raise ValueError("truncated centering needs a positive threshold a")

    @classmethod
    def none(cls) -> Centering:
        return cls("none")

    @classmethod
    def mean(cls, params: ModelParams) -> Centering:
        if params.alpha <= 1.0:
            raise RegimeError("mean centering needs alpha > 1")
        return cls("mean", value=stationary_mean(params))

    def describe(self) -> str:
        if self.kind == "truncated":
            return f"truncated(a={self.a:.6g};c={self.value:.10g};se={self.stderr:.3g})"
        if self.kind == "mean":
            return f"mean({self.value:.10g})"
        return "none"


@dataclass(frozen=True)
class AggregateSeries:
    t_grid: np.ndarray
    values: np.ndarray  # (len(t_grid), d) for copy sums, (len(t_grid),) for iterated sums
    scaling: float
    centering: Centering
    meta: dict = field(default_factory=dict)


def stationary_mean(params: ModelParams) -> float:
    """E(X_0) = zeta(alpha)/(1 - m_xi) for alpha > 1."""
    return imm_mean(ParetoIntLaw(params.alpha)) / (1.0 - params.m_xi)


def truncated_mean_estimate(sample, a: float) -> float:
    x = np.asarray(sample, dtype=float)
    if a <= 0:
        raise ValueError("a must be positive")
    if x.size == 0:
        raise ValueError("empty sample")
    return float(np.sum(x[x <= a])) / x.size


def _model_band(params: ModelParams, lo: float, hi: float) -> float:
    """E(X 1{lo < X <= hi}) under P(X > x) = L x^-alpha."""
    L = stationary_tail_constant(params)
    a = params.alpha
    if hi <= lo:
        return 0.0
    if a == 1.0:
        return L * math.log(hi / lo)
    return L * a / (1.0 - a) * (hi ** (1.0 - a) - lo ** (1.0 - a))


def truncated_mean_hybrid(sample, a: float, params: ModelParams, level: float = 1e-3) -> tuple[float, float, dict]:
    """E(X_0 1{X_0 <= a}) from a stationary sample plus the regularly varying tail.

    Below the empirical (1 - level) quantile q the sample mean is used; above
    q the stationary tail P(X_0 > x) ~ x^-alpha / (1 - m^alpha) is integrated
    exactly. For alpha > 1 and a > q the value is E(X_0) minus the model tail
    above a. Returns (estimate, standard error, details).
    """
    x = np.asarray(sample, dtype=float)
    if a <= 0:
        raise ValueError("a must be positive")
    M = x.size
    q = float(np.quantile(x, 1.0 - level, method="inverted_cdf"))
    if a <= q:
        part = np.where(x <= a, x, 0.0)
        est, se = float(part.mean()), float(part.std(ddof=1) / math.sqrt(M))
        return est, se, {"split": a, "tail_model": 0.0}
    if params.alpha > 1.0:
        L = stationary_tail_constant(params)
        al = params.alpha
        above = L * al / (al - 1.0) * a ** (1.0 - al)
        return stationary_mean(params) - above, 0.0, {"split": a, "tail_model": -above}
    part = np.where(x <= q, x, 0.0)
    body, se = float(part.mean()), float(part.std(ddof=1) / math.sqrt(M))
    # X <= q has been counted by the sample; the model covers (q, a]
    band = _model_band(params, q, a)
    return body + band, se, {"split": q, "tail_model": band}


def centering_sample(params: ModelParams, size: int, seed: int, jobs: int = 1,
                     burn_in: int | None = None) -> np.ndarray:
    """Independent stationary draws reserved for estimating centers."""
    cfg = SimConfig(n_copies=size, horizon=0, seed=seed, burn_in=burn_in)
    return simulate_ensemble(params, cfg, jobs=jobs, purpose=CENTERING).values[:, 0]


def truncated_centering(params: ModelParams, a: float, sample, hybrid: bool = True) -> Centering:
    if hybrid:
        c, se, _ = truncated_mean_hybrid(sample, a, params)
    else:
        c = truncated_mean_estimate(sample, a)
        se = float(np.std(np.where(np.asarray(sample) <= a, sample, 0.0), ddof=1) / math.sqrt(len(sample)))
    return Centering("truncated", value=c, a=a, stderr=se)


def copy_partial_sums(ensemble: PathEnsemble | np.ndarray, t_grid, a_N: float, centering: Centering) -> AggregateSeries:
    """(1/a_N) sum_{j <= floor(N t)} (X^(j) - center) for each t in t_grid."""
    vals = ensemble.values if isinstance(ensemble, PathEnsemble) else np.asarray(ensemble, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if isinstance(ensemble, PathEnsemble) and centering.kind == "mean" and ensemble.params.alpha <= 1.0:
        raise RegimeError("mean centering needs alpha > 1")
    if a_N <= 0:
        raise ValueError("a_N must be positive")
    t = np.asarray(t_grid, dtype=float)
    if np.any((t < 0) | (t > 1)) or np.any(np.diff(t) < 0):
        raise ValueError("t_grid must be increasing within [0, 1]")
    N = vals.shape[0]
    counts = np.floor(N * t + 1e-9).astype(int)
    csum = np.vstack([np.zeros(vals.shape[1]), np.cumsum(vals, axis=0)])
    out = (csum[counts] - counts[:, None] * centering.value) / a_N
    return AggregateSeries(t_grid=t, values=out, scaling=a_N, centering=centering)


def iterated_scaling(params: ModelParams, n: int, a_N: float) -> float:
    if params.alpha == 1.0:
        return n * math.log(n) * a_N
    return n ** (1.0 / params.alpha) * a_N


def check_regime(params: ModelParams, centering: Centering) -> None:
    a = params.alpha
    ok = {
        "truncated": a <= 1.0,
        "none": a < 1.0,
        "mean": a > 1.0,
    }[centering.kind]
    if not ok:
        raise RegimeError(f"centering {centering.kind!r} does not match alpha={a}")


def iterated_from_column_sums(column_sums: np.ndarray, params: ModelParams, N: int, n: int,
                              t_grid, a_N: float, centering: Centering) -> np.ndarray:
    """Scaled and centered sum_{k=1}^{floor(nt)} sum_j X_k^(j) from per-generation copy sums.

    column_sums has shape (..., horizon+1) with generation 0 in the first slot.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    check_regime(params, centering)
    t = np.asarray(t_grid, dtype=float)
    steps = np.floor(n * t + 1e-9).astype(int)
    cs = np.asarray(column_sums, dtype=float)
    if steps.max(initial=0) > cs.shape[-1] - 1:
        raise ValueError("column sums do not reach the requested horizon")
    cum = np.concatenate([np.zeros(cs.shape[:-1] + (1,)), np.cumsum(cs[..., 1:], axis=-1)], axis=-1)
    raw = cum[..., steps]
    return (raw - steps * N * centering.value) / iterated_scaling(params, n, a_N)


def iterated_aggregate(params: ModelParams, N: int, n: int, t_grid, a_N: float, centering: Centering,
                       seed: int, replicates: int = 1, jobs: int = 1, burn_in: int | None = None) -> list[AggregateSeries]:
    """Simulate ``replicates`` independent N-copy ensembles and aggregate each over time."""
    check_regime(params, centering)
    t = np.asarray(t_grid, dtype=float)
    horizon = int(math.floor(n * t.max() + 1e-9))
    cfg = SimConfig(n_copies=N, horizon=horizon, seed=seed, burn_in=burn_in)
    sums = replicate_column_sums(params, cfg, replicates, jobs=jobs)
    vals = iterated_from_column_sums(sums, params, N, n, t, a_N, centering)
    scale = iterated_scaling(params, n, a_N)
    return [AggregateSeries(t_grid=t, values=vals[r], scaling=scale, centering=centering,
                            meta={"N": N, "n": n, "replicate": r}) for r in range(replicates)]


def schedule_N(n: int, power: int = 2, floor: int = 100_000) -> int:
    """Inner-limit size N = max(floor, n^power)."""
    return max(floor, n**power)


def series_to_csv(series: AggregateSeries, fh) -> None:
    """Columns t, value components, scaling, centering descriptor."""
    vals = np.asarray(series.values, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    fh.write(",".join(["t"] + [f"v{i}" for i in range(vals.shape[1])] + ["scaling", "centering"]) + "\n")
    desc = series.centering.describe().replace(",", ";")
    for t, row in zip(series.t_grid, vals):
        fh.write(",".join([repr(float(t))] + [repr(float(v)) for v in row] + [repr(float(series.scaling)), desc]) + "\n")
