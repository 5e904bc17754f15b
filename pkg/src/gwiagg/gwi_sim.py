"""Stationary GWI paths with Bernoulli offspring and integer Pareto immigration.

Randomness is organised in fixed blocks of BLOCK copies. Block b of stream
``purpose``/``replicate`` draws from a Philox generator keyed by
(seed, purpose, replicate, b), and a block is always simulated in full, so the
value of copy j depends only on (seed, j, params, horizon, burn_in) and never
on how blocks are spread over workers or on the requested number of copies.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analytic_limits import ModelParams

BLOCK = 4096
# numpy's binomial takes int64 counts; above this the normal approximation is used
_BINOM_MAX = float(2**62)
DEFAULT_MEMORY_CAP = 2 * 1024**3

# stream purposes, part of every generator key
ENSEMBLE = 0
CENTERING = 1
TAIL_PROCESS = 2


class ResourceError(RuntimeError):
    pass


class InsufficientExceedancesError(ValueError):
    pass


def auto_burn_in(m_xi: float) -> int:
    if m_xi == 0.0:
        return 1
    return max(math.ceil(math.log(1e-6) / math.log(m_xi)), 50)


@dataclass(frozen=True)
class SimConfig:
    n_copies: int
    horizon: int
    seed: int
    burn_in: int | None = None  # None means auto
    memory_cap: int = DEFAULT_MEMORY_CAP

    def __post_init__(self):
        if self.n_copies < 1:
            raise ValueError("n_copies must be at least 1")
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be an unsigned 64-bit value")
        if self.burn_in is not None and self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")

    def resolved_burn_in(self, params: ModelParams) -> int:
        return auto_burn_in(params.m_xi) if self.burn_in is None else self.burn_in


@dataclass(frozen=True)
class PathEnsemble:
    values: np.ndarray  # (N, horizon+1), integer-valued float64
    params: ModelParams
    config: SimConfig

    @property
    def n_copies(self) -> int:
        return self.values.shape[0]

    @property
    def horizon(self) -> int:
        return self.values.shape[1] - 1


@dataclass(frozen=True)
class TailProcessDraw:
    y0: float
    K: int
    ells: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)


def block_rng(seed: int, purpose: int, replicate: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(purpose, replicate, block))
    return np.random.Generator(np.random.Philox(ss))


def _immigration(alpha: float, rng: np.random.Generator, size) -> np.ndarray:
    u = 1.0 - rng.random(size)  # (0, 1]
    return np.floor(u ** (-1.0 / alpha))


def _thin(x: np.ndarray, m: float, rng: np.random.Generator) -> np.ndarray:
    """Binomial(x, m) survivors, elementwise."""
    if m == 0.0:
        return np.zeros_like(x)
    big = x >= _BINOM_MAX
    if not big.any():
        return rng.binomial(x.astype(np.int64), m).astype(float)
    small = np.where(big, 0.0, x)
    out = rng.binomial(small.astype(np.int64), m).astype(float)
    xb = x[big]
    z = rng.standard_normal(xb.size)
    out[big] = np.clip(np.rint(m * xb + np.sqrt(xb * m * (1.0 - m)) * z), 0.0, xb)
    return out


def step(x, params: ModelParams, rng: np.random.Generator):
    """One generation: Binomial(x, m_xi) survivors plus a fresh immigration draw."""
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if np.any(arr < 0):
        raise ValueError("population must be nonnegative")
    out = _thin(arr, params.m_xi, rng) + _immigration(params.alpha, rng, arr.shape)
    return int(out[0]) if scalar else out


def init_stationary(params: ModelParams, burn_in: int, rng: np.random.Generator, size: int | None = None):
    """Run burn_in generations from the empty state."""
    x = np.zeros(1 if size is None else size)
    for _ in range(burn_in):
        x = _thin(x, params.m_xi, rng) + _immigration(params.alpha, rng, x.shape)
    return int(x[0]) if size is None else x


def simulate_block(params: ModelParams, horizon: int, burn_in: int, seed: int,
                   block: int, purpose: int = ENSEMBLE, replicate: int = 0) -> np.ndarray:
    """Paths of the BLOCK copies in one stream block, shape (BLOCK, horizon+1)."""
    rng = block_rng(seed, purpose, replicate, block)
    x = init_stationary(params, burn_in, rng, BLOCK)
    out = np.empty((BLOCK, horizon + 1))
    out[:, 0] = x
    for k in range(1, horizon + 1):
        x = _thin(x, params.m_xi, rng) + _immigration(params.alpha, rng, BLOCK)
        out[:, k] = x
    return out


def _n_blocks(n: int) -> int:
    return -(-n // BLOCK)


def _ensemble_task(args):
    params, horizon, burn_in, seed, block, purpose, replicate, rows = args
    return simulate_block(params, horizon, burn_in, seed, block, purpose, replicate)[:rows]


def _column_sum_task(args):
    params, horizon, burn_in, seed, block, purpose, replicate, rows = args
    rng = block_rng(seed, purpose, replicate, block)
    x = init_stationary(params, burn_in, rng, BLOCK)
    sums = np.empty(horizon + 1)
    sums[0] = x[:rows].sum()
    for k in range(1, horizon + 1):
        x = _thin(x, params.m_xi, rng) + _immigration(params.alpha, rng, BLOCK)
        sums[k] = x[:rows].sum()
    return sums


def run_tasks(func, tasks: list, jobs: int = 1) -> list:
    """Map func over tasks, in order, optionally in a process pool."""
    if jobs <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def _block_tasks(params, horizon, burn_in, seed, n, purpose, replicate):
    tasks = []
    for b in range(_n_blocks(n)):
        rows = min(BLOCK, n - b * BLOCK)
        tasks.append((params, horizon, burn_in, seed, b, purpose, replicate, rows))
    return tasks


def simulate_ensemble(params: ModelParams, config: SimConfig, jobs: int = 1,
                      purpose: int = ENSEMBLE, replicate: int = 0) -> PathEnsemble:
    N, h = config.n_copies, config.horizon
    need = N * (h + 1) * 8
    if need > config.memory_cap:
        raise ResourceError(f"ensemble needs {need} bytes, cap is {config.memory_cap}")
    burn = config.resolved_burn_in(params)
    tasks = _block_tasks(params, h, burn, config.seed, N, purpose, replicate)
    parts = run_tasks(_ensemble_task, tasks, jobs)
    return PathEnsemble(values=np.concatenate(parts, axis=0), params=params, config=config)


def replicate_column_sums(params: ModelParams, config: SimConfig, replicates: int,
                          jobs: int = 1, purpose: int = ENSEMBLE) -> np.ndarray:
    """Per-generation sums over N copies for independent replicate ensembles.

    Returns shape (replicates, horizon+1); row r sums replicate r's N copies
    at generations 0..horizon without storing the paths.
    """
    burn = config.resolved_burn_in(params)
    tasks, owner = [], []
    for r in range(replicates):
        t = _block_tasks(params, config.horizon, burn, config.seed, config.n_copies, purpose, r)
        tasks.extend(t)
        owner.extend([r] * len(t))
    parts = run_tasks(_column_sum_task, tasks, jobs)
    out = np.zeros((replicates, config.horizon + 1))
    for r, part in zip(owner, parts):
        out[r] += part  # blocks arrive in order, so the summation order is fixed
    return out


def conditional_tail_sample(ensemble: PathEnsemble, x: float, min_rows: int = 200) -> np.ndarray:
    """Rows with X_0 > x, divided by x."""
    rows = ensemble.values[ensemble.values[:, 0] > x]
    if rows.shape[0] < min_rows:
        raise InsufficientExceedancesError(
            f"only {rows.shape[0]} rows exceed x={x}; at least {min_rows} required")
    return rows / x


def tail_process_draw(params: ModelParams, ell_range, rng: np.random.Generator) -> TailProcessDraw:
    ells = np.asarray(list(ell_range), dtype=int)
    a, m = params.alpha, params.m_xi
    y0 = float((1.0 - rng.random()) ** (-1.0 / a))
    K = 0 if m == 0.0 else int(rng.geometric(1.0 - params.m_alpha)) - 1
    vals = np.zeros(ells.shape)
    for i, ell in enumerate(ells):
        if ell == 0:
            vals[i] = y0
        elif m == 0.0:
            vals[i] = 0.0
        elif ell > 0 or K >= -ell:
            vals[i] = m**ell * y0
    return TailProcessDraw(y0=y0, K=K, ells=ells, values=vals)


def ensemble_to_csv(ensemble: PathEnsemble, fh) -> None:
    h = ensemble.horizon
    fh.write(",".join(f"X{k}" for k in range(h + 1)) + "\n")
    for row in ensemble.values:
        fh.write(",".join(str(int(v)) for v in row) + "\n")
