"""Integer Pareto immigration law, scaling sequences and truncated-moment checks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .analytic_limits import DomainError, ModelParams


class InsufficientSampleError(ValueError):
    pass


class InvalidSampleError(ValueError):
    pass


@dataclass(frozen=True)
class ParetoIntLaw:
    """Law on {1, 2, ...} with P(eps >= k) = k^(-alpha)."""

    alpha: float

    def __post_init__(self):
        if not (0.0 < self.alpha < 2.0):
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")


def imm_sample(law: ParetoIntLaw, u):
    """Inverse transform floor(u^(-1/alpha)); u may be a scalar or an array in (0, 1]."""
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u > 1)):
        raise ValueError("uniform draws must lie in (0, 1]")
    out = np.floor(u ** (-1.0 / law.alpha))
    return int(out) if out.ndim == 0 else out


def imm_tail(law: ParetoIntLaw, x):
    """Exact P(eps > x) = (floor(x) + 1)^(-alpha) for x >= 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be nonnegative")
    out = (np.floor(x) + 1.0) ** (-law.alpha)
    return float(out) if out.ndim == 0 else out


def imm_mean(law: ParetoIntLaw, terms: int = 10_000) -> float:
    """zeta(alpha) as a partial sum plus an Euler-Maclaurin tail."""
    a = law.alpha
    if a <= 1.0:
        raise DomainError("the immigration mean is infinite for alpha <= 1")
    k = np.arange(1, terms, dtype=float)
    head = math.fsum(k ** (-a))
    K = float(terms)
    tail = K ** (1 - a) / (a - 1) + K ** (-a) / 2 + a * K ** (-a - 1) / 12
    return head + tail


def scaling_aN(N: int, params: ModelParams, mode: str = "asymptotic", stationary_sample=None) -> float:
    """Scaling a_N with N * P(X_0 > a_N) ~ 1."""
    if N < 1:
        raise ValueError("N must be at least 1")
    if mode == "asymptotic":
        a = (N / (1.0 - params.m_alpha)) ** (1.0 / params.alpha) - 1.0
        return max(a, 1.0)
    if mode != "empirical":
        raise ValueError(f"unknown scaling mode {mode!r}")
    if stationary_sample is None:
        raise InsufficientSampleError("empirical mode needs a stationary sample")
    x = np.sort(np.asarray(stationary_sample, dtype=float))
    if x.size < N:
        raise InsufficientSampleError(f"need at least N={N} stationary draws, got {x.size}")
    # left-continuous inverse: smallest x with F_n(x) >= 1 - 1/N
    idx = math.ceil((1.0 - 1.0 / N) * x.size) - 1
    return max(float(x[max(idx, 0)]), 1.0)


def karamata_limit(beta: float, alpha: float) -> float:
    if beta >= alpha:
        return (beta - alpha) / alpha
    return (alpha - beta) / alpha


def _exact_body_moment(law: ParetoIntLaw, beta: float, x: float) -> float:
    K = int(math.floor(x))
    if K < 1:
        return 0.0
    k = np.arange(1, K + 1, dtype=float)
    pk = k ** (-law.alpha) - (k + 1) ** (-law.alpha)
    return math.fsum(k**beta * pk)


def _exact_tail_moment(law: ParetoIntLaw, beta: float, x: float) -> float:
    """sum_{k > x} k^beta (k^-a - (k+1)^-a) for beta < alpha.

    Expanding (k+1)^-a = sum_j binom(-a, j) k^(-a-j) turns the tail into
    -sum_{j>=1} binom(-a, j) zeta(a - beta + j, K), which converges like K^-j.
    """
    a = law.alpha
    K = int(math.floor(x)) + 1
    if beta == 0:
        return K ** (-a)
    head = 0.0
    if K == 1:
        head = 1.0 - 2.0 ** (-a)
        K = 2
    total = 0.0
    coef = 1.0
    for j in range(1, 200):
        coef *= (-a - j + 1) / j
        term = coef * float(special.zeta(a - beta + j, K))
        total -= term
        if abs(term) < 1e-17 * abs(total):
            break
    return head + total


def truncated_moment_ratio(source, beta: float, x: float, regime: str | None = None) -> float:
    """x^beta P(Y > x) over E(Y^beta 1{Y <= x}) ("body") or E(Y^beta 1{Y > x}) ("tail").

    ``source`` is either a ParetoIntLaw (exact finite sums) or a sample. For the
    law the regime defaults to body when beta >= alpha; for a sample to body.
    """
    if x <= 0:
        raise ValueError("x must be positive")
    if isinstance(source, ParetoIntLaw):
        regime = regime or ("body" if beta >= source.alpha else "tail")
        tail = imm_tail(source, x)
        if regime == "body":
            denom = _exact_body_moment(source, beta, x)
        else:
            denom = _exact_tail_moment(source, beta, x)
    else:
        regime = regime or "body"
        y = np.asarray(source, dtype=float)
        if y.size == 0:
            raise InvalidSampleError("empty sample")
        tail = float(np.mean(y > x))
        mask = y <= x if regime == "body" else y > x
        denom = float(np.sum(y[mask] ** beta)) / y.size
    if denom == 0.0:
        raise ZeroDivisionError("no mass on the denominator side of x")
    return x**beta * tail / denom


def hill_estimate(sample, m: int | None = None) -> float:
    x = np.asarray(sample, dtype=float)
    n = x.size
    if m is None:
        m = int(math.floor(n**0.6))
    if m < 2 or m >= n:
        raise ValueError(f"need 2 <= m < n, got m={m}, n={n}")
    top = -np.sort(-x)[: m + 1]
    if np.any(top <= 0):
        raise InvalidSampleError("top order statistics must be positive")
    spacing = float(np.mean(np.log(top[:m]) - math.log(top[m])))
    if spacing <= 0:
        raise InvalidSampleError("degenerate sample: zero log-spacings")
    return 1.0 / spacing
