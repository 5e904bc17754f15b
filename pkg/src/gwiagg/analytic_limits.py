"""Closed-form limit objects for aggregated GWI processes with heavy-tailed immigration.

Everything here is a pure function of its arguments. Characteristic function
values are returned as built-in ``complex`` numbers.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

# Within this distance of alpha = 1 the alpha != 1 closed forms are still used
# verbatim, but callers are told they are near the pole of alpha/(1-alpha).
NEAR_ONE = 1e-6


class QuadratureError(RuntimeError):
    """Raised when an adaptive integration misses its tolerance."""


class DomainError(ValueError):
    """Raised when an operation is not defined for the given tail index."""


@dataclass(frozen=True)
class ModelParams:
    m_xi: float
    alpha: float

    def __post_init__(self):
        if not (0.0 <= self.m_xi < 1.0):
            raise ValueError(f"m_xi must lie in [0, 1), got {self.m_xi}")
        if not (0.0 < self.alpha < 2.0):
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")

    @property
    def m_alpha(self) -> float:
        return self.m_xi**self.alpha

    @property
    def near_one(self) -> bool:
        return self.alpha != 1.0 and abs(self.alpha - 1.0) < NEAR_ONE


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-13
    rel_tol: float = 1e-11
    max_subdivisions: int = 500
    upper_cutoff: float = 1e3

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("quadrature tolerances must be positive")
        if self.upper_cutoff <= 1:
            raise ValueError("upper_cutoff must exceed 1")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be positive")


@dataclass(frozen=True)
class StableBasis:
    k: int
    vectors: np.ndarray  # row j is v_j, shape (k+1, k+1)


def basis_vectors(k: int, params: ModelParams) -> StableBasis:
    if k < 0:
        raise ValueError("horizon k must be nonnegative")
    m = params.m_xi
    powers = m ** np.arange(k + 1, dtype=float)
    v = np.zeros((k + 1, k + 1))
    for j in range(k + 1):
        v[j, j:] = powers[: k + 1 - j]
    v[0] *= (1.0 - params.m_alpha) ** (-1.0 / params.alpha)
    return StableBasis(k=k, vectors=v)


def c_alpha(alpha: float) -> float:
    if not (0.0 < alpha < 2.0):
        raise ValueError(f"alpha must lie in (0, 2), got {alpha}")
    if alpha == 1.0:
        return math.pi / 2
    return math.gamma(2.0 - alpha) * math.cos(math.pi * alpha / 2) / (1.0 - alpha)


def _checked(result, what: str, quad: QuadratureConfig) -> float:
    value, abserr = result[0], result[1]
    if not math.isfinite(value) or abserr > max(quad.abs_tol, quad.rel_tol * abs(value)) * 100:
        raise QuadratureError(f"{what}: estimate {value!r} with error {abserr!r}")
    return value


def _quad(func, a, b, quad: QuadratureConfig, what: str, **kw) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            res = integrate.quad(
                func, a, b, epsabs=quad.abs_tol, epsrel=quad.rel_tol,
                limit=quad.max_subdivisions, full_output=False, **kw,
            )
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"{what}: {exc}") from exc
    return _checked(res, what, quad)


def _quad_fourier_tail(f, omega: float, start: float, quad: QuadratureConfig, kind: str, what: str) -> float:
    """Integral of f(u)*sin(omega u) (or cos) over [start, inf)."""
    if omega == 0.0:
        if kind == "sin":
            return 0.0
        return _quad(f, start, np.inf, quad, what)
    sign = 1.0
    if omega < 0:
        omega = -omega
        sign = -1.0 if kind == "sin" else 1.0
    # QAWF only honours an absolute tolerance
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            res = integrate.quad(
                f, start, np.inf, weight=kind, wvar=omega,
                epsabs=quad.abs_tol, limlst=200, limit=quad.max_subdivisions,
            )
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"{what}: {exc}") from exc
    return sign * _checked(res, what, quad)


def _quad_fourier(f, omega: float, a: float, b: float, quad: QuadratureConfig, kind: str, what: str) -> float:
    """Integral of f(u)*sin(omega u) (or cos) over the finite [a, b]."""
    if omega == 0.0:
        if kind == "sin":
            return 0.0
        return _quad(f, a, b, quad, what)
    sign = 1.0
    if omega < 0:
        omega = -omega
        sign = -1.0 if kind == "sin" else 1.0
    return sign * _quad(f, a, b, quad, what, weight=kind, wvar=omega)


def constant_C(quad: QuadratureConfig | None = None) -> float:
    """Adaptive-quadrature value of the constant appearing in the alpha = 1 drift."""
    return sum(constant_C_parts(quad))


@lru_cache(maxsize=1)
def _default_C() -> float:
    return constant_C()


def constant_C_parts(quad: QuadratureConfig | None = None) -> tuple[float, float]:
    """The two integrals (over [1, inf) and over (0, 1]) whose sum is constant_C."""
    quad = quad or QuadratureConfig()
    cut = quad.upper_cutoff

    def inv_sq(u):
        return u**-2.0

    head = _quad_fourier(inv_sq, 1.0, 1.0, cut, quad, "sin", "C, [1, cutoff]")
    tail = _quad_fourier_tail(inv_sq, 1.0, cut, quad, "sin", "C, [cutoff, inf)")

    def near(u):
        if u < 1e-3:
            u2 = u * u
            return -u / 6 + u * u2 / 120 - u2 * u2 * u / 5040
        return (math.sin(u) - u) / (u * u)

    return head + tail, _quad(near, 0.0, 1.0, quad, "C, (0, 1]")


def constant_C_series(terms: int = 30) -> float:
    """Same constant from term-by-term integration of the sine and cosine series."""
    # (0, 1]: (sin u - u)/u^2 = sum_{n>=1} (-1)^n u^(2n-1)/(2n+1)!
    low = sum((-1) ** n / (math.factorial(2 * n + 1) * 2 * n) for n in range(1, terms))
    # [1, inf): sin(1) - Ci(1), Ci(1) = gamma + sum_{n>=1} (-1)^n / (2n (2n)!)
    ci1 = np.euler_gamma + sum((-1) ** n / (2 * n * math.factorial(2 * n)) for n in range(1, terms))
    return math.sin(1.0) - ci1 + low


def _stable_exponent(s: np.ndarray, alpha: float) -> complex:
    """sum_j |s_j|^alpha (1 - i tan(pi alpha/2) sign s_j) for alpha != 1."""
    a = np.abs(s) ** alpha
    return complex(a.sum(), -math.tan(math.pi * alpha / 2) * float(np.sum(a * np.sign(s))))


def _as_theta(theta, k: int) -> np.ndarray:
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    if th.shape != (k + 1,):
        raise ValueError(f"theta must have length k+1 = {k + 1}, got shape {th.shape}")
    if not np.all(np.isfinite(th)):
        raise ValueError("theta must be finite")
    return th


def _xlogx(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log(x[pos])
    return out


def log_cf_mu(theta, k: int, params: ModelParams, C: float | None = None) -> complex:
    """Log of the characteristic function of the limit law at horizon k."""
    th = _as_theta(theta, k)
    a = params.alpha
    V = basis_vectors(k, params).vectors
    s = V @ th
    scale = c_alpha(a) * (1.0 - params.m_alpha)
    if a != 1.0:
        return -scale * _stable_exponent(s, a) - 1j * (a / (1.0 - a)) * th.sum()
    if C is None:
        C = _default_C()
    abs_s = np.abs(s)
    slog = float(np.sum(_xlogx(abs_s) * np.sign(s)))  # s log|s|, zero at s = 0
    main = -scale * complex(abs_s.sum(), (2 / math.pi) * slog)
    corr = (1.0 - params.m_xi) * float(np.sum(_xlogx(V) @ th))
    return main + 1j * (C * th.sum() + corr)


def cf_mu(theta, k: int, params: ModelParams, C: float | None = None) -> complex:
    return complex(np.exp(log_cf_mu(theta, k, params, C)))


def log_cf_shifted_mu(theta, k: int, params: ModelParams) -> complex:
    if params.alpha == 1.0:
        raise DomainError("the shifted process is strictly stable only for alpha != 1")
    th = _as_theta(theta, k)
    s = basis_vectors(k, params).vectors @ th
    return -c_alpha(params.alpha) * (1.0 - params.m_alpha) * _stable_exponent(s, params.alpha)


def cf_shifted_mu(theta, k: int, params: ModelParams) -> complex:
    return complex(np.exp(log_cf_shifted_mu(theta, k, params)))


def _ray_integral(th: np.ndarray, v: np.ndarray, alpha: float, quad: QuadratureConfig) -> complex:
    """Compensated Levy integral along the ray u*v, with u-density alpha*u^(-1-alpha).

    The compensator on coordinate l is active while u*v_l <= 1.
    """
    s = float(th @ v)
    support = v > 0
    c = (th * v)[support]
    b = 1.0 / v[support]
    order = np.argsort(b, kind="stable")
    b, c = b[order], c[order]
    a = alpha
    what = f"ray integral (s={s:.6g})"

    # [0, b_min]: every compensator is active and sum(c) = s, so the imaginary
    # integrand is (sin(su) - su) alpha u^(-1-alpha) and the real one
    # (cos(su) - 1) alpha u^(-1-alpha); both written as smooth * u^power.
    def re_smooth(u):
        if u == 0.0:
            return -a * s * s / 2
        h = math.sin(s * u / 2)
        return -2 * a * h * h / (u * u)

    def im_smooth(u):
        x = s * u
        if abs(x) < 1e-2:
            x2 = x * x
            return a * s**3 * (-1 / 6 + x2 / 120 - x2 * x2 / 5040)
        return a * (math.sin(x) - x) / u**3

    b0 = float(b[0])
    re = _quad(re_smooth, 0.0, b0, quad, what, weight="alg", wvar=(1.0 - a, 0.0))
    im = _quad(im_smooth, 0.0, b0, quad, what, weight="alg", wvar=(2.0 - a, 0.0))

    # middle segments: compensators switch off one by one
    def dens(u):
        return a * u ** (-1.0 - a)

    for i in range(1, len(b)):
        lo, hi = float(b[i - 1]), float(b[i])
        if hi <= lo:
            continue
        rem = float(c[i:].sum())
        re += _quad(lambda u: -2 * a * math.sin(s * u / 2) ** 2 * u ** (-1.0 - a), lo, hi, quad, what)
        im += _quad_fourier(dens, s, lo, hi, quad, "sin", what)
        im -= rem * a * (hi ** (1.0 - a) - lo ** (1.0 - a)) / (1.0 - a) if a != 1.0 else rem * math.log(hi / lo)

    # [b_max, inf): no compensation left
    bmax = float(b[-1])
    cut = max(bmax, quad.upper_cutoff)
    if cut > bmax:
        re += _quad_fourier(dens, s, bmax, cut, quad, "cos", what)
        im += _quad_fourier(dens, s, bmax, cut, quad, "sin", what)
    re += _quad_fourier_tail(dens, s, cut, quad, "cos", what)
    im += _quad_fourier_tail(dens, s, cut, quad, "sin", what)
    re -= bmax ** (-a)
    return complex(re, im)


def cf_mu_integral(theta, k: int, params: ModelParams, quad: QuadratureConfig | None = None) -> complex:
    """Limit CF by direct quadrature of the compensated Levy integrals along each ray."""
    quad = quad or QuadratureConfig()
    th = _as_theta(theta, k)
    if not np.any(th):
        return 1 + 0j
    V = basis_vectors(k, params).vectors
    total = sum(_ray_integral(th, V[j], params.alpha, quad) for j in range(k + 1))
    return complex(np.exp((1.0 - params.m_alpha) * total))


def innovation_cf(theta: float, params: ModelParams, C: float | None = None) -> complex:
    """CF of the stable innovations of the AR(1) representation of the limit."""
    t = float(theta)
    a, m = params.alpha, params.m_xi
    scale = c_alpha(a) * (1.0 - params.m_alpha)
    # The drift carries the factor (1 - m): the substitution theta_{k-1} -> theta_{k-1} - m theta_k
    # removes m*theta_k from <theta, 1>.
    if a != 1.0:
        expo = -scale * _stable_exponent(np.array([t]), a) - 1j * (a / (1.0 - a)) * (1.0 - m) * t
    else:
        if C is None:
            C = _default_C()
        tlog = t * math.log(abs(t)) if t != 0 else 0.0
        mlogm = m * math.log(m) if m > 0 else 0.0
        expo = -scale * complex(abs(t), (2 / math.pi) * tlog) + 1j * t * ((1.0 - m) * C + mlogm)
    return complex(np.exp(expo))


def levy_mass_above(k: int, params: ModelParams, r: float = 1.0) -> float:
    """Mass of the limit Levy measure outside the Euclidean ball of radius r."""
    if r <= 0:
        raise ValueError("radius must be positive")
    a, m = params.alpha, params.m_xi
    ma = params.m_alpha
    if m == 0.0:
        unit = float(k + 1)
    else:
        q = 1.0 - m * m
        first = (1.0 - m ** (2 * (k + 1))) ** (a / 2) / (1.0 - ma)
        rest = sum((1.0 - m ** (2 * (k - j + 1))) ** (a / 2) for j in range(1, k + 1))
        unit = (1.0 - ma) / q ** (a / 2) * (first + rest)
    return r ** (-a) * unit


def sum_tail_ratio(k: int, params: ModelParams) -> float:
    """Limit of P(X_0 + ... + X_k > x) / P(X_0 > x)."""
    a, m = params.alpha, params.m_xi
    ma = params.m_alpha
    first = (1.0 - m ** (k + 1)) ** a / (1.0 - ma)
    rest = sum((1.0 - m ** (k - j + 1)) ** a for j in range(1, k + 1))
    return (1.0 - ma) / (1.0 - m) ** a * (first + rest)


def stationary_tail_constant(params: ModelParams) -> float:
    return 1.0 / (1.0 - params.m_alpha)


def z_coefficient(params: ModelParams) -> float:
    """Levy-density multiplier of the iterated-aggregation limit."""
    return (1.0 - params.m_alpha) / (1.0 - params.m_xi) ** params.alpha


def b_alpha(params: ModelParams) -> float:
    if params.alpha == 1.0:
        raise DomainError("b_alpha is undefined at alpha = 1")
    a = params.alpha
    return (z_coefficient(params) - 1.0) * a / (1.0 - a)


def log_cf_Z(theta: float, params: ModelParams, shifted: bool = True) -> complex:
    if params.alpha == 1.0:
        raise DomainError("at alpha = 1 the iterated limit is deterministic; no CF is exposed")
    a = params.alpha
    t = float(theta)
    expo = -c_alpha(a) * z_coefficient(params) * _stable_exponent(np.array([t]), a)
    if not shifted:
        expo -= 1j * t * a / (1.0 - a)
    return expo


def cf_Z(theta: float, params: ModelParams, shifted: bool = True) -> complex:
    return complex(np.exp(log_cf_Z(theta, params, shifted)))


def _levy_exponent_uncompensated(x: float, alpha: float) -> complex:
    """int_0^inf (e^{ixu} - 1) alpha u^(-1-alpha) du, finite only for alpha < 1."""
    return -c_alpha(alpha) * _stable_exponent(np.array([x]), alpha)


def cf_Z_spectral(theta: float, params: ModelParams, quad: QuadratureConfig | None = None) -> complex:
    """Iterated-aggregation CF written through the forward spectral tail process.

    With Theta_l = m^l the expectation is a difference of two plain Levy
    integrals, one at theta*m/(1-m) and one at theta/(1-m).
    """
    a, m = params.alpha, params.m_xi
    if not a < 1.0:
        raise DomainError("the spectral representation holds only for alpha in (0, 1)")
    t = float(theta)
    later = _levy_exponent_uncompensated(t * m / (1.0 - m), a)
    whole = _levy_exponent_uncompensated(t / (1.0 - m), a)
    return complex(np.exp(-(later - whole)))


def cf_Z_spectral_compensated(theta: float, params: ModelParams, quad: QuadratureConfig | None = None) -> complex:
    """The same two-integral expression with each integrand compensated on (0, 1].

    Defined for every alpha in (0, 2) and evaluated by quadrature; it matches
    the iterated-aggregation limit only up to a drift, which is why the spectral
    form fails outside alpha < 1.
    """
    quad = quad or QuadratureConfig()
    a, m = params.alpha, params.m_xi
    t = float(theta)

    def comp(x: float) -> complex:
        # one-coordinate ray with v = 1 puts the compensator on u <= 1
        return _ray_integral(np.array([x]), np.array([1.0]), a, quad)

    return complex(np.exp(-(comp(t * m / (1.0 - m)) - comp(t / (1.0 - m)))))


def drift_center_sum(theta, k: int, params: ModelParams) -> float:
    """(1 - m^alpha) sum_j sum_l theta_l v_jl^alpha, which must equal sum(theta)."""
    th = _as_theta(theta, k)
    V = basis_vectors(k, params).vectors
    return float((1.0 - params.m_alpha) * np.sum((V**params.alpha) @ th))

