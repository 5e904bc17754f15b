"""Monte Carlo checks of the limit theorems against their closed forms."""

from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import analytic_limits as al
from .aggregation import (
    Centering,
    centering_sample,
    iterated_from_column_sums,
    iterated_scaling,
    schedule_N,
    stationary_mean,
    truncated_centering,
)
from .analytic_limits import ModelParams
from .gwi_sim import (
    InsufficientExceedancesError,
    SimConfig,
    conditional_tail_sample,
    replicate_column_sums,
    simulate_ensemble,
)
from .heavy_tail import ParetoIntLaw, imm_tail, karamata_limit, scaling_aN, truncated_moment_ratio

CENTERING_DRAWS = 1_000_000
KS_LEVEL = 0.01


@dataclass(frozen=True)
class ECFEstimate:
    theta: tuple
    value: complex
    stderr: float
    n: int


def ecf(samples, theta) -> ECFEstimate:
    """Empirical CF at one frequency; samples has shape (n,) or (n, d)."""
    x = np.asarray(samples, dtype=float)
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] == 0:
        raise ValueError("empty sample")
    if x.shape[1] != th.size:
        raise ValueError(f"dimension mismatch: samples have {x.shape[1]}, theta has {th.size}")
    phase = x @ th
    c, s = np.cos(phase), np.sin(phase)
    n = x.shape[0]
    se = 0.0 if n < 2 else math.sqrt((c.var(ddof=1) + s.var(ddof=1)) / n)
    return ECFEstimate(theta=tuple(float(t) for t in th), value=complex(c.mean(), s.mean()), stderr=se, n=n)


def excess_z(diff: float, stderr: float, bias: float) -> float | None:
    """Standardized discrepancy beyond the bias allowance (None when unbounded)."""
    excess = max(0.0, diff - bias)
    if excess == 0.0:
        return 0.0
    if stderr == 0.0:
        return None
    return excess / stderr


@dataclass
class VerificationReport:
    check: str
    params: dict
    sizes: dict
    tolerance: dict
    seed: int | None
    points: list = field(default_factory=list)
    max_abs_diff: float | None = None
    passed: bool = False
    details: dict = field(default_factory=dict)
    wall_time: float = 0.0  # kept out of the JSON report

    def as_dict(self) -> dict:
        return {
            "check": self.check,
            "passed": self.passed,
            "params": self.params,
            "sizes": self.sizes,
            "seed": self.seed,
            "tolerance": self.tolerance,
            "max_abs_diff": self.max_abs_diff,
            "points": self.points,
            "details": self.details,
        }

    def to_json(self) -> str:
        return json.dumps(_clean(self.as_dict()), indent=2, allow_nan=False) + "\n"


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _params_dict(params: ModelParams) -> dict:
    d = {"alpha": params.alpha, "m_xi": params.m_xi}
    if params.near_one:
        d["warning"] = "alpha within 1e-6 of 1: the alpha != 1 closed forms are ill-conditioned"
    return d


def default_grid(dim: int, lo: float = -2.0, hi: float = 2.0, per_axis: int = 3) -> list[tuple]:
    """Product grid for small dimensions, otherwise points along the diagonals."""
    axis = np.linspace(lo, hi, per_axis)
    if dim <= 2:
        return [tuple(float(v) for v in p) for p in itertools.product(axis, repeat=dim)]
    pts = [tuple([float(v)] * dim) for v in axis]
    alt = np.array([(-1.0) ** i for i in range(dim)])
    pts += [tuple(float(v) * alt) for v in axis if v != 0]
    return pts


def target_invariants_ok(cf, thetas) -> bool:
    """Modulus at most one and Hermitian symmetry of the analytic target on the grid."""
    for th in thetas:
        th = np.asarray(th, dtype=float)
        v, w = cf(th), cf(-th)
        if abs(v) > 1 + 1e-12 or abs(w - v.conjugate()) > 1e-12:
            return False
    return True


def compare_ecf(samples, thetas, cf, bias: float, z_max: float) -> tuple[list, float, bool]:
    """Per-point comparison of the empirical and analytic CF."""
    points, worst, ok = [], 0.0, True
    for th in thetas:
        est = ecf(samples, th)
        target = cf(np.asarray(th, dtype=float))
        diff = abs(est.value - target)
        z = excess_z(diff, est.stderr, bias)
        ok = ok and z is not None and z <= z_max
        worst = max(worst, diff)
        points.append({
            "theta": list(est.theta),
            "ecf_re": est.value.real, "ecf_im": est.value.imag,
            "cf_re": target.real, "cf_im": target.imag,
            "stderr": est.stderr, "abs_diff": diff, "z": z,
        })
    return points, worst, ok


def _cf_check(name, params, k, N, thetas, seed, replicates, jobs, centering, target, bias, z_max, extra):
    a_N = scaling_aN(N, params)
    sums = replicate_column_sums(params, SimConfig(N, k, seed), replicates, jobs=jobs)
    samples = (sums - N * centering.value) / a_N
    points, worst, ok = compare_ecf(samples, thetas, target, bias, z_max)
    inv = target_invariants_ok(target, thetas)
    details = {"a_N": a_N, "centering": centering.describe(),
               "centering_stderr_scaled": N * centering.stderr / a_N,
               "target_invariants_ok": inv}
    details.update(extra)
    return VerificationReport(
        check=name, params=_params_dict(params),
        sizes={"N": N, "k": k, "replicates": replicates},
        tolerance={"z_max": z_max, "bias_allowance": bias},
        seed=seed, points=points, max_abs_diff=worst, passed=ok and inv, details=details)


def check_theorem21(params: ModelParams, k: int, N: int, theta_grid=None, seed: int = 1,
                    replicates: int = 200, bias_allowance: float = 0.02, z_max: float = 4.0,
                    jobs: int = 1, centering_draws: int = CENTERING_DRAWS) -> VerificationReport:
    """Truncated-mean centered copy sums against the limit CF at t = 1."""
    t0 = time.perf_counter()
    thetas = theta_grid or default_grid(k + 1)
    a_N = scaling_aN(N, params)
    sample = centering_sample(params, centering_draws, seed, jobs=jobs)
    centering = truncated_centering(params, a_N, sample)
    C = al.constant_C() if params.alpha == 1.0 else None
    rep = _cf_check("theorem21", params, k, N, thetas, seed, replicates, jobs, centering,
                    lambda th: al.cf_mu(th, k, params, C), bias_allowance, z_max,
                    {"centering_draws": centering_draws})
    rep.wall_time = time.perf_counter() - t0
    return rep


def check_theorem21_monotone(params: ModelParams, k: int, Ns, seed: int = 1, replicates: int = 200,
                             theta_grid=None, jobs: int = 1, bias_allowance: float = 0.02,
                             z_max: float = 4.0, centering_draws: int = CENTERING_DRAWS) -> VerificationReport:
    """max |ecf - cf| must decrease strictly along the increasing sizes Ns."""
    t0 = time.perf_counter()
    runs = [check_theorem21(params, k, N, theta_grid, seed, replicates, bias_allowance, z_max, jobs,
                            centering_draws) for N in Ns]
    diffs = [r.max_abs_diff for r in runs]
    ok = all(b < a for a, b in zip(diffs, diffs[1:]))
    rep = VerificationReport(
        check="theorem21_monotone", params=_params_dict(params),
        sizes={"N": list(Ns), "k": k, "replicates": replicates},
        tolerance={"rule": "strictly decreasing max_abs_diff"}, seed=seed,
        points=[{"N": N, "max_abs_diff": d, "passed_z": r.passed} for N, d, r in zip(Ns, diffs, runs)],
        max_abs_diff=diffs[-1], passed=ok, details={})
    rep.wall_time = time.perf_counter() - t0
    return rep


def check_corollary28(params: ModelParams, k: int, N: int, mode: str, theta_grid=None, seed: int = 1,
                      replicates: int = 200, bias_allowance: float = 0.02, z_max: float = 4.0,
                      jobs: int = 1, centering_draws: int = CENTERING_DRAWS) -> VerificationReport:
    """The three centerings: truncated (i), none for alpha < 1 (ii), mean for alpha > 1 (iii)."""
    t0 = time.perf_counter()
    thetas = theta_grid or default_grid(k + 1)
    if mode == "i":
        a_N = scaling_aN(N, params)
        centering = truncated_centering(params, a_N, centering_sample(params, centering_draws, seed, jobs=jobs))
        C = al.constant_C() if params.alpha == 1.0 else None
        target = lambda th: al.cf_mu(th, k, params, C)  # noqa: E731
    elif mode == "ii":
        if params.alpha >= 1.0:
            raise al.DomainError("mode ii needs alpha < 1")
        centering = Centering.none()
        target = lambda th: al.cf_shifted_mu(th, k, params)  # noqa: E731
    elif mode == "iii":
        if params.alpha <= 1.0:
            raise al.DomainError("mode iii needs alpha > 1")
        centering = Centering.mean(params)
        target = lambda th: al.cf_shifted_mu(th, k, params)  # noqa: E731
    else:
        raise ValueError(f"unknown mode {mode!r}")
    rep = _cf_check(f"corollary28_{mode}", params, k, N, thetas, seed, replicates, jobs, centering,
                    target, bias_allowance, z_max, {"mode": mode})
    rep.wall_time = time.perf_counter() - t0
    return rep


def finite_n_target(theta: float, params: ModelParams, n: int, t: float) -> complex:
    """N = infinity CF of the iterated sum at finite n (alpha != 1, shifted scale)."""
    steps = int(math.floor(n * t + 1e-9))
    th = np.full(steps, theta / n ** (1.0 / params.alpha))
    return al.cf_shifted_mu(th, steps - 1, params)


def alpha_one_limit_law(params: ModelParams, n: int, t: float = 1.0) -> dict:
    """Scale and location of the N = infinity law of the alpha = 1 iterated sum at finite n.

    The sum is 1-stable with CF exp{-sigma|u|(1 + i(2/pi)sign(u)log|u|) + i mu u}.
    """
    steps = int(math.floor(n * t + 1e-9))
    V = al.basis_vectors(steps - 1, params).vectors
    w = V.sum(axis=1) / (n * math.log(n))
    m = params.m_xi
    sigma = (math.pi / 2) * (1 - m) * float(w.sum())
    C = al.constant_C()
    vlogv = float(np.sum(np.where(V > 0, V * np.log(np.where(V > 0, V, 1.0)), 0.0)))
    mu = (C * steps + (1 - m) * vlogv) / (n * math.log(n)) - (1 - m) * float(np.sum(w * np.log(w)))
    return {"sigma": sigma, "mu": mu}


def check_theorem29(params: ModelParams, n: int, t_points=(1.0,), seed: int = 1, replicates: int | None = None,
                    N: int | None = None, theta_grid=None, bias_allowance: float = 0.02, z_max: float = 4.0,
                    jobs: int = 1, mean_tol: float = 0.1, spread_tol: float = 0.15,
                    centering_draws: int = CENTERING_DRAWS) -> VerificationReport:
    """Iterated aggregation: N copies first, then n generations."""
    t0 = time.perf_counter()
    a = params.alpha
    N = N or schedule_N(n)
    a_N = scaling_aN(N, params)
    t = np.asarray(t_points, dtype=float)
    horizon = int(math.floor(n * t.max() + 1e-9))
    if a < 1.0:
        centering = Centering.none()
    elif a > 1.0:
        centering = Centering.mean(params)
    else:
        centering = truncated_centering(params, a_N, centering_sample(params, centering_draws, seed, jobs=jobs))
    R = replicates or (20 if a == 1.0 else 100)
    sums = replicate_column_sums(params, SimConfig(N, horizon, seed), R, jobs=jobs)
    vals = iterated_from_column_sums(sums, params, N, n, t, a_N, centering)  # (R, len(t))
    details = {"a_N": a_N, "scaling": iterated_scaling(params, n, a_N), "centering": centering.describe(),
               "schedule": "N = max(1e5, n^2)" if N == schedule_N(n) else "user N"}
    sizes = {"N": N, "n": n, "replicates": R, "t_points": [float(x) for x in t]}
    if a == 1.0:
        points, ok = [], True
        law = alpha_one_limit_law(params, n)
        for j, tt in enumerate(t):
            col = vals[:, j]
            mean, sd = float(col.mean()), float(col.std(ddof=1))
            good = abs(mean - tt) <= mean_tol * tt and sd < spread_tol
            ok = ok and good
            points.append({"t": float(tt), "mean": mean, "sd": sd, "median": float(np.median(col)),
                           "values": [float(v) for v in col], "passed": good})
        details["n_limit_law_at_t1"] = law
        rep = VerificationReport(
            check="theorem29", params=_params_dict(params), sizes=sizes,
            tolerance={"mean_tol": mean_tol, "spread_tol": spread_tol}, seed=seed, points=points,
            max_abs_diff=max(abs(p["mean"] - p["t"]) for p in points), passed=ok, details=details)
        rep.wall_time = time.perf_counter() - t0
        return rep
    thetas = theta_grid or [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0]
    points, worst, ok = [], 0.0, True
    inv = True
    gap_max = 0.0
    for j, tt in enumerate(t):
        def target(th, tt=tt):
            return complex(np.exp(tt * al.log_cf_Z(float(np.atleast_1d(th)[0]), params, shifted=True)))
        inv = inv and target_invariants_ok(target, [[th] for th in thetas])
        # the exact N = infinity law at this n measures the finite-n part of the bias
        gap = max(abs(finite_n_target(th, params, n, tt) - target([th])) for th in thetas)
        gap_max = max(gap_max, gap)
        pts, w, good = compare_ecf(vals[:, j], [[th] for th in thetas], target, bias_allowance + gap, z_max)
        for p in pts:
            p["t"] = float(tt)
        points += pts
        worst = max(worst, w)
        ok = ok and good
    details.update({"finite_n_gap": gap_max, "target_invariants_ok": inv})
    rep = VerificationReport(
        check="theorem29", params=_params_dict(params), sizes=sizes,
        tolerance={"z_max": z_max, "bias_allowance": bias_allowance, "plus_finite_n_gap": gap_max},
        seed=seed, points=points, max_abs_diff=worst, passed=ok and inv, details=details)
    rep.wall_time = time.perf_counter() - t0
    return rep


def _upper_quantile(x: np.ndarray, level: float) -> float:
    return float(np.quantile(x, level, method="inverted_cdf"))


def check_tail_ratio(params: ModelParams, k: int, N: int, quantile_level: float = 0.999, seed: int = 1,
                     jobs: int = 1, sigmas: float = 3.0, min_exceedances: int = 200) -> VerificationReport:
    """Stationary tail constant and P(X_0 + ... + X_k > x)/P(X_0 > x) at an empirical quantile."""
    t0 = time.perf_counter()
    if N < 100_000:
        raise ValueError("check_tail_ratio needs N >= 1e5")
    vals = simulate_ensemble(params, SimConfig(N, k, seed), jobs=jobs).values
    x0 = vals[:, 0]
    s = vals.sum(axis=1)
    x = _upper_quantile(x0, quantile_level)
    B = int(np.count_nonzero(x0 > x))
    A = int(np.count_nonzero(s > x))
    if B < min_exceedances:
        raise InsufficientExceedancesError(f"only {B} exceedances of x={x}")
    law = ParetoIntLaw(params.alpha)
    p_hat = B / N
    const = p_hat / imm_tail(law, x)
    const_se = math.sqrt(p_hat * (1 - p_hat) / N) / imm_tail(law, x)
    const_target = al.stationary_tail_constant(params)
    D = A - B
    ratio = A / B
    ratio_se = math.sqrt(D / B**2 + D**2 / B**3)
    ratio_target = al.sum_tail_ratio(k, params)
    points = []
    ok = True
    for name, est, se, target in (("tail_constant", const, const_se, const_target),
                                  ("sum_tail_ratio", ratio, ratio_se, ratio_target)):
        diff = abs(est - target)
        z = 0.0 if diff == 0 else (None if se == 0 else diff / se)
        good = z is not None and z <= sigmas
        ok = ok and good
        points.append({"quantity": name, "estimate": est, "stderr": se, "target": target,
                       "abs_diff": diff, "z": z, "passed": good})
    rep = VerificationReport(
        check="tail_ratio", params=_params_dict(params), sizes={"N": N, "k": k},
        tolerance={"sigmas": sigmas, "quantile_level": quantile_level}, seed=seed, points=points,
        max_abs_diff=max(p["abs_diff"] for p in points), passed=ok,
        details={"x": x, "exceed_X0": B, "exceed_sum": A})
    rep.wall_time = time.perf_counter() - t0
    return rep


def ks_critical(n: int, level: float = KS_LEVEL) -> float:
    """Asymptotic Kolmogorov critical value for the sup distance at sample size n."""
    return float(stats.kstwobign.isf(level)) / math.sqrt(n)


def check_forward_tail(params: ModelParams, k: int, N: int, seed: int = 1, quantile_level: float = 0.999,
                       jobs: int = 1, level: float = KS_LEVEL, collapse_tol: float = 0.01) -> VerificationReport:
    """Conditional law of (X_0, ..., X_k)/x given X_0 > x against the forward tail process."""
    t0 = time.perf_counter()
    ens = simulate_ensemble(params, SimConfig(N, k, seed), jobs=jobs)
    x = _upper_quantile(ens.values[:, 0], quantile_level)
    rows = conditional_tail_sample(ens, x)
    n = rows.shape[0]
    crit = ks_critical(n, level)
    a, m = params.alpha, params.m_xi
    points, ok = [], True
    for j in range(k + 1):
        col = rows[:, j]
        if j > 0 and m == 0.0:
            # the limit is a point mass at 0: few rows may keep half the conditioning level
            frac = float(np.mean(col > 0.5))
            good = frac <= collapse_tol
            points.append({"coordinate": j, "target": "point mass at 0", "frac_above_half": frac, "passed": good})
        else:
            scale = m**j
            res = stats.kstest(col, lambda y, s=scale: np.where(y < s, 0.0, 1.0 - (np.maximum(y, s) / s) ** (-a)))
            good = res.statistic <= crit
            points.append({"coordinate": j, "target": f"{scale:.6g}*Pareto({a})", "ks": float(res.statistic),
                           "critical": crit, "p_value": float(stats.kstwobign.sf(res.statistic * math.sqrt(n))),
                           "passed": good})
        ok = ok and good
    rep = VerificationReport(
        check="forward_tail", params=_params_dict(params), sizes={"N": N, "k": k, "exceedances": n},
        tolerance={"ks_level": level, "quantile_level": quantile_level, "collapse_tol": collapse_tol},
        seed=seed, points=points, max_abs_diff=max(p.get("ks", 0.0) for p in points), passed=ok,
        details={"x": x})
    rep.wall_time = time.perf_counter() - t0
    return rep


def check_karamata(params: ModelParams, beta: float, x_grid=(1e2, 1e3, 1e4), rel_tol: float = 0.02) -> VerificationReport:
    """Exact-law truncated-moment ratios along x_grid against their Karamata limit."""
    t0 = time.perf_counter()
    law = ParetoIntLaw(params.alpha)
    limit = karamata_limit(beta, params.alpha)
    ratios = [truncated_moment_ratio(law, beta, float(x)) for x in x_grid]
    points = [{"x": float(x), "ratio": r, "limit": limit, "abs_diff": abs(r - limit)} for x, r in zip(x_grid, ratios)]
    if limit == 0.0:
        ok = all(b < a for a, b in zip(ratios, ratios[1:]))
        rule = "monotone decreasing toward 0"
    else:
        ok = abs(ratios[-1] - limit) <= rel_tol * abs(limit)
        rule = f"relative error at max x <= {rel_tol}"
    rep = VerificationReport(
        check="karamata", params={**_params_dict(params), "beta": beta}, sizes={"x_grid": [float(x) for x in x_grid]},
        tolerance={"rule": rule}, seed=None, points=points, max_abs_diff=points[-1]["abs_diff"], passed=ok,
        details={})
    rep.wall_time = time.perf_counter() - t0
    return rep


def centering_gap(params: ModelParams, N: int, sample) -> float:
    """(N/a_N) times the difference of mean and truncated-mean centers (alpha > 1)."""
    a_N = scaling_aN(N, params)
    trunc = truncated_centering(params, a_N, sample).value
    return N / a_N * (stationary_mean(params) - trunc)


def format_table(reports: list[VerificationReport], labels=None) -> str:
    rows = [("check", "alpha", "m_xi", "max_abs_diff", "result")]
    for lab, r in zip(labels or [r.check for r in reports], reports):
        d = r.max_abs_diff
        rows.append((lab, f"{r.params.get('alpha')}", f"{r.params.get('m_xi')}",
                     "-" if d is None else f"{d:.4g}", "PASS" if r.passed else "FAIL"))
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows) + "\n"
