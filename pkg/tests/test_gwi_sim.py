import io
import math

import numpy as np
import pytest
from scipy import special, stats

from gwiagg.analytic_limits import ModelParams
from gwiagg.gwi_sim import (
    BLOCK,
    InsufficientExceedancesError,
    ResourceError,
    SimConfig,
    _thin,
    auto_burn_in,
    conditional_tail_sample,
    ensemble_to_csv,
    init_stationary,
    replicate_column_sums,
    simulate_ensemble,
    step,
    tail_process_draw,
)


def rng(seed=0):
    return np.random.default_rng(seed)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(0, 1, 1)
    with pytest.raises(ValueError):
        SimConfig(1, -1, 1)
    with pytest.raises(ValueError):
        SimConfig(1, 1, 2**64)
    with pytest.raises(ValueError):
        SimConfig(1, 1, 1, burn_in=-2)


def test_auto_burn_in():
    assert auto_burn_in(0.0) == 1
    assert auto_burn_in(0.5) == 50
    assert auto_burn_in(0.9) == math.ceil(math.log(1e-6) / math.log(0.9))
    assert SimConfig(1, 0, 1).resolved_burn_in(ModelParams(0.5, 1.0)) == 50


def test_step_from_zero_is_immigration():
    p = ModelParams(0.5, 1.0)
    x = step(np.zeros(200_000), p, rng(1))
    for k in (1, 2, 5, 20):
        se = math.sqrt(k**-1.0 * (1 - k**-1.0) / x.size)
        assert abs(np.mean(x >= k) - k**-1.0) <= 4 * se + 1e-12


def test_step_without_offspring_ignores_state():
    p = ModelParams(0.0, 0.8)
    a = step(np.full(1000, 1e6), p, rng(2))
    b = step(np.zeros(1000), p, rng(2))
    assert np.array_equal(a, b)


def test_step_mean():
    p = ModelParams(0.5, 1.5)
    x = step(np.full(100_000, 10.0), p, rng(3))
    target = 5.0 + float(special.zeta(1.5))
    assert abs(x.mean() - target) < 3 * x.std(ddof=1) / math.sqrt(x.size)


def test_step_scalar_and_errors():
    v = step(4, ModelParams(0.5, 1.0), rng(4))
    assert isinstance(v, int) and v >= 1
    with pytest.raises(ValueError):
        step(-1, ModelParams(0.5, 1.0), rng(4))


def test_thin_huge_states():
    x = np.array([3.0, 2.0**63, 1e300])
    out = _thin(x, 0.5, rng(5))
    assert out[0] <= 3
    assert abs(out[1] / x[1] - 0.5) < 1e-6
    assert abs(out[2] / x[2] - 0.5) < 1e-6
    assert np.all(out == np.rint(out))


def test_init_stationary_mean():
    p = ModelParams(0.5, 1.5)
    x = init_stationary(p, auto_burn_in(0.5), rng(6), size=100_000)
    target = float(special.zeta(1.5)) / 0.5
    assert target == pytest.approx(5.224751, abs=1e-6)
    assert abs(x.mean() - target) < 3 * x.std(ddof=1) / math.sqrt(x.size)


def test_init_stationary_m0_is_immigration():
    p = ModelParams(0.0, 0.7)
    a = init_stationary(p, 1, rng(7), size=10)
    assert np.all(a >= 1)
    assert isinstance(init_stationary(p, 1, rng(7)), int)


def test_ensemble_shape_and_values():
    p = ModelParams(0.5, 0.5)
    ens = simulate_ensemble(p, SimConfig(3, 2, 9))
    assert ens.values.shape == (3, 3)
    assert ens.n_copies == 3 and ens.horizon == 2
    assert np.all(ens.values >= 1)
    assert np.all(ens.values == np.floor(ens.values))


def test_ensemble_deterministic_and_schedule_free():
    p = ModelParams(0.5, 1.0)
    cfg = SimConfig(2 * BLOCK + 17, 3, 123)
    a = simulate_ensemble(p, cfg).values
    b = simulate_ensemble(p, cfg).values
    c = simulate_ensemble(p, cfg, jobs=3).values
    assert np.array_equal(a, b) and np.array_equal(a, c)
    # a copy's path does not depend on how many copies were requested
    d = simulate_ensemble(p, SimConfig(BLOCK + 5, 3, 123)).values
    assert np.array_equal(a[: BLOCK + 5], d)
    e = simulate_ensemble(p, SimConfig(BLOCK + 5, 3, 124)).values
    assert not np.array_equal(d, e)


def test_column_sums_match_ensemble():
    p = ModelParams(0.5, 1.5)
    cfg = SimConfig(BLOCK + 100, 4, 77)
    sums = replicate_column_sums(p, cfg, 2)
    assert np.array_equal(sums[0], simulate_ensemble(p, cfg).values.sum(axis=0))
    assert not np.array_equal(sums[0], sums[1])
    assert np.array_equal(sums, replicate_column_sums(p, cfg, 2, jobs=2))


def test_horizon_zero_m0_iid():
    p = ModelParams(0.0, 1.0)
    x = simulate_ensemble(p, SimConfig(100_000, 0, 8)).values[:, 0]
    se = math.sqrt(0.1 * 0.9 / x.size)
    assert abs(np.mean(x >= 10) - 0.1) < 3 * se


def test_m0_columns_match_immigration_tail():
    p = ModelParams(0.0, 0.5)
    vals = simulate_ensemble(p, SimConfig(100_000, 2, 10)).values
    for j in range(3):
        for x in (3.0, 50.0):
            q = (math.floor(x) + 1) ** -0.5
            se = math.sqrt(q * (1 - q) / vals.shape[0])
            assert abs(np.mean(vals[:, j] > x) - q) < 3 * se


def test_lag_one_slope():
    p = ModelParams(0.5, 1.5)
    vals = simulate_ensemble(p, SimConfig(100_000, 1, 11)).values
    res = stats.linregress(vals[:, 0], vals[:, 1])
    assert abs(res.slope - 0.5) < 3 * res.stderr


def test_stationarity_columns():
    p = ModelParams(0.5, 1.5)
    vals = simulate_ensemble(p, SimConfig(100_000, 5, 12)).values
    assert stats.ks_2samp(vals[:, 0], vals[:, 5]).pvalue > 0.01


def test_stationary_tail_constant_empirical():
    p = ModelParams(0.5, 1.0)
    x0 = simulate_ensemble(p, SimConfig(200_000, 0, 13)).values[:, 0]
    x = 500.0
    pr = np.mean(x0 > x)
    se = math.sqrt(pr * (1 - pr) / x0.size)
    q = 1 / (x + 1)
    assert abs(pr / q - 2.0) < 3 * se / q + 0.02  # plus a small finite-x allowance


def test_memory_cap():
    with pytest.raises(ResourceError):
        simulate_ensemble(ModelParams(0.5, 1.0), SimConfig(10**6, 100, 1, memory_cap=10**6))


def test_conditional_tail_sample():
    p = ModelParams(0.5, 0.5)
    ens = simulate_ensemble(p, SimConfig(50_000, 2, 14))
    x = float(np.quantile(ens.values[:, 0], 0.99))
    rows = conditional_tail_sample(ens, x)
    assert np.all(rows[:, 0] > 1)
    assert rows.shape[1] == 3
    with pytest.raises(InsufficientExceedancesError):
        conditional_tail_sample(ens, float(np.quantile(ens.values[:, 0], 0.999)))


def test_tail_process_m0():
    d = tail_process_draw(ModelParams(0.0, 1.0), range(-3, 4), rng(15))
    assert d.y0 >= 1
    assert np.count_nonzero(d.values) == 1 and d.values[3] == d.y0


def test_tail_process_forward_ratios():
    p = ModelParams(0.5, 1.2)
    d = tail_process_draw(p, range(0, 6), rng(16))
    assert np.allclose(d.values[1:] / d.values[:-1], 0.5, rtol=1e-14)
    back = tail_process_draw(p, range(-4, 1), rng(17))
    for ell, v in zip(back.ells, back.values):
        assert v == (0.5**ell * back.y0 if back.K >= -ell else 0.0)


def test_tail_process_geometric_K():
    p = ModelParams(0.5, 1.0)
    g = rng(18)
    K = np.array([tail_process_draw(p, [0], g).K for _ in range(100_000)])
    assert abs(K.mean() - 1.0) < 3 * K.std(ddof=1) / math.sqrt(K.size)


def test_csv_export():
    ens = simulate_ensemble(ModelParams(0.5, 0.5), SimConfig(3, 2, 19))
    buf = io.StringIO()
    ensemble_to_csv(ens, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "X0,X1,X2"
    assert len(lines) == 4
    assert all(len(line.split(",")) == 3 and "." not in line for line in lines[1:])
