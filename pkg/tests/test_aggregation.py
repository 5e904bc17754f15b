import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gwiagg.aggregation import (
    Centering,
    RegimeError,
    centering_sample,
    check_regime,
    copy_partial_sums,
    iterated_aggregate,
    iterated_from_column_sums,
    iterated_scaling,
    schedule_N,
    series_to_csv,
    stationary_mean,
    truncated_centering,
    truncated_mean_estimate,
    truncated_mean_hybrid,
)
from gwiagg.analytic_limits import ModelParams
from gwiagg.gwi_sim import SimConfig, replicate_column_sums, simulate_ensemble
from gwiagg.heavy_tail import scaling_aN


@pytest.fixture(scope="module")
def ens():
    return simulate_ensemble(ModelParams(0.5, 0.5), SimConfig(500, 3, 31))


def test_truncated_mean_examples():
    assert truncated_mean_estimate([1, 2, 100], 10) == 1.0
    assert truncated_mean_estimate([1, 2, 3], 10) == 2.0
    with pytest.raises(ValueError):
        truncated_mean_estimate([1, 2], 0)
    with pytest.raises(ValueError):
        truncated_mean_estimate([], 1)


def test_centering_validation():
    with pytest.raises(ValueError):
        Centering("other")
    with pytest.raises(ValueError):
        Centering("truncated", a=0)
    with pytest.raises(RegimeError):
        Centering.mean(ModelParams(0.5, 1.0))
    assert Centering.mean(ModelParams(0.5, 1.5)).value == pytest.approx(5.224751, abs=1e-6)
    assert Centering.none().describe() == "none"


@pytest.fixture(scope="module")
def stationary_half():
    return centering_sample(ModelParams(0.5, 0.5), 1_000_000, seed=41)


def test_truncated_center_limit_alpha_half(stationary_half):
    # (N/a_N) E(X_0 1{X_0 <= a_N}) -> alpha/(1 - alpha) = 1
    p = ModelParams(0.5, 0.5)
    N = 1_000_000
    a = scaling_aN(N, p)
    plain = truncated_mean_estimate(stationary_half, a)
    se_plain = np.std(np.where(stationary_half <= a, stationary_half, 0.0), ddof=1) / math.sqrt(stationary_half.size)
    assert abs(N / a * plain - 1.0) < 3 * N / a * se_plain
    c = truncated_centering(p, a, stationary_half)
    assert c.kind == "truncated" and c.a == a
    assert abs(N / a * c.value - 1.0) < 3 * N / a * c.stderr + 2e-3


def test_hybrid_below_quantile_is_plain(stationary_half):
    p = ModelParams(0.5, 0.5)
    a = 10.0
    est, _, info = truncated_mean_hybrid(stationary_half, a, p)
    assert est == pytest.approx(truncated_mean_estimate(stationary_half, a), rel=1e-12)
    assert info["tail_model"] == 0.0
    with pytest.raises(ValueError):
        truncated_mean_hybrid(stationary_half, -1.0, p)


def test_centering_equivalence_alpha_three_halves():
    # (N/a_N)(E X_0 - E X_0 1{X_0 <= a_N}) -> alpha/(alpha - 1) = 3
    p = ModelParams(0.5, 1.5)
    N = 10_000
    a = scaling_aN(N, p)
    x = centering_sample(p, 1_000_000, seed=42)
    part = np.where(x <= a, x, 0.0)
    gap = N / a * (stationary_mean(p) - part.mean())
    se = N / a * part.std(ddof=1) / math.sqrt(x.size)
    assert abs(gap - 3.0) < 3 * se + 0.05
    hyb = truncated_centering(p, a, x)
    assert N / a * (stationary_mean(p) - hyb.value) == pytest.approx(3.0, rel=0.02)


def test_partial_sums_edges(ens):
    s = copy_partial_sums(ens, [0.0, 1.0], 2.0, Centering.none())
    assert np.all(s.values[0] == 0)
    assert np.allclose(s.values[1], ens.values.sum(axis=0) / 2.0)
    one = copy_partial_sums(ens.values[:1], [1.0], 1.0, Centering.none())
    assert np.array_equal(one.values[0], ens.values[0])
    with pytest.raises(ValueError):
        copy_partial_sums(ens, [0.5, 0.2], 1.0, Centering.none())
    with pytest.raises(ValueError):
        copy_partial_sums(ens, [1.5], 1.0, Centering.none())
    with pytest.raises(ValueError):
        copy_partial_sums(ens, [1.0], 0.0, Centering.none())


def test_partial_sums_reject_mean_for_alpha_below_two_sides(ens):
    with pytest.raises(RegimeError):
        copy_partial_sums(ens, [1.0], 1.0, Centering("mean", value=3.0))


@given(s=st.floats(0, 1), t=st.floats(0, 1), c=st.floats(0, 50))
def test_partial_sums_telescoping(s, t, c):
    vals = np.arange(40.0).reshape(10, 4) % 7 + 1
    lo, hi = min(s, t), max(s, t)
    cen = Centering("truncated", value=c, a=100.0)
    res = copy_partial_sums(vals, [lo, hi], 3.0, cen).values
    i, j = math.floor(10 * lo + 1e-9), math.floor(10 * hi + 1e-9)
    direct = (vals[i:j] - c).sum(axis=0) / 3.0
    assert np.allclose(res[1] - res[0], direct, atol=1e-9)


def test_permutation(ens):
    perm = np.random.default_rng(0).permutation(ens.n_copies)
    a = copy_partial_sums(ens.values, [0.5, 1.0], 7.0, Centering.none()).values
    b = copy_partial_sums(ens.values[perm], [0.5, 1.0], 7.0, Centering.none()).values
    assert np.allclose(a[1], b[1])
    assert not np.allclose(a[0], b[0])


def test_iterated_scaling():
    assert iterated_scaling(ModelParams(0.5, 0.5), 100, 1e4) == pytest.approx(1e8)
    assert iterated_scaling(ModelParams(0.5, 1.0), 100, 2.0) == pytest.approx(200 * math.log(100))
    assert iterated_scaling(ModelParams(0.5, 1.5), 8, 1.0) == pytest.approx(4.0)


def test_check_regime():
    check_regime(ModelParams(0.5, 0.5), Centering.none())
    check_regime(ModelParams(0.5, 1.0), Centering("truncated", a=5.0))
    check_regime(ModelParams(0.5, 1.5), Centering.mean(ModelParams(0.5, 1.5)))
    with pytest.raises(RegimeError):
        check_regime(ModelParams(0.5, 1.0), Centering.none())
    with pytest.raises(RegimeError):
        check_regime(ModelParams(0.5, 1.5), Centering("truncated", a=5.0))


def test_iterated_matches_direct_sum():
    p = ModelParams(0.5, 0.5)
    n, N = 6, 300
    cfg = SimConfig(N, n, 51)
    vals = simulate_ensemble(p, cfg).values
    sums = replicate_column_sums(p, cfg, 1)
    t = [0.5, 1.0]
    out = iterated_from_column_sums(sums, p, N, n, t, 10.0, Centering.none())[0]
    scale = iterated_scaling(p, n, 10.0)
    assert out[0] == pytest.approx(vals[:, 1:4].sum() / scale)
    assert out[1] == pytest.approx(vals[:, 1:7].sum() / scale)
    series = iterated_aggregate(p, N, n, t, 10.0, Centering.none(), seed=51, replicates=2)
    assert len(series) == 2
    assert np.allclose(series[0].values, out)
    with pytest.raises(ValueError):
        iterated_from_column_sums(sums, p, N, 20, [1.0], 10.0, Centering.none())
    with pytest.raises(ValueError):
        iterated_from_column_sums(sums, p, N, 1, [1.0], 10.0, Centering.none())


def test_iterated_centering_term():
    p = ModelParams(0.5, 1.5)
    sums = np.full((1, 5), 100.0)
    cen = Centering("mean", value=2.0)
    out = iterated_from_column_sums(sums, p, 10, 4, [1.0], 1.0, cen)
    assert out[0, 0] == pytest.approx((400 - 4 * 10 * 2.0) / iterated_scaling(p, 4, 1.0))


def test_schedule():
    assert schedule_N(10) == 100_000
    assert schedule_N(1000) == 1_000_000
    assert schedule_N(1000, power=3, floor=10) == 10**9


def test_series_csv(ens):
    s = copy_partial_sums(ens, [0.0, 0.5, 1.0], 3.0, Centering("truncated", value=1.5, a=9.0))
    buf = io.StringIO()
    series_to_csv(s, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,v0,v1,v2,v3,scaling,centering"
    assert len(lines) == 4
    assert all(len(line.split(",")) == 7 for line in lines)
