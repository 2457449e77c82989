import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from ste_lab.errors import ConfigError, FitError, TooShortError
from ste_lab.extremes import (Ecdf, GevParams, MarginModel, block_maxima, fit_ecdf, fit_gev,
                              fit_gev_margin, gev_cdf, gev_loglik, gev_rvs, ks_uniform, pit,
                              segment_bounds)
from ste_lab.signal_lab import TimeSeries


def ts(values):
    return TimeSeries(np.asarray(values, dtype=float), 128.0, "x")


def test_block_maxima_of_magnitudes():
    assert block_maxima(ts([1, -3, 2, 0.5]), 2).values.tolist() == [3, 2]


def test_unit_blocks_are_absolute_values():
    x = np.array([-1.5, 2.0, -0.25])
    assert np.array_equal(block_maxima(ts(x), 1).values, np.abs(x))


def test_partial_tail_block_dropped():
    assert len(block_maxima(ts(np.ones(129)), 64)) == 2


def test_block_larger_than_series():
    with pytest.raises(TooShortError):
        block_maxima(ts(np.ones(10)), 64)


def test_block_size_must_be_positive_integer():
    with pytest.raises(ConfigError):
        block_maxima(ts(np.ones(10)), 0)


@settings(max_examples=50, deadline=None)
@given(x=st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=200), m=st.integers(1, 20),
       seed=st.integers(0, 2 ** 31))
def test_block_maxima_definition_and_monotonicity(x, m, seed):
    x = np.asarray(x)
    if len(x) < m:
        return
    bm = block_maxima(ts(x), m).values
    nb = len(x) // m
    assert len(bm) == nb and np.all(bm >= 0)
    for b in range(nb):
        assert bm[b] == max(abs(v) for v in x[b * m:(b + 1) * m])
    bigger = x + np.sign(x) * np.random.default_rng(seed).uniform(0, 1, len(x))
    assert np.all(block_maxima(ts(bigger), m).values >= bm)


def test_ecdf_rank_over_n_plus_one():
    e = Ecdf(np.sort([0.3, 0.1, 0.7, 0.5]))
    assert e.cdf(0.7) == pytest.approx(0.8)
    assert e.cdf(0.1) == pytest.approx(0.2)


def test_ecdf_ties_get_average_rank():
    e = Ecdf(np.sort([1.0, 2.0, 2.0, 3.0]))
    assert e.cdf(2.0) == pytest.approx(2.5 / 5)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=10, max_size=100))
def test_ecdf_pit_monotone_and_open_interval(x):
    x = np.asarray(x)
    u = pit(x, fit_ecdf(x))
    assert np.all((u > 0) & (u < 1))
    order = np.argsort(x, kind="stable")
    assert np.all(np.diff(u[order]) >= 0)


def test_uniform_sample_pit_close_to_uniform():
    x = np.random.default_rng(1).uniform(size=1000)
    assert ks_uniform(pit(x, fit_ecdf(x))) < 0.05


def test_single_segment_equals_global():
    x = np.random.default_rng(2).normal(size=120)
    assert np.array_equal(pit(x, fit_ecdf(x, n_segments=1)), pit(x, fit_ecdf(x)))


def test_segments_partition_index_range():
    bounds = segment_bounds(125, segment_length=30)
    assert bounds[0][0] == 0 and bounds[-1][1] == 125
    assert all(a[1] == b[0] for a, b in zip(bounds, bounds[1:]))


def test_segment_too_small():
    with pytest.raises(ConfigError):
        fit_ecdf(np.arange(40.0), n_segments=5)


def test_segmented_pit_uses_own_segment():
    x = np.concatenate([np.arange(20.0), 100 + np.arange(20.0)])
    u = pit(x, fit_ecdf(x, n_segments=2))
    assert np.allclose(u[:20], u[20:])


def test_gumbel_pit_at_location():
    model = MarginModel("gev", ((0, 1, GevParams(0.0, 1.0, 0.0)),))
    assert pit(np.array([0.0]), model)[0] == pytest.approx(math.exp(-1))


def test_gev_pit_is_clamped():
    model = MarginModel("gev", ((0, 2, GevParams(0.0, 1.0, 0.3)),))
    u = pit(np.array([-1e6, 1e6]), model)
    assert np.all((u > 0) & (u < 1))


def test_gev_cdf_matches_scipy_with_flipped_shape():
    x = np.linspace(-1, 6, 30)
    for xi in (-0.3, 0.2):
        assert np.allclose(gev_cdf(x, 0.5, 1.3, xi), stats.genextreme.cdf(x, -xi, 0.5, 1.3))


def test_gev_loglik_matches_scipy():
    x = np.random.default_rng(3).gumbel(size=50)
    for xi in (-0.2, 0.0, 0.3):
        ref = stats.genextreme.logpdf(x, -xi, 0.1, 1.2).sum()
        assert gev_loglik((0.1, 1.2, xi), x) == pytest.approx(ref, rel=1e-10)


def test_gev_recovery():
    x = gev_rvs(0.0, 1.0, 0.2, 5000, np.random.default_rng(4))
    fit = fit_gev(x)
    assert abs(fit.mu) < 0.1 and abs(fit.sigma - 1) < 0.1 and abs(fit.xi - 0.2) < 0.1
    assert fit.converged


def test_gumbel_recovery():
    x = gev_rvs(0.0, 1.0, 0.0, 5000, np.random.default_rng(5))
    assert abs(fit_gev(x).xi) < 0.05


def test_gev_fit_is_local_optimum():
    rng = np.random.default_rng(6)
    x = gev_rvs(2.0, 0.5, -0.1, 400, rng)
    fit = fit_gev(x)
    best = gev_loglik((fit.mu, fit.sigma, fit.xi), x)
    for _ in range(100):
        p = np.array([fit.mu, fit.sigma, fit.xi]) * (1 + rng.uniform(-0.1, 0.1, 3))
        assert best >= gev_loglik(p, x) - 1e-9


def test_gev_support_holds_for_fitted_data():
    x = gev_rvs(0.0, 2.0, 0.3, 300, np.random.default_rng(7))
    f = fit_gev(x)
    assert f.sigma > 0 and np.all(1 + f.xi * (x - f.mu) / f.sigma > 0)


def test_gev_pit_uniform_on_gev_data():
    x = gev_rvs(1.0, 1.0, 0.1, 5000, np.random.default_rng(8))
    u = pit(x, fit_gev_margin(x))
    assert stats.kstest(u, "uniform").pvalue > 0.01


def test_constant_sample_fails():
    with pytest.raises(FitError):
        fit_gev(np.full(50, 3.0))


def test_short_sample_warns():
    x = gev_rvs(0.0, 1.0, 0.0, 20, np.random.default_rng(9))
    with pytest.warns(UserWarning):
        fit_gev(x)


def test_margin_json_round_trip():
    x = np.random.default_rng(10).gumbel(size=60)
    for model in (fit_ecdf(x, n_segments=2), fit_gev_margin(x)):
        back = MarginModel.from_dict(model.to_dict())
        assert np.array_equal(pit(x, back), pit(x, model))


def test_pit_length_mismatch():
    x = np.arange(30.0)
    with pytest.raises(ConfigError):
        pit(x[:20], fit_ecdf(x))
