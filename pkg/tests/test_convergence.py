"""
This module provides test cases for the convergence module.
"""

import numpy as np
import pytest

from stochrk.brownian import RngStream
from stochrk.constants import Constants
from stochrk.convergence import (WeakMeanReport, brownian_family, fit_loglog_slope, gbm_exact,
                                 gbm_problem, ou_mean_check, strong_error)
from stochrk.tableau import builtin_rk4, builtin_tableau

verbose = False

def test_gbm_exact():
    assert np.isclose(gbm_exact(1.0, 0.0, 1.0, 1.0, 0.0), np.exp(-0.5), rtol=1e-15)
    assert np.isclose(gbm_exact(2.0, 0.06, 0.5, 1.0, 0.3), 2.0 * np.exp(0.06 - 0.125 + 0.15))
    assert gbm_exact(1.0, 0.3, 0.0, 0.0, 5.0) == 1.0

class TestSlopeFit:

    def test_exact_power_law(self):
        points = [(h, 3.0 * h ** 2) for h in (0.5, 0.25, 0.125, 0.0625)]
        slope, half_width = fit_loglog_slope(points)
        assert np.isclose(slope, 2.0, rtol=0, atol=1e-10)
        assert half_width <= 1e-8

    def test_noisy_power_law(self):
        rng = np.random.default_rng(0)
        hs = 2.0 ** -np.arange(1, 9)
        points = [(h, h ** 3 * np.exp(0.05 * rng.normal())) for h in hs]
        slope, half_width = fit_loglog_slope(points)
        assert abs(slope - 3.0) <= 0.3
        assert half_width > 0

    def test_insufficient_points(self):
        with pytest.raises(ValueError, match="Insufficient points"):
            fit_loglog_slope([(0.5, 1e-3), (0.25, 1e-4)])

    def test_non_positive_values(self):
        with pytest.raises(ValueError, match="positive"):
            fit_loglog_slope([(0.5, 1e-3), (0.25, 0.0), (0.125, 1e-5)])

class TestBrownianFamily:

    def test_levels_are_coupled(self):
        family = brownian_family(RngStream(3), 1.0, 4, 5)
        assert [level.shape for level in family] == [(5, 2 ** k, 1) for k in range(5)]
        for coarse, fine in zip(family[:-1], family[1:]):
            assert np.allclose(fine[:, 0::2] + fine[:, 1::2], coarse, rtol=0, atol=1e-14)
        assert np.allclose(family[-1].sum(axis=1), family[0][:, 0, :], rtol=0, atol=1e-13)

    def test_terminal_values_have_unit_variance(self):
        family = brownian_family(RngStream(4), 1.0, 1, 20000)
        W = family[0][:, 0, 0]
        assert abs(np.mean(W)) <= 4 / np.sqrt(20000)
        assert 0.95 <= np.var(W) <= 1.05

class TestStrongOrder:

    def test_rk4_gbm_order(self):
        hs = [2.0 ** -k for k in range(4, 10)]
        report = strong_error(gbm_problem(0.06, 0.5), builtin_rk4(), hs, 2000, seed=0,
                              verbose=verbose)
        if verbose:
            print(report.table)
            print(report.summary())
        assert abs(report.slope - 2.0) <= 0.3
        assert (report.table[Constants.N_PATHS_COL] == 2000).all()
        assert list(report.table[Constants.H_COL]) == hs
        assert report.table[Constants.MEAN_ERROR_COL].is_monotonic_decreasing

    def test_rk87_gbm_order(self):
        hs = [1.0, 0.5, 0.25, 0.125, 0.0625]
        with pytest.warns(UserWarning, match="excluded"):
            report = strong_error(gbm_problem(0.06, 0.5), builtin_tableau('rk87'), hs, 2000,
                                  seed=0, fit_range=(1e-12, 1e-3))
        assert report.excluded == [0.0625]
        assert abs(report.slope - 4.0) <= 0.7

    def test_deterministic_limit(self):
        hs = [2.0 ** -k for k in range(2, 6)]
        report = strong_error(gbm_problem(-1.0, 0.0), builtin_rk4(), hs, 10, seed=0)
        assert abs(report.slope - 4.0) <= 0.2

    def test_same_paths_for_every_step(self):
        problem = gbm_problem(0.06, 0.5)
        first = strong_error(problem, builtin_rk4(), [0.25, 0.125, 0.0625], 50, seed=9)
        second = strong_error(problem, builtin_rk4(), [0.0625, 0.25, 0.125], 50, seed=9)
        assert first.table.equals(second.table)

    def test_non_dyadic_step(self):
        with pytest.raises(ValueError, match="T/2"):
            strong_error(gbm_problem(0.06, 0.5), builtin_rk4(), [0.3, 0.15, 0.075], 10, seed=0)

    def test_summary_line(self):
        report = strong_error(gbm_problem(-1.0, 0.0), builtin_rk4(), [0.25, 0.125, 0.0625], 2,
                              seed=0)
        assert report.summary().startswith("slope=")
        assert " halfwidth=" in report.summary()

class TestWeakMean:

    def test_ornstein_uhlenbeck_mean(self):
        report = ou_mean_check(builtin_rk4())
        if verbose:
            print(report)
        assert report.passed
        assert np.isclose(report.exact, np.exp(-1.0))

    def test_deviation(self):
        report = WeakMeanReport(mean=1.1, standard_error=0.02, exact=1.0)
        assert np.isclose(report.deviation, 5.0)
        assert not report.passed
        assert WeakMeanReport(mean=1.0, standard_error=0.0, exact=1.0).passed
