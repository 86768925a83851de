import numpy as np
import pytest

import oracles
from conftest import make_price_frame, weekday_dates
from portalloc.backtest import (CompareConfig, DataBundle, EquityCurve, MetricSet,
                                annualized_return, compare_models, curves_csv,
                                make_schedule, max_drawdown, report_table_csv,
                                run_strategy, sharpe, sortino, stitch_curves,
                                weights_csv)
from portalloc.errors import DataError
from portalloc.features import LagSet, build_context_series
from portalloc.market_data import compute_returns, rolling_volatility


def curve_from_values(values):
    values = np.asarray(values, dtype=float)
    steps = len(values) - 1
    return EquityCurve(weekday_dates("2021-01-04", steps + 1), values,
                       np.full((steps, 1), 1.0), np.ones(steps), np.zeros(steps))


def returns_frame(returns):
    returns = np.asarray(returns, dtype=float)
    prices = 100.0 * np.cumprod(np.vstack([np.ones(returns.shape[1]), 1 + returns]), axis=0)
    return compute_returns(make_price_frame(prices))


class TestSchedule:
    def test_three_splits_by_construction(self):
        # 4 x 252 rows: one year of initial training, three one-year tests
        dates = weekday_dates("2000-01-03", 4 * 252)
        schedule = make_schedule(dates, dates[251], 252)
        assert len(schedule) == 3
        for split in schedule.splits:
            assert split.train_start == 0
            assert split.train_end == split.test_start
        assert schedule.splits[0].test_start == 252
        assert schedule.splits[-1].test_end == 4 * 252

    def test_expanding_train(self):
        dates = weekday_dates("2000-01-03", 600)
        schedule = make_schedule(dates, dates[199], 100)
        ends = [s.test_end for s in schedule.splits]
        starts = [s.test_start for s in schedule.splits]
        assert starts == [200, 300, 400, 500]
        assert ends == [300, 400, 500, 600]

    def test_train_end_beyond_data_rejected(self):
        dates = weekday_dates("2000-01-03", 100)
        with pytest.raises(DataError, match="empty test region"):
            make_schedule(dates, dates[-1], 50)

    def test_last_split_may_be_shorter(self):
        dates = weekday_dates("2000-01-03", 110)
        schedule = make_schedule(dates, dates[49], 50)
        assert [s.test_end - s.test_start for s in schedule.splits] == [50, 10]


class TestRunStrategy:
    def test_zero_returns_flat_curve(self):
        rf = returns_frame(np.zeros((40, 2)))
        curve = run_strategy(lambda t: (np.array([0.6, 0.4]), 2.0), rf, 5, 35, 0.0)
        np.testing.assert_allclose(curve.values, 1.0, atol=1e-15)

    def test_buy_and_hold_passthrough(self, rng):
        rets = 0.01 * rng.standard_normal((60, 1))
        rf = returns_frame(rets)
        curve = run_strategy(lambda t: (np.array([1.0]), 1.0), rf, 0, 59, 0.0)
        growth = np.cumprod(1 + rets[1:60, 0])
        np.testing.assert_allclose(curve.values[1:], growth, rtol=1e-12)

    def test_full_switch_cost_drag(self):
        # constant prices so returns contribute nothing; one full switch of an
        # unlevered portfolio (turnover 2) at 5 bp costs exactly 0.1%
        rf = returns_frame(np.zeros((10, 2)))
        plan = {3: (np.array([1.0, 0.0]), 1.0), 4: (np.array([0.0, 1.0]), 1.0)}

        def decide(t):
            return plan.get(t, plan[max(k for k in plan if k <= t)] if t > 4 else plan[3])

        curve = run_strategy(decide, rf, 3, 6, 0.0005,
                             prev_position=np.array([1.0, 0.0]))
        np.testing.assert_allclose(curve.turnover, [0.0, 2.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(curve.values[2] / curve.values[1], 1 - 0.001, rtol=1e-12)

    def test_initial_entry_charged(self):
        rf = returns_frame(np.zeros((10, 1)))
        curve = run_strategy(lambda t: (np.array([1.0]), 3.0), rf, 2, 5, 0.001)
        np.testing.assert_allclose(curve.turnover, [3.0, 0.0, 0.0])
        np.testing.assert_allclose(curve.values[1], 1 - 0.003, rtol=1e-12)

    def test_one_day_lag(self):
        # a spike at step k is earned by the decision made at k-1
        rets = np.zeros((20, 1))
        rets[10, 0] = 0.25
        rf = returns_frame(rets)
        hits = []

        def decide(t):
            hits.append(t)
            return np.array([1.0]), 1.0

        curve = run_strategy(decide, rf, 8, 12, 0.0)
        assert hits == [8, 9, 10, 11]
        np.testing.assert_allclose(curve.values, [1.0, 1.0, 1.25, 1.25, 1.25], rtol=1e-12)

    def test_cost_monotonicity(self, rng):
        rets = 0.01 * rng.standard_normal((50, 2))
        rf = returns_frame(rets)

        def wiggle(t):
            w = 0.5 + 0.3 * np.sin(t / 3.0)
            return np.array([w, 1 - w]), 2.0

        low = run_strategy(wiggle, rf, 5, 45, 0.0001)
        high = run_strategy(wiggle, rf, 5, 45, 0.002)
        assert np.all(high.values[1:] <= low.values[1:] + 1e-15)

    def test_bankruptcy_flag(self):
        rets = np.zeros((10, 1))
        rets[5, 0] = -0.5
        rf = returns_frame(rets)
        curve = run_strategy(lambda t: (np.array([1.0]), 3.0), rf, 3, 8, 0.0)
        assert curve.bankrupt
        assert curve.values[-1] == 0.0
        assert len(curve.values) == 3  # terminates at the wipeout step

    def test_causality_of_engine(self, rng):
        # mutating data after date X leaves decisions and equity up to X intact
        rets = 0.01 * rng.standard_normal((60, 2))
        rf_a = returns_frame(rets)
        mutated = rets.copy()
        mutated[40:] *= -2.5
        rf_b = returns_frame(mutated)

        def make_decider(rf):
            def decide(t):
                w = np.array([0.5, 0.5]) + 0.1 * np.sign(rf.returns[t])
                w = np.abs(w) / np.abs(w).sum()
                return w, 1.0
            return decide

        a = run_strategy(make_decider(rf_a), rf_a, 10, 39, 0.0005)
        b = run_strategy(make_decider(rf_b), rf_b, 10, 39, 0.0005)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.weights, b.weights)


class TestMetrics:
    def test_flat_curve_zero_return(self):
        assert annualized_return(curve_from_values(np.ones(30))) == 0.0

    def test_doubling_in_one_year(self):
        values = np.linspace(1.0, 2.0, 253)
        values[-1] = 2.0
        curve = curve_from_values(np.geomspace(1.0, 2.0, 253))
        np.testing.assert_allclose(annualized_return(curve), 1.0, rtol=1e-10)

    def test_half_year_compounding(self):
        curve = curve_from_values(np.geomspace(1.0, 1.1, 127))
        np.testing.assert_allclose(annualized_return(curve), 1.1 ** 2 - 1, rtol=1e-10)

    def test_zero_vol_sharpe_undefined(self):
        assert sharpe(curve_from_values(np.full(40, 2.0))) is None
        up = curve_from_values(np.geomspace(1, 1.5, 40))
        assert sharpe(up) is None  # constant drift has zero return variance

    def test_sharpe_sign_matches_return(self, rng):
        for _ in range(10):
            values = np.cumprod(1 + 0.01 * rng.standard_normal(100) + 0.001)
            curve = curve_from_values(np.concatenate([[1.0], values]))
            s = sharpe(curve)
            if s is not None and abs(annualized_return(curve)) > 1e-12:
                assert np.sign(s) == np.sign(annualized_return(curve))

    def test_no_down_days_sortino_undefined(self):
        curve = curve_from_values(np.geomspace(1.0, 1.2, 30))
        assert sortino(curve) is None

    def test_all_negative_sortino_negative(self):
        curve = curve_from_values(np.geomspace(1.0, 0.8, 30))
        assert sortino(curve) < 0

    def test_symmetric_returns_sortino_sqrt2_sharpe(self, rng):
        steps = rng.choice([-0.01, 0.01], size=20000)
        curve = curve_from_values(np.cumprod(np.concatenate([[1.0], 1 + steps])))
        s, so = sharpe(curve), sortino(curve)
        np.testing.assert_allclose(so / s, np.sqrt(2.0), rtol=0.02)

    def test_max_drawdown_spec_path(self):
        curve = curve_from_values([100.0, 120.0, 90.0, 110.0])
        np.testing.assert_allclose(max_drawdown(curve), 0.25, atol=0)

    def test_max_drawdown_monotone_increasing_curve(self):
        assert max_drawdown(curve_from_values(np.geomspace(1, 3, 50))) == 0.0

    def test_appending_never_decreases_drawdown(self, rng):
        values = np.cumprod(1 + 0.02 * rng.standard_normal(200))
        values = np.concatenate([[1.0], values])
        partial = max_drawdown(curve_from_values(values[:100]))
        full = max_drawdown(curve_from_values(values))
        assert full >= partial

    def test_brute_force_agreement(self, rng):
        for _ in range(40):
            n = int(rng.integers(5, 200))
            values = np.cumprod(1 + np.clip(0.03 * rng.standard_normal(n), -0.5, 0.5))
            values = np.concatenate([[1.0], values])
            curve = curve_from_values(values)
            ref = oracles.metrics_bruteforce(values)
            np.testing.assert_allclose(annualized_return(curve),
                                       ref["annualized_return"], atol=1e-10)
            np.testing.assert_allclose(max_drawdown(curve), ref["max_dd"], atol=1e-10)
            for got, want in ((sharpe(curve), ref["sharpe"]), (sortino(curve), ref["sortino"])):
                if want is None:
                    assert got is None
                else:
                    np.testing.assert_allclose(got, want, atol=1e-10)


class TestStitch:
    def test_compounds_across_segments(self):
        a = curve_from_values([1.0, 1.1, 1.2])
        b = curve_from_values([1.0, 0.9])
        b = EquityCurve(weekday_dates("2021-01-06", 2), b.values, b.weights,
                        b.leverage, b.turnover)
        stitched = stitch_curves([a, b])
        np.testing.assert_allclose(stitched.values, [1.0, 1.1, 1.2, 1.2 * 0.9], rtol=1e-12)
        assert len(stitched.dates) == 4


def small_bundle(rng, steps=420, assets=2):
    prices = 100 * np.cumprod(1 + 0.006 * rng.standard_normal((steps, assets))
                              + 0.0004, axis=0)
    rf = compute_returns(make_price_frame(prices))
    vf = rolling_volatility(rf, 5)
    ctx = build_context_series(rf, vf)
    lags = LagSet((0, 1, 2))
    return DataBundle(rf, vf, ctx, lags, lags)


class TestCompare:
    def test_single_model_single_window_matches_run_strategy(self, rng):
        bundle = small_bundle(rng)
        rf = bundle.rf
        schedule = make_schedule(rf.dates, rf.dates[299], 200)
        assert len(schedule) == 1
        cfg = CompareConfig(cost_rate=0.0005, horizons={}, ew_leverage=1.0)
        reports = compare_models(["equalweight"], bundle, schedule, cfg)
        assert len(reports) == 1
        split = schedule.splits[0]
        direct = run_strategy(lambda t: (np.array([0.5, 0.5]), 1.0), rf,
                              split.test_start - 1, split.test_end - 1, 0.0005)
        got = reports[0]
        want = MetricSet.of(direct)
        assert got.full == want
        assert len(got.per_window) == 1 and got.per_window[0] == want

    def test_identical_models_identical_rows(self, rng):
        bundle = small_bundle(rng)
        schedule = make_schedule(bundle.rf.dates, bundle.rf.dates[299], 60)
        cfg = CompareConfig(horizons={})
        reports = compare_models(["minvariance", "minvariance"], bundle, schedule, cfg)
        assert reports[0].full == reports[1].full

    def test_unknown_model_rejected(self, rng):
        bundle = small_bundle(rng)
        schedule = make_schedule(bundle.rf.dates, bundle.rf.dates[299], 60)
        with pytest.raises(DataError, match="unknown model"):
            compare_models(["nope"], bundle, schedule, CompareConfig())

    def test_empty_model_list_rejected(self, rng):
        bundle = small_bundle(rng)
        schedule = make_schedule(bundle.rf.dates, bundle.rf.dates[299], 60)
        with pytest.raises(DataError, match="empty model list"):
            compare_models([], bundle, schedule, CompareConfig())

    def test_horizon_exceeding_history_rejected(self, rng):
        bundle = small_bundle(rng)
        schedule = make_schedule(bundle.rf.dates, bundle.rf.dates[299], 60)
        cfg = CompareConfig(horizons={"5y": 1260})
        with pytest.raises(DataError, match="horizon"):
            compare_models(["equalweight"], bundle, schedule, cfg)

    def test_table_layout_and_csv(self, rng):
        bundle = small_bundle(rng)
        schedule = make_schedule(bundle.rf.dates, bundle.rf.dates[299], 60)
        cfg = CompareConfig(horizons={"60d": 60})
        reports = compare_models(["equalweight", "riskparity"], bundle, schedule, cfg)
        table = report_table_csv(reports)
        lines = table.strip().splitlines()
        assert lines[0] == "model,horizon,annualized_return,sortino,sharpe,max_dd"
        assert len(lines) == 1 + 2 * 2  # two models x (full + one horizon)
        curves = curves_csv(reports).strip().splitlines()
        assert curves[0] == "date,equalweight,riskparity"
        wcsv = weights_csv(reports[0]).strip().splitlines()
        assert wcsv[0] == "date,w1,w2,leverage"

    def test_out_of_sample_discipline(self, rng):
        # mutating data after the test window leaves test decisions unchanged
        prices = 100 * np.cumprod(1 + 0.006 * rng.standard_normal((420, 2)) + 0.0004, axis=0)
        bundle_a = small_bundle(np.random.default_rng(0))
        rf = bundle_a.rf
        schedule = make_schedule(rf.dates, rf.dates[299], 60)
        split = schedule.splits[0]
        mutated = rf.returns.copy()
        mutated[split.test_end:] *= -3.0
        rf_b = type(rf)(rf.dates, rf.assets, mutated)
        vf_b = rolling_volatility(rf_b, 5)
        ctx_b = build_context_series(rf_b, vf_b)
        bundle_b = DataBundle(rf_b, vf_b, ctx_b, bundle_a.lags, bundle_a.ctx_lags)
        one_split = type(schedule)((split,))
        cfg = CompareConfig(horizons={})
        for model in ("minvariance", "riskparity"):
            a = compare_models([model], bundle_a, one_split, cfg)[0]
            b = compare_models([model], bundle_b, one_split, cfg)[0]
            assert np.array_equal(a.curve.weights, b.curve.weights)
            assert np.array_equal(a.curve.values, b.curve.values)
