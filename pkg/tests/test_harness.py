import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ridgeless import harness
from ridgeless.dataio import Dataset
from ridgeless.dgp import FactorModelSpec, draw_sample
from ridgeless.errors import InvalidInputError, UndefinedMetricError
from ridgeless.estimators import CvConfig
from ridgeless.harness import (
    ForecastReport,
    MethodSpec,
    Protocol,
    SimulationProtocol,
    oos_r2,
    run_random_split,
    run_rolling,
    run_sweep,
)
from ridgeless.seeds import derive_seed


def series(n=60, p=6, seed=0):
    g = np.random.default_rng(seed)
    X = g.standard_normal((n, p))
    y = X @ g.standard_normal(p) * 0.5 + g.standard_normal(n)
    return Dataset.from_arrays(X, y)


def ridge(lam=1.0):
    return MethodSpec("ridge", options={"lam": lam})


class TestOosR2:
    def test_benchmark_forecast_is_zero(self):
        assert oos_r2([1.0, 4.0, 2.0], [0.5, 1.5, 2.5], [0.5, 1.5, 2.5]) == 0.0

    def test_perfect_forecast_is_one(self):
        assert oos_r2([1.0, 4.0, 2.0], [1.0, 4.0, 2.0], [0.0, 0.0, 0.0]) == 1.0

    def test_three_point_instance(self):
        assert oos_r2([1, 2, 3], [1, 1, 3], [0, 0, 0]) == pytest.approx(1 - 1 / 14, rel=1e-15)

    def test_zero_denominator(self):
        with pytest.raises(UndefinedMetricError):
            oos_r2([1.0, 2.0], [0.0, 0.0], [1.0, 2.0])

    def test_zero_over_zero(self):
        assert oos_r2([3.0, 3.0], [3.0, 3.0], [3.0, 3.0]) == 0.0

    @pytest.mark.parametrize("args", [([], [], []), ([1.0], [1.0, 2.0], [0.0])])
    def test_shape_errors(self, args):
        with pytest.raises(InvalidInputError):
            oos_r2(*args)

    @given(st.integers(0, 10_000), st.floats(-50, 50))
    def test_shift_invariance(self, seed, c):
        g = np.random.default_rng(seed)
        y, f, b = g.standard_normal((3, 12))
        assert oos_r2(y + c, f + c, b + c) == pytest.approx(oos_r2(y, f, b), abs=1e-9)


class TestRolling:
    def test_single_forecast(self):
        d = series(20)
        rep = run_rolling(d, ridge(), window=19)
        assert rep.origins == [d.index[19]] and rep.truth.size == 1

    def test_benchmark_is_window_mean(self):
        d = series(30)
        rep = run_rolling(d, ridge(), window=10)
        assert rep.truth.size == 20
        np.testing.assert_allclose(rep.benchmark[0], d.y[:10].mean(), rtol=1e-14)
        np.testing.assert_allclose(rep.benchmark[-1], d.y[19:29].mean(), rtol=1e-14)

    @pytest.mark.parametrize("method", [MethodSpec("pseudo_ols"), MethodSpec("pseudo_ols", total_p=80), ridge()])
    def test_constant_target(self, method):
        d = series(30)
        d = Dataset.from_arrays(d.X, np.full(d.n, 2.5))
        rep = run_rolling(d, method, window=12)
        assert rep.r2 == 0.0
        assert np.all(rep.prediction == 2.5)

    @pytest.mark.parametrize("method", [MethodSpec("pseudo_ols", total_p=60), ridge(0.3)])
    def test_no_look_ahead(self, method):
        d = series(40, seed=3)
        clean = run_rolling(d, method, window=15, seed=7)
        for te in (15, 27, 38):
            X, y = d.X.copy(), d.y.copy()
            X[te + 1 :] = np.nan
            y[te + 1 :] = np.nan
            poisoned = run_rolling(Dataset.from_arrays(X, y), method, window=15, seed=7)
            k = clean.origins.index(d.index[te])
            j = poisoned.origins.index(d.index[te])
            assert poisoned.prediction[j] == clean.prediction[k]

    def test_nan_windows_skipped_and_logged(self, caplog):
        d = series(30)
        X = d.X.copy()
        X[5, 0] = np.nan
        with caplog.at_level("WARNING"):
            rep = run_rolling(Dataset.from_arrays(X, d.y), ridge(), window=10)
        # row 5 sits in the windows forecasting rows 10..15 and is never a test row here
        assert rep.skipped == [str(i) for i in range(10, 16)]
        assert rep.truth.size == 20 - 6
        assert "skipped" in caplog.text

    def test_expanding(self):
        d = series(30)
        rep = run_rolling(d, ridge(), window=10, expanding=True)
        assert rep.protocol["kind"] == "expanding"
        np.testing.assert_allclose(rep.benchmark[-1], d.y[:29].mean(), rtol=1e-14)

    @pytest.mark.parametrize("window", [1, 30, 31])
    def test_window_bounds(self, window):
        with pytest.raises(InvalidInputError):
            run_rolling(series(30), ridge(), window=window)

    def test_reproducible(self):
        d = series(40)
        m = MethodSpec("pseudo_ols", total_p=100)
        a = run_rolling(d, m, window=20, seed=4)
        b = run_rolling(d, m, window=20, seed=4)
        assert a.to_json() == b.to_json()


@pytest.mark.slow
def test_augmented_pseudo_ols_beats_cv_ridge_head_to_head():
    # time-ordered draws from the weak-factor design with 500 informative predictors
    wins = []
    for s in range(50):
        spec = FactorModelSpec(n=120, p=500, p0=500, tau=0.5, noise_seed=derive_seed(11, "h2h", s))
        sample = draw_sample(spec)
        d = Dataset.from_arrays(sample.X, sample.y)
        po = run_rolling(d, MethodSpec("pseudo_ols", total_p=1000), window=100, seed=s)
        rr = run_rolling(d, MethodSpec("ridge"), window=100, seed=s)
        wins.append(po.mse < rr.mse)
    assert np.mean(wins) >= 0.7


class TestRandomSplit:
    def test_deterministic(self):
        d = series(50)
        a = run_random_split(d, ridge(), 0.5, 1, seed=3)
        b = run_random_split(d, ridge(), 0.5, 1, seed=3)
        assert a.to_json() == b.to_json()
        assert a.truth.size == 25

    def test_duplicated_rows_train_test_close(self):
        base = series(60, p=5, seed=1)
        d = Dataset.from_arrays(np.vstack([base.X, base.X]), np.concatenate([base.y, base.y]))
        rep = run_random_split(d, MethodSpec("ridge"), 0.5, 10, seed=2)
        test = np.mean([r["mse"] for r in rep.repetitions])
        train = np.mean([r["train_mse"] for r in rep.repetitions])
        assert 0.5 <= test / train <= 2.0

    def test_mean_variance_scales_with_repetitions(self):
        d = series(60, seed=4)
        spread = {}
        for R in (2, 8):
            means = [run_random_split(d, ridge(), 0.5, R, seed=derive_seed(1, R, s)).mse for s in range(60)]
            spread[R] = np.var(means, ddof=1)
        assert 2.0 <= spread[2] / spread[8] <= 8.0

    def test_aggregate_is_mean_of_repetitions(self):
        rep = run_random_split(series(50), ridge(), 0.6, 7, seed=1)
        assert rep.mse == pytest.approx(np.mean([r["mse"] for r in rep.repetitions]), rel=1e-12)

    @pytest.mark.parametrize("fraction", [0.0, 1.0, 0.01, 0.99])
    def test_degenerate(self, fraction):
        with pytest.raises(InvalidInputError):
            run_random_split(series(30), ridge(), fraction, 2)


class TestFixedSplit:
    def test_in_order(self):
        d = series(40)
        rep = harness.run_fixed_split(d, ridge(), 0.75)
        assert rep.origins == list(d.index[30:])
        np.testing.assert_allclose(rep.benchmark, d.y[:30].mean(), rtol=1e-14)

    def test_fraction_one_rejected(self):
        with pytest.raises(InvalidInputError):
            Protocol("fixed_split", fraction=1.0)
        with pytest.raises(InvalidInputError):
            harness.run_fixed_split(series(40), ridge(), 1.0)

    @pytest.mark.parametrize("kw", [dict(kind="rolling"), dict(kind="rolling", window=1), dict(kind="bootstrap"),
                                    dict(kind="random_split", fraction=0.5, repetitions=0)])
    def test_protocol_validation(self, kw):
        with pytest.raises(InvalidInputError):
            Protocol(**kw)


class TestReport:
    def test_json_round_trip(self):
        rep = run_rolling(series(30), ridge(), window=10)
        back = ForecastReport.from_json(rep.to_json())
        assert back.to_json() == rep.to_json()
        assert json.loads(rep.to_json())["mse"] == rep.mse

    def test_csv(self):
        rep = run_rolling(series(30), ridge(), window=10)
        lines = rep.to_csv().splitlines()
        assert lines[0] == "origin,truth,prediction,benchmark"
        assert len(lines) == 21
        o, y, f, b = lines[1].split(",")
        assert (float(y), float(f), float(b)) == (rep.truth[0], rep.prediction[0], rep.benchmark[0])

    def test_mse_definition(self):
        rep = ForecastReport("m", ["a", "b"], [1.0, 3.0], [0.0, 1.0], [0.0, 0.0])
        assert rep.mse == 2.5
        assert rep.r2 == pytest.approx(1 - 5 / 10)

    def test_method_spec_round_trip(self):
        m = MethodSpec("lasso", cv=CvConfig(folds=5, split_rule="time_ordered"))
        assert MethodSpec.from_dict(m.to_dict()).to_dict() == m.to_dict()

    def test_augmentation_only_for_pseudo_ols(self):
        with pytest.raises(InvalidInputError):
            MethodSpec("ridge", total_p=100)


class TestSweep:
    def test_empty_methods(self):
        assert run_sweep(FactorModelSpec(n=20, p=30, p0=10), [], [10, 30]) == []

    def test_layout_and_csv(self):
        spec = FactorModelSpec(n=30, p=60, p0=20)
        rows = run_sweep(spec, ["pseudo_ols", "ridge"], [10, 60], SimulationProtocol(replications=3, test_size=5))
        assert [(r.method, r.p) for r in rows] == [("pseudo_ols", 10), ("pseudo_ols", 60), ("ridge", 10), ("ridge", 60)]
        assert all(r.report.truth.size == 15 for r in rows)
        text = harness.sweep_to_csv(rows)
        assert text.splitlines()[0] == "method,p,mse,r2" and len(text.splitlines()) == 5

    def test_known_scenario_pins_comparators(self):
        spec = FactorModelSpec(n=30, p=60, p0=20)
        rows = run_sweep(spec, ["pseudo_ols", "ridge"], [25, 60],
                         SimulationProtocol(replications=2, test_size=5, scenario="known"))
        d = {(r.method, r.p): r for r in rows}
        np.testing.assert_array_equal(d["ridge", 25].report.prediction, d["ridge", 60].report.prediction)
        assert not np.array_equal(d["pseudo_ols", 25].report.prediction, d["pseudo_ols", 60].report.prediction)

    def test_nested_columns(self):
        # p and p_max share the first p columns within a replication
        spec = FactorModelSpec(n=30, p=60, p0=20)
        proto = SimulationProtocol(replications=2, test_size=5, seed=4)
        a = run_sweep(spec, ["ridge"], [20], proto)[0]
        b = run_sweep(spec, ["ridge"], [20, 60], proto)[0]
        np.testing.assert_array_equal(a.report.truth, b.report.truth)
        np.testing.assert_allclose(a.report.prediction, b.report.prediction, rtol=1e-12)

    def test_mc_errors_calibrated_across_seeds(self):
        # seed-to-seed spread of the mean matches the reported standard errors
        spec = FactorModelSpec(n=50, p=150, p0=40, tau=0.25)
        means, ses = [], []
        for seed in range(20):
            row = run_sweep(spec, ["pseudo_ols"], [150], SimulationProtocol(replications=50, seed=seed))[0]
            means.append(row.rep_mse.mean())
            ses.append(row.rep_mse.std(ddof=1) / np.sqrt(50))
        z = (np.array(means) - np.mean(means)) / np.array(ses)
        assert 0.6 <= np.std(z, ddof=1) <= 1.5

    def test_invalid(self):
        spec = FactorModelSpec(n=20, p=30, p0=10)
        with pytest.raises(InvalidInputError):
            run_sweep(spec, ["ridge"], [])
        with pytest.raises(InvalidInputError):
            run_sweep(spec, ["ridge", "ridge"], [10])
        with pytest.raises(InvalidInputError):
            SimulationProtocol(replications=0)

    def test_double_descent_peak(self):
        spec = FactorModelSpec(n=100, p=1000, p0=200, tau=0.25)
        rows = run_sweep(spec, ["pseudo_ols"], [80, 100, 120, 1000], SimulationProtocol(replications=10, seed=5))
        mse = {r.p: r.mse for r in rows}
        assert mse[100] > max(mse[80], mse[120])
        assert mse[1000] < mse[100]

    @pytest.mark.slow
    def test_weak_factor_pseudo_ols_leads_at_p_max(self):
        spec = FactorModelSpec(n=100, p=1000, p0=500, tau=0.5)
        rows = run_sweep(spec, ["pseudo_ols", "ridge", "pca", "lasso"], [1000],
                         SimulationProtocol(replications=50, scenario="known", seed=6))
        mse = {r.method: r.mse for r in rows}
        assert all(mse["pseudo_ols"] <= mse[m] for m in ("ridge", "pca", "lasso")), mse

    def test_pca_flat_under_very_weak_factors(self):
        spec = FactorModelSpec(n=100, p=1000, p0=1000, tau=0.5)
        rows = run_sweep(spec, ["pca"], [200, 500, 1000], SimulationProtocol(replications=10, seed=7))
        mse = np.array([r.mse for r in rows])
        assert mse.max() / mse.min() - 1 < 0.05

    def test_dataset_sweep(self):
        d = series(40, p=5)
        rows = run_sweep(d, ["pseudo_ols", "ridge"], [5, 50], Protocol("rolling", window=20))
        assert [(r.method, r.p) for r in rows] == [("pseudo_ols", 5), ("pseudo_ols", 50), ("ridge", 5), ("ridge", 50)]
        assert rows[2].report is rows[3].report
        assert rows[1].report.p == 50
        with pytest.raises(InvalidInputError):
            run_sweep(d, ["pseudo_ols"], [3], Protocol("rolling", window=20))
