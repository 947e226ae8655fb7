import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ridgeless import estimators as est
from ridgeless.dgp import FactorModelSpec, draw_oos, draw_sample
from ridgeless.errors import InvalidInputError, NumericalError
from ridgeless.estimators import CvConfig, LinearPredictor


def data(seed, n, p, noise=1.0):
    g = np.random.default_rng(seed)
    X = g.standard_normal((n, p)) * g.uniform(0.5, 3.0, p) + g.uniform(-5, 5, p)
    b = g.standard_normal(p)
    y = X @ b + 2.0 + noise * g.standard_normal(n)
    return X, y


def ols_oracle(X, y):
    Z = np.column_stack([np.ones(len(y)), X])
    sol = np.linalg.lstsq(Z, y, rcond=None)[0]
    return sol[0], sol[1:]


class TestLinearPredictor:
    def test_predict_and_json(self):
        f = LinearPredictor(np.array([1.0, -2.0]), 0.5, "ols", {"rank": 2})
        np.testing.assert_allclose(f.predict(np.array([[1.0, 1.0], [0.0, 2.0]])), [-0.5, -3.5])
        g = LinearPredictor.from_json(f.to_json())
        assert np.array_equal(g.coefficients, f.coefficients) and g.intercept == f.intercept
        assert g.method == "ols" and g.metadata == {"rank": 2}

    def test_non_finite_rejected(self):
        with pytest.raises(NumericalError):
            LinearPredictor(np.array([np.nan]), 0.0, "ols")

    def test_column_mismatch(self):
        with pytest.raises(InvalidInputError):
            LinearPredictor(np.ones(2), 0.0, "ols").predict(np.ones((1, 3)))


class TestCvConfig:
    def test_kfold_partition(self):
        splits = CvConfig(folds=4, seed=1).splits(22)
        tests = np.sort(np.concatenate([te for _, te in splits]))
        assert np.array_equal(tests, np.arange(22))
        for tr, te in splits:
            assert np.intersect1d(tr, te).size == 0 and tr.size + te.size == 22

    def test_eighty_twenty(self):
        splits = CvConfig(folds=10, split_rule="eighty_twenty").splits(100)
        assert len(splits) == 10
        assert all(tr.size == 80 and te.size == 20 for tr, te in splits)

    def test_time_ordered_never_trains_on_future(self):
        for tr, te in CvConfig(folds=5, split_rule="time_ordered").splits(60):
            assert tr.max() < te.min()

    @pytest.mark.parametrize("kw", [dict(folds=1), dict(split_rule="loo"), dict(grid=[])])
    def test_invalid(self, kw):
        with pytest.raises(InvalidInputError):
            CvConfig(**kw)

    def test_too_few_rows(self):
        with pytest.raises(InvalidInputError):
            CvConfig(folds=10).splits(5)


class TestPseudoOls:
    @given(st.integers(0, 10_000), st.integers(3, 25), st.integers(0, 40))
    def test_interpolates(self, seed, n, extra):
        X, y = data(seed, n, n + extra)
        fit = est.fit_pseudo_ols(X, y)
        assert np.linalg.norm(fit.predict(X) - y) <= 1e-8 * np.linalg.norm(y)

    def test_equals_ols_when_tall(self):
        X, y = data(1, 50, 8)
        a, b = est.fit_pseudo_ols(X, y), est.fit_ols(X, y)
        np.testing.assert_allclose(a.coefficients, b.coefficients, rtol=1e-8, atol=1e-10)
        assert a.intercept == pytest.approx(b.intercept, rel=1e-8)

    def test_duplicated_column(self):
        X, y = data(2, 40, 6)
        dup = np.column_stack([X, X[:, 2]])
        Xt = np.random.default_rng(3).standard_normal((100, 6))
        a = est.fit_pseudo_ols(dup, y).predict(np.column_stack([Xt, Xt[:, 2]]))
        np.testing.assert_allclose(a, est.fit_pseudo_ols(X, y).predict(Xt), rtol=1e-8, atol=1e-8)
        c = est.fit_pseudo_ols(dup, y).coefficients
        assert c[2] == pytest.approx(c[6], rel=1e-8)

    def test_min_norm_on_centered_data(self):
        X, y = data(4, 15, 40)
        fit = est.fit_pseudo_ols(X, y)
        Xc = X - X.mean(0)
        np.testing.assert_allclose(fit.coefficients, np.linalg.pinv(Xc) @ (y - y.mean()), atol=1e-8)

    def test_standardize_flag(self):
        X, y = data(5, 15, 40)
        fit = est.fit_pseudo_ols(X, y, standardize=True)
        sd = X.std(0)
        Xs = (X - X.mean(0)) / sd
        np.testing.assert_allclose(fit.coefficients * sd, np.linalg.pinv(Xs) @ (y - y.mean()), atol=1e-8)
        assert fit.metadata["standardize"] is True


class TestOls:
    def test_univariate(self):
        fit = est.fit_ols(np.array([[1.0], [2.0], [3.0]]), np.array([2.0, 4.0, 6.0]))
        assert fit.coefficients[0] == pytest.approx(2.0)
        assert fit.intercept == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal_target(self):
        X = np.array([[-1.0], [0.0], [1.0]])
        fit = est.fit_ols(X, np.array([5.0, 3.0, 5.0]))
        assert fit.coefficients[0] == pytest.approx(0.0, abs=1e-12)
        assert fit.intercept == pytest.approx(13 / 3)

    def test_normal_equations_oracle(self):
        X, y = data(6, 30, 5)
        c, b = ols_oracle(X, y)
        fit = est.fit_ols(X, y)
        np.testing.assert_allclose(fit.coefficients, b, rtol=1e-8)
        assert fit.intercept == pytest.approx(c, rel=1e-8)

    def test_rank_deficient(self):
        X, y = data(7, 30, 3)
        with pytest.raises(NumericalError):
            est.fit_ols(np.column_stack([X, X[:, 0] + X[:, 1]]), y)

    def test_wide(self):
        with pytest.raises(NumericalError):
            est.fit_ols(*data(8, 10, 20))


class TestRidge:
    def test_matches_explicit_formula(self):
        X, y = data(9, 30, 50)
        mu, sd = X.mean(0), X.std(0)
        Xs = (X - mu) / sd
        b = np.linalg.solve(Xs.T @ Xs + 3.0 * np.eye(50), Xs.T @ (y - y.mean()))
        fit = est.fit_ridge(X, y, 3.0)
        np.testing.assert_allclose(fit.coefficients, b / sd, rtol=1e-8, atol=1e-12)

    def test_noiseless_picks_smallest(self):
        X, y = data(10, 60, 5, noise=0.0)
        grid = list(np.logspace(-8, 3, 12))
        fit = est.fit_ridge_cv(X, y, CvConfig(folds=5, grid=grid))
        assert fit.metadata["lambda"] == min(grid)

    def test_pure_noise_picks_largest(self):
        grid = list(np.logspace(-2, 6, 9))
        votes = 0
        for seed in range(100):
            g = np.random.default_rng(seed)
            X, y = g.standard_normal((40, 10)), g.standard_normal(40)
            fit = est.fit_ridge_cv(X, y, CvConfig(folds=5, grid=grid, seed=seed))
            votes += fit.metadata["lambda"] == max(grid)
        assert votes > 50

    def test_selected_score_is_minimal(self):
        X, y = data(11, 50, 20, noise=3.0)
        fit = est.fit_ridge_cv(X, y, CvConfig(folds=5))
        scores = np.array(fit.metadata["cv_scores"])
        k = fit.metadata["grid"].index(fit.metadata["lambda"])
        assert np.all(scores[k] <= scores)

    def test_fold_scores_match_direct_refits(self):
        X, y = data(12, 30, 8, noise=2.0)
        grid = [0.5, 5.0, 50.0]
        cv = CvConfig(folds=3, grid=grid, seed=2)
        fit = est.fit_ridge_cv(X, y, cv)
        direct = []
        for lam in grid:
            errs = [np.mean((y[te] - est.fit_ridge(X[tr], y[tr], lam).predict(X[te])) ** 2) for tr, te in cv.splits(30)]
            direct.append(np.mean(errs))
        np.testing.assert_allclose(fit.metadata["cv_scores"], direct, rtol=1e-9)

    def test_nonpositive_grid(self):
        with pytest.raises(InvalidInputError):
            est.fit_ridge_cv(*data(13, 30, 3), CvConfig(folds=3, grid=[0.0, 1.0]))


def orthonormal_design(seed, n, p):
    g = np.random.default_rng(seed)
    A = g.standard_normal((n, p))
    A -= A.mean(0)
    Q, _ = np.linalg.qr(A)
    return np.sqrt(n) * Q


def soft(z, lam):
    return np.sign(z) * np.maximum(np.abs(z) - lam, 0.0)


class TestLasso:
    def test_above_lambda_max_all_zero(self):
        X, y = data(14, 40, 10)
        lmax = est.lasso_lambda_max(X, y)
        for lam in (lmax, 2 * lmax):
            fit = est.fit_lasso(X, y, lam)
            assert np.all(fit.coefficients == 0.0)
            assert fit.intercept == pytest.approx(y.mean())

    @pytest.mark.parametrize("p", [3, 6, 10])
    def test_orthonormal_soft_threshold(self, p):
        n = 50
        X = orthonormal_design(p, n, p)
        y = X @ np.linspace(-1, 1, p) + np.random.default_rng(p).standard_normal(n)
        yc = y - y.mean()
        z = X.T @ yc / n
        for lam in (0.05, 0.2, 0.5):
            fit = est.fit_lasso(X, y, lam)
            np.testing.assert_allclose(fit.coefficients, soft(z, lam), atol=1e-7)

    @given(st.integers(0, 10_000), st.sampled_from([0.01, 0.05, 0.2]))
    def test_kkt(self, seed, frac):
        X, y = data(seed, 30, 45, noise=2.0)
        lam = frac * est.lasso_lambda_max(X, y)
        fit = est.fit_lasso(X, y, lam)
        mu, sd = X.mean(0), X.std(0)
        Xs = (X - mu) / sd
        b = fit.coefficients * sd
        grad = Xs.T @ (y - y.mean() - Xs @ b) / len(y)
        zero = b == 0
        assert np.all(np.abs(grad[zero]) <= lam + 1e-6)
        np.testing.assert_allclose(grad[~zero], lam * np.sign(b[~zero]), atol=1e-5)

    @pytest.mark.parametrize("seed", [0, 3, 5])
    def test_wide_design_near_interpolation(self, seed):
        # the default grid's smallest penalty leaves about n active predictors
        X = draw_sample(FactorModelSpec(n=90, p=500, p0=500, tau=0.5, noise_seed=seed)).X
        y = X[:, :5].sum(1) + np.random.default_rng(seed).standard_normal(90)
        lam = est.default_lasso_grid(X, y)[-1]
        fit = est.fit_lasso(X, y, lam)
        mu, sd = X.mean(0), X.std(0)
        Xs = (X - mu) / sd
        b = fit.coefficients * sd
        grad = Xs.T @ (y - y.mean() - Xs @ b) / len(y)
        assert np.count_nonzero(b) >= 80
        assert np.all(np.abs(grad) <= lam * (1 + 1e-3))
        assert fit.metadata["sweeps"] < est.LASSO_MAX_SWEEPS

    def test_small_penalty_approaches_ols(self):
        X, y = data(15, 80, 5)
        lmax = est.lasso_lambda_max(X, y)
        gaps = [np.linalg.norm(est.fit_lasso(X, y, f * lmax).coefficients - est.fit_ols(X, y).coefficients)
                for f in (1e-2, 1e-4, 1e-6)]
        assert gaps[0] > gaps[1] > gaps[2] and gaps[2] < 1e-4

    def test_non_convergence_carries_iterate(self):
        X, y = data(16, 30, 20)
        with pytest.raises(NumericalError) as info:
            est.fit_lasso(X, y, 1e-4 * est.lasso_lambda_max(X, y), tol=1e-15, max_sweeps=2)
        assert info.value.iterate is not None and info.value.iterate.shape == (20,)

    def test_cv_tie_goes_to_larger_penalty(self):
        X, y = data(17, 40, 5)
        lmax = est.lasso_lambda_max(X, y)
        fit = est.fit_lasso_cv(X, y, CvConfig(folds=4, grid=[10 * lmax, 20 * lmax, 30 * lmax]))
        assert fit.metadata["lambda"] == 30 * lmax

    def test_cv_selects_sparse_truth(self):
        g = np.random.default_rng(18)
        X = g.standard_normal((120, 30))
        y = 3 * X[:, 0] - 2 * X[:, 1] + 0.5 * g.standard_normal(120)
        fit = est.fit_lasso_cv(X, y, CvConfig(folds=5))
        assert abs(fit.coefficients[0] - 3) < 0.3 and abs(fit.coefficients[1] + 2) < 0.3
        assert np.all(np.abs(fit.coefficients[2:]) < 0.2)


class TestPca:
    def test_factor_count_recovery(self):
        hits = 0
        for seed in range(100):
            s = draw_sample(FactorModelSpec(n=100, p=200, p0=200, tau=0.0, noise_seed=seed, loading_seed=seed))
            hits += est.fit_pca_regression(s.X, s.y).metadata["k"] == 3
        assert hits >= 90

    def test_rank_one(self):
        g = np.random.default_rng(19)
        X = np.outer(g.standard_normal(30), g.uniform(1, 2, 8))
        Xs = (X - X.mean(0)) / X.std(0)
        pc = np.linalg.svd(Xs, full_matrices=False)[0][:, 0]
        y = 5 * pc + 1.0
        fit = est.fit_pca_regression(X, y, k=1)
        assert np.max(np.abs(fit.predict(X) - y)) < 1e-8

    @pytest.mark.parametrize("k", [0, 11])
    def test_k_out_of_range(self, k):
        X, y = data(20, 10, 12)
        with pytest.raises(InvalidInputError):
            est.fit_pca_regression(X, y, k=k)

    def test_oos_factor_route_agrees(self):
        spec = FactorModelSpec(n=100, p=400, p0=400, tau=0.0, noise_seed=3)
        s = draw_sample(spec)
        fit = est.fit_pca_regression(s.X, s.y, k=3)
        _, _, F_new = draw_oos(spec, 20, seed=4)
        x_new = F_new @ s.Lambda.T
        _, f_hat = est.pca_factors(s.X, x_new, 3)
        y_route = s.y.mean() + f_hat @ np.array(fit.metadata["factor_coefficients"])
        np.testing.assert_allclose(fit.predict(x_new), y_route, atol=1e-6)

    @pytest.mark.parametrize("crit", ["pc_p1", "ic_p1"])
    def test_information_criteria_variants(self, crit):
        hits = 0
        for seed in range(30):
            s = draw_sample(FactorModelSpec(n=100, p=150, p0=150, noise_seed=seed, loading_seed=seed))
            hits += est.fit_pca_regression(s.X, s.y, criterion=crit).metadata["k"] == 3
        assert hits >= 27

    def test_unknown_criterion(self):
        s = draw_sample(FactorModelSpec(n=50, p=60, p0=60))
        with pytest.raises(InvalidInputError):
            est.fit_pca_regression(s.X, s.y, criterion="bic")


@pytest.mark.parametrize("method", ["pseudo_ols", "ols", "ridge", "lasso", "pca"])
class TestAllMethods:
    def test_location_equivariant(self, method):
        X, y = data(21, 40, 6, noise=2.0)
        Xt = np.random.default_rng(22).standard_normal((10, 6))
        cv = CvConfig(folds=4, seed=1)
        a = est.fit(method, X, y, cv=cv).predict(Xt)
        b = est.fit(method, X, y + 7.5, cv=cv).predict(Xt)
        np.testing.assert_allclose(b, a + 7.5, atol=1e-7)

    def test_deterministic(self, method):
        X, y = data(23, 40, 6, noise=2.0)
        cv = CvConfig(folds=4, seed=1)
        assert est.fit(method, X, y, cv=cv).to_json() == est.fit(method, X, y, cv=cv).to_json()
