import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from magtomo.dataset import Standardizer
from magtomo.errors import ConfigError, ShapeMismatchError
from magtomo.linear import (
    ConvergenceWarning, LinearModel, coordinate_descent, elasticnet_objective, fit_elasticnet, fit_tikhonov,
    predict, ridge_weights, soft_threshold,
)


def toy(rng, t=60, m=5, n=7, noise=0.1):
    y = rng.standard_normal((t, m))
    w = rng.standard_normal((n, m))
    x = y @ w.T + noise * rng.standard_normal((t, n)) + 0.5
    return y, x, w


def centred(y, x):
    return y - y.mean(0), x - x.mean(0)


def test_ridge_small_lambda_recovers_identity():
    rng = np.random.default_rng(0)
    y = rng.standard_normal((50, 4))
    w, b = ridge_weights(y, y.copy(), 1e-10)
    assert np.allclose(w, np.eye(4), atol=1e-8)
    assert np.allclose(b, 0, atol=1e-8)


def test_ridge_huge_lambda_predicts_the_mean(rng):
    y, x, _ = toy(rng)
    w, b = ridge_weights(y, x, 1e12)
    assert np.abs(w).max() < 1e-8
    assert np.allclose(b, x.mean(0), atol=1e-6)


def test_ridge_matches_normal_equations_on_3x2():
    y = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    x = np.array([[1.0], [2.0], [4.0]])
    lam = 0.5
    yc, xc = centred(y, x)
    want = np.linalg.inv(yc.T @ yc + lam * np.eye(2)) @ yc.T @ xc
    w, b = ridge_weights(y, x, lam)
    assert np.allclose(w, want.T, atol=1e-12)
    assert np.allclose(b, x.mean(0) - w @ y.mean(0), atol=1e-12)


def test_tikhonov_cv_picks_small_lambda_on_clean_data(rng):
    y, x, w = toy(rng, t=200, noise=0.01)
    model = fit_tikhonov(y, x, [1e-4, 1e-2, 1.0, 100.0], folds=5, seed=0)
    assert model.lambda_l2 <= 1e-2
    assert np.allclose(model.weights, w, atol=0.01)
    assert model.cv_report["selected_lambda"] == model.lambda_l2


def test_tikhonov_cv_rmse_increases_with_large_lambda(rng):
    y, x, _ = toy(rng, t=200, noise=0.01)
    model = fit_tikhonov(y, x, np.logspace(-2, 4, 7), folds=4, seed=1)
    rmse = model.cv_report["mean_rmse"]
    assert all(a <= b + 1e-12 for a, b in zip(rmse[1:], rmse[2:]))


def test_cv_is_seeded(rng):
    y, x, _ = toy(rng, noise=1.0)
    a = fit_tikhonov(y, x, np.logspace(-3, 3, 7), seed=4)
    b = fit_tikhonov(y, x, np.logspace(-3, 3, 7), seed=4)
    assert a.cv_report == b.cv_report


def test_bad_grids_rejected(rng):
    y, x, _ = toy(rng)
    with pytest.raises(ConfigError):
        fit_tikhonov(y, x, [])
    with pytest.raises(ConfigError):
        fit_tikhonov(y, x, [0.0, 1.0])
    with pytest.raises(ConfigError):
        fit_elasticnet(y, x, [1.0], [1.5])
    with pytest.raises(ConfigError):
        fit_tikhonov(y[:3], x[:3], [1.0], folds=5)


# coordinate descent ---------------------------------------------------------

@given(st.floats(-10, 10), st.floats(0, 5))
def test_soft_threshold_scalar(v, t):
    want = v - t if v > t else (v + t if v < -t else 0.0)
    assert soft_threshold(np.array(v), t) == pytest.approx(want, abs=1e-12)


def test_one_feature_lasso_closed_form():
    rng = np.random.default_rng(3)
    y = rng.standard_normal((40, 1))
    x = 2.0 * y[:, :1] + 0.3 * rng.standard_normal((40, 1))
    yc, xc = centred(y, x)
    lam = 5.0
    w, _, ok = coordinate_descent(yc.T @ yc, yc.T @ xc, lam, 1.0, tol=1e-12)
    want = soft_threshold(float(yc[:, 0] @ xc[:, 0]), lam) / float(yc[:, 0] @ yc[:, 0])
    assert ok
    assert w[0, 0] == pytest.approx(want, abs=1e-8)


def test_lasso_huge_lambda_zeroes_everything(rng):
    y, x, _ = toy(rng)
    yc, xc = centred(y, x)
    w, sweeps, ok = coordinate_descent(yc.T @ yc, yc.T @ xc, 1e6, 1.0)
    assert ok and sweeps == 1
    assert np.all(w == 0.0)


def test_l1_ratio_zero_is_ridge(rng):
    y, x, _ = toy(rng)
    yc, xc = centred(y, x)
    lam = 3.0
    w, _, ok = coordinate_descent(yc.T @ yc, yc.T @ xc, lam, 0.0, tol=1e-12, max_iter=10000)
    ridge, _ = ridge_weights(y, x, lam)
    assert ok
    assert np.max(np.abs(w.T - ridge)) < 1e-5


def test_objective_never_increases_across_sweeps(rng):
    y, x, _ = toy(rng, m=8, noise=0.5)
    yc, xc = centred(y, x)
    lam, ratio = 2.0, 0.7
    seen = []
    coordinate_descent(yc.T @ yc, yc.T @ xc, lam, ratio, tol=1e-10, max_iter=200,
                       callback=lambda k, w: seen.append(elasticnet_objective(yc, xc, w, lam, ratio)))
    start = elasticnet_objective(yc, xc, np.zeros((8, 7)), lam, ratio)
    seq = [start] + seen
    assert all(b <= a + 1e-9 * abs(a) for a, b in zip(seq, seq[1:]))


def test_cd_iteration_cap_is_reported(rng):
    y, x, _ = toy(rng, m=8)
    yc, xc = centred(y, x)
    _, sweeps, ok = coordinate_descent(yc.T @ yc, yc.T @ xc, 1e-3, 0.5, tol=1e-300, max_iter=3)
    assert sweeps == 3 and not ok
    with pytest.warns(ConvergenceWarning):
        fit_elasticnet(y, x, [1e-3], [0.5], folds=2, tol=1e-300, max_iter=3)


def test_elasticnet_fit_and_penalty_split(rng):
    y, x, w = toy(rng, t=150, noise=0.05)
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConvergenceWarning)
        model = fit_elasticnet(y, x, [1e-3, 1e-1, 10.0], [0.1, 0.9], folds=3, seed=0)
    lam = model.cv_report["selected_lambda"]
    ratio = model.cv_report["selected_l1_ratio"]
    assert model.lambda_l1 == pytest.approx(lam * ratio)
    assert model.lambda_l2 == pytest.approx(lam * (1 - ratio))
    assert np.allclose(model.weights, w, atol=0.05)


def test_elasticnet_sparsity_grows_with_lambda(rng):
    y, x, _ = toy(rng, m=10, noise=1.0)
    yc, xc = centred(y, x)
    g, c = yc.T @ yc, yc.T @ xc
    zeros = [int(np.sum(coordinate_descent(g, c, lam, 0.9)[0] == 0)) for lam in (0.1, 10.0, 100.0)]
    assert zeros[0] <= zeros[1] <= zeros[2]
    assert zeros[2] > zeros[0]


# prediction and persistence -------------------------------------------------

def test_predict_applies_standardizer_and_clip():
    model = LinearModel(np.array([[2.0, 0.0], [0.0, 1.0]]), np.array([0.0, 1.0]), "tikhonov", 1.0)
    stdz = Standardizer(np.array([1.0, 0.0]), np.array([2.0, 1.0]), np.zeros(2), np.ones(2))
    y = np.array([[1.0, -0.5]])
    assert np.allclose(predict(model, y), [[2.0, 0.5]])
    assert np.allclose(predict(model, y, stdz), [[5.0, 0.5]])
    assert np.allclose(predict(model, y, stdz, clip=True), [[1.0, 0.5]])
    with pytest.raises(ShapeMismatchError):
        predict(model, np.zeros((1, 3)))


def test_model_file_round_trip(rng, tmp_path):
    y, x, _ = toy(rng)
    model = fit_elasticnet(y, x, [0.1, 1.0], [0.5], folds=3)
    back = LinearModel.load(model.save(tmp_path / "m.blin"))
    assert back.kind == "elasticnet"
    assert back.weights.tobytes() == model.weights.tobytes()
    assert back.bias.tobytes() == model.bias.tobytes()
    assert (back.lambda_l1, back.lambda_l2) == (model.lambda_l1, model.lambda_l2)
    assert back.cv_report == model.cv_report
    assert (tmp_path / "m.blin").read_bytes()[:4] == b"BLIN"


def test_tikhonov_rejects_l1():
    with pytest.raises(ConfigError):
        LinearModel(np.zeros((2, 2)), np.zeros(2), "tikhonov", 1.0, 0.5)
