"""Multi-output Tikhonov (ridge) and ElasticNet regressions from readings to maps.

Both work on standardized rows with an unpenalised intercept (data are centred
per fit). Objectives, per output column ``x``::

    ridge:       1/2 ||x - Y w||^2 + lam/2 ||w||^2
    elasticnet:  1/2 ||x - Y w||^2 + lam*r ||w||_1 + lam*(1-r)/2 ||w||^2

so ElasticNet with ``r = 0`` is exactly the ridge problem at the same ``lam``.

Model file (``BLIN``)::

    b"BLIN" u32 version=1
    u8 kind (0 = tikhonov, 1 = elasticnet)
    u64 N, u64 M
    f64 lambda_l2, f64 lambda_l1
    f64[N*M] weights, f64[N] bias
    u64 len, utf-8 JSON cv_report
"""

import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._util import BinaryReader, BinaryWriter, derive_seed
from .errors import ConfigError, NumericalError, ShapeMismatchError

KINDS = ("tikhonov", "elasticnet")


class ConvergenceWarning(UserWarning):
    pass


@dataclass
class LinearModel:
    weights: np.ndarray  # (N, M)
    bias: np.ndarray  # (N,)
    kind: str
    lambda_l2: float
    lambda_l1: float = 0.0
    cv_report: dict = field(default_factory=dict)
    fit_seconds: float = 0.0  # wall time of CV + final fit; not persisted

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown linear model kind {self.kind!r}")
        if self.kind == "tikhonov" and self.lambda_l1 != 0:
            raise ConfigError("a Tikhonov model has no L1 penalty")
        if not np.all(np.isfinite(self.weights)):
            raise NumericalError("non-finite weights")

    @property
    def dims(self):
        return self.weights.shape

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            w = BinaryWriter(fh)
            w.magic("BLIN")
            w.u8(KINDS.index(self.kind))
            n, m = self.weights.shape
            w.u64(n)
            w.u64(m)
            w.f64(self.lambda_l2)
            w.f64(self.lambda_l1)
            w.array(self.weights, np.float64)
            w.array(self.bias, np.float64)
            w.json(self.cv_report)
        return path

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"linear model not found: {path}")
        with open(path, "rb") as fh:
            r = BinaryReader(fh, str(path))
            r.magic("BLIN")
            kind = KINDS[r.u8()]
            n, m = r.u64(), r.u64()
            l2, l1 = r.f64(), r.f64()
            weights = r.array(np.float64, (n, m))
            bias = r.array(np.float64, (n,))
            report = r.json()
        return cls(weights, bias, kind, l2, l1, report)


def _center(y, x):
    ym, xm = y.mean(axis=0), x.mean(axis=0)
    return y - ym, x - xm, ym, xm


def ridge_weights(y, x, lam):
    """(N, M) weights and (N,) bias of the ridge fit x ~ W y + b."""
    yc, xc, ym, xm = _center(np.asarray(y, float), np.asarray(x, float))
    m = yc.shape[1]
    w = np.linalg.solve(yc.T @ yc + lam * np.eye(m), yc.T @ xc).T
    return w, xm - w @ ym


def _fold_ids(n_rows, folds, seed):
    if n_rows < folds:
        raise ConfigError(f"need at least {folds} training rows for {folds}-fold CV, got {n_rows}")
    perm = np.random.default_rng(derive_seed(seed, 21)).permutation(n_rows)
    ids = np.empty(n_rows, dtype=np.int64)
    ids[perm] = np.arange(n_rows) % folds
    return ids


def _rmse(x, pred):
    return float(np.sqrt(np.mean((x - pred) ** 2)))


def _select(grid_scores, keys):
    """Index of the lowest score; ties go to the later (larger-lambda) key."""
    scores = np.asarray(grid_scores)
    best = scores.min()
    tied = [i for i, s in enumerate(scores) if s <= best * (1 + 1e-12) + 1e-300]
    return max(tied, key=lambda i: keys[i])


def fit_tikhonov(y, x, lambda_grid, folds=5, seed=0):
    """Ridge with lambda chosen by k-fold CV (lowest mean fold RMSE)."""
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    lambdas = sorted(float(v) for v in lambda_grid)
    if not lambdas or lambdas[0] <= 0:
        raise ConfigError("lambda_grid must be non-empty and positive")
    t0 = time.perf_counter()
    ids = _fold_ids(len(y), folds, seed)
    scores = np.zeros((folds, len(lambdas)))
    for f in range(folds):
        tr, te = ids != f, ids == f
        yc, xc, ym, xm = _center(y[tr], x[tr])
        evals, evecs = np.linalg.eigh(yc.T @ yc)
        proj = evecs.T @ (yc.T @ xc)  # (M, N)
        for j, lam in enumerate(lambdas):
            w = (evecs @ (proj / (evals + lam)[:, None])).T
            scores[f, j] = _rmse(x[te], (y[te] - ym) @ w.T + xm)
    mean = scores.mean(axis=0)
    best = _select(mean, lambdas)
    w, b = ridge_weights(y, x, lambdas[best])
    report = {
        "kind": "tikhonov", "folds": folds, "seed": seed, "lambda_grid": lambdas,
        "mean_rmse": mean.tolist(), "selected_lambda": lambdas[best],
    }
    return LinearModel(w, b, "tikhonov", lambdas[best], 0.0, report, time.perf_counter() - t0)


def soft_threshold(v, thresh):
    return np.sign(v) * np.maximum(np.abs(v) - thresh, 0.0)


def elasticnet_objective(y, x, w, lam, l1_ratio):
    """Summed-over-outputs ElasticNet objective for centred data and (M, N) weights."""
    r = x - y @ w
    return (0.5 * np.sum(r * r) + lam * l1_ratio * np.sum(np.abs(w))
            + 0.5 * lam * (1 - l1_ratio) * np.sum(w * w))


def coordinate_descent(gram, cross, lam, l1_ratio, w0=None, tol=1e-6, max_iter=1000, callback=None):
    """Cyclic coordinate descent on all outputs at once.

    ``gram`` is Y^T Y (M, M), ``cross`` is Y^T X (M, N); returns ``(W, sweeps,
    converged)`` with W of shape (M, N). Each output column is an independent
    problem; they share the sweep loop. Converged when the largest coefficient
    change in a sweep is below ``tol``.
    """
    m = gram.shape[0]
    w = np.zeros_like(cross) if w0 is None else w0.copy()
    q = gram @ w  # running Y^T Y W
    l1 = lam * l1_ratio
    denom = np.diag(gram) + lam * (1.0 - l1_ratio)
    for sweep in range(1, max_iter + 1):
        max_delta = 0.0
        for j in range(m):
            rho = cross[j] - q[j] + gram[j, j] * w[j]
            new = soft_threshold(rho, l1) / denom[j]
            delta = new - w[j]
            if np.any(delta):
                q += np.outer(gram[:, j], delta)
                w[j] = new
                max_delta = max(max_delta, float(np.abs(delta).max()))
        if callback is not None:
            callback(sweep, w)
        if max_delta < tol:
            return w, sweep, True
    return w, max_iter, False


def _en_path(yc, xc, lambdas_desc, l1_ratio, tol, max_iter):
    """Warm-started solutions along a decreasing lambda path."""
    gram, cross = yc.T @ yc, yc.T @ xc
    w = None
    out = []
    for lam in lambdas_desc:
        w, sweeps, ok = coordinate_descent(gram, cross, lam, l1_ratio, w0=w, tol=tol, max_iter=max_iter)
        out.append((w.copy(), sweeps, ok))
    return out


def fit_elasticnet(y, x, lambda_grid, l1_ratio_grid, folds=5, seed=0, tol=1e-6, max_iter=1000):
    """ElasticNet with (lambda, l1_ratio) chosen by k-fold CV."""
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    lambdas = sorted((float(v) for v in lambda_grid), reverse=True)
    ratios = [float(r) for r in l1_ratio_grid]
    if not lambdas or lambdas[-1] <= 0:
        raise ConfigError("lambda_grid must be non-empty and positive")
    if not ratios or not all(0 <= r <= 1 for r in ratios):
        raise ConfigError("l1_ratio_grid entries must lie in [0, 1]")
    t0 = time.perf_counter()
    ids = _fold_ids(len(y), folds, seed)
    scores = np.zeros((folds, len(ratios), len(lambdas)))
    not_converged = []
    for f in range(folds):
        tr, te = ids != f, ids == f
        yc, xc, ym, xm = _center(y[tr], x[tr])
        for a, ratio in enumerate(ratios):
            for b, (w, sweeps, ok) in enumerate(_en_path(yc, xc, lambdas, ratio, tol, max_iter)):
                scores[f, a, b] = _rmse(x[te], (y[te] - ym) @ w + xm)
                if not ok:
                    not_converged.append({"fold": f, "l1_ratio": ratio, "lambda": lambdas[b]})
    mean = scores.mean(axis=0)
    keys = [(lam, -ratio) for ratio in ratios for lam in lambdas]  # ties: larger lambda, then smaller ratio
    best = _select(mean.ravel(), keys)
    ratio, lam = ratios[best // len(lambdas)], lambdas[best % len(lambdas)]

    yc, xc, ym, xm = _center(y, x)
    path = [v for v in lambdas if v >= lam]
    w, sweeps, ok = _en_path(yc, xc, path, ratio, tol, max_iter)[-1]
    if not ok:
        not_converged.append({"fold": None, "l1_ratio": ratio, "lambda": lam})
    if not_converged:
        warnings.warn(f"ElasticNet coordinate descent hit max_iter={max_iter} in {len(not_converged)} fits; "
                      "best iterate kept", ConvergenceWarning, stacklevel=2)
    weights = w.T
    report = {
        "kind": "elasticnet", "folds": folds, "seed": seed, "lambda_grid": lambdas,
        "l1_ratio_grid": ratios, "mean_rmse": mean.tolist(), "selected_lambda": lam,
        "selected_l1_ratio": ratio, "final_sweeps": sweeps, "not_converged": not_converged,
        "tol": tol, "max_iter": max_iter,
    }
    return LinearModel(weights, xm - weights @ ym, "elasticnet", lam * (1 - ratio), lam * ratio, report,
                       time.perf_counter() - t0)


def predict(model, y_std, standardizer=None, clip=False):
    """x_hat = W y + b in standardized space, mapped back to original units if a standardizer is given."""
    y_std = np.atleast_2d(np.asarray(y_std, dtype=np.float64))
    n, m = model.weights.shape
    if y_std.shape[1] != m:
        raise ShapeMismatchError(f"model expects {m} sensor features, got {y_std.shape[1]}")
    out = y_std @ model.weights.T + model.bias
    if standardizer is not None:
        if len(standardizer.mean_x) != n:
            raise ShapeMismatchError(f"standardizer has N={len(standardizer.mean_x)}, model N={n}")
        out = standardizer.invert_x(out)
    if clip:
        out = np.clip(out, 0.0, 1.0)
    return out
