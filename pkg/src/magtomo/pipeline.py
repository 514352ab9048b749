"""High-level steps shared by the CLI, the experiment scripts and the acceptance suite.

Predictions file (``BPRD``, little-endian)::

    b"BPRD" u32 version=1
    u64 R, u64 N
    u64[R]    dataset row index of each prediction
    f64[R*N]  continuous maps in original (de-standardized) units
    u64 len, utf-8 JSON metadata (model name, split, n_z, ...)
"""

import csv
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import dither, linear
from ._util import BinaryReader, BinaryWriter, derive_seed
from .dataset import Dataset, fit_standardizer, physics_from_meta, regenerate_readings, select_sensors
from .errors import ConfigError, MagtomoError, ShapeMismatchError
from .inn.model import InnModel
from .inn.train import TrainConfig, train
from .physics import checkerboard_indices

log = logging.getLogger(__name__)


@dataclass
class Predictions:
    rows: np.ndarray  # (R,) dataset row indices
    values: np.ndarray  # (R, N)
    meta: dict = field(default_factory=dict)

    @property
    def model(self):
        return self.meta.get("model", "model")

    def write(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            w = BinaryWriter(fh)
            w.magic("BPRD")
            w.u64(self.values.shape[0])
            w.u64(self.values.shape[1])
            w.array(self.rows, np.uint64)
            w.array(self.values, np.float64)
            w.json(self.meta)
        return path

    @classmethod
    def read(cls, path):
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"predictions file not found: {path}")
        with open(path, "rb") as fh:
            r = BinaryReader(fh, str(path))
            r.magic("BPRD")
            n_rows, n = r.u64(), r.u64()
            rows = r.array(np.uint64, (n_rows,)).astype(np.int64)
            values = r.array(np.float64, (n_rows, n))
            meta = r.json()
        return cls(rows, values, meta)


def standardized(ds, st, which):
    idx, x, y = ds.rows(which)
    return idx, st.apply_x(x), st.apply_y(y)


def train_inn(ds, cfg, seed=None, k=None, progress=None):
    """Fit a fresh INN on the train split; returns ``(model, result, standardizer)``."""
    inn = cfg.inn
    seed = inn.seed if seed is None else int(seed)
    k = inn.k if k is None else int(k)
    st = fit_standardizer(ds)
    _, xt, yt = standardized(ds, st, "train")
    _, xv, yv = standardized(ds, st, "val")
    model = InnModel(ds.n_features, ds.n_sensors, k=k, hidden=inn.hidden, s_clamp=inn.s_clamp,
                     seed=derive_seed(seed, 10), mixer_init=inn.mixer_init)
    tcfg = TrainConfig.from_inn_config(inn)
    tcfg.seed = seed
    result = train(model, xt, yt, xv, yv, tcfg, progress=progress)
    return model, result, st


def fit_linear(ds, cfg, kind, seed=None):
    lin = cfg.linear
    seed = lin.seed if seed is None else int(seed)
    st = fit_standardizer(ds)
    _, xt, yt = standardized(ds, st, "train")
    if kind == "tikhonov":
        model = linear.fit_tikhonov(yt, xt, lin.lambda_grid, folds=lin.folds, seed=seed)
    elif kind == "elasticnet":
        model = linear.fit_elasticnet(yt, xt, lin.lambda_grid, lin.l1_ratio_grid, folds=lin.folds, seed=seed,
                                      tol=lin.tol, max_iter=lin.max_iter)
    else:
        raise ConfigError(f"unknown linear model kind {kind!r}")
    return model, st


def reference_predictions(ds, kind, which="val"):
    """Built-in references: ``groundtruth`` (perfect model) or ``mean`` (train-mean map)."""
    idx, x, _ = ds.rows(which)
    if kind == "groundtruth":
        values = x.astype(np.float64)
    elif kind == "mean":
        values = np.tile(fit_standardizer(ds).mean_x, (len(idx), 1))
    else:
        raise ConfigError(f"unknown reference predictor {kind!r}")
    return Predictions(idx, values, {"model": kind, "split": which})


def predict(model, ds, which="val", n_z=1, seed=0, name=None):
    """Continuous maps for one split, in original units."""
    st = fit_standardizer(ds)
    idx, _, y = standardized(ds, st, which)
    if isinstance(model, InnModel):
        if model.m != ds.n_sensors or model.n != ds.n_features:
            raise ShapeMismatchError(
                f"checkpoint expects (N={model.n}, M={model.m}); dataset has (N={ds.n_features}, M={ds.n_sensors})")
        rng = np.random.default_rng(derive_seed(seed, 41))
        values = st.invert_x(model.reconstruct(y, rng, n_z=n_z))
        meta = {"model": name or "inn", "split": which, "n_z": n_z, "seed": seed}
    else:
        n, m = model.dims
        if m != ds.n_sensors or n != ds.n_features:
            raise ShapeMismatchError(
                f"linear model expects (N={n}, M={m}); dataset has (N={ds.n_features}, M={ds.n_sensors})")
        values = linear.predict(model, y, st)
        meta = {"model": name or model.kind, "split": which}
    return Predictions(idx, values, meta)


def evaluate(preds, ds, cfg, seed=None):
    """Dither log-likelihood of each prediction file's groundtruth rows."""
    dcfg = dither.DitherConfig.from_eval_config(cfg.eval)
    if seed is not None:
        dcfg.seed = int(seed)
    out = []
    for p in preds:
        if p.values.shape[1] != ds.n_features:
            raise ShapeMismatchError(f"predictions have N={p.values.shape[1]}, dataset N={ds.n_features}")
        if len(p.rows) and (p.rows.min() < 0 or p.rows.max() >= ds.n_rows):
            raise ShapeMismatchError(f"prediction row index out of range for T={ds.n_rows}")
        out.append(dither.evaluate_model(p.values, ds.x[p.rows], ds.grid_shape, dcfg, p.model, p.rows))
    return out


def sensor_subset(n_total, n_keep, rows, cols, explicit=None):
    """Column indices for an ``n_keep``-sensor layout of the ``rows x cols`` array."""
    if n_keep == n_total:
        return None
    if explicit is not None:
        if len(explicit) != n_keep:
            raise ConfigError(f"ablation.sensor_indices has {len(explicit)} entries, need {n_keep}")
        return list(explicit)
    board = checkerboard_indices(rows, cols)
    if len(board) != n_keep:
        raise ConfigError(f"no default {n_keep}-sensor layout for a {rows}x{cols} array; "
                          "give ablation.sensor_indices")
    return board.tolist()


ABLATION_COLUMNS = ["d_sensor_mm", "n_sensors", "k", "val_loss", "mean_loglik", "seed", "status"]


def run_ablation(ds, cfg, seed=None, progress=None):
    """Train one fresh INN per (d_sensor, sensor count, k) cell on the same maps.

    A failed cell is reported with its error in ``status`` and the sweep goes on.
    """
    seed = cfg.inn.seed if seed is None else int(seed)
    ab = cfg.ablation
    phys = physics_from_meta(ds)
    rows = []
    for d in ab.d_sensor_mm:
        try:
            if float(d) == phys.d_sensor_mm and ds.meta.get("sensor_indices") is None:
                base = ds
            else:
                base = regenerate_readings(ds, replace(phys, d_sensor_mm=float(d)))
            base_err = None
        except MagtomoError as exc:
            base, base_err = None, exc
        for n_s in ab.n_sensors:
            for k in ab.k:
                row = {"d_sensor_mm": float(d), "n_sensors": int(n_s), "k": int(k), "val_loss": float("nan"),
                       "mean_loglik": float("nan"), "seed": seed, "status": "ok"}
                t0 = time.perf_counter()
                try:
                    if base_err is not None:
                        raise base_err
                    keep = sensor_subset(base.n_sensors, int(n_s), phys.sensor_rows, phys.sensor_cols,
                                         ab.sensor_indices)
                    cell = base if keep is None else select_sensors(base, keep)
                    model, result, _ = train_inn(cell, cfg, seed=seed, k=k)
                    row["val_loss"] = float(result.best_val_loss)
                    preds = predict(model, cell, "val", n_z=cfg.inn.n_z, seed=seed)
                    row["mean_loglik"] = evaluate([preds], cell, cfg)[0].mean
                except MagtomoError as exc:
                    row["status"] = f"failed: {type(exc).__name__}: {exc}"
                    log.warning("ablation cell d=%s n=%s k=%s failed: %s", d, n_s, k, exc)
                if progress is not None:
                    progress(row, time.perf_counter() - t0)
                rows.append(row)
    return rows


def write_ablation(rows, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ABLATION_COLUMNS)
        for r in rows:
            w.writerow([repr(r["d_sensor_mm"]), r["n_sensors"], r["k"], repr(r["val_loss"]),
                        repr(r["mean_loglik"]), r["seed"], r["status"]])
    return path


def load_model(path):
    """A ``BINN`` or ``BLIN`` file, told apart by its magic."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"model file not found: {path}")
    with open(path, "rb") as fh:
        tag = fh.read(4)
    if tag == b"BINN":
        return InnModel.load(path)
    if tag == b"BLIN":
        return linear.LinearModel.load(path)
    raise ConfigError(f"{path}: not a model file (magic {tag!r})")


def load_dataset(path):
    return Dataset.read(path)


@dataclass
class BenchmarkResult:
    scores: dict  # model name -> dither.Scores on the validation split
    seconds: dict  # "tikhonov" / "elasticnet" = full CV fit, "inn" = training to early stop
    inn_result: object = None
    models: dict = field(default_factory=dict)


def run_benchmark(ds, cfg, progress=None):
    """Fit Tikhonov, ElasticNet and the INN on one dataset and score them on its validation split."""
    say = progress or (lambda msg: None)
    models, seconds, preds = {}, {}, []
    for kind in ("tikhonov", "elasticnet"):
        model, _ = fit_linear(ds, cfg, kind)
        models[kind], seconds[kind] = model, model.fit_seconds
        preds.append(predict(model, ds, "val"))
        say(f"{kind}: {seconds[kind]:.1f}s, lambda_l2={model.lambda_l2:.4g}, lambda_l1={model.lambda_l1:.4g}")
    model, result, _ = train_inn(ds, cfg)
    models["inn"], seconds["inn"] = model, result.wall_time
    preds.append(predict(model, ds, "val", n_z=cfg.inn.n_z, seed=cfg.inn.seed))
    say(f"inn: {result.wall_time:.1f}s, best epoch {result.best_epoch}, val L_x {result.best_val_loss:.4f}")
    preds.append(reference_predictions(ds, "mean", "val"))
    scores = {s.model: s for s in evaluate(preds, ds, cfg)}
    for name, s in scores.items():
        say(f"{name}: mean loglik {s.mean:.3f} (std {s.std:.3f})")
    return BenchmarkResult(scores, seconds, result, models)
