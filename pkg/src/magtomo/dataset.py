"""Paired (conductivity map, sensor reading) datasets and their on-disk format.

File layout (little-endian)::

    b"BTOM" u32 version=1
    u64 T, u64 N, u64 M
    float32[T*N] x     row-major
    float32[T*M] y
    u8[T]        split (0 = train, 1 = validation)
    u64 len, utf-8 JSON metadata

The standardizer uses the same container style under magic ``BSTD``:
u64 N, u64 M, f64 epsilon, then float64 mean_x, std_x, mean_y, std_y.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import physics
from ._util import BinaryReader, BinaryWriter, derive_seed
from .config import PhysicsConfig, SceneConfig
from .errors import ConfigError, InfeasibleSceneError, NumericalError, ShapeMismatchError
from .scene import binarize, rasterize, sample_scene

log = logging.getLogger(__name__)

TRAIN, VAL = 0, 1


@dataclass
class Dataset:
    x: np.ndarray  # (T, N) float32, binary maps
    y: np.ndarray  # (T, M) float32, tesla
    split: np.ndarray  # (T,) uint8
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float32)
        self.y = np.asarray(self.y, dtype=np.float32)
        self.split = np.asarray(self.split, dtype=np.uint8)
        if self.x.ndim != 2 or self.y.ndim != 2 or len(self.x) != len(self.y) or len(self.split) != len(self.x):
            raise ShapeMismatchError(
                f"inconsistent dataset arrays: x{self.x.shape}, y{self.y.shape}, split{self.split.shape}")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise NumericalError("dataset contains non-finite values")

    @property
    def n_rows(self):
        return self.x.shape[0]

    @property
    def n_features(self):
        return self.x.shape[1]

    @property
    def n_sensors(self):
        return self.y.shape[1]

    @property
    def train_idx(self):
        return np.flatnonzero(self.split == TRAIN)

    @property
    def val_idx(self):
        return np.flatnonzero(self.split == VAL)

    @property
    def grid_shape(self):
        return tuple(self.meta.get("grid_shape", (1, self.n_features)))

    def rows(self, which):
        idx = {"train": self.train_idx, "val": self.val_idx, "all": np.arange(self.n_rows)}[which]
        return idx, self.x[idx], self.y[idx]

    def write(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            w = BinaryWriter(fh)
            w.magic("BTOM")
            w.u64(self.n_rows)
            w.u64(self.n_features)
            w.u64(self.n_sensors)
            w.array(self.x, np.float32)
            w.array(self.y, np.float32)
            w.array(self.split, np.uint8)
            w.json(self.meta)
        return path

    @classmethod
    def read(cls, path):
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"dataset file not found: {path}")
        with open(path, "rb") as fh:
            r = BinaryReader(fh, str(path))
            r.magic("BTOM")
            t, n, m = r.u64(), r.u64(), r.u64()
            x = r.array(np.float32, (t, n))
            y = r.array(np.float32, (t, m))
            split = r.array(np.uint8, (t,))
            meta = r.json()
        return cls(x=x, y=y, split=split, meta=meta)


def split_tags(n_rows, val_fraction):
    """Train rows first, then ``floor(val_fraction * n_rows)`` validation rows."""
    n_val = math.floor(val_fraction * n_rows)
    tags = np.zeros(n_rows, dtype=np.uint8)
    tags[n_rows - n_val:] = VAL
    return tags


def _simulate_scene(scene_cfg, phys_cfg, forward_on_binary, seed):
    spec = scene_cfg.channel()
    disks = sample_scene(spec, scene_cfg.disks(), seed)
    cont = rasterize(spec, disks, subsample=scene_cfg.subsample)
    target = cont
    if scene_cfg.target_subsample != scene_cfg.subsample:
        target = rasterize(spec, disks, subsample=scene_cfg.target_subsample)
    binary = binarize(target, scene_cfg.binarize_threshold)
    source = binary if forward_on_binary else cont
    reading = physics.forward(source, spec, phys_cfg.sensors(), phys_cfg.applied_current_a,
                              sigma_floor=phys_cfg.sigma_floor, tol=phys_cfg.solver_tol,
                              max_iter=phys_cfg.solver_max_iter)
    return binary.flat(), reading.values


def generate(cfg, n_scenes=None, seed=None):
    """Simulate ``n_scenes`` geometries, shuffle them and tag an 80/20 train/validation split.

    Scenes whose channel is blocked are redrawn with a fresh sub-seed, up to
    ``dataset.max_resamples`` times each.
    """
    n_scenes = cfg.dataset.n_scenes if n_scenes is None else int(n_scenes)
    seed = cfg.dataset.seed if seed is None else int(seed)
    if n_scenes < 1:
        raise ConfigError("n_scenes must be >= 1")
    n, m = cfg.n_features, cfg.n_sensors
    xs = np.empty((n_scenes, n), dtype=np.float32)
    ys = np.empty((n_scenes, m), dtype=np.float32)
    scene_seeds = []
    resamples = 0
    for i in range(n_scenes):
        for attempt in range(cfg.dataset.max_resamples + 1):
            sub = derive_seed(seed, 0, i, attempt)
            try:
                xs[i], ys[i] = _simulate_scene(cfg.scene, cfg.physics, cfg.dataset.forward_on_binary, sub)
                break
            except InfeasibleSceneError:
                resamples += 1
                log.info("scene %d attempt %d blocked; resampling", i, attempt)
        else:
            raise InfeasibleSceneError(f"scene {i}: every one of {cfg.dataset.max_resamples + 1} draws was blocked")
        scene_seeds.append(sub)

    perm = np.random.default_rng(derive_seed(seed, 1)).permutation(n_scenes)
    meta = {
        "seed": seed,
        "n_scenes": n_scenes,
        "resample_count": resamples,
        "scene_seeds": [scene_seeds[p] for p in perm],
        "grid_shape": [cfg.scene.grid_ny, cfg.scene.grid_nx],
        "sensor_indices": None,
        "config": {"scene": vars(cfg.scene).copy(), "physics": vars(cfg.physics).copy(),
                   "dataset": vars(cfg.dataset).copy()},
    }
    return Dataset(x=xs[perm], y=ys[perm], split=split_tags(n_scenes, cfg.dataset.val_fraction), meta=meta)


def regenerate_readings(ds, phys_cfg):
    """Same maps and split, readings recomputed under different sensor physics."""
    conf = ds.meta["config"]
    scene_cfg = SceneConfig(**conf["scene"])
    on_binary = conf["dataset"]["forward_on_binary"]
    ys = np.empty((ds.n_rows, phys_cfg.sensor_rows * phys_cfg.sensor_cols), dtype=np.float32)
    for i, sub in enumerate(ds.meta["scene_seeds"]):
        x, ys[i] = _simulate_scene(scene_cfg, phys_cfg, on_binary, sub)
        if not np.array_equal(x, ds.x[i]):
            raise NumericalError(f"row {i}: regenerated map differs from stored map")
    meta = dict(ds.meta)
    meta["config"] = dict(conf, physics=vars(phys_cfg).copy())
    meta["sensor_indices"] = None
    return replace(ds, y=ys, meta=meta)


def select_sensors(ds, indices):
    """Keep only the given sensor columns (e.g. the 50-sensor checkerboard)."""
    indices = [int(i) for i in indices]
    if not indices or max(indices) >= ds.n_sensors or min(indices) < 0:
        raise ConfigError(f"sensor indices out of range for M={ds.n_sensors}")
    meta = dict(ds.meta, sensor_indices=indices)
    return replace(ds, y=ds.y[:, indices], meta=meta)


def physics_from_meta(ds):
    return PhysicsConfig(**ds.meta["config"]["physics"])


@dataclass
class Standardizer:
    mean_x: np.ndarray
    std_x: np.ndarray
    mean_y: np.ndarray
    std_y: np.ndarray
    epsilon: float = 1e-12

    def apply_x(self, rows):
        return (np.asarray(rows, dtype=np.float64) - self.mean_x) / self.std_x

    def apply_y(self, rows):
        return (np.asarray(rows, dtype=np.float64) - self.mean_y) / self.std_y

    def invert_x(self, rows):
        return np.asarray(rows, dtype=np.float64) * self.std_x + self.mean_x

    def invert_y(self, rows):
        return np.asarray(rows, dtype=np.float64) * self.std_y + self.mean_y

    @property
    def dims(self):
        return len(self.mean_x), len(self.mean_y)

    def write(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            w = BinaryWriter(fh)
            w.magic("BSTD")
            w.u64(len(self.mean_x))
            w.u64(len(self.mean_y))
            w.f64(self.epsilon)
            for arr in (self.mean_x, self.std_x, self.mean_y, self.std_y):
                w.array(arr, np.float64)
        return path

    @classmethod
    def read(cls, path):
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"standardizer file not found: {path}")
        with open(path, "rb") as fh:
            r = BinaryReader(fh, str(path))
            r.magic("BSTD")
            n, m = r.u64(), r.u64()
            eps = r.f64()
            mx, sx = r.array(np.float64, (n,)), r.array(np.float64, (n,))
            my, sy = r.array(np.float64, (m,)), r.array(np.float64, (m,))
        return cls(mx, sx, my, sy, eps)


def _moments(rows, epsilon):
    rows = np.asarray(rows, dtype=np.float64)
    mean = rows.mean(axis=0)
    const = np.all(rows == rows[:1], axis=0)
    mean[const] = rows[0, const]  # exact, so constant columns standardize to exactly 0
    std = rows.std(axis=0)
    # a degenerate column keeps unit scale: an epsilon-sized divisor would turn any
    # later deviation (e.g. a validation-only zero) into ~1/epsilon
    std[std < epsilon] = 1.0
    return mean, std


def fit_standardizer(ds, epsilon=1e-12):
    """Per-feature mean/std of the train split only."""
    idx = ds.train_idx
    if len(idx) == 0:
        raise ConfigError("cannot fit a standardizer on an empty train split")
    mx, sx = _moments(ds.x[idx], epsilon)
    my, sy = _moments(ds.y[idx], epsilon)
    return Standardizer(mx, sx, my, sy, epsilon)
