"""Randomised error diffusion and the dither log-likelihood score.

A continuous map is binarised many times by Floyd-Steinberg-style error
diffusion whose four neighbour fractions are drawn from a Dirichlet
distribution. The per-pixel frequency of ones across the ensemble, smoothed
away from 0 and 1, is a Bernoulli density; the groundtruth is scored by its
log-likelihood under it.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._util import derive_seed
from .errors import ConfigError, ShapeMismatchError

# neighbour offsets (drow, dcol): right, below-left, below, below-right
NEIGHBOURS = ((0, 1), (1, -1), (1, 0), (1, 1))
CLASSIC_FRACTIONS = np.array([7.0, 3.0, 5.0, 1.0]) / 16.0


@dataclass
class DitherConfig:
    ensemble_size: int = 100
    dirichlet_alpha: tuple = (1.0, 1.0, 1.0, 1.0)
    seed: int = 0
    granularity: str = "pixel"  # fresh fractions per pixel, or one vector per member
    epsilon: float = None  # density floor; defaults to 1 / (ensemble_size + 2)

    def __post_init__(self):
        self.dirichlet_alpha = tuple(float(a) for a in self.dirichlet_alpha)
        if self.ensemble_size < 1:
            raise ConfigError("ensemble_size must be >= 1")
        if len(self.dirichlet_alpha) != 4 or min(self.dirichlet_alpha) <= 0:
            raise ConfigError("dirichlet_alpha needs four positive entries")
        if self.granularity not in ("pixel", "member"):
            raise ConfigError("granularity must be 'pixel' or 'member'")
        if not 0 < self.smoothing < 0.5:
            raise ConfigError("epsilon must lie in (0, 0.5)")

    @property
    def smoothing(self):
        return 1.0 / (self.ensemble_size + 2) if self.epsilon is None else float(self.epsilon)

    @classmethod
    def from_eval_config(cls, ev):
        return cls(ensemble_size=ev.ensemble_size, dirichlet_alpha=tuple(ev.dirichlet_alpha), seed=ev.seed,
                   granularity=ev.granularity, epsilon=ev.epsilon)


def dirichlet_sampler(alpha=(1.0, 1.0, 1.0, 1.0), granularity="pixel"):
    alpha = np.asarray(alpha, dtype=np.float64)

    def sample(rng, shape):
        if granularity == "member":
            return np.broadcast_to(rng.dirichlet(alpha), (*shape, 4))
        return rng.dirichlet(alpha, size=shape)

    return sample


def constant_sampler(fractions=CLASSIC_FRACTIONS):
    fractions = np.asarray(fractions, dtype=np.float64)

    def sample(rng, shape):
        return np.broadcast_to(fractions, (*shape, 4))

    return sample


def _diffuse(images, fractions):
    """Error-diffuse a stack ``(E, H, W)`` with per-pixel fractions ``(E, H, W, 4)``."""
    work = np.clip(np.array(images, dtype=np.float64), 0.0, 1.0)
    e, h, w = work.shape
    out = np.zeros((e, h, w), dtype=np.uint8)
    for i in range(h):
        for j in range(w):
            old = work[:, i, j]
            new = old >= 0.5
            out[:, i, j] = new
            err = old - new
            for k, (di, dj) in enumerate(NEIGHBOURS):
                ii, jj = i + di, j + dj
                if ii < h and 0 <= jj < w:
                    work[:, ii, jj] += err * fractions[:, i, j, k]
    return out


def dither_once(grid, sampler=None, seed=0):
    """One binary map from a continuous grid (values clamped to [0, 1] first)."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ShapeMismatchError(f"dither_once expects a 2-D grid, got shape {grid.shape}")
    sampler = sampler or dirichlet_sampler()
    fr = sampler(np.random.default_rng(seed), grid.shape)
    return _diffuse(grid[None], np.asarray(fr)[None])[0]


@dataclass
class DitherEnsemble:
    members: np.ndarray  # (E, H, W) uint8
    pixel_freq: np.ndarray  # (H, W)
    density: np.ndarray  # (H, W), smoothed Bernoulli parameter in (0, 1)
    epsilon: float = field(default=0.0)


def build_ensemble(grid, cfg, seed=None, sampler=None):
    """``cfg.ensemble_size`` independent dithers, member ``i`` seeded by ``(seed, i)``."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ShapeMismatchError(f"build_ensemble expects a 2-D grid, got shape {grid.shape}")
    seed = cfg.seed if seed is None else seed
    sampler = sampler or dirichlet_sampler(cfg.dirichlet_alpha, cfg.granularity)
    fr = np.stack([sampler(np.random.default_rng(derive_seed(seed, i)), grid.shape)
                   for i in range(cfg.ensemble_size)])
    members = _diffuse(np.broadcast_to(grid, (cfg.ensemble_size, *grid.shape)), fr)
    freq = members.mean(axis=0)
    eps = cfg.smoothing
    return DitherEnsemble(members=members, pixel_freq=freq, density=eps + (1.0 - 2.0 * eps) * freq, epsilon=eps)


def log_likelihood(groundtruth, ensemble):
    """Natural-log Bernoulli likelihood of a binary groundtruth under the ensemble density."""
    gt = np.asarray(groundtruth, dtype=np.float64)
    q = ensemble.density
    if gt.shape != q.shape:
        raise ShapeMismatchError(f"groundtruth {gt.shape} vs ensemble {q.shape}")
    return float(np.sum(gt * np.log(q) + (1.0 - gt) * np.log1p(-q)))


@dataclass
class Scores:
    model: str
    sample_ids: np.ndarray
    loglik: np.ndarray

    @property
    def mean(self):
        return float(np.mean(self.loglik))

    @property
    def std(self):
        return float(np.std(self.loglik))


def evaluate_model(predictions, groundtruths, grid_shape, cfg, model="model", sample_ids=None):
    """Dither log-likelihood of every groundtruth row under its prediction's ensemble.

    Sample ``i`` uses seed ``(cfg.seed, sample_ids[i])`` so different models
    are scored with common random numbers.
    """
    predictions = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    groundtruths = np.atleast_2d(np.asarray(groundtruths, dtype=np.float64))
    if predictions.shape != groundtruths.shape:
        raise ShapeMismatchError(f"predictions {predictions.shape} vs groundtruths {groundtruths.shape}")
    if int(np.prod(grid_shape)) != predictions.shape[1]:
        raise ShapeMismatchError(f"grid {tuple(grid_shape)} does not hold {predictions.shape[1]} features")
    ids = np.arange(len(predictions)) if sample_ids is None else np.asarray(sample_ids)
    ll = np.empty(len(predictions))
    for r, (pred, gt) in enumerate(zip(predictions, groundtruths)):
        ens = build_ensemble(pred.reshape(grid_shape), cfg, seed=derive_seed(cfg.seed, 31, int(ids[r])))
        ll[r] = log_likelihood(gt.reshape(grid_shape), ens)
    return Scores(model=model, sample_ids=ids, loglik=ll)


def write_scores(scores, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "model", "loglik"])
        for s in scores:
            for sid, ll in zip(s.sample_ids, s.loglik):
                w.writerow([int(sid), s.model, repr(float(ll))])
    return path


def write_summary(scores, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "mean_loglik", "std_loglik", "n"])
        for s in scores:
            w.writerow([s.model, repr(s.mean), repr(s.std), len(s.loglik)])
    return path
