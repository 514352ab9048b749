"""Adam training of the reconstruction direction with the L_x loss and early stopping."""

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .._util import derive_seed
from ..errors import DivergenceError, NumericalOverflowError
from .model import InnModel, loss_and_grads, loss_lx

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 100
    learning_rate: float = 1e-4
    adam_beta1: float = 0.8
    adam_beta2: float = 0.9
    adam_eps: float = 1e-8
    max_epochs: int = 1000
    patience: int = 10
    hidden: int = 256
    s_clamp: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be >= 1")
        if self.learning_rate < 0 or self.adam_eps <= 0:
            raise ValueError("learning_rate must be >= 0 and adam_eps > 0")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("adam betas must lie in (0, 1)")

    @classmethod
    def from_inn_config(cls, inn):
        return cls(batch_size=inn.batch_size, learning_rate=inn.learning_rate, adam_beta1=inn.adam_beta1,
                   adam_beta2=inn.adam_beta2, adam_eps=inn.adam_eps, max_epochs=inn.max_epochs,
                   patience=inn.patience, hidden=inn.hidden, s_clamp=inn.s_clamp, seed=inn.seed)


class Adam:
    def __init__(self, params, lr, beta1, beta2, eps):
        self.params = params  # list of (name, array), updated in place
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {name: np.zeros_like(a) for name, a in params}
        self.v = {name: np.zeros_like(a) for name, a in params}
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, arr in self.params:
            g = grads[name]
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            arr -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainResult:
    model: InnModel
    curve: list = field(default_factory=list)  # (epoch, train_loss, val_loss)
    best_epoch: int = 0
    best_val_loss: float = float("nan")
    stopped_early: bool = False
    wall_time: float = 0.0
    clamp_events: int = 0


def train(model, x_train, y_train, x_val, y_val, cfg, progress=None):
    """Fit ``model`` in place on standardized rows and return the loss curves.

    Every step draws a fresh standard-normal latent per example. Validation
    uses one fixed latent set so epochs are comparable. The parameters of the
    best validation epoch are restored at the end.
    """
    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64)
    x_val = np.asarray(x_val, dtype=np.float64)
    y_val = np.asarray(y_val, dtype=np.float64)
    has_val = len(x_val) > 0
    rng = np.random.default_rng(derive_seed(cfg.seed, 11))
    z_val = np.random.default_rng(derive_seed(cfg.seed, 12)).standard_normal((len(x_val), model.d))
    opt = Adam(model.named_parameters(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)

    def val_loss():
        return loss_lx(x_val, model.inverse_map(y_val, z_val)) if has_val else float("nan")

    result = TrainResult(model=model)
    best_state = model.get_state()
    best = val_loss()
    result.best_val_loss = best
    result.curve.append((0, float("nan"), best))
    last_finite = best_state
    since_best = 0
    t0 = time.perf_counter()
    n = len(x_train)
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        batch_losses = []
        try:
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                z = model.sample_latent(len(idx), rng)
                loss, grads = loss_and_grads(model, x_train[idx], y_train[idx], z)
                if not np.isfinite(loss):
                    raise NumericalOverflowError("non-finite training loss")
                opt.step(grads)
                result.clamp_events += model.clamp_mixers()
                batch_losses.append(loss * len(idx))
            vl = val_loss()
            if has_val and not np.isfinite(vl):
                raise NumericalOverflowError("non-finite validation loss")
        except NumericalOverflowError as exc:
            model.set_state(last_finite)
            raise DivergenceError(f"training diverged in epoch {epoch}: {exc}", model=model, epoch=epoch) from exc
        tl = float(np.sum(batch_losses) / n)
        result.curve.append((epoch, tl, vl))
        last_finite = model.get_state()
        if progress is not None:
            progress(epoch, tl, vl)
        if not has_val:
            best_state, result.best_epoch = last_finite, epoch
            continue
        if vl < best:
            best, best_state, result.best_epoch = vl, last_finite, epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                result.stopped_early = True
                break
    model.set_state(best_state)
    result.best_val_loss = best
    result.wall_time = time.perf_counter() - t0
    model.fingerprint = {
        "train_config": asdict(cfg),
        "best_epoch": result.best_epoch,
        "best_val_loss": result.best_val_loss,
        "epochs_run": result.curve[-1][0],
        "n_train": int(n),
        "n_val": int(len(x_val)),
    }
    return result


def write_curve(curve, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss"])
        for epoch, tl, vl in curve:
            w.writerow([epoch, repr(float(tl)), repr(float(vl))])
    return path
