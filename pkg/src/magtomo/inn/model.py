"""The invertible network between x-space and [y, z]-space.

``inverse_map`` is the trained direction: ``[y, z] -> x``, applying
``block_1, mixer_1, ..., block_k, mixer_k`` with their cheap forward formulas.
``forward_map`` runs the exact inverses in reverse order, ``x -> [y, z]``.

Checkpoint layout (``BINN``, little-endian)::

    b"BINN" u32 version=1
    u64 N, u64 M, u64 D, u64 k, u64 hidden
    f64 s_clamp
    u32[k*N]  mixer permutations, mixer 1 first
    f64[...]  parameters in ``parameter_names()`` order, each row-major
    u64 len, utf-8 JSON training fingerprint
"""

from pathlib import Path

import numpy as np

from .._util import BinaryReader, BinaryWriter
from ..errors import ConfigError, NumericalOverflowError, ShapeMismatchError
from .layers import CouplingBlock, Mixer


class InnModel:
    def __init__(self, n, m, k=3, hidden=256, s_clamp=2.0, seed=0, mixer_init="orthogonal", _perms=None):
        d = n - m
        if m < 1 or d < 0:
            raise ConfigError(f"need 1 <= M <= N, got N={n}, M={m}")
        assert m + d == n
        if k < 1:
            raise ConfigError("k must be >= 1")
        self.n, self.m, self.d, self.k = n, m, d, k
        self.hidden = hidden
        self.s_clamp = float(s_clamp)
        rng = np.random.default_rng(seed)
        self.blocks = []
        self.mixers = []
        for j in range(k):
            self.blocks.append(CouplingBlock(n, hidden, s_clamp, rng))
            perm = None if _perms is None else _perms[j]
            self.mixers.append(Mixer(n, rng, init=mixer_init, perm=perm))
        self.fingerprint = {}

    # parameters ---------------------------------------------------------
    def named_parameters(self):
        """(name, array) pairs in the fixed checkpoint order; arrays are live references."""
        out = []
        for j, (blk, mix) in enumerate(zip(self.blocks, self.mixers)):
            for name in ("net2", "net1"):
                for key in ("w1", "b1", "w2", "b2", "w3", "b3"):
                    out.append((f"block{j}.{name}.{key}", blk.params[f"{name}.{key}"]))
            out.append((f"mixer{j}.lower", mix.params["lower"]))
            out.append((f"mixer{j}.upper", mix.params["upper"]))
        return out

    def parameter_names(self):
        return [name for name, _ in self.named_parameters()]

    def get_state(self):
        return {name: arr.copy() for name, arr in self.named_parameters()}

    def set_state(self, state):
        for name, arr in self.named_parameters():
            arr[...] = state[name]

    def n_parameters(self):
        return sum(arr.size for _, arr in self.named_parameters())

    # maps ---------------------------------------------------------------
    def _check_rows(self, rows, width, what):
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        if rows.shape[1] != width:
            raise ShapeMismatchError(f"{what} has width {rows.shape[1]}, model expects {width}")
        return rows

    def inverse_map(self, y, z, return_cache=False):
        """x_hat = f(y, z): the reconstruction direction."""
        y = self._check_rows(y, self.m, "y")
        z = self._check_rows(z, self.d, "z")
        if len(y) != len(z):
            raise ShapeMismatchError(f"y has {len(y)} rows but z has {len(z)}")
        h = np.concatenate([y, z], axis=1)
        caches = []
        for j, (blk, mix) in enumerate(zip(self.blocks, self.mixers)):
            with np.errstate(over="ignore", invalid="ignore"):
                h, cb = blk.forward(h)
                h, cm = mix.forward(h)
            if not np.all(np.isfinite(h)):
                raise NumericalOverflowError(f"non-finite activations after block {j}", block_index=j)
            caches.append((cb, cm))
        return (h, caches) if return_cache else h

    def backward(self, dx, caches):
        """Parameter gradients given dLoss/dx_hat and the caches of ``inverse_map``."""
        grads = {}
        g = dx
        for j in range(self.k - 1, -1, -1):
            cb, cm = caches[j]
            g, gm = self.mixers[j].backward(g, cm)
            grads[f"mixer{j}.lower"] = gm["lower"]
            grads[f"mixer{j}.upper"] = gm["upper"]
            g, gb = self.blocks[j].backward(g, cb)
            for key, val in gb.items():
                grads[f"block{j}.{key}"] = val
        return grads, g

    def forward_map(self, x):
        """[y, z] = f^{-1}(x), returned as a pair."""
        h = self._check_rows(x, self.n, "x")
        for j in range(self.k - 1, -1, -1):
            with np.errstate(over="ignore", invalid="ignore"):
                h = self.mixers[j].inverse(h)
                h = self.blocks[j].inverse(h)
            if not np.all(np.isfinite(h)):
                raise NumericalOverflowError(f"non-finite activations inverting block {j}", block_index=j)
        return h[:, :self.m], h[:, self.m:]

    def sample_latent(self, n_rows, rng):
        return rng.standard_normal((n_rows, self.d))

    def reconstruct(self, y, rng, n_z=1):
        """Mean of ``inverse_map(y, z)`` over ``n_z`` latent draws."""
        y = self._check_rows(y, self.m, "y")
        acc = np.zeros((len(y), self.n))
        for _ in range(n_z):
            acc += self.inverse_map(y, self.sample_latent(len(y), rng))
        return acc / n_z

    def clamp_mixers(self):
        return sum(mix.clamp_diagonal() for mix in self.mixers)

    # persistence --------------------------------------------------------
    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            w = BinaryWriter(fh)
            w.magic("BINN")
            for v in (self.n, self.m, self.d, self.k, self.hidden):
                w.u64(v)
            w.f64(self.s_clamp)
            for mix in self.mixers:
                w.array(mix.perm, np.uint32)
            for _, arr in self.named_parameters():
                w.array(arr, np.float64)
            w.json(self.fingerprint)
        return path

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"checkpoint not found: {path}")
        with open(path, "rb") as fh:
            r = BinaryReader(fh, str(path))
            r.magic("BINN")
            n, m, d, k, hidden = (r.u64() for _ in range(5))
            s_clamp = r.f64()
            perms = [r.array(np.uint32, (n,)).astype(np.int64) for _ in range(k)]
            model = cls(n, m, k=k, hidden=hidden, s_clamp=s_clamp, _perms=perms)
            if model.d != d:
                raise ConfigError(f"{path}: inconsistent dims N={n}, M={m}, D={d}")
            for _, arr in model.named_parameters():
                arr[...] = r.array(np.float64, arr.shape)
            model.fingerprint = r.json()
        return model


def identity_model(n, m, k=1, hidden=8, s_clamp=2.0):
    """Model whose every block and mixer is the identity: inverse_map(y, z) == [y, z]."""
    model = InnModel(n, m, k=k, hidden=hidden, s_clamp=s_clamp, _perms=[np.arange(n)] * k)
    return model


def loss_lx(x, x_hat):
    """Root of the batch-mean squared Euclidean residual norm."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    x_hat = np.atleast_2d(np.asarray(x_hat, dtype=np.float64))
    if x.shape != x_hat.shape:
        raise ShapeMismatchError(f"targets {x.shape} vs predictions {x_hat.shape}")
    if len(x) < 1:
        raise ValueError("empty batch")
    return float(np.sqrt(np.mean(np.sum((x - x_hat) ** 2, axis=1))))


def loss_lx_grad(x, x_hat):
    """(loss, dloss/dx_hat). The gradient is taken as 0 at zero loss."""
    r = x_hat - x
    loss = float(np.sqrt(np.mean(np.sum(r * r, axis=1))))
    if loss == 0.0 or not np.isfinite(loss):  # no usable direction; callers check the loss
        return loss, np.zeros_like(r)
    return loss, r / (len(r) * loss)


def loss_and_grads(model, x, y, z):
    x_hat, caches = model.inverse_map(y, z, return_cache=True)
    loss, dx = loss_lx_grad(np.asarray(x, dtype=np.float64), x_hat)
    grads, _ = model.backward(dx, caches)
    return loss, grads


def gradient_check(model, x, y, z, step=1e-5, atol=1e-5, max_entries=None, rng=None):
    """Max relative error between analytic and central-difference gradients of L_x.

    Relative error per entry is ``|a - f| / max(|a|, |f|, atol)``. With
    ``max_entries`` set, a random subset of that many entries per parameter
    array is checked.
    """
    _, grads = loss_and_grads(model, x, y, z)
    worst = 0.0
    for name, arr in model.named_parameters():
        flat = arr.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False)
        g = grads[name].reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            lp = loss_lx(x, model.inverse_map(y, z))
            flat[i] = orig - step
            lm = loss_lx(x, model.inverse_map(y, z))
            flat[i] = orig
            fd = (lp - lm) / (2 * step)
            err = abs(g[i] - fd) / max(abs(g[i]), abs(fd), atol)
            worst = max(worst, err)
    return worst


def perturb_parameters(model, rng, scale=0.1):
    """Add Gaussian noise to every parameter so no block is the identity (test models).

    Subnetwork entries get standard deviation ``scale``; mixer factors get
    ``scale / sqrt(N)`` so the perturbed mixers stay well conditioned.
    """
    for name, arr in model.named_parameters():
        sd = scale / np.sqrt(model.n) if name.startswith("mixer") else scale
        arr += sd * rng.standard_normal(arr.shape)
    model.clamp_mixers()
    return model
