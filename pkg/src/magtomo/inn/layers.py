"""Building blocks of the invertible network, with hand-written backward passes.

All layers act on row batches of shape ``(B, n)`` in float64. ``forward``
returns ``(out, cache)``; ``backward(grad_out, cache)`` returns
``(grad_in, grads)`` with ``grads`` keyed like ``params``.
"""

import logging

import numpy as np
import scipy.linalg as sla

log = logging.getLogger(__name__)

LEAKY_SLOPE = 0.01
DIAG_FLOOR = 1e-8


class MLP:
    """in -> hidden -> hidden -> out, leaky-ReLU activations, zero-initialised output layer."""

    def __init__(self, n_in, n_hidden, n_out, rng):
        self.params = {
            "w1": rng.normal(0.0, np.sqrt(2.0 / n_in), (n_in, n_hidden)),
            "b1": np.zeros(n_hidden),
            "w2": rng.normal(0.0, np.sqrt(2.0 / n_hidden), (n_hidden, n_hidden)),
            "b2": np.zeros(n_hidden),
            "w3": np.zeros((n_hidden, n_out)),
            "b3": np.zeros(n_out),
        }

    def forward(self, a):
        p = self.params
        z1 = a @ p["w1"] + p["b1"]
        h1 = np.where(z1 > 0, z1, LEAKY_SLOPE * z1)
        z2 = h1 @ p["w2"] + p["b2"]
        h2 = np.where(z2 > 0, z2, LEAKY_SLOPE * z2)
        out = h2 @ p["w3"] + p["b3"]
        return out, (a, z1, h1, z2, h2)

    def backward(self, dout, cache):
        a, z1, h1, z2, h2 = cache
        p = self.params
        g = {"w3": h2.T @ dout, "b3": dout.sum(axis=0)}
        dz2 = (dout @ p["w3"].T) * np.where(z2 > 0, 1.0, LEAKY_SLOPE)
        g["w2"] = h1.T @ dz2
        g["b2"] = dz2.sum(axis=0)
        dz1 = (dz2 @ p["w2"].T) * np.where(z1 > 0, 1.0, LEAKY_SLOPE)
        g["w1"] = a.T @ dz1
        g["b1"] = dz1.sum(axis=0)
        return dz1 @ p["w1"].T, g


class CouplingBlock:
    """Affine coupling on two halves.

    With ``u = [u1, u2]``::

        v1 = u1 * exp(s2(u2)) + t2(u2)
        v2 = u2 * exp(s1(v1)) + t1(v1)

    ``net2`` produces (s2, t2) from u2 and ``net1`` produces (s1, t1) from v1.
    Log-scales are bounded by ``s = s_clamp * tanh(raw / s_clamp)``.
    """

    def __init__(self, n, hidden, s_clamp, rng):
        self.n = n
        self.n1 = (n + 1) // 2
        self.n2 = n - self.n1
        self.s_clamp = float(s_clamp)
        self.net2 = MLP(self.n2, hidden, 2 * self.n1, rng)
        self.net1 = MLP(self.n1, hidden, 2 * self.n2, rng)

    @property
    def params(self):
        out = {f"net2.{k}": v for k, v in self.net2.params.items()}
        out.update({f"net1.{k}": v for k, v in self.net1.params.items()})
        return out

    def _scale_shift(self, raw, half):
        th = np.tanh(raw[:, :half] / self.s_clamp)
        return self.s_clamp * th, raw[:, half:], th

    def forward(self, u):
        u1, u2 = u[:, :self.n1], u[:, self.n1:]
        o2, c2 = self.net2.forward(u2)
        s2, t2, th2 = self._scale_shift(o2, self.n1)
        e2 = np.exp(s2)
        v1 = u1 * e2 + t2
        o1, c1 = self.net1.forward(v1)
        s1, t1, th1 = self._scale_shift(o1, self.n2)
        e1 = np.exp(s1)
        v2 = u2 * e1 + t1
        return np.concatenate([v1, v2], axis=1), (u1, u2, c2, e2, th2, c1, e1, th1)

    def backward(self, dv, cache):
        u1, u2, c2, e2, th2, c1, e1, th1 = cache
        dv1, dv2 = dv[:, :self.n1], dv[:, self.n1:]
        # second affine step: v2 = u2 * e1 + t1(v1)
        du2 = dv2 * e1
        ds1 = dv2 * u2 * e1
        do1 = np.concatenate([ds1 * (1.0 - th1 ** 2), dv2], axis=1)
        dv1_from_net, g1 = self.net1.backward(do1, c1)
        dv1 = dv1 + dv1_from_net
        # first affine step: v1 = u1 * e2 + t2(u2)
        du1 = dv1 * e2
        ds2 = dv1 * u1 * e2
        do2 = np.concatenate([ds2 * (1.0 - th2 ** 2), dv1], axis=1)
        du2_from_net, g2 = self.net2.backward(do2, c2)
        grads = {f"net2.{k}": v for k, v in g2.items()}
        grads.update({f"net1.{k}": v for k, v in g1.items()})
        return np.concatenate([du1, du2 + du2_from_net], axis=1), grads

    def inverse(self, v):
        v1, v2 = v[:, :self.n1], v[:, self.n1:]
        s1, t1, _ = self._scale_shift(self.net1.forward(v1)[0], self.n2)
        u2 = (v2 - t1) * np.exp(-s1)
        s2, t2, _ = self._scale_shift(self.net2.forward(u2)[0], self.n1)
        u1 = (v1 - t2) * np.exp(-s2)
        return np.concatenate([u1, u2], axis=1)


class Mixer:
    """Learned invertible linear feature mixing ``v' = P L U v``.

    ``P`` is a fixed permutation (``(P w)_i = w[perm[i]]``), ``L`` is unit lower
    triangular and ``U`` upper triangular. The stored ``lower`` array is only
    read below its diagonal and ``upper`` only on and above it.
    """

    def __init__(self, n, rng=None, init="orthogonal", perm=None):
        self.n = n
        if perm is not None:
            self.perm = np.asarray(perm, dtype=np.int64)
            self.params = {"lower": np.zeros((n, n)), "upper": np.eye(n)}
        elif init == "orthogonal":
            q, _ = np.linalg.qr(rng.normal(size=(n, n)))
            pmat, lo, up = sla.lu(q)
            self.perm = np.argmax(pmat, axis=1)
            self.params = {"lower": np.tril(lo, -1), "upper": np.triu(up)}
        elif init == "permutation":
            self.perm = rng.permutation(n)
            self.params = {"lower": np.zeros((n, n)), "upper": np.eye(n)}
        else:
            raise ValueError(f"unknown mixer init {init!r}")
        self.inv_perm = np.argsort(self.perm)
        self.clamp_events = 0

    def lower(self):
        return np.tril(self.params["lower"], -1) + np.eye(self.n)

    def upper(self):
        return np.triu(self.params["upper"])

    def matrix(self):
        return (self.lower() @ self.upper())[self.perm]

    def forward(self, v):
        a = v @ self.upper().T
        b = a @ self.lower().T
        return b[:, self.perm], (v, a, b)

    def backward(self, dout, cache):
        v, a, b = cache
        db = dout[:, self.inv_perm]
        da = db @ self.lower()
        dv = da @ self.upper()
        grads = {"lower": np.tril(db.T @ a, -1), "upper": np.triu(da.T @ v)}
        return dv, grads

    def inverse(self, w):
        b = w[:, self.inv_perm]
        a = sla.solve_triangular(self.lower(), b.T, lower=True, unit_diagonal=True)
        return sla.solve_triangular(self.upper(), a, lower=False).T

    def clamp_diagonal(self):
        """Keep |diag(U)| >= DIAG_FLOOR so the mixer stays invertible."""
        d = np.diagonal(self.params["upper"])
        small = np.abs(d) < DIAG_FLOOR
        if np.any(small):
            idx = np.flatnonzero(small)
            signs = np.where(d[idx] < 0, -1.0, 1.0)
            self.params["upper"][idx, idx] = signs * DIAG_FLOOR
            self.clamp_events += len(idx)
            log.warning("mixer diagonal clamped at %d entries (|U_ii| < %g)", len(idx), DIAG_FLOOR)
        return int(np.count_nonzero(small))
