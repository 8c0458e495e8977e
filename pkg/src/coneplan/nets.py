"""Minimal dense networks with hand-written backprop.

Parameters live in one flat vector per network; layer weight matrices
and biases are reshaped views into it, so optimizer updates, checkpoint
IO and gradient checks all operate on a single contiguous array.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_FORMAT = "coneplan-policy"
CHECKPOINT_VERSION = 1


class Mlp:
    """Fully connected tanh network; the last layer stays linear.

    `sizes` lists layer widths input first, e.g. (6, 32, 4). Forward
    caches activations for one subsequent backward pass.
    """

    def __init__(self, sizes, seed=0, dtype=np.float32):
        if len(sizes) < 2:
            raise ValueError("need at least input and output widths")
        self.sizes = tuple(int(s) for s in sizes)
        self.dtype = np.dtype(dtype)
        total = sum(
            nin * nout + nout for nin, nout in zip(self.sizes, self.sizes[1:])
        )
        self.theta = np.zeros(total, dtype=self.dtype)
        self._weights = []
        self._biases = []
        off = 0
        rng = np.random.default_rng(seed)
        for nin, nout in zip(self.sizes, self.sizes[1:]):
            w = self.theta[off : off + nin * nout].reshape(nin, nout)
            off += nin * nout
            b = self.theta[off : off + nout]
            off += nout
            w[...] = (rng.standard_normal((nin, nout)) / np.sqrt(nin)).astype(
                self.dtype
            )
            self._weights.append(w)
            self._biases.append(b)
        self._cache = None

    @property
    def n_params(self) -> int:
        return len(self.theta)

    def set_theta(self, values) -> None:
        values = np.asarray(values, dtype=self.dtype)
        if values.shape != self.theta.shape:
            raise ValueError(
                f"parameter vector has {values.shape}, expected {self.theta.shape}"
            )
        self.theta[...] = values

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Batch or single-vector forward; caches for backward."""
        x = np.asarray(x, dtype=self.dtype)
        single = x.ndim == 1
        h = x[None, :] if single else x
        acts = [h]
        n_layers = len(self._weights)
        for k, (w, b) in enumerate(zip(self._weights, self._biases)):
            h = h @ w + b
            if k < n_layers - 1:
                h = np.tanh(h)
            acts.append(h)
        self._cache = acts
        return h[0] if single else h

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        """Gradient of sum(grad_out * output) w.r.t. the flat parameters.

        Must follow a forward call; uses its cached activations.
        """
        if self._cache is None:
            raise RuntimeError("backward requires a preceding forward")
        acts = self._cache
        g = np.asarray(grad_out, dtype=self.dtype)
        if g.ndim == 1:
            g = g[None, :]
        grad = np.zeros_like(self.theta)
        off = len(self.theta)
        for k in range(len(self._weights) - 1, -1, -1):
            w = self._weights[k]
            nin, nout = w.shape
            if k < len(self._weights) - 1:
                g = g * (1.0 - acts[k + 1] ** 2)  # tanh' on this layer's output
            gb = g.sum(axis=0)
            gw = acts[k].T @ g
            off -= nout
            grad[off : off + nout] = gb
            off -= nin * nout
            grad[off : off + nin * nout] = gw.reshape(-1)
            if k > 0:
                g = g @ w.T
        return grad


@dataclass
class Adam:
    """Standard Adam on a flat parameter vector, updated in place."""

    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    _m: np.ndarray | None = field(default=None, repr=False)
    _v: np.ndarray | None = field(default=None, repr=False)
    _t: int = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> None:
        if self._m is None:
            self._m = np.zeros_like(theta, dtype=np.float64)
            self._v = np.zeros_like(theta, dtype=np.float64)
        g = np.asarray(grad, dtype=np.float64)
        self._t += 1
        self._m = self.beta1 * self._m + (1.0 - self.beta1) * g
        self._v = self.beta2 * self._v + (1.0 - self.beta2) * g * g
        mhat = self._m / (1.0 - self.beta1**self._t)
        vhat = self._v / (1.0 - self.beta2**self._t)
        theta -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(theta.dtype)


LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0


@dataclass
class PolicyBundle:
    """Actor-critic trio: discrete head, continuous head, state value.

    The discrete net scores the two meta actions, the continuous net
    emits mean and log-std of a 2-D Gaussian over raw domain parameters,
    and the value net estimates the return.
    """

    discrete: Mlp
    continuous: Mlp
    value: Mlp

    @classmethod
    def create(cls, obs_dim: int, hidden=(512, 256, 128), seed=0, dtype=np.float32):
        h = tuple(int(x) for x in hidden)
        ss = np.random.SeedSequence(seed).generate_state(3)
        return cls(
            discrete=Mlp((obs_dim, *h, 2), seed=int(ss[0]), dtype=dtype),
            continuous=Mlp((obs_dim, *h, 4), seed=int(ss[1]), dtype=dtype),
            value=Mlp((obs_dim, *h, 1), seed=int(ss[2]), dtype=dtype),
        )

    @property
    def obs_dim(self) -> int:
        return self.discrete.sizes[0]

    def save(self, path, meta: dict | None = None) -> None:
        header = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "sizes": {
                "discrete": list(self.discrete.sizes),
                "continuous": list(self.continuous.sizes),
                "value": list(self.value.sizes),
            },
            "dtype": "float32",
            "meta": meta or {},
        }
        with open(path, "wb") as f:
            f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
            for net in (self.discrete, self.continuous, self.value):
                f.write(np.asarray(net.theta, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path) -> "PolicyBundle":
        with open(path, "rb") as f:
            header_line = f.readline()
            blob = f.read()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as e:
            raise ValueError(f"not a policy checkpoint: {e}") from None
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unexpected checkpoint format {header.get('format')!r}")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        nets = {}
        off = 0
        values = np.frombuffer(blob, dtype="<f4")
        for name in ("discrete", "continuous", "value"):
            net = Mlp(header["sizes"][name], seed=0)
            if off + net.n_params > len(values):
                raise ValueError("checkpoint blob shorter than declared sizes")
            net.set_theta(values[off : off + net.n_params])
            off += net.n_params
            nets[name] = net
        if off != len(values):
            raise ValueError("checkpoint blob longer than declared sizes")
        return cls(**nets)

    @staticmethod
    def read_meta(path) -> dict:
        with open(path, "rb") as f:
            header = json.loads(f.readline())
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unexpected checkpoint format {header.get('format')!r}")
        return header.get("meta", {})
