"""Leaky-ReLU perceptrons in the normalized ("hat") parameterization.

A depth-H net of width d computes

    f(x) = sigma**(H+1) * sum_r a_r phi(z^H_r(x)),
    z^0 = w x,   z^h = v^h phi(z^(h-1)),

with every weight of unit initial scale and no biases. The whole
width-dependence of the initialization sits in the scalar ``sigma``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import expit

from .kernels import leaky_relu, leaky_relu_grad


class InitDist(str, enum.Enum):
    STD_NORMAL = "StdNormal"
    SYMMETRIC_UNIFORM = "SymmetricUniform"


class LossKind(str, enum.Enum):
    BCE = "BinaryCrossEntropy"


class Weights(NamedTuple):
    """Output weights, hidden matrices (input side first) and input weights."""

    a: np.ndarray
    v: tuple[np.ndarray, ...]
    w: np.ndarray

    def copy(self) -> "Weights":
        return Weights(self.a.copy(), tuple(m.copy() for m in self.v), self.w.copy())

    def frozen(self) -> "Weights":
        out = self.copy()
        for arr in out.arrays():
            arr.setflags(write=False)
        return out

    def arrays(self) -> list[np.ndarray]:
        return [self.a, *self.v, self.w]

    def group_names(self) -> list[str]:
        return ["a", *[f"v{h}" for h in range(1, len(self.v) + 1)], "w"]

    def map(self, fn) -> "Weights":
        return Weights(fn(self.a), tuple(fn(m) for m in self.v), fn(self.w))

    def zip_map(self, other: "Weights", fn) -> "Weights":
        return Weights(fn(self.a, other.a), tuple(fn(x, y) for x, y in zip(self.v, other.v)), fn(self.w, other.w))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(x)) for x in self.arrays())


def sample_unit(rng: np.random.Generator, shape, dist: InitDist) -> np.ndarray:
    if dist is InitDist.STD_NORMAL:
        return rng.standard_normal(shape)
    root3 = np.sqrt(3.0)
    return rng.uniform(-root3, root3, size=shape)


@dataclass(eq=False)
class NetState:
    weights: Weights
    init: Weights
    sigma: float
    alpha: float

    @property
    def depth(self) -> int:
        return len(self.weights.v)

    @property
    def width(self) -> int:
        return self.weights.a.shape[0]

    @property
    def d0(self) -> int:
        return self.weights.w.shape[1]

    @property
    def hat_a(self) -> np.ndarray:
        return self.weights.a

    @property
    def hat_v(self) -> tuple[np.ndarray, ...]:
        return self.weights.v

    @property
    def hat_w(self) -> np.ndarray:
        return self.weights.w

    def increments(self) -> Weights:
        return self.weights.zip_map(self.init, np.subtract)

    def copy(self) -> "NetState":
        return NetState(self.weights.copy(), self.init, self.sigma, self.alpha)

    def output_scale(self) -> float:
        return self.sigma ** (self.depth + 1)

    def to_dict(self) -> dict:
        def dump(ws: Weights) -> dict:
            return {"a": ws.a.tolist(), "v": [m.tolist() for m in ws.v], "w": ws.w.tolist()}

        return {
            "depth": self.depth,
            "width": self.width,
            "d0": self.d0,
            "alpha": self.alpha,
            "sigma": self.sigma,
            "weights": dump(self.weights),
            "init": dump(self.init),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetState":
        def load(raw: dict) -> Weights:
            return Weights(
                np.asarray(raw["a"], dtype=np.float64),
                tuple(np.asarray(m, dtype=np.float64) for m in raw["v"]),
                np.asarray(raw["w"], dtype=np.float64).reshape(len(raw["a"]), -1),
            )

        net = cls(load(data["weights"]), load(data["init"]).frozen(), float(data["sigma"]), float(data["alpha"]))
        _check_dims(net.weights, net.depth, net.width, int(data["d0"]))
        return net

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "NetState":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _check_dims(ws: Weights, H: int, d: int, d0: int) -> None:
    if ws.a.shape != (d,) or ws.w.shape != (d, d0) or len(ws.v) != H:
        raise ValueError("weight shapes do not match (H, d, d0)")
    if any(m.shape != (d, d) for m in ws.v):
        raise ValueError("hidden matrices must be d x d")


def from_weights(a, w, v: Sequence[np.ndarray] = (), *, sigma: float = 1.0, alpha: float = 0.1,
                 init: Weights | None = None) -> NetState:
    """Build a net from explicit weights; the snapshot defaults to the weights themselves."""
    ws = Weights(np.array(a, dtype=np.float64), tuple(np.array(m, dtype=np.float64) for m in v),
                 np.array(w, dtype=np.float64).reshape(len(a), -1))
    _check_dims(ws, len(ws.v), ws.a.shape[0], ws.w.shape[1])
    snap = ws.frozen() if init is None else init.frozen()
    return NetState(ws, snap, float(sigma), float(alpha))


def init_network(H: int, d: int, d0: int, alpha: float, sigma: float, seed: int | np.random.Generator,
                 dist: InitDist | str = InitDist.STD_NORMAL) -> NetState:
    if d < 1 or d0 < 1:
        raise ValueError("widths must be positive")
    if H < 0:
        raise ValueError("depth must be nonnegative")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    dist = InitDist(dist)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    a = sample_unit(rng, d, dist)
    w = sample_unit(rng, (d, d0), dist)
    v = tuple(sample_unit(rng, (d, d), dist) for _ in range(H))
    ws = Weights(a, v, w)
    return NetState(ws, ws.frozen(), float(sigma), float(alpha))


def forward_batch(net: NetState, X: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Outputs for the rows of X and the hidden pre-activations, input layer first."""
    ws = net.weights
    z = X @ ws.w.T
    pre = [z]
    for m in ws.v:
        z = leaky_relu(z, net.alpha) @ m.T
        pre.append(z)
    f = net.output_scale() * (leaky_relu(z, net.alpha) @ ws.a)
    return f, pre


def forward(net: NetState, x: np.ndarray) -> tuple[float, list[np.ndarray]]:
    f, pre = forward_batch(net, np.asarray(x, dtype=np.float64)[None, :])
    return float(f[0]), [p[0] for p in pre]


def loss(kind: LossKind, y, z):
    """Binary cross-entropy on logits, labels in {0, 1}."""
    return np.logaddexp(0.0, z) - y * z


def dloss(kind: LossKind, y, z):
    return expit(z) - y


def mean_loss(net: NetState, X: np.ndarray, y: np.ndarray, kind: LossKind = LossKind.BCE) -> float:
    f, _ = forward_batch(net, X)
    return float(np.mean(loss(kind, y, f)))


def gradients_xy(net: NetState, X: np.ndarray, y: np.ndarray, kind: LossKind = LossKind.BCE) -> tuple[Weights, np.ndarray]:
    """Gradients of the mean loss over (X, y) and the outputs they were taken at."""
    ws = net.weights
    alpha = net.alpha
    f, pre = forward_batch(net, X)
    g = dloss(kind, y, f) / X.shape[0]
    scale = net.output_scale()
    top = pre[-1]
    grad_a = scale * (leaky_relu(top, alpha).T @ g)
    delta = scale * np.outer(g, ws.a) * leaky_relu_grad(top, alpha)
    grad_v: list[np.ndarray] = []
    for h in range(len(ws.v), 0, -1):
        below = pre[h - 1]
        grad_v.append(delta.T @ leaky_relu(below, alpha))
        delta = (delta @ ws.v[h - 1]) * leaky_relu_grad(below, alpha)
    grad_w = delta.T @ X
    return Weights(grad_a, tuple(reversed(grad_v)), grad_w), f


def gradients(net: NetState, ds, batch=None, kind: LossKind = LossKind.BCE) -> Weights:
    X, y = ds.inputs, ds.labels
    if batch is not None:
        batch = np.asarray(batch)
        if batch.size == 0:
            raise ValueError("empty batch")
        X, y = X[batch], y[batch]
    return gradients_xy(net, X, y, kind)[0]
