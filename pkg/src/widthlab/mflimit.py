"""Particle measures, their one-step gradient map, W2 distances and kernel-driven dynamics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import kernels
from .data import Dataset
from .kernels import leaky_relu, leaky_relu_grad
from .net import LossKind, NetState, dloss

MAX_EXACT_ATOMS = 4096


@dataclass(frozen=True, eq=False)
class ParticleMeasure:
    """Uniform-mass atoms; column 0 holds the output weight, the rest the input weights."""

    atoms: np.ndarray

    def __post_init__(self) -> None:
        atoms = np.array(self.atoms, dtype=np.float64)
        if atoms.ndim != 2 or atoms.shape[0] < 1 or atoms.shape[1] < 2:
            raise ValueError("atoms must be a (d, 1 + d0) matrix with d >= 1")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atoms must be finite")
        atoms.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @property
    def out_weights(self) -> np.ndarray:
        return self.atoms[:, 0]

    @property
    def in_weights(self) -> np.ndarray:
        return self.atoms[:, 1:]

    def head(self, d: int) -> "ParticleMeasure":
        return ParticleMeasure(self.atoms[:d])

    def output(self, sigma_star: float, X: np.ndarray, alpha: float) -> np.ndarray:
        return sigma_star * leaky_relu(X @ self.in_weights.T, alpha) @ self.out_weights / self.size


def measure_of(net: NetState) -> ParticleMeasure:
    if net.depth != 0:
        raise ValueError("particle measures are defined for one hidden layer")
    return ParticleMeasure(np.column_stack([net.hat_a, net.hat_w]))


def transition_step(mu: ParticleMeasure, eta_star, sigma_star: float, ds: Dataset, alpha: float,
                    kind: LossKind = LossKind.BCE) -> ParticleMeasure:
    """One full-batch gradient step of every atom against the measure's own output.

    ``eta_star`` is a common rate or an (output, input) pair.
    """
    eta_a, eta_w = (eta_star, eta_star) if np.ndim(eta_star) == 0 else eta_star
    X, y = ds.inputs, ds.labels
    a, w = mu.out_weights, mu.in_weights
    U = X @ w.T
    f = sigma_star * leaky_relu(U, alpha) @ a / mu.size
    g = dloss(kind, y, f) / ds.n
    da = -eta_a * sigma_star * (g @ leaky_relu(U, alpha))
    dw = -eta_w * sigma_star * a[:, None] * ((leaky_relu_grad(U, alpha) * g[:, None]).T @ X)
    return ParticleMeasure(np.column_stack([a + da, w + dw]))


def wasserstein2(mu_a: ParticleMeasure, mu_b: ParticleMeasure) -> float:
    """Exact W2 between two uniform measures with the same number of atoms."""
    if mu_a.size != mu_b.size:
        raise ValueError("measures must have the same number of atoms")
    if mu_a.atoms.shape[1] != mu_b.atoms.shape[1]:
        raise ValueError("atoms live in different dimensions")
    if mu_a.size > MAX_EXACT_ATOMS:
        raise ValueError(f"exact assignment is limited to {MAX_EXACT_ATOMS} atoms")
    cost = kernels.sq_dists(mu_a.atoms, mu_b.atoms)
    rows, cols = linear_sum_assignment(cost)
    # an exactly rounded sum does not depend on the order of the atoms
    return math.sqrt(math.fsum(cost[rows, cols]) / mu_a.size)


@dataclass(frozen=True)
class KernelTrajectory:
    values: np.ndarray  # (steps + 1, n_train + n_query)
    n_train: int

    @property
    def train(self) -> np.ndarray:
        return self.values[:, : self.n_train]

    @property
    def query(self) -> np.ndarray:
        return self.values[:, self.n_train:]


def kernel_dynamics(init_f: np.ndarray, gram: np.ndarray, labels: np.ndarray, steps: int,
                    kind: LossKind = LossKind.BCE) -> KernelTrajectory:
    """Iterate f <- f - mean_i dloss(y_i, f_i) K(x_i, .) on train and query points jointly.

    ``gram`` has one row per train point and one column per train-then-query point.
    """
    init_f = np.asarray(init_f, dtype=np.float64)
    gram = np.asarray(gram, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    n_train = labels.shape[0]
    if gram.shape != (n_train, init_f.shape[0]):
        raise ValueError("gram must be (n_train, n_train + n_query)")
    out = np.empty((steps + 1, init_f.shape[0]))
    out[0] = init_f
    f = init_f.copy()
    for k in range(steps):
        g = dloss(kind, labels, f[:n_train])
        f = f - (g @ gram) / n_train
        out[k + 1] = f
    return KernelTrajectory(out, n_train)
