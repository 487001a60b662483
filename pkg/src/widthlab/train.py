"""Width rescaling of reference hyperparameters and the optimizer loops."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from . import probes
from .data import Dataset, batch_iter
from .net import InitDist, LossKind, NetState, Weights, forward_batch, gradients_xy, init_network, loss
from .scaling import Optimizer, Scaling


@dataclass(frozen=True)
class ReferenceConfig:
    """Hyperparameters of the reference net of width ``d_star``.

    Learning rates are raw (unnormalized) rates. Unset initialization scales
    default to a Kaiming-style choice: 1/sqrt(d_star) for the output layer and
    sqrt(2 / ((1 + alpha^2) fan_in)) for the others.
    """

    d_star: int = 128
    eta_a: float = 0.02
    eta_v: float = 0.02
    eta_w: float = 0.02
    sigma_a_star: float | None = None
    sigma_v_star: float | None = None
    sigma_w_star: float | None = None
    alpha: float = 0.01
    beta: float = 0.99
    eps: float = 1e-12
    steps: int = 50
    batch_size: int | None = None

    def __post_init__(self) -> None:
        if self.d_star < 1:
            raise ValueError("d_star must be positive")
        if min(self.eta_a, self.eta_v, self.eta_w) < 0:
            raise ValueError("learning rates must be nonnegative")
        for s in (self.sigma_a_star, self.sigma_v_star, self.sigma_w_star):
            if s is not None and not s > 0:
                raise ValueError("initialization scales must be positive")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")

    @classmethod
    def for_optimizer(cls, optimizer: Optimizer | str, **overrides) -> "ReferenceConfig":
        if Optimizer.parse(optimizer) is Optimizer.RMSPROP:
            base = dict(eta_a=2e-4, eta_v=2e-4, eta_w=2e-4)
        else:
            base = {}
        base.update(overrides)
        return cls(**base)

    def with_eta(self, eta: float) -> "ReferenceConfig":
        return replace(self, eta_a=eta, eta_v=eta, eta_w=eta)

    def reference_sigmas(self, d0: int) -> tuple[float, float, float]:
        kaiming = 2.0 / (1.0 + self.alpha**2)
        sa = self.sigma_a_star if self.sigma_a_star is not None else 1.0 / math.sqrt(self.d_star)
        sv = self.sigma_v_star if self.sigma_v_star is not None else math.sqrt(kaiming / self.d_star)
        sw = self.sigma_w_star if self.sigma_w_star is not None else math.sqrt(kaiming / d0)
        return sa, sv, sw

    def sigma_star(self, H: int, d0: int) -> float:
        sa, sv, sw = self.reference_sigmas(d0)
        return (sa * sv**H * sw) ** (1.0 / (H + 1))

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class ScaledHyperparams:
    width: int
    sigma: float
    sigma_a: float
    sigma_v: float
    sigma_w: float
    eta_a: float
    eta_v: tuple[float, ...]
    eta_w: float
    optimizer: Optimizer

    @property
    def depth(self) -> int:
        return len(self.eta_v)

    def group_rates(self) -> list[float]:
        return [self.eta_a, *self.eta_v, self.eta_w]

    def group_sigmas(self) -> list[float]:
        return [self.sigma_a, *([self.sigma_v] * self.depth), self.sigma_w]

    def raw_rates(self) -> list[float]:
        """Rates for the unnormalized weights that reproduce the hat dynamics."""
        power = 2 if self.optimizer is Optimizer.GD else 1
        return [eta * s**power for eta, s in zip(self.group_rates(), self.group_sigmas())]


def scale_hyperparams(ref: ReferenceConfig, s: Scaling, d: int, d0: int) -> ScaledHyperparams:
    if d < 1:
        raise ValueError("width must be positive")
    H = s.depth
    ratio = d / ref.d_star
    sa0, sv0, sw0 = ref.reference_sigmas(d0)
    qs = float(s.q_sigma)
    sa = sa0 * ratio**qs
    sv = sv0 * ratio**qs
    sw = sw0
    sigma = (sa * sv**H * sw) ** (1.0 / (H + 1))
    power = 2 if s.optimizer is Optimizer.GD else 1

    def hat_rate(eta_raw: float, s_ref: float, q: object) -> float:
        return eta_raw / s_ref**power * ratio ** float(q)

    return ScaledHyperparams(
        width=d,
        sigma=sigma,
        sigma_a=sa,
        sigma_v=sv,
        sigma_w=sw,
        eta_a=hat_rate(ref.eta_a, sa0, s.qt_a),
        eta_v=tuple(hat_rate(ref.eta_v, sv0, q) for q in s.qt_v),
        eta_w=hat_rate(ref.eta_w, sw0, s.qt_w),
        optimizer=s.optimizer,
    )


def gd_step(net: NetState, grads: Weights, hp: ScaledHyperparams) -> NetState:
    """In-place hat-space gradient step; returns ``net`` for chaining."""
    for theta, g, eta in zip(net.weights.arrays(), grads.arrays(), hp.group_rates()):
        theta -= eta * g
    return net


def rmsprop_step(net: NetState, grads: Weights, accum: Weights, hp: ScaledHyperparams,
                 beta: float, eps: float) -> tuple[NetState, Weights]:
    """Normalized step with an undamped running sum of squared gradients."""
    new_accum = accum.zip_map(grads, lambda acc, g: beta * acc + g * g)
    for theta, g, acc, eta in zip(net.weights.arrays(), grads.arrays(), new_accum.arrays(), hp.group_rates()):
        theta -= eta * g / np.sqrt(acc + eps)
    return net, new_accum


@dataclass
class ProbeSchedule:
    """Which probes to evaluate, at which steps, on which inputs."""

    steps: frozenset[int] = frozenset()
    eval_inputs: np.ndarray | None = None
    decomposition: bool = True
    increments: bool = True
    keep_outputs: bool = False

    @classmethod
    def at(cls, steps: Iterable[int], eval_inputs: np.ndarray | None = None, **kw) -> "ProbeSchedule":
        return cls(frozenset(int(k) for k in steps), eval_inputs, **kw)


@dataclass
class TrainRecord:
    scaling: Scaling
    width: int
    seed: int
    optimizer: Optimizer
    train_loss: list[float] = field(default_factory=list)
    test_loss: list[float] = field(default_factory=list)
    test_acc: list[float] = field(default_factory=list)
    diverged: bool = False
    halt_step: int | None = None
    increments: dict[int, probes.IncrementReport] = field(default_factory=dict)
    decomposition: dict[int, dict[str, float]] = field(default_factory=dict)
    outputs: dict[int, np.ndarray] = field(default_factory=dict)
    final_test_outputs: np.ndarray | None = None

    @property
    def steps_run(self) -> int:
        return len(self.train_loss) - 1


def _evaluate(net: NetState, ds: Dataset) -> tuple[float, float, np.ndarray]:
    with np.errstate(over="ignore", invalid="ignore"):
        f, _ = forward_batch(net, ds.inputs)
        lval = float(np.mean(loss(LossKind.BCE, ds.labels, f)))
    acc = float(np.mean((f > 0) == (ds.labels > 0.5)))
    return lval, acc, f


def _run_probes(record: TrainRecord, net: NetState, step: int, sched: ProbeSchedule | None) -> None:
    if sched is None or step not in sched.steps:
        return
    if sched.increments:
        record.increments[step] = probes.increment_norms(net, step)
    if sched.eval_inputs is not None:
        if sched.decomposition:
            rep = probes.decomposition_terms(net, sched.eval_inputs, step)
            variances = {name: probes.data_variance(vals) for name, vals in rep.terms.items()}
            variances["total"] = probes.data_variance(rep.outputs)
            record.decomposition[step] = variances
        if sched.keep_outputs:
            record.outputs[step] = forward_batch(net, sched.eval_inputs)[0]


def make_net(ref: ReferenceConfig, s: Scaling, d: int, d0: int, seed: int,
             dist: InitDist | str = InitDist.STD_NORMAL) -> tuple[NetState, ScaledHyperparams]:
    hp = scale_hyperparams(ref, s, d, d0)
    return init_network(s.depth, d, d0, ref.alpha, hp.sigma, seed, dist), hp


def train(net: NetState, train_ds: Dataset, test_ds: Dataset, ref: ReferenceConfig, s: Scaling,
          probes_schedule: ProbeSchedule | None = None, seed: int = 0) -> TrainRecord:
    """Run ``ref.steps`` optimizer steps on ``net`` in place and record the trajectory.

    The net must have been initialized with the width-scaled sigma for ``s``.
    ``seed`` only drives mini-batch shuffling.
    """
    hp = scale_hyperparams(ref, s, net.width, net.d0)
    if s.depth != net.depth:
        raise ValueError("scaling depth does not match the net")
    if not math.isclose(hp.sigma, net.sigma, rel_tol=1e-12):
        raise ValueError(f"net sigma {net.sigma} does not match the scaled sigma {hp.sigma}")
    record = TrainRecord(s, net.width, seed, s.optimizer)
    n = train_ds.n
    batch = ref.batch_size or n
    accum = net.weights.map(np.zeros_like) if s.optimizer is Optimizer.RMSPROP else None

    def log(step: int) -> bool:
        tr, _, _ = _evaluate(net, train_ds)
        te, acc, f = _evaluate(net, test_ds)
        record.train_loss.append(tr)
        record.test_loss.append(te)
        record.test_acc.append(acc)
        record.final_test_outputs = f
        ok = math.isfinite(tr) and math.isfinite(te) and net.weights.is_finite()
        if ok:
            _run_probes(record, net, step, probes_schedule)
        return ok

    if not log(0):
        record.diverged, record.halt_step = True, 0
        return record
    batches_per_epoch = math.ceil(n / batch)
    for step in range(1, ref.steps + 1):
        epoch, pos = divmod(step - 1, batches_per_epoch)
        idx = batch_iter(n, batch, seed, epoch)[pos]
        X, y = train_ds.inputs[idx], train_ds.labels[idx]
        with np.errstate(over="ignore", invalid="ignore"):
            grads, _ = gradients_xy(net, X, y)
            if accum is None:
                gd_step(net, grads, hp)
            else:
                net, accum = rmsprop_step(net, grads, accum, hp, ref.beta, ref.eps)
        if not log(step):
            record.diverged, record.halt_step = True, step
            break
    return record
