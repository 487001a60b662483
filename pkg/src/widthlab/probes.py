"""Observables of a trained net: output decomposition, increments, tangent kernels."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from . import kernels
from .kernels import leaky_relu, leaky_relu_grad
from .net import NetState, forward_batch

MAX_DECOMP_DEPTH = 3
MC_CHUNK = 1 << 15


@dataclass(frozen=True)
class DecompReport:
    step: int | None
    terms: dict[str, np.ndarray]
    outputs: np.ndarray
    sum_check: np.ndarray


@dataclass(frozen=True)
class IncrementReport:
    step: int | None
    avg_abs_da: float
    avg_abs_dv: tuple[float, ...]
    avg_norm_dw: float

    def groups(self) -> dict[str, float]:
        out = {"a": self.avg_abs_da}
        for h, val in enumerate(self.avg_abs_dv, start=1):
            out[f"v{h}"] = val
        out["w"] = self.avg_norm_dw
        return out


def term_name(groups: tuple[str, ...]) -> str:
    return "".join(groups) if groups else "empty"


def decomposition_term_names(H: int) -> list[str]:
    names = ["a", *[f"v{h}" for h in range(1, H + 1)], "w"]
    out = []
    for mask in product((False, True), repeat=len(names)):
        out.append(term_name(tuple(n for n, m in zip(names, mask) if m)))
    return sorted(out, key=lambda t: (0 if t == "empty" else len(t), t))


def _as_matrix(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[None, :] if x.ndim == 1 else x


def decomposition_terms(net: NetState, X: np.ndarray, step: int | None = None) -> DecompReport:
    """Split f into the terms obtained by choosing, per weight group, its initial
    value or its increment, with every activation gate at the current weights.

    The gated net is multilinear in the groups, so the terms add up to f.
    """
    H = net.depth
    if H > MAX_DECOMP_DEPTH:
        raise ValueError(f"decomposition supports depth <= {MAX_DECOMP_DEPTH}")
    X = _as_matrix(X)
    ws, ws0 = net.weights, net.init
    inc = net.increments()
    f, pre = forward_batch(net, X)
    if H == 0:
        rows = kernels.decomp_h0(ws0.a, inc.a, ws0.w, inc.w, ws.w, X, net.sigma, net.alpha)
        terms = dict(zip(("empty", "a", "w", "aw"), rows))
    else:
        gates = [leaky_relu_grad(z, net.alpha) for z in pre]
        # partial products keyed by the groups already taken from the increments
        layer = {(): (X @ ws0.w.T) * gates[0], ("w",): (X @ inc.w.T) * gates[0]}
        for h in range(1, H + 1):
            nxt = {}
            for key, hidden in layer.items():
                nxt[(f"v{h}",) + key] = (hidden @ inc.v[h - 1].T) * gates[h]
                nxt[key] = (hidden @ ws0.v[h - 1].T) * gates[h]
            layer = nxt
        scale = net.output_scale()
        terms = {}
        for key, hidden in layer.items():
            terms[term_name(tuple(sorted(key, key=_group_order)))] = scale * (hidden @ ws0.a)
            terms[term_name(tuple(sorted(("a",) + key, key=_group_order)))] = scale * (hidden @ inc.a)
    total = np.sum(list(terms.values()), axis=0)
    return DecompReport(step, terms, f, np.abs(f - total))


def _group_order(name: str) -> tuple[int, int]:
    if name == "a":
        return (0, 0)
    if name == "w":
        return (2, 0)
    return (1, int(name[1:]))


def increment_norms(net: NetState, step: int | None = None) -> IncrementReport:
    """Mean |da_r|, mean |dv_ij| per hidden matrix, and mean ||dw_r||."""
    inc = net.increments()
    return IncrementReport(
        step,
        float(np.mean(np.abs(inc.a))),
        tuple(float(np.mean(np.abs(m))) for m in inc.v),
        float(np.mean(np.linalg.norm(inc.w, axis=1))),
    )


def data_variance(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        raise ValueError("need at least two values")
    return float(np.var(values, ddof=1))


def _rates(eta_hat) -> tuple[float, float]:
    if np.ndim(eta_hat) == 0:
        return float(eta_hat), float(eta_hat)
    ea, ew = eta_hat
    return float(ea), float(ew)


def _require_shallow(net: NetState) -> None:
    if net.depth != 0:
        raise ValueError("tangent kernels are implemented for one hidden layer")


def ntk_kernel(net: NetState, x: np.ndarray, x2: np.ndarray, eta_hat) -> float:
    """Rate-weighted tangent kernel of the current net.

    ``eta_hat`` is a common normalized rate or an (output, input) pair.
    """
    _require_shallow(net)
    ea, ew = _rates(eta_hat)
    s2 = net.sigma**2
    val = kernels.ntk_pairs(net.hat_a, net.hat_w, _as_matrix(x), _as_matrix(x2), net.alpha, ea * s2, ew * s2)
    return float(val[0])


def ntk_kernel_pairs(net: NetState, P: np.ndarray, Q: np.ndarray, eta_hat) -> np.ndarray:
    _require_shallow(net)
    ea, ew = _rates(eta_hat)
    s2 = net.sigma**2
    return kernels.ntk_pairs(net.hat_a, net.hat_w, _as_matrix(P), _as_matrix(Q), net.alpha, ea * s2, ew * s2)


def ntk_gram(net: NetState, X1: np.ndarray, X2: np.ndarray, eta_hat) -> np.ndarray:
    _require_shallow(net)
    ea, ew = _rates(eta_hat)
    a, w, alpha = net.hat_a, net.hat_w, net.alpha
    U1, U2 = X1 @ w.T, X2 @ w.T
    feat = leaky_relu(U1, alpha) @ leaky_relu(U2, alpha).T
    gate = (leaky_relu_grad(U1, alpha) * (a * a)) @ leaky_relu_grad(U2, alpha).T
    return net.sigma**2 * (ea * feat + ew * gate * (X1 @ X2.T))


def _mc_draws(rng: np.random.Generator, m: int, d0: int) -> tuple[np.ndarray, np.ndarray]:
    z = rng.standard_normal((m, 1 + d0))
    return z[:, 0].copy(), np.ascontiguousarray(z[:, 1:])


def ntk_limit_pairs(P: np.ndarray, Q: np.ndarray, eta_hat_sigma2, alpha: float, n_mc: int,
                    seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Monte-Carlo estimate and standard error of the infinite-width kernel per pair.

    ``eta_hat_sigma2`` is the width-independent prefactor (rate times sigma^2
    times width), either common or an (output, input) pair.
    """
    if n_mc < 100:
        raise ValueError("n_mc must be at least 100")
    P, Q = _as_matrix(P), _as_matrix(Q)
    sa, sw = _rates(eta_hat_sigma2)
    rng = np.random.default_rng(seed)
    s1 = np.zeros(P.shape[0])
    s2 = np.zeros(P.shape[0])
    for lo, hi in kernels.chunk_bounds(n_mc, MC_CHUNK):
        a, w = _mc_draws(rng, hi - lo, P.shape[1])
        c1, c2 = kernels.mc_moments(a, w, P, Q, alpha, sa, sw)
        s1 += c1
        s2 += c2
    mean = s1 / n_mc
    var = np.maximum(s2 / n_mc - mean * mean, 0.0) * n_mc / (n_mc - 1)
    return mean, np.sqrt(var / n_mc)


def ntk_limit_kernel(x: np.ndarray, x2: np.ndarray, eta_hat_sigma2, alpha: float, n_mc: int,
                     seed: int) -> tuple[float, float]:
    est, err = ntk_limit_pairs(x, x2, eta_hat_sigma2, alpha, n_mc, seed)
    return float(est[0]), float(err[0])


def ntk_limit_gram(X1: np.ndarray, X2: np.ndarray, eta_hat_sigma2, alpha: float, n_mc: int,
                   seed: int) -> np.ndarray:
    """Monte-Carlo infinite-width kernel matrix between the rows of X1 and X2."""
    sa, sw = _rates(eta_hat_sigma2)
    rng = np.random.default_rng(seed)
    feat = np.zeros((X1.shape[0], X2.shape[0]))
    gate = np.zeros_like(feat)
    for lo, hi in kernels.chunk_bounds(n_mc, MC_CHUNK):
        a, w = _mc_draws(rng, hi - lo, X1.shape[1])
        U1, U2 = X1 @ w.T, X2 @ w.T
        feat += leaky_relu(U1, alpha) @ leaky_relu(U2, alpha).T
        gate += (leaky_relu_grad(U1, alpha) * (a * a)) @ leaky_relu_grad(U2, alpha).T
    return (sa * feat + sw * gate * (X1 @ X2.T)) / n_mc
