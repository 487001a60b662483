"""Hot loops with a numba implementation and an equivalent numpy one.

The public wrappers pick the compiled path when :func:`numba_enabled` is true.
Both implementations are importable directly (``*_numba`` / ``*_numpy``) so
tests and the benchmark can compare them.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import njit, numba_enabled


def leaky_relu(z: np.ndarray, alpha: float) -> np.ndarray:
    return np.where(z >= 0.0, z, alpha * z)


def leaky_relu_grad(z: np.ndarray, alpha: float) -> np.ndarray:
    # the gate at exactly zero follows the positive branch
    return np.where(z >= 0.0, 1.0, alpha)


# ---------------------------------------------------------------------------
# one-hidden-layer output decomposition


def decomp_h0_numpy(a0, da, w0, dw, w, X, sigma, alpha):
    U0 = X @ w0.T
    dU = X @ dw.T
    G = leaky_relu_grad(X @ w.T, alpha)
    GU0 = G * U0
    GdU = G * dU
    out = np.empty((4, X.shape[0]))
    out[0] = sigma * (GU0 @ a0)
    out[1] = sigma * (GU0 @ da)
    out[2] = sigma * (GdU @ a0)
    out[3] = sigma * (GdU @ da)
    return out


@njit(cache=True)
def decomp_h0_numba(a0, da, w0, dw, w, X, sigma, alpha):
    n, d0 = X.shape
    d = a0.shape[0]
    out = np.zeros((4, n))
    for i in range(n):
        s0 = 0.0
        s1 = 0.0
        s2 = 0.0
        s3 = 0.0
        for r in range(d):
            u0 = 0.0
            du = 0.0
            u = 0.0
            for j in range(d0):
                xj = X[i, j]
                u0 += w0[r, j] * xj
                du += dw[r, j] * xj
                u += w[r, j] * xj
            g = 1.0 if u >= 0.0 else alpha
            s0 += a0[r] * g * u0
            s1 += da[r] * g * u0
            s2 += a0[r] * g * du
            s3 += da[r] * g * du
        out[0, i] = sigma * s0
        out[1, i] = sigma * s1
        out[2, i] = sigma * s2
        out[3, i] = sigma * s3
    return out


def decomp_h0(a0, da, w0, dw, w, X, sigma, alpha):
    """Rows: untouched, output-increment, input-increment, both increments."""
    args = (a0, da, w0, dw, w, X)
    if numba_enabled():
        return decomp_h0_numba(*(np.ascontiguousarray(x, dtype=np.float64) for x in args), float(sigma), float(alpha))
    return decomp_h0_numpy(*args, sigma, alpha)


# ---------------------------------------------------------------------------
# finite-width tangent kernel on a list of input pairs


def ntk_pairs_numpy(a, w, P, Q, alpha, scale_a, scale_w):
    U = P @ w.T
    V = Q @ w.T
    feat = leaky_relu(U, alpha) * leaky_relu(V, alpha)
    gate = leaky_relu_grad(U, alpha) * leaky_relu_grad(V, alpha)
    xdot = np.einsum("ij,ij->i", P, Q)
    return scale_a * feat.sum(axis=1) + scale_w * (gate @ (a * a)) * xdot


@njit(cache=True)
def ntk_pairs_numba(a, w, P, Q, alpha, scale_a, scale_w):
    p, d0 = P.shape
    d = a.shape[0]
    out = np.zeros(p)
    for i in range(p):
        xdot = 0.0
        for j in range(d0):
            xdot += P[i, j] * Q[i, j]
        fa = 0.0
        fw = 0.0
        for r in range(d):
            u = 0.0
            v = 0.0
            for j in range(d0):
                u += w[r, j] * P[i, j]
                v += w[r, j] * Q[i, j]
            pu = u if u >= 0.0 else alpha * u
            pv = v if v >= 0.0 else alpha * v
            gu = 1.0 if u >= 0.0 else alpha
            gv = 1.0 if v >= 0.0 else alpha
            fa += pu * pv
            fw += gu * gv * a[r] * a[r]
        out[i] = scale_a * fa + scale_w * fw * xdot
    return out


def ntk_pairs(a, w, P, Q, alpha, scale_a, scale_w):
    """Sum over units of the tangent-kernel integrand for each row pair (P[i], Q[i])."""
    if numba_enabled():
        c = np.ascontiguousarray
        return ntk_pairs_numba(c(a, dtype=np.float64), c(w, dtype=np.float64), c(P, dtype=np.float64),
                               c(Q, dtype=np.float64), float(alpha), float(scale_a), float(scale_w))
    return ntk_pairs_numpy(a, w, P, Q, alpha, scale_a, scale_w)


# ---------------------------------------------------------------------------
# Monte-Carlo moments of the same integrand over sampled units


def mc_moments_numpy(a, w, P, Q, alpha, scale_a, scale_w):
    U = w @ P.T
    V = w @ Q.T
    xdot = np.einsum("ij,ij->i", P, Q)
    vals = scale_a * leaky_relu(U, alpha) * leaky_relu(V, alpha)
    vals += scale_w * leaky_relu_grad(U, alpha) * leaky_relu_grad(V, alpha) * (a * a)[:, None] * xdot[None, :]
    return vals.sum(axis=0), (vals * vals).sum(axis=0)


@njit(cache=True)
def mc_moments_numba(a, w, P, Q, alpha, scale_a, scale_w):
    p, d0 = P.shape
    m = a.shape[0]
    xdot = np.zeros(p)
    for i in range(p):
        for j in range(d0):
            xdot[i] += P[i, j] * Q[i, j]
    s1 = np.zeros(p)
    s2 = np.zeros(p)
    for r in range(m):
        a2 = a[r] * a[r]
        for i in range(p):
            u = 0.0
            v = 0.0
            for j in range(d0):
                u += w[r, j] * P[i, j]
                v += w[r, j] * Q[i, j]
            pu = u if u >= 0.0 else alpha * u
            pv = v if v >= 0.0 else alpha * v
            gu = 1.0 if u >= 0.0 else alpha
            gv = 1.0 if v >= 0.0 else alpha
            val = scale_a * pu * pv + scale_w * gu * gv * a2 * xdot[i]
            s1[i] += val
            s2[i] += val * val
    return s1, s2


def mc_moments(a, w, P, Q, alpha, scale_a, scale_w):
    """Per-pair sum and sum of squares of the kernel integrand over sampled units."""
    if numba_enabled():
        c = np.ascontiguousarray
        return mc_moments_numba(c(a, dtype=np.float64), c(w, dtype=np.float64), c(P, dtype=np.float64),
                                c(Q, dtype=np.float64), float(alpha), float(scale_a), float(scale_w))
    return mc_moments_numpy(a, w, P, Q, alpha, scale_a, scale_w)


# ---------------------------------------------------------------------------
# squared Euclidean cost matrix


def sq_dists_numpy(A, B):
    diff = A[:, None, :] - B[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


@njit(cache=True)
def sq_dists_numba(A, B):
    n, k = A.shape
    m = B.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(k):
                diff = A[i, t] - B[j, t]
                acc += diff * diff
            out[i, j] = acc
    return out


def sq_dists(A, B):
    if numba_enabled():
        return sq_dists_numba(np.ascontiguousarray(A, dtype=np.float64), np.ascontiguousarray(B, dtype=np.float64))
    if A.shape[0] * B.shape[0] * A.shape[1] > 2**24:
        # row blocks keep the broadcast temporary small
        step = max(1, 2**24 // (B.shape[0] * A.shape[1]))
        return np.vstack([sq_dists_numpy(A[i:i + step], B) for i in range(0, A.shape[0], step)])
    return sq_dists_numpy(A, B)


def chunk_bounds(total: int, chunk: int):
    for start in range(0, total, chunk):
        yield start, min(total, start + chunk)


def n_chunks(total: int, chunk: int) -> int:
    return math.ceil(total / chunk)
