"""Compiled inner loops for the trigonometric basis.

Every public update path (single step, batched fold, Sieve-SGD, Lepski) goes
through the same ``_fill``/``_predict``/``_update`` helpers so that the
different entry points produce bit-identical coefficients.
"""
import math

import numpy as np
from numba import njit

SQRT2 = math.sqrt(2.0)
TWO_PI = 2.0 * math.pi
SNAP_RTOL = 1e-12


@njit(cache=True)
def snap_floor(v):
    r = np.round(v)
    if abs(v - r) <= SNAP_RTOL * max(1.0, abs(v)):
        return int(r)
    return int(math.floor(v))


@njit(cache=True)
def snap_ceil(v):
    r = np.round(v)
    if abs(v - r) <= SNAP_RTOL * max(1.0, abs(v)):
        return int(r)
    return int(math.ceil(v))


@njit(cache=True)
def _fill(x_row, lo, hi, scratch):
    # scratch[k, j] = psi_{j+1}(x_k) for lo <= j < hi
    for k in range(x_row.shape[0]):
        xk = x_row[k]
        for j in range(lo, hi):
            ang = TWO_PI * (j // 2 + 1) * xk
            if j % 2 == 0:
                scratch[k, j] = SQRT2 * math.sin(ang)
            else:
                scratch[k, j] = SQRT2 * math.cos(ang)


@njit(cache=True)
def _predict(alpha, beta, length, scratch):
    acc = alpha
    for k in range(beta.shape[0]):
        for j in range(length):
            acc += beta[k, j] * scratch[k, j]
    return acc


@njit(cache=True)
def _update(alpha, beta, J, c, intercept, tw, use_t, scratch):
    """Apply ``c * t_j * psi_j`` to the first J coefficients of every component.

    Returns (new_alpha, ok).  Nothing is written unless every new value is
    finite.
    """
    if not math.isfinite(c):
        return alpha, False
    new_alpha = alpha + c if intercept else alpha
    if not math.isfinite(new_alpha):
        return alpha, False
    p = beta.shape[0]
    for k in range(p):
        for j in range(J):
            if use_t:
                v = beta[k, j] + c * tw[j] * scratch[k, j]
            else:
                v = beta[k, j] + c * scratch[k, j]
            if not math.isfinite(v):
                return alpha, False
    for k in range(p):
        for j in range(J):
            if use_t:
                beta[k, j] += c * tw[j] * scratch[k, j]
            else:
                beta[k, j] += c * scratch[k, j]
    return new_alpha, True


@njit(cache=True)
def predict_point(alpha, beta, length, x_row, scratch):
    _fill(x_row, 0, length, scratch)
    return _predict(alpha, beta, length, scratch)


@njit(cache=True)
def predict_many(alpha, beta, length, X):
    out = np.empty(X.shape[0])
    scratch = np.empty((beta.shape[0], max(length, 1)))
    for t in range(X.shape[0]):
        _fill(X[t], 0, length, scratch)
        out[t] = _predict(alpha, beta, length, scratch)
    return out


@njit(cache=True)
def apply_residual(alpha, beta, length, x_row, c, J, intercept, scratch):
    """Update with a precomputed ``gamma * r`` (generic-loss path)."""
    _fill(x_row, 0, max(length, J), scratch)
    empty = np.empty(0)
    alpha, ok = _update(alpha, beta, J, c, intercept, empty, False, scratch)
    if ok and J > length:
        length = J
    return alpha, length, ok


@njit(cache=True)
def fold_fsgd(alpha, beta, length, X, Y, gammas, Js, intercept, scratch):
    """Squared-loss F-SGD over a block of samples.

    Returns (alpha, length, fail) where ``fail`` is the block-local index of
    the first diverging sample, or -1.
    """
    empty = np.empty(0)
    for t in range(X.shape[0]):
        J = Js[t]
        _fill(X[t], 0, max(length, J), scratch)
        r = Y[t] - _predict(alpha, beta, length, scratch)
        alpha, ok = _update(alpha, beta, J, gammas[t] * r, intercept, empty, False, scratch)
        if not ok:
            return alpha, length, t
        if J > length:
            length = J
    return alpha, length, -1


@njit(cache=True)
def fold_sieve(g_alpha, g_beta, f_alpha, f_beta, length, X, Y, gammas, Js,
               intercept, tw, averaging, step0, scratch):
    """Sieve-SGD: F-SGD on the inner iterate with weights ``tw`` plus
    Polyak averaging into ``f``."""
    for t in range(X.shape[0]):
        J = Js[t]
        _fill(X[t], 0, max(length, J), scratch)
        r = Y[t] - _predict(g_alpha, g_beta, length, scratch)
        g_alpha, ok = _update(g_alpha, g_beta, J, gammas[t] * r, intercept, tw, True, scratch)
        if not ok:
            return g_alpha, f_alpha, length, t
        if J > length:
            length = J
        i = step0 + t + 1
        if averaging:
            w_old = i / (i + 1.0)
            w_new = 1.0 / (i + 1.0)
            f_alpha = w_old * f_alpha + w_new * g_alpha
            for k in range(g_beta.shape[0]):
                for j in range(length):
                    f_beta[k, j] = w_old * f_beta[k, j] + w_new * g_beta[k, j]
        else:
            f_alpha = g_alpha
            for k in range(g_beta.shape[0]):
                for j in range(length):
                    f_beta[k, j] = g_beta[k, j]
    return g_alpha, f_alpha, length, -1


@njit(cache=True)
def lepski_grid(i, s0, s1):
    if i <= 2:
        return np.array([s0, s1])
    h = 1.0 / math.log(i)
    count = int(math.floor((s1 - s0) / h + 1e-12)) + 1
    out = np.empty(count)
    for m in range(count):
        out[m] = s0 + m * h
    return out


@njit(cache=True)
def lepski_truncations(i, grid, B):
    Js = np.empty(grid.shape[0], dtype=np.int64)
    for m in range(grid.shape[0]):
        Js[m] = snap_floor(B * i ** (1.0 / (2.0 * grid[m] + 1.0)))
    return Js


@njit(cache=True)
def sq_prefix(x_row, J):
    # sum_k sum_{j<=J} psi_j(x_k)^2; sin/cos pairs at one frequency sum to 2
    tot = 0.0
    for k in range(x_row.shape[0]):
        tot += 2.0 * (J // 2)
        if J % 2 == 1:
            sv = math.sin(TWO_PI * ((J + 1) // 2) * x_row[k])
            tot += 2.0 * sv * sv
    return tot


@njit(cache=True)
def lepski_select(i, grid, Js, gamma, r, x_row, warmup):
    """Index of the largest grid value passing the pairwise condition.

    Steps before ``warmup`` (never earlier than 3, where log i > 1) take the
    largest candidate without testing.
    """
    S = grid.shape[0]
    if i < max(warmup, 3):
        return S - 1
    P = np.empty(S)
    for m in range(S):
        P[m] = sq_prefix(x_row, Js[m])
    c2 = (gamma * r) * (gamma * r)
    base = i / math.log(i)
    tau = np.empty(S)
    for m in range(S):
        tau[m] = base ** (-2.0 * grid[m] / (2.0 * grid[m] + 1.0))
    for a in range(S - 1, 0, -1):
        ok = True
        for b in range(a):
            if c2 * (P[b] - P[a]) > tau[b]:
                ok = False
                break
        if ok:
            return a
    return 0


@njit(cache=True)
def fold_lepski(alpha, beta, length, X, Y, step0, s0, s1, A, B, warmup, intercept,
                scratch, chosen):
    empty = np.empty(0)
    for t in range(X.shape[0]):
        i = step0 + t + 1
        gamma = A / i
        _fill(X[t], 0, length, scratch)
        r = Y[t] - _predict(alpha, beta, length, scratch)
        grid = lepski_grid(i, s0, s1)
        Js = lepski_truncations(i, grid, B)
        a = lepski_select(i, grid, Js, gamma, r, X[t], warmup)
        J = Js[a]
        chosen[t] = grid[a]
        if J > length:
            _fill(X[t], length, J, scratch)
        alpha, ok = _update(alpha, beta, J, gamma * r, intercept, empty, False, scratch)
        if not ok:
            return alpha, length, t
        if J > length:
            length = J
    return alpha, length, -1
