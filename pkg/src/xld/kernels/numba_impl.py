"""Numba ``@njit`` backend for the hot kernels.

Signatures and semantics mirror :mod:`xld.kernels.numpy_impl`; loops
are fused, row-major, and parallelized over rows.  Reductions are laid
out so each output element is produced in a fixed order, keeping
results reproducible for a fixed thread count.
"""

import numpy as np
from numba import njit, prange

_JIT = dict(parallel=True, cache=True, fastmath=True)


@njit(**_JIT)
def rmsnorm_fwd(x, w, eps):
    n, d = x.shape
    y = np.empty_like(x)
    inv_rms = np.empty(n, dtype=x.dtype)
    for i in prange(n):
        s = 0.0
        for j in range(d):
            s += x[i, j] * x[i, j]
        r = 1.0 / np.sqrt(s / d + eps)
        inv_rms[i] = r
        for j in range(d):
            y[i, j] = x[i, j] * r * w[j]
    return y, inv_rms


@njit(**_JIT)
def rmsnorm_bwd(x, w, inv_rms, dy):
    n, d = x.shape
    dx = np.empty_like(x)
    dw = np.zeros(d, dtype=x.dtype)
    for i in prange(n):
        r = inv_rms[i]
        dot = 0.0
        for j in range(d):
            dot += dy[i, j] * w[j] * x[i, j]
        c = dot * r * r * r / d
        for j in range(d):
            dx[i, j] = dy[i, j] * w[j] * r - x[i, j] * c
    # dw reduction stays serial and row-major: deterministic and cheap
    for i in range(n):
        r = inv_rms[i]
        for j in range(d):
            dw[j] += dy[i, j] * x[i, j] * r
    return dx, dw


@njit(**_JIT)
def rope_apply(x, cos, sin):
    """Rotate half-split lanes by per-row tables cos/sin of shape
    (N, D/2); trigonometry is precomputed by the caller."""
    n, h, d = x.shape
    half = d // 2
    out = np.empty_like(x)
    for i in prange(n):
        for k in range(h):
            for j in range(half):
                x1 = x[i, k, j]
                x2 = x[i, k, j + half]
                out[i, k, j] = x1 * cos[i, j] - x2 * sin[i, j]
                out[i, k, j + half] = x2 * cos[i, j] + x1 * sin[i, j]
    return out


def rope_rotate(x, pos, theta, sign):
    """Rotary embedding over the last axis (half-split pairing);
    sign=-1 applies the inverse rotation."""
    cos, sin = rope_tables(pos, x.shape[2], theta, x.dtype, sign)
    return rope_apply(x, cos, sin)


def rope_tables(pos, d, theta, dtype, sign=1.0):
    half = d // 2
    j = np.arange(half, dtype=np.float64)
    inv_freq = theta ** (-2.0 * j / d)
    ang = np.asarray(pos, dtype=np.float64)[:, None] * inv_freq
    return np.cos(ang).astype(dtype), (sign * np.sin(ang)).astype(dtype)


@njit(**_JIT)
def causal_softmax_fwd(scores, q_offset):
    b, h, s, t = scores.shape
    p = np.empty_like(scores)
    for r in prange(b * h * s):
        i0 = r // (h * s)
        i1 = (r // s) % h
        i = r % s
        lim = min(i + q_offset + 1, t)
        mx = scores[i0, i1, i, 0]
        for j in range(1, lim):
            v = scores[i0, i1, i, j]
            if v > mx:
                mx = v
        tot = 0.0
        for j in range(lim):
            e = np.exp(scores[i0, i1, i, j] - mx)
            p[i0, i1, i, j] = e
            tot += e
        inv = 1.0 / tot
        for j in range(lim):
            p[i0, i1, i, j] *= inv
        for j in range(lim, t):
            p[i0, i1, i, j] = 0.0
    return p


@njit(**_JIT)
def causal_softmax_bwd(p, dp):
    b, h, s, t = p.shape
    ds = np.empty_like(p)
    for r in prange(b * h * s):
        i0 = r // (h * s)
        i1 = (r // s) % h
        i = r % s
        dot = 0.0
        for j in range(t):
            dot += dp[i0, i1, i, j] * p[i0, i1, i, j]
        for j in range(t):
            ds[i0, i1, i, j] = p[i0, i1, i, j] * (dp[i0, i1, i, j] - dot)
    return ds


@njit(**_JIT)
def silu_mul_fwd(g, u):
    n, d = g.shape
    a = np.empty_like(g)
    for i in prange(n):
        for j in range(d):
            sig = 1.0 / (1.0 + np.exp(-g[i, j]))
            a[i, j] = g[i, j] * sig * u[i, j]
    return a


@njit(**_JIT)
def silu_mul_bwd(g, u, da):
    n, d = g.shape
    dg = np.empty_like(g)
    du = np.empty_like(g)
    for i in prange(n):
        for j in range(d):
            sig = 1.0 / (1.0 + np.exp(-g[i, j]))
            silu = g[i, j] * sig
            dsilu = sig * (1.0 + g[i, j] * (1.0 - sig))
            dg[i, j] = da[i, j] * u[i, j] * dsilu
            du[i, j] = da[i, j] * silu
    return dg, du


@njit(**_JIT)
def log_softmax_rows(logits):
    n, v = logits.shape
    out = np.empty((n, v), dtype=np.float64)
    for i in prange(n):
        mx = float(logits[i, 0])
        for j in range(1, v):
            x = float(logits[i, j])
            if x > mx:
                mx = x
        tot = 0.0
        for j in range(v):
            tot += np.exp(float(logits[i, j]) - mx)
        lse = mx + np.log(tot)
        for j in range(v):
            out[i, j] = float(logits[i, j]) - lse
    return out


@njit(**_JIT)
def cross_entropy_fwd(logits, targets, weights):
    n, v = logits.shape
    lse = np.empty(n, dtype=np.float64)
    li = np.zeros(n, dtype=np.float64)
    for i in prange(n):
        mx = float(logits[i, 0])
        for j in range(1, v):
            x = float(logits[i, j])
            if x > mx:
                mx = x
        tot = 0.0
        for j in range(v):
            tot += np.exp(float(logits[i, j]) - mx)
        lse[i] = mx + np.log(tot)
        if weights[i] != 0.0:
            li[i] = weights[i] * (lse[i] - float(logits[i, targets[i]]))
    loss = 0.0
    for i in range(n):
        loss += li[i]
    return loss, lse


@njit(**_JIT)
def cross_entropy_bwd(logits, targets, weights, lse):
    n, v = logits.shape
    dl = np.empty_like(logits)
    for i in prange(n):
        w = weights[i]
        if w != 0.0:
            for j in range(v):
                dl[i, j] = np.exp(float(logits[i, j]) - lse[i]) * w
            dl[i, targets[i]] -= w
        else:
            for j in range(v):
                dl[i, j] = 0.0
    return dl


@njit(**_JIT)
def cross_entropy_fwd_bwd(logits, targets, weights):
    """Fused loss + gradient: one pass over the logits reusing the
    exponentials (training-path fast lane)."""
    n, v = logits.shape
    li = np.zeros(n, dtype=np.float64)
    dl = np.empty_like(logits)
    for i in prange(n):
        w = weights[i]
        mx = float(logits[i, 0])
        for j in range(1, v):
            x = float(logits[i, j])
            if x > mx:
                mx = x
        tot = 0.0
        for j in range(v):
            e = np.exp(float(logits[i, j]) - mx)
            dl[i, j] = e
            tot += e
        lse = mx + np.log(tot)
        if w != 0.0:
            li[i] = w * (lse - float(logits[i, targets[i]]))
            inv = w / tot
            for j in range(v):
                dl[i, j] *= inv
            dl[i, targets[i]] -= w
        else:
            for j in range(v):
                dl[i, j] = 0.0
    loss = 0.0
    for i in range(n):
        loss += li[i]
    return loss, dl


@njit(**_JIT)
def embedding_grad(tokens, dx, vocab_size):
    n, d = dx.shape
    de = np.zeros((vocab_size, d), dtype=dx.dtype)
    # serial row loop: contiguous reads/writes, deterministic order
    for i in range(n):
        t = tokens[i]
        for j in range(d):
            de[t, j] += dx[i, j]
    return de


@njit(**_JIT)
def adamw_update(p, g, m, v, lr, beta1, beta2, eps, wd, t):
    n = p.size
    pf = p.reshape(n)
    gf = g.reshape(n)
    mf = m.reshape(n)
    vf = v.reshape(n)
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for i in prange(n):
        mf[i] = beta1 * mf[i] + (1.0 - beta1) * gf[i]
        vf[i] = beta2 * vf[i] + (1.0 - beta2) * gf[i] * gf[i]
        mhat = mf[i] / bc1
        vhat = vf[i] / bc2
        pf[i] -= lr * (mhat / (np.sqrt(vhat) + eps) + wd * pf[i])
