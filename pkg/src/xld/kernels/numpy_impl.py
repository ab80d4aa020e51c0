"""Pure-numpy reference implementations of the hot kernels.

This is the fallback backend (``XLD_BACKEND=numpy``) and the
correctness reference the numba backend is tested against.
"""

import numpy as np


def rmsnorm_fwd(x, w, eps):
    """Row-wise RMS normalization, y = x / rms(x) * w.

    x: (N, D), w: (D,).  Returns (y, inv_rms) where inv_rms (N,) is the
    cached 1/rms factor the backward pass needs.
    """
    ms = np.mean(x * x, axis=1) + eps
    inv_rms = 1.0 / np.sqrt(ms)
    y = x * inv_rms[:, None] * w
    return y, inv_rms


def rmsnorm_bwd(x, w, inv_rms, dy):
    """Backward of rmsnorm_fwd.  Returns (dx, dw)."""
    d = x.shape[1]
    g = dy * w                                    # (N, D)
    dot = np.sum(g * x, axis=1)                   # (N,)
    dx = g * inv_rms[:, None] - x * (dot * inv_rms**3 / d)[:, None]
    dw = np.sum(dy * x * inv_rms[:, None], axis=0)
    return dx, dw


def rope_tables(pos, d, theta, dtype, sign=1.0):
    """Per-position cos/sin tables of shape (N, D/2) for the rotation."""
    half = d // 2
    j = np.arange(half, dtype=np.float64)
    inv_freq = theta ** (-2.0 * j / d)
    ang = np.asarray(pos, dtype=np.float64)[:, None] * inv_freq
    return np.cos(ang).astype(dtype), (sign * np.sin(ang)).astype(dtype)


def rope_apply(x, cos, sin):
    """Rotate half-split lanes of x (N, H, D) by per-row tables."""
    half = x.shape[2] // 2
    c = cos[:, None, :]
    s = sin[:, None, :]
    x1 = x[:, :, :half]
    x2 = x[:, :, half:]
    out = np.empty_like(x)
    out[:, :, :half] = x1 * c - x2 * s
    out[:, :, half:] = x2 * c + x1 * s
    return out


def rope_rotate(x, pos, theta, sign):
    """Rotary position embedding over the last axis, half-split layout
    (the first D/2 lanes pair with the last D/2).  sign=-1 applies the
    inverse rotation (used to push gradients back)."""
    cos, sin = rope_tables(pos, x.shape[2], theta, x.dtype, sign)
    return rope_apply(x, cos, sin)


def causal_softmax_fwd(scores, q_offset):
    """Masked softmax over the key axis of (B, H, S, T) scores.

    Query row i may attend keys j <= i + q_offset (q_offset is the
    number of cached keys preceding the query block; 0 for training).
    Returns the probability tensor; masked entries are exactly 0.
    """
    b, h, s, t = scores.shape
    i = np.arange(s)[:, None]
    j = np.arange(t)[None, :]
    mask = j <= (i + q_offset)
    neg = np.array(-np.inf, dtype=scores.dtype)
    masked = np.where(mask, scores, neg)
    mx = np.max(masked, axis=-1, keepdims=True)
    e = np.exp(masked - mx)
    e = np.where(mask, e, 0.0)
    p = e / np.sum(e, axis=-1, keepdims=True)
    return p.astype(scores.dtype)


def causal_softmax_bwd(p, dp):
    """Backward of softmax: ds = p * (dp - sum(dp * p))."""
    dot = np.sum(dp * p, axis=-1, keepdims=True)
    return (p * (dp - dot)).astype(p.dtype)


def silu_mul_fwd(g, u):
    """SwiGLU activation: silu(g) * u, elementwise."""
    sig = 1.0 / (1.0 + np.exp(-g))
    return (g * sig * u).astype(g.dtype)


def silu_mul_bwd(g, u, da):
    """Backward of silu_mul_fwd.  Returns (dg, du)."""
    sig = 1.0 / (1.0 + np.exp(-g))
    silu = g * sig
    dsilu = sig * (1.0 + g * (1.0 - sig))
    dg = (da * u * dsilu).astype(g.dtype)
    du = (da * silu).astype(g.dtype)
    return dg, du


def log_softmax_rows(logits):
    """Row-wise log softmax of (N, V) in float64 accumulation."""
    x = logits.astype(np.float64)
    mx = np.max(x, axis=1, keepdims=True)
    lse = mx + np.log(np.sum(np.exp(x - mx), axis=1, keepdims=True))
    return x - lse


def cross_entropy_fwd(logits, targets, weights):
    """Weighted next-token loss over (N, V) logit rows.

    targets: (N,) token ids; weights: (N,) float64 row weights (zero for
    rows that do not contribute).  Returns (loss float64, lse (N,)) with
    loss = sum_i weights[i] * (lse_i - logits[i, t_i]).
    """
    x = logits.astype(np.float64)
    mx = np.max(x, axis=1)
    lse = mx + np.log(np.sum(np.exp(x - mx[:, None]), axis=1))
    picked = x[np.arange(x.shape[0]), targets]
    loss = np.sum((lse - picked) * weights)
    return float(loss), lse


def cross_entropy_bwd(logits, targets, weights, lse):
    """dlogits of the weighted loss; zero rows where weight is zero."""
    p = np.exp(logits.astype(np.float64) - lse[:, None])
    p[np.arange(p.shape[0]), targets] -= 1.0
    p *= weights[:, None]
    return p.astype(logits.dtype)


def cross_entropy_fwd_bwd(logits, targets, weights):
    """Fused loss + gradient (see cross_entropy_fwd / _bwd)."""
    loss, lse = cross_entropy_fwd(logits, targets, weights)
    return loss, cross_entropy_bwd(logits, targets, weights, lse)


def embedding_grad(tokens, dx, vocab_size):
    """Scatter-add token embedding gradient.  Returns (V, D)."""
    de = np.zeros((vocab_size, dx.shape[1]), dtype=dx.dtype)
    np.add.at(de, tokens, dx)
    return de


def adamw_update(p, g, m, v, lr, beta1, beta2, eps, wd, t):
    """One decoupled-weight-decay Adam step, updating p/m/v in place.

    t is the 1-based update count used for bias correction.
    """
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    p -= (lr * (mhat / (np.sqrt(vhat) + eps) + wd * p)).astype(p.dtype)
