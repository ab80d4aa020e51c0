"""Decoder-only transformer with hand-written forward and backward passes.

Architecture: pre-norm blocks of grouped-query attention (RoPE) and a
SwiGLU MLP, RMS normalization throughout, untied input/output
embeddings, no biases.  Matrix products go through BLAS; the fused
elementwise/reduction pieces go through :mod:`xld.kernels`.

Parameters live in a plain ``{ParamGroupId: ndarray}`` mapping so every
group is individually addressable by the attribution and surgery code.
Weights are stored ``(in, out)``; activations are row vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import kernels as K
from .errors import InputError


class Component(IntEnum):
    """Parameter group kinds, ordered for the total order on group ids."""

    attn_q = 0
    attn_k = 1
    attn_v = 2
    attn_o = 3
    mlp_up = 4
    mlp_gate = 5
    mlp_down = 6
    input_norm = 7
    post_attn_norm = 8
    token_embedding = 9
    final_norm = 10
    unembedding = 11


#: components that exist once per transformer layer
LAYER_COMPONENTS = tuple(c for c in Component if c < Component.token_embedding)
#: components outside any layer (layer field holds GLOBAL_LAYER)
GLOBAL_COMPONENTS = (Component.token_embedding, Component.final_norm, Component.unembedding)
GLOBAL_LAYER = -1


@dataclass(frozen=True, order=True)
class ParamGroupId:
    """Addressable parameter group: (layer major, component minor)."""

    layer: int
    component: Component

    def __str__(self) -> str:
        if self.layer == GLOBAL_LAYER:
            return self.component.name
        return f"{self.component.name}@{self.layer}"

    @staticmethod
    def parse(text: str) -> "ParamGroupId":
        text = text.strip()
        if "@" in text:
            name, _, layer = text.partition("@")
            return ParamGroupId(int(layer), Component[name])
        return ParamGroupId(GLOBAL_LAYER, Component[text])


def gid(component: Component | str, layer: int = GLOBAL_LAYER) -> ParamGroupId:
    if isinstance(component, str):
        component = Component[component]
    return ParamGroupId(layer, component)


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int = 8
    hidden_size: int = 128
    n_heads: int = 4
    n_kv_heads: int = 2
    intermediate_size: int = 352
    max_seq_len: int = 256
    rope_theta: float = 10000.0
    vocab_size: int = 2048
    norm_epsilon: float = 1e-5

    def __post_init__(self):
        if self.hidden_size % self.n_heads != 0:
            raise InputError("hidden_size must be divisible by n_heads")
        if self.n_heads % self.n_kv_heads != 0:
            raise InputError("n_heads must be divisible by n_kv_heads")
        if self.n_layers < 2:
            raise InputError("need at least 2 layers for block analyses")
        if self.head_dim % 2 != 0:
            raise InputError("head_dim must be even for rotary embeddings")

    @property
    def head_dim(self) -> int:
        return self.hidden_size // self.n_heads

    @property
    def kv_dim(self) -> int:
        return self.n_kv_heads * self.head_dim

    def to_dict(self) -> dict:
        return {
            "n_layers": self.n_layers,
            "hidden_size": self.hidden_size,
            "n_heads": self.n_heads,
            "n_kv_heads": self.n_kv_heads,
            "intermediate_size": self.intermediate_size,
            "max_seq_len": self.max_seq_len,
            "rope_theta": self.rope_theta,
            "vocab_size": self.vocab_size,
            "norm_epsilon": self.norm_epsilon,
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        return ModelConfig(**d)


def param_group_ids(config: ModelConfig) -> list[ParamGroupId]:
    """All group ids of a model, in total (layer, component) order."""
    ids = [ParamGroupId(GLOBAL_LAYER, c) for c in GLOBAL_COMPONENTS]
    for layer in range(config.n_layers):
        for c in LAYER_COMPONENTS:
            ids.append(ParamGroupId(layer, c))
    return sorted(ids)


def group_shape(config: ModelConfig, g: ParamGroupId) -> tuple[int, ...]:
    h, i, v = config.hidden_size, config.intermediate_size, config.vocab_size
    kv = config.kv_dim
    c = g.component
    if c == Component.token_embedding:
        return (v, h)
    if c == Component.unembedding:
        return (h, v)
    if c in (Component.final_norm, Component.input_norm, Component.post_attn_norm):
        return (h,)
    if c == Component.attn_q:
        return (h, h)
    if c in (Component.attn_k, Component.attn_v):
        return (h, kv)
    if c == Component.attn_o:
        return (h, h)
    if c in (Component.mlp_up, Component.mlp_gate):
        return (h, i)
    if c == Component.mlp_down:
        return (i, h)
    raise InputError(f"unknown component {c}")


def count_params(config: ModelConfig) -> int:
    return sum(int(np.prod(group_shape(config, g))) for g in param_group_ids(config))


def init_params(config: ModelConfig, seed: int, dtype=np.float32) -> dict:
    """Scaled-normal init: std 0.02, residual projections down-scaled by
    1/sqrt(2 * n_layers), norm gains at 1."""
    rng = np.random.default_rng(seed)
    resid_scale = 1.0 / np.sqrt(2.0 * config.n_layers)
    params = {}
    for g in param_group_ids(config):
        shape = group_shape(config, g)
        if g.component in (Component.input_norm, Component.post_attn_norm, Component.final_norm):
            params[g] = np.ones(shape, dtype=dtype)
            continue
        std = 0.02
        if g.component in (Component.attn_o, Component.mlp_down):
            std *= resid_scale
        params[g] = (rng.standard_normal(shape) * std).astype(dtype)
    return params


def _validate_tokens(config: ModelConfig, tokens: np.ndarray) -> np.ndarray:
    tokens = np.asarray(tokens)
    if tokens.ndim == 1:
        tokens = tokens[None, :]
    if tokens.ndim != 2:
        raise InputError("tokens must be a sequence or a batch of sequences")
    if tokens.shape[1] == 0:
        raise InputError("empty token sequence")
    if tokens.shape[1] > config.max_seq_len:
        raise InputError(f"sequence length {tokens.shape[1]} exceeds max_seq_len {config.max_seq_len}")
    if tokens.min() < 0 or tokens.max() >= config.vocab_size:
        raise InputError("token id out of range")
    return tokens.astype(np.int64)


def _attn_forward(params, config, layer, a, rope, cache=None):
    """Grouped-query attention over normalized activations a (B, S, H).

    rope: (cos, sin) tables of shape (B*S, head_dim/2) for the rows of
    a.  When ``cache`` is given, (k, v) from the cache are prepended
    (incremental decoding).  Returns (out, saved) where saved feeds the
    backward pass.
    """
    b, s, h = a.shape
    nh, nkv, d = config.n_heads, config.n_kv_heads, config.head_dim
    gq = nh // nkv
    flat = a.reshape(b * s, h)
    cos, sin = rope

    q = (flat @ params[gid(Component.attn_q, layer)]).reshape(b * s, nh, d)
    k = (flat @ params[gid(Component.attn_k, layer)]).reshape(b * s, nkv, d)
    v = (flat @ params[gid(Component.attn_v, layer)]).reshape(b, s, nkv, d)

    scale = np.asarray(1.0 / np.sqrt(d), dtype=a.dtype)
    q = K.rope_apply(q, cos, sin) * scale
    k = K.rope_apply(k, cos, sin)

    q = q.reshape(b, s, nh, d).transpose(0, 2, 1, 3)          # (B, nh, S, D)
    k = k.reshape(b, s, nkv, d).transpose(0, 2, 1, 3)          # (B, nkv, S, D)
    v = v.transpose(0, 2, 1, 3)                                # (B, nkv, S, D)

    q_offset = 0
    if cache is not None:
        if cache["k"] is not None:
            k = np.concatenate([cache["k"], k], axis=2)
            v = np.concatenate([cache["v"], v], axis=2)
        cache["k"], cache["v"] = k, v
        q_offset = k.shape[2] - s

    t = k.shape[2]
    q5 = q.reshape(b, nkv, gq, s, d)
    scores = np.matmul(q5, k[:, :, None].swapaxes(-1, -2))     # (B, nkv, gq, S, T)
    p = K.causal_softmax_fwd(np.ascontiguousarray(scores.reshape(b, nh, s, t)), q_offset)
    o5 = np.matmul(p.reshape(b, nkv, gq, s, t), v[:, :, None])  # (B, nkv, gq, S, D)
    o = o5.reshape(b, nh, s, d).transpose(0, 2, 1, 3).reshape(b * s, h)
    out = (o @ params[gid(Component.attn_o, layer)]).reshape(b, s, h)
    saved = {"a": flat, "q": q, "k": k, "v": v, "p": p, "o": o}
    return out, saved


def _forward_core(params, config: ModelConfig, tokens: np.ndarray, want_cache: bool,
                  capture: bool):
    """Shared forward pass.  Returns (logits, hidden, cache)."""
    b, s = tokens.shape
    emb = params[gid(Component.token_embedding)]
    x = emb[tokens.reshape(-1)].reshape(b, s, emb.shape[1])
    pos = np.tile(np.arange(s, dtype=np.int64), b)
    rope = K.rope_tables(pos, config.head_dim, config.rope_theta, x.dtype)
    hidden = [x.copy()] if capture else None
    layer_caches = [] if want_cache else None

    for layer in range(config.n_layers):
        flat = x.reshape(b * s, -1)
        a, inv_in = K.rmsnorm_fwd(flat, params[gid(Component.input_norm, layer)], config.norm_epsilon)
        attn, attn_saved = _attn_forward(params, config, layer, a.reshape(b, s, -1), rope)
        x_mid = x + attn
        mflat = x_mid.reshape(b * s, -1)
        m, inv_mid = K.rmsnorm_fwd(mflat, params[gid(Component.post_attn_norm, layer)], config.norm_epsilon)
        gate = m @ params[gid(Component.mlp_gate, layer)]
        up = m @ params[gid(Component.mlp_up, layer)]
        act = K.silu_mul_fwd(gate, up)
        mlp = (act @ params[gid(Component.mlp_down, layer)]).reshape(b, s, -1)
        x = x_mid + mlp
        if capture:
            hidden.append(x.copy())
        if want_cache:
            layer_caches.append({
                "x_in": flat, "inv_in": inv_in, "attn": attn_saved,
                "x_mid": mflat, "inv_mid": inv_mid, "m": m,
                "gate": gate, "up": up, "act": act,
            })

    xflat = x.reshape(b * s, -1)
    f, inv_f = K.rmsnorm_fwd(xflat, params[gid(Component.final_norm)], config.norm_epsilon)
    logits = (f @ params[gid(Component.unembedding)]).reshape(b, s, config.vocab_size)
    cache = None
    if want_cache:
        cache = {"tokens": tokens, "layers": layer_caches, "x_last": xflat,
                 "inv_f": inv_f, "f": f, "pos": pos}
    return logits, hidden, cache


def forward(ckpt, tokens, capture: bool = False):
    """Run the model on token ids.

    tokens: (S,) or (B, S) int array.  Returns logits of shape
    (S, vocab) / (B, S, vocab).  With ``capture=True`` also returns the
    residual stream: a list of n_layers + 1 arrays where index 0 is the
    embedding output (layer -1) and index L + 1 is the post-block state
    of layer L.
    """
    squeeze = np.asarray(tokens).ndim == 1
    toks = _validate_tokens(ckpt.config, tokens)
    logits, hidden, _ = _forward_core(ckpt.params, ckpt.config, toks, False, capture)
    if squeeze:
        logits = logits[0]
        if capture:
            hidden = [h[0] for h in hidden]
    if capture:
        return logits, hidden
    return logits


def _loss_weights(config, tokens, loss_mask):
    """Validate the selection mask and build per-row loss weights.

    Position i is scored as the prediction of tokens[:, i] given the
    prefix, so row i - 1 of the logits carries its weight.  Each sample
    is a mean over its selected positions; batches average over samples.
    """
    mask = np.asarray(loss_mask)
    if mask.ndim == 1:
        mask = mask[None, :]
    if mask.shape != tokens.shape:
        raise InputError("loss mask shape must match tokens shape")
    mask = mask.astype(bool)
    if mask[:, 0].any():
        raise InputError("position 0 has no context to predict from")
    per_sample = mask.sum(axis=1)
    if (per_sample == 0).any():
        raise InputError("each sample needs at least one selected position")
    b, s = tokens.shape
    w = np.zeros((b, s - 1), dtype=np.float64)
    rows = mask[:, 1:]
    w[rows] = 1.0
    w /= per_sample[:, None]
    w /= b
    return w.reshape(-1)


def loss(ckpt, tokens, loss_mask) -> float:
    """Mean next-token cross-entropy over the selected positions."""
    toks = _validate_tokens(ckpt.config, tokens)
    weights = _loss_weights(ckpt.config, toks, loss_mask)
    logits, _, _ = _forward_core(ckpt.params, ckpt.config, toks, False, False)
    b, s, v = logits.shape
    rows = logits[:, :-1, :].reshape(b * (s - 1), v)
    targets = toks[:, 1:].reshape(-1)
    val, _ = K.cross_entropy_fwd(rows, targets, weights)
    return float(val)


def loss_and_grads(ckpt, tokens, loss_mask):
    """Loss plus gradients for every parameter group."""
    config = ckpt.config
    params = ckpt.params
    toks = _validate_tokens(config, tokens)
    weights = _loss_weights(config, toks, loss_mask)
    logits, _, cache = _forward_core(params, config, toks, True, False)
    b, s, v = logits.shape
    rows = logits[:, :-1, :].reshape(b * (s - 1), v)
    targets = toks[:, 1:].reshape(-1)
    val, drows = K.cross_entropy_fwd_bwd(rows, targets, weights)
    grads = _backward_core(params, config, cache, drows)
    return float(val), grads


def backward(ckpt, tokens, loss_mask):
    """Gradient of :func:`loss` for every parameter group."""
    return loss_and_grads(ckpt, tokens, loss_mask)[1]


def _backward_core(params, config: ModelConfig, cache, drows):
    """Backward from d(loss)/d(logit rows); rows exclude each sample's
    final position (which predicts nothing)."""
    b, s = cache["tokens"].shape
    h = config.hidden_size
    nh, nkv, d = config.n_heads, config.n_kv_heads, config.head_dim
    gq = nh // nkv
    grads = {}

    f_used = np.ascontiguousarray(cache["f"].reshape(b, s, h)[:, :-1]).reshape(-1, h)
    grads[gid(Component.unembedding)] = f_used.T @ drows
    df = np.zeros_like(cache["f"])
    df.reshape(b, s, h)[:, :-1] = (drows @ params[gid(Component.unembedding)].T).reshape(b, s - 1, h)
    dx, dwf = K.rmsnorm_bwd(cache["x_last"], params[gid(Component.final_norm)], cache["inv_f"], df)
    grads[gid(Component.final_norm)] = dwf

    cos_b, sin_b = K.rope_tables(cache["pos"], d, config.rope_theta, dx.dtype, sign=-1.0)
    for layer in reversed(range(config.n_layers)):
        c = cache["layers"][layer]
        # MLP branch: x = x_mid + act @ Wd
        dact = dx @ params[gid(Component.mlp_down, layer)].T
        grads[gid(Component.mlp_down, layer)] = c["act"].T @ dx
        dgate, dup = K.silu_mul_bwd(c["gate"], c["up"], dact)
        grads[gid(Component.mlp_gate, layer)] = c["m"].T @ dgate
        grads[gid(Component.mlp_up, layer)] = c["m"].T @ dup
        dm = dgate @ params[gid(Component.mlp_gate, layer)].T + dup @ params[gid(Component.mlp_up, layer)].T
        dnorm, dwmid = K.rmsnorm_bwd(c["x_mid"], params[gid(Component.post_attn_norm, layer)], c["inv_mid"], dm)
        grads[gid(Component.post_attn_norm, layer)] = dwmid
        dx_mid = dx + dnorm

        # attention branch: x_mid = x_in + o @ Wo
        sv = c["attn"]
        grads[gid(Component.attn_o, layer)] = sv["o"].T @ dx_mid
        do = (dx_mid @ params[gid(Component.attn_o, layer)].T).reshape(b, s, nh, d)
        do5 = do.transpose(0, 2, 1, 3).reshape(b, nkv, gq, s, d)
        p5 = sv["p"].reshape(b, nkv, gq, s, s)
        dp5 = np.matmul(do5, sv["v"][:, :, None].swapaxes(-1, -2))
        dv = np.matmul(p5.swapaxes(-1, -2), do5).sum(axis=2)          # (B, nkv, S, D)
        dscores = K.causal_softmax_bwd(sv["p"], np.ascontiguousarray(dp5.reshape(b, nh, s, s)))
        ds5 = dscores.reshape(b, nkv, gq, s, s)
        q5 = sv["q"].reshape(b, nkv, gq, s, d)
        dq5 = np.matmul(ds5, sv["k"][:, :, None])                     # (B, nkv, gq, S, D)
        dk = np.matmul(ds5.swapaxes(-1, -2), q5).sum(axis=2)          # (B, nkv, S, D)

        scale = np.asarray(1.0 / np.sqrt(d), dtype=dx.dtype)
        dqr = dq5.reshape(b, nh, s, d).transpose(0, 2, 1, 3).reshape(b * s, nh, d) * scale
        dkr = np.ascontiguousarray(dk.transpose(0, 2, 1, 3).reshape(b * s, nkv, d))
        dq_raw = K.rope_apply(dqr, cos_b, sin_b)
        dk_raw = K.rope_apply(dkr, cos_b, sin_b)
        dv_raw = dv.transpose(0, 2, 1, 3).reshape(b * s, nkv * d)

        dq_flat = dq_raw.reshape(b * s, nh * d)
        dk_flat = dk_raw.reshape(b * s, nkv * d)
        grads[gid(Component.attn_q, layer)] = sv["a"].T @ dq_flat
        grads[gid(Component.attn_k, layer)] = sv["a"].T @ dk_flat
        grads[gid(Component.attn_v, layer)] = sv["a"].T @ dv_raw
        da = (dq_flat @ params[gid(Component.attn_q, layer)].T
              + dk_flat @ params[gid(Component.attn_k, layer)].T
              + dv_raw @ params[gid(Component.attn_v, layer)].T)
        dnorm_in, dwin = K.rmsnorm_bwd(c["x_in"], params[gid(Component.input_norm, layer)], c["inv_in"], da)
        grads[gid(Component.input_norm, layer)] = dwin
        dx = dx_mid + dnorm_in

    emb = params[gid(Component.token_embedding)]
    grads[gid(Component.token_embedding)] = K.embedding_grad(
        cache["tokens"].reshape(-1), np.ascontiguousarray(dx), emb.shape[0])
    return grads


def lens_head(ckpt, hidden_state):
    """Final-norm + unembedding + log softmax applied to hidden states.

    hidden_state: (..., H).  Returns float64 log probabilities (..., V).
    This is the exact final code path of the forward pass, so applying
    it to the last captured state reproduces the model's distribution.
    """
    shape = hidden_state.shape
    flat = np.ascontiguousarray(hidden_state.reshape(-1, shape[-1]))
    f, _ = K.rmsnorm_fwd(flat, ckpt.params[gid(Component.final_norm)], ckpt.config.norm_epsilon)
    logits = f @ ckpt.params[gid(Component.unembedding)]
    lp = K.log_softmax_rows(logits)
    return lp.reshape(shape[:-1] + (ckpt.config.vocab_size,))


class DecodeSession:
    """Incremental greedy decoding with a per-layer KV cache.

    Prompts in one session must share a length; positions are absolute.
    """

    def __init__(self, ckpt, tokens):
        self.ckpt = ckpt
        toks = _validate_tokens(ckpt.config, tokens)
        self.pos = toks.shape[1]
        self.caches = [{"k": None, "v": None} for _ in range(ckpt.config.n_layers)]
        self.last_logits = self._run(toks, np.arange(toks.shape[1], dtype=np.int64))

    def _run(self, tokens, pos):
        params, config = self.ckpt.params, self.ckpt.config
        b, s = tokens.shape
        emb = params[gid(Component.token_embedding)]
        x = emb[tokens.reshape(-1)].reshape(b, s, emb.shape[1])
        rope = K.rope_tables(np.tile(pos, b), config.head_dim, config.rope_theta, x.dtype)
        for layer in range(config.n_layers):
            flat = x.reshape(b * s, -1)
            a, _ = K.rmsnorm_fwd(flat, params[gid(Component.input_norm, layer)], config.norm_epsilon)
            attn, _ = _attn_forward(params, config, layer, a.reshape(b, s, -1), rope,
                                    cache=self.caches[layer])
            x = x + attn
            mflat = x.reshape(b * s, -1)
            m, _ = K.rmsnorm_fwd(mflat, params[gid(Component.post_attn_norm, layer)], config.norm_epsilon)
            gate = m @ params[gid(Component.mlp_gate, layer)]
            up = m @ params[gid(Component.mlp_up, layer)]
            act = K.silu_mul_fwd(gate, up)
            x = x + (act @ params[gid(Component.mlp_down, layer)]).reshape(b, s, -1)
        f, _ = K.rmsnorm_fwd(np.ascontiguousarray(x[:, -1, :]), params[gid(Component.final_norm)],
                             config.norm_epsilon)
        return f @ params[gid(Component.unembedding)]

    def step(self, next_tokens):
        """Feed one token per sequence; returns logits (B, V) for the next."""
        toks = np.asarray(next_tokens, dtype=np.int64).reshape(-1, 1)
        pos = np.array([self.pos], dtype=np.int64)
        if self.pos >= self.ckpt.config.max_seq_len:
            raise InputError("decode exceeded max_seq_len")
        self.last_logits = self._run(toks, pos)
        self.pos += 1
        return self.last_logits
