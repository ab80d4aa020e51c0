#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy twins at the
shapes the default training run uses.

    python3 benchmarks/bench_kernels.py [--batch 64] [--seq 128] [--repeats 20]

The same kernels are selected at runtime by XLD_BACKEND (numba default,
numpy fallback); this script reports what that choice costs.
"""

import argparse
import time

import numpy as np

from xld.kernels import numba_impl as nb
from xld.kernels import numpy_impl as ref
from xld.model import ModelConfig


def bench(fn, *args, repeats):
    fn(*args)      # warm (and JIT-compile for the numba side)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats * 1e3


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--seq", type=int, default=128)
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--dtype", choices=["float32", "float64"], default="float32")
    args = ap.parse_args()

    cfg = ModelConfig()
    dt = np.dtype(args.dtype)
    rng = np.random.default_rng(0)
    n = args.batch * args.seq
    h, i, v, nh, hd = (cfg.hidden_size, cfg.intermediate_size, cfg.vocab_size,
                       cfg.n_heads, cfg.head_dim)

    def rand(*shape):
        return rng.standard_normal(shape).astype(dt)

    x, w, dy = rand(n, h), np.ones(h, dt), rand(n, h)
    _, inv = ref.rmsnorm_fwd(x, w, 1e-5)
    q = rand(n, nh, hd)
    cos, sin = ref.rope_tables(np.tile(np.arange(args.seq), args.batch), hd, 1e4, dt)
    g, u, da = rand(n, i), rand(n, i), rand(n, i)
    sc = rand(args.batch, nh, args.seq, args.seq)
    p = ref.causal_softmax_fwd(sc, 0)
    dp = rand(args.batch, nh, args.seq, args.seq)
    rows = args.batch * (args.seq - 1)
    logits = rand(rows, v)
    targets = rng.integers(0, v, rows)
    weights = np.full(rows, 1.0 / rows)
    tokens = rng.integers(0, v, n)
    dx = rand(n, h)
    p0, m0, v0 = rand(n // 8, h), np.zeros((n // 8, h), dt), np.zeros((n // 8, h), dt)

    cases = [
        ("rmsnorm_fwd", (x, w, 1e-5)),
        ("rmsnorm_bwd", (x, w, inv.astype(dt), dy)),
        ("rope_apply", (q, cos, sin)),
        ("causal_softmax_fwd", (sc, 0)),
        ("causal_softmax_bwd", (p, dp)),
        ("silu_mul_fwd", (g, u)),
        ("silu_mul_bwd", (g, u, da)),
        ("cross_entropy_fwd_bwd", (logits, targets, weights)),
        ("log_softmax_rows", (logits[:256],)),
        ("embedding_grad", (tokens, dx, v)),
        ("adamw_update", (p0, dx[:n // 8], m0, v0, 1e-3, 0.9, 0.999, 1e-8, 0.01, 3)),
    ]
    print(f"# batch={args.batch} seq={args.seq} dtype={dt.name} "
          f"hidden={h} vocab={v} repeats={args.repeats}")
    print(f"{'kernel':<24} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for name, call_args in cases:
        t_nb = bench(getattr(nb, name), *call_args, repeats=args.repeats)
        t_np = bench(getattr(ref, name), *call_args, repeats=args.repeats)
        print(f"{name:<24} {t_nb:>10.3f} {t_np:>10.3f} {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
