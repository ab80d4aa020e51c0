"""Backend parity: every numba kernel must agree with its pure-numpy
twin on both dtypes, since either may serve a run (XLD_BACKEND)."""

import numpy as np
import pytest

from xld.kernels import numba_impl as nb
from xld.kernels import numpy_impl as ref

RNG = np.random.default_rng(42)


def arrays(shape, dtype):
    return RNG.standard_normal(shape).astype(dtype)


@pytest.mark.parametrize("dtype,rtol", [(np.float32, 2e-5), (np.float64, 1e-12)])
def test_rmsnorm_parity(dtype, rtol):
    x, w = arrays((37, 24), dtype), arrays(24, dtype)
    dy = arrays((37, 24), dtype)
    y1, r1 = nb.rmsnorm_fwd(x, w, 1e-5)
    y2, r2 = ref.rmsnorm_fwd(x, w, 1e-5)
    np.testing.assert_allclose(y1, y2, rtol=rtol, atol=rtol)
    np.testing.assert_allclose(r1, r2, rtol=rtol)
    dx1, dw1 = nb.rmsnorm_bwd(x, w, r2.astype(dtype), dy)
    dx2, dw2 = ref.rmsnorm_bwd(x, w, r2.astype(dtype), dy)
    np.testing.assert_allclose(dx1, dx2, rtol=rtol, atol=rtol)
    np.testing.assert_allclose(dw1, dw2, rtol=rtol * 40, atol=rtol * 40)


@pytest.mark.parametrize("dtype,rtol", [(np.float32, 2e-5), (np.float64, 1e-12)])
def test_rope_parity_and_inverse(dtype, rtol):
    x = arrays((50, 3, 8), dtype)
    pos = RNG.integers(0, 100, 50)
    y1 = nb.rope_rotate(x, pos, 1e4, 1.0)
    y2 = ref.rope_rotate(x, pos, 1e4, 1.0)
    np.testing.assert_allclose(y1, y2, rtol=rtol, atol=rtol)
    back = ref.rope_rotate(y2, pos, 1e4, -1.0)
    np.testing.assert_allclose(back, x, rtol=5e-5, atol=5e-5)


@pytest.mark.parametrize("dtype,rtol", [(np.float32, 2e-5), (np.float64, 1e-12)])
def test_softmax_parity(dtype, rtol):
    s = arrays((3, 2, 9, 9), dtype)
    p1 = nb.causal_softmax_fwd(s, 0)
    p2 = ref.causal_softmax_fwd(s, 0)
    np.testing.assert_allclose(p1, p2, rtol=rtol, atol=rtol)
    assert np.all(p1[0, 0, 0, 1:] == 0), "causal mask must zero future keys"
    np.testing.assert_allclose(p1.sum(-1), 1.0, rtol=1e-5)
    dp = arrays((3, 2, 9, 9), dtype)
    np.testing.assert_allclose(nb.causal_softmax_bwd(p2, dp),
                               ref.causal_softmax_bwd(p2, dp), rtol=rtol, atol=rtol)


def test_softmax_kv_offset():
    s = arrays((1, 1, 1, 12), np.float32)
    p = nb.causal_softmax_fwd(s, 7)
    assert np.all(p[0, 0, 0, 8:] == 0)
    assert p[0, 0, 0, :8].sum() == pytest.approx(1.0, rel=1e-5)


@pytest.mark.parametrize("dtype,rtol", [(np.float32, 2e-5), (np.float64, 1e-12)])
def test_silu_parity(dtype, rtol):
    g, u, da = (arrays((40, 17), dtype) for _ in range(3))
    np.testing.assert_allclose(nb.silu_mul_fwd(g, u), ref.silu_mul_fwd(g, u),
                               rtol=rtol, atol=rtol)
    d1 = nb.silu_mul_bwd(g, u, da)
    d2 = ref.silu_mul_bwd(g, u, da)
    np.testing.assert_allclose(d1[0], d2[0], rtol=rtol, atol=rtol)
    np.testing.assert_allclose(d1[1], d2[1], rtol=rtol, atol=rtol)


def test_cross_entropy_parity_and_fused():
    logits = arrays((30, 50), np.float32)
    targets = RNG.integers(0, 50, 30)
    weights = np.zeros(30)
    weights[2] = 0.5
    weights[7] = 0.5
    l1, lse1 = nb.cross_entropy_fwd(logits, targets, weights)
    l2, lse2 = ref.cross_entropy_fwd(logits, targets, weights)
    assert l1 == pytest.approx(l2, rel=1e-6)
    np.testing.assert_allclose(lse1, lse2, rtol=1e-6)
    d1 = nb.cross_entropy_bwd(logits, targets, weights, lse2)
    d2 = ref.cross_entropy_bwd(logits, targets, weights, lse2)
    np.testing.assert_allclose(d1, d2, rtol=2e-5, atol=2e-6)
    lf, df = nb.cross_entropy_fwd_bwd(logits, targets, weights)
    assert lf == pytest.approx(l2, rel=1e-6)
    np.testing.assert_allclose(df, d2, rtol=2e-5, atol=2e-6)
    assert np.all(d1[weights == 0.0] == 0)


def test_log_softmax_parity_and_normalization():
    logits = arrays((11, 33), np.float32)
    lp1 = nb.log_softmax_rows(logits)
    lp2 = ref.log_softmax_rows(logits)
    # fastmath reassociation costs a few ulps beyond f32 input precision
    np.testing.assert_allclose(lp1, lp2, rtol=1e-7, atol=1e-7)
    np.testing.assert_allclose(np.exp(lp1).sum(1), 1.0, rtol=1e-7)


def test_embedding_grad_parity():
    tokens = RNG.integers(0, 12, 40)
    dx = arrays((40, 6), np.float32)
    np.testing.assert_allclose(nb.embedding_grad(tokens, dx, 12),
                               ref.embedding_grad(tokens, dx, 12), rtol=1e-6, atol=1e-6)


@pytest.mark.parametrize("dtype,rtol", [(np.float32, 1e-5), (np.float64, 1e-12)])
def test_adamw_parity(dtype, rtol):
    shape = (13, 7)
    p0 = arrays(shape, dtype)
    g = arrays(shape, dtype)
    m = np.zeros(shape, dtype)
    v = np.zeros(shape, dtype)
    p1, m1, v1 = p0.copy(), m.copy(), v.copy()
    p2, m2, v2 = p0.copy(), m.copy(), v.copy()
    for t in (1, 2, 3):
        nb.adamw_update(p1, g, m1, v1, 1e-3, 0.9, 0.999, 1e-8, 0.01, t)
        ref.adamw_update(p2, g, m2, v2, 1e-3, 0.9, 0.999, 1e-8, 0.01, t)
    np.testing.assert_allclose(p1, p2, rtol=rtol, atol=rtol)
    np.testing.assert_allclose(m1, m2, rtol=rtol, atol=rtol)
    np.testing.assert_allclose(v1, v2, rtol=rtol, atol=rtol)


def test_backend_selection_env():
    import xld.kernels as K
    assert K.BACKEND in ("numba", "numpy")
    for name in K.KERNEL_NAMES:
        assert hasattr(K, name)
