import numpy as np
import pytest

from conftest import TINY
from xld.checkpoint import new_checkpoint
from xld.corpus import Batch
from xld.errors import InputError, TrainingError
from xld.train import (DECAY_FRACTION, TrainRecipe, grad_global_norm, learning_rate,
                       train_step)

RNG = np.random.default_rng(11)


def make_batch(n=4, s=16):
    toks = RNG.integers(0, TINY.vocab_size, (n, s)).astype(np.int32)
    mask = np.ones((n, s), bool)
    mask[:, 0] = False
    return Batch(tokens=toks, loss_mask=mask, langs=["A"] * n)


def test_recipe_validation():
    with pytest.raises(InputError):
        TrainRecipe(warmup_ratio=1.0)
    with pytest.raises(InputError):
        TrainRecipe(min_lr_ratio=0.0)
    with pytest.raises(InputError):
        TrainRecipe(total_steps=0)


def test_schedule_boundaries():
    r = TrainRecipe(peak_lr=1e-3, warmup_ratio=0.1, min_lr_ratio=0.1, total_steps=1000)
    assert learning_rate(r, 0) == 0.0
    assert learning_rate(r, 500) == r.peak_lr          # mid plateau
    assert learning_rate(r, 1000) == pytest.approx(r.peak_lr * r.min_lr_ratio, rel=1e-12)


def test_schedule_shape_and_continuity():
    r = TrainRecipe(peak_lr=2e-3, warmup_ratio=0.2, min_lr_ratio=0.25, total_steps=500)
    warm = round(0.2 * 500)
    decay_start = 500 - round(DECAY_FRACTION * 500)
    # warmup is exactly linear
    for t in range(warm):
        assert learning_rate(r, t) == pytest.approx(r.peak_lr * t / warm, rel=1e-12)
    # plateau is exactly constant
    for t in range(warm, decay_start):
        assert learning_rate(r, t) == r.peak_lr
    # continuity at both joints
    assert learning_rate(r, warm) == r.peak_lr
    assert learning_rate(r, decay_start) == r.peak_lr
    # decay is exactly proportional to 1/sqrt(c + u)
    c = (500 - decay_start) * 0.25**2 / (1 - 0.25**2)
    for t in range(decay_start, 501):
        expect = r.peak_lr * np.sqrt(c / (c + t - decay_start))
        assert learning_rate(r, t) == pytest.approx(expect, rel=1e-12)
    # monotone nonincreasing after warmup
    lrs = [learning_rate(r, t) for t in range(warm, 501)]
    assert all(b <= a for a, b in zip(lrs, lrs[1:]))


def test_train_step_advances_counters():
    ck = new_checkpoint(TINY, seed=0)
    batch = make_batch()
    new, rec = train_step(ck, batch, TrainRecipe(total_steps=10, batch_size=4))
    assert new.step == 1
    assert new.tokens_seen == batch.tokens.size
    assert rec.loss > 0
    # immutability: the input checkpoint is untouched
    assert ck.step == 0
    assert any(not np.array_equal(ck.params[g], new.params[g]) for g in ck.params) or \
        rec.lr == 0.0


def test_train_step_determinism():
    recipe = TrainRecipe(peak_lr=1e-3, total_steps=10, batch_size=4, seed=0)
    batch = make_batch()
    a = new_checkpoint(TINY, seed=0)
    b = new_checkpoint(TINY, seed=0)
    for _ in range(3):
        a, _ = train_step(a, batch, recipe)
        b, _ = train_step(b, batch, recipe)
    for g in a.params:
        assert np.array_equal(a.params[g], b.params[g])
        assert np.array_equal(a.opt_state[g][0], b.opt_state[g][0])


def test_gradient_clipping_applies():
    ck = new_checkpoint(TINY, seed=0)
    batch = make_batch()
    recipe = TrainRecipe(peak_lr=1e-3, grad_clip_norm=1e-9, total_steps=10, batch_size=4)
    _, rec = train_step(ck, batch, recipe)
    assert rec.clip_coef < 1.0
    assert rec.clip_coef == pytest.approx(1e-9 / rec.grad_norm, rel=1e-9)


def test_nan_gradients_raise():
    ck = new_checkpoint(TINY, seed=0)
    bad = dict(ck.params)
    from xld.model import Component, gid
    arr = bad[gid(Component.attn_q, 0)].copy()
    arr[0, 0] = np.nan
    bad[gid(Component.attn_q, 0)] = arr
    ck = ck.replace(params=bad)
    with pytest.raises(TrainingError):
        train_step(ck, make_batch(), TrainRecipe(total_steps=10, batch_size=4))


def test_empty_batch_rejected():
    ck = new_checkpoint(TINY, seed=0)
    empty = Batch(tokens=np.zeros((0, 8), np.int32), loss_mask=np.zeros((0, 8), bool),
                  langs=[])
    with pytest.raises(InputError):
        train_step(ck, empty, TrainRecipe(total_steps=10, batch_size=4))


def test_grad_global_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert grad_global_norm(grads) == pytest.approx(5.0)
