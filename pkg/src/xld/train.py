"""Training loop: warmup-stable-decay schedule, clipped AdamW, and the
checkpoint cadence.  One step maps an immutable checkpoint to a new one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels as K
from .checkpoint import Checkpoint, new_checkpoint, save_checkpoint
from .errors import InputError, TrainingError
from .model import loss_and_grads

#: the final fraction of total steps spent in inverse-sqrt decay
DECAY_FRACTION = 0.10


@dataclass(frozen=True)
class TrainRecipe:
    peak_lr: float = 1e-3
    warmup_ratio: float = 0.10
    min_lr_ratio: float = 0.10
    betas: tuple = (0.9, 0.999)
    epsilon: float = 1e-8
    weight_decay: float = 0.01
    grad_clip_norm: float = 1.0
    total_steps: int = 1000
    batch_size: int = 32
    checkpoint_every: int = 0    # 0 = total_steps // 200, at least 1
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.warmup_ratio < 1.0):
            raise InputError("warmup_ratio must be in [0, 1)")
        if not (0.0 < self.min_lr_ratio <= 1.0):
            raise InputError("min_lr_ratio must be in (0, 1]")
        if self.total_steps < 1 or self.batch_size < 1:
            raise InputError("total_steps and batch_size must be positive")

    @property
    def cadence(self) -> int:
        if self.checkpoint_every > 0:
            return self.checkpoint_every
        return max(1, self.total_steps // 200)

    def to_dict(self) -> dict:
        return {
            "peak_lr": self.peak_lr, "warmup_ratio": self.warmup_ratio,
            "min_lr_ratio": self.min_lr_ratio, "betas": list(self.betas),
            "epsilon": self.epsilon, "weight_decay": self.weight_decay,
            "grad_clip_norm": self.grad_clip_norm, "total_steps": self.total_steps,
            "batch_size": self.batch_size, "checkpoint_every": self.checkpoint_every,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "TrainRecipe":
        d = dict(d)
        d["betas"] = tuple(d.get("betas", (0.9, 0.999)))
        return TrainRecipe(**d)


def learning_rate(recipe: TrainRecipe, step: int) -> float:
    """Warmup-stable-decay: linear warmup, plateau, then 1/sqrt decay
    over the final DECAY_FRACTION of steps down to min_lr_ratio * peak.
    Continuous at both joints; lr(0) = 0."""
    total = recipe.total_steps
    warm = int(round(recipe.warmup_ratio * total))
    decay_len = int(round(DECAY_FRACTION * total))
    decay_start = total - decay_len
    if step < warm:
        return recipe.peak_lr * step / warm
    r = recipe.min_lr_ratio
    if step < decay_start or decay_len == 0 or r >= 1.0:
        return recipe.peak_lr
    # lr = peak * sqrt(c / (c + u)) with lr(decay_len) = peak * r
    u = min(step, total) - decay_start
    c = decay_len * r * r / (1.0 - r * r)
    return recipe.peak_lr * math.sqrt(c / (c + u))


def grad_global_norm(grads: dict) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g.astype(np.float64) ** 2))
    return math.sqrt(total)


@dataclass
class StepRecord:
    step: int
    lr: float
    adam_t: int
    clip_coef: float
    grad_norm: float
    loss: float
    n_samples: int
    per_sample_grads: list | None = None


def per_sample_grads(ckpt: Checkpoint, batch) -> list[dict]:
    """Gradient of each sample's own mean loss, one backward per sample.
    The batch gradient is the mean of these (mean reduction over samples)."""
    out = []
    for i in range(batch.tokens.shape[0]):
        _, g = loss_and_grads(ckpt, batch.tokens[i], batch.loss_mask[i])
        out.append(g)
    return out


def train_step(ckpt: Checkpoint, batch, recipe: TrainRecipe, capture: bool = False):
    """One clipped-gradient AdamW update at the scheduled learning rate.

    Returns (new checkpoint, StepRecord).  With ``capture`` the record
    additionally holds per-sample gradients for attribution.
    """
    if batch.tokens.shape[0] == 0:
        raise InputError("empty batch")
    loss_val, grads = loss_and_grads(ckpt, batch.tokens, batch.loss_mask)
    norm = grad_global_norm(grads)
    if not math.isfinite(norm):
        raise TrainingError(f"non-finite gradients at step {ckpt.step} (loss={loss_val})")
    coef = 1.0 if norm <= recipe.grad_clip_norm else recipe.grad_clip_norm / norm
    lr = learning_rate(recipe, ckpt.step)
    t = ckpt.step + 1

    new_params, new_opt = {}, {}
    for g, p in ckpt.params.items():
        m, v = ckpt.opt_state[g]
        p, m, v = p.copy(), m.copy(), v.copy()
        eff = (grads[g] * coef).astype(p.dtype)
        K.adamw_update(p, eff, m, v, lr, recipe.betas[0], recipe.betas[1],
                       recipe.epsilon, recipe.weight_decay, t)
        new_params[g], new_opt[g] = p, (m, v)

    record = StepRecord(step=ckpt.step, lr=lr, adam_t=t, clip_coef=coef,
                        grad_norm=norm, loss=loss_val, n_samples=batch.tokens.shape[0])
    if capture:
        record.per_sample_grads = per_sample_grads(ckpt, batch)
    new = ckpt.replace(step=ckpt.step + 1,
                       tokens_seen=ckpt.tokens_seen + int(batch.tokens.size),
                       params=new_params, opt_state=new_opt,
                       schedule_state={"last_lr": lr, "recipe": recipe.to_dict()})
    return new, record


def checkpoint_name(step: int) -> str:
    return f"ckpt_{step:07d}.xld"


def train_loop(config, recipe: TrainRecipe, sampler, out_dir, *,
               save_batches: bool = True, log_every: int = 10, progress=None):
    """Full training run with dense checkpointing.

    At every cadence boundary the current checkpoint is written together
    with the batch that produces the *next* update (the attribution
    analyses decompose exactly that update).  Returns the list of
    checkpoint paths and the loss log rows.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = new_checkpoint(config, recipe.seed)
    log_rows = []
    paths = []

    def save(ck, next_batch):
        path = out_dir / checkpoint_name(ck.step)
        ck = ck.replace(rng_state=sampler.state_bytes(),
                        schedule_state={"last_lr": learning_rate(recipe, ck.step),
                                        "recipe": recipe.to_dict()})
        save_checkpoint(ck, path)
        if save_batches and next_batch is not None:
            next_batch.save(out_dir / f"batch_{ck.step:07d}.npz")
        paths.append(path)

    for step in range(recipe.total_steps):
        batch = sampler.next_batch()
        if step % recipe.cadence == 0:
            save(ckpt, batch)
        ckpt, rec = train_step(ckpt, batch, recipe)
        if step % log_every == 0 or step == recipe.total_steps - 1:
            log_rows.append({"step": rec.step, "tokens_seen": ckpt.tokens_seen,
                             "lr": rec.lr, "loss": rec.loss, "grad_norm": rec.grad_norm})
        if progress is not None:
            progress(rec)
    save(ckpt, None)
    return paths, log_rows
