"""Decomposition of prediction-loss changes across one optimizer step
onto parameter groups and training-data partitions.

The AdamW update splits exactly into per-sample gradient shares, a
first-moment carry-over term, and a weight-decay term; the second-
moment denominator is a shared, non-attributed factor:

    delta = sum_k share_k + carry + wd
    share_k = -lr * (1-b1) / (1-b1^t) * clip / B * g_k / (sqrt(vhat)+eps)

The influence of sample k on a prediction x is the first-order term
phi = <grad L(x; theta), share_k>, accumulated per parameter group.
The residual (measured loss change minus the sum of scores) bounds the
linearization error, so bookkeeping always balances exactly.
Negative scores mean the step decreased the prediction's loss.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .checkpoint import Checkpoint
from .errors import InputError, StateError
from .evalkit import _instance_seed
from .model import loss as model_loss
from .model import loss_and_grads, param_group_ids
from .train import TrainRecipe, learning_rate
from .wlt import build_prompt

KIND_TRAIN = "train_language"
KIND_PARALLEL = "simulated_parallel"
KIND_PSEUDO = "regularization_pseudo"
CARRY_PARTITION = "first_moment_carry"
DECAY_PARTITION = "weight_decay"


@dataclass
class DataPartition:
    partition_id: str
    samples: list               # (tokens 1D, loss_mask 1D) pairs
    kind: str

    def __post_init__(self):
        if self.kind not in (KIND_TRAIN, KIND_PARALLEL, KIND_PSEUDO):
            raise InputError(f"unknown partition kind {self.kind!r}")


@dataclass
class PredictionSet:
    set_id: str
    items: list                 # (tokens 1D, loss_mask 1D) pairs


@dataclass
class StepCapture:
    """Per-sample decomposition of one AdamW update."""

    step: int
    adam_t: int
    lr: float
    clip_coef: float
    config: object
    labels: list                     # per-sample partition id
    kinds: dict                      # partition id -> kind
    shares: list                     # per-sample {gid: share array}, or None
    agg_shares: dict                 # partition id -> {gid: summed share}
    carry: dict                      # {gid: carry array}
    wd: dict                         # {gid: weight-decay array}
    delta_total: dict                # {gid: full update}


def _as_samples(batch, default_kind=KIND_TRAIN):
    """Normalize a Batch / DataPartition list / raw sample list into
    (samples, labels, kinds)."""
    if isinstance(batch, (list, tuple)) and batch and isinstance(batch[0], DataPartition):
        samples, labels, kinds = [], [], {}
        for part in batch:
            kinds[part.partition_id] = part.kind
            for toks, mask in part.samples:
                samples.append((np.asarray(toks), np.asarray(mask)))
                labels.append(part.partition_id)
        return samples, labels, kinds
    if hasattr(batch, "tokens"):
        samples = [(batch.tokens[i], batch.loss_mask[i])
                   for i in range(batch.tokens.shape[0])]
        labels = list(batch.langs)
        kinds = {l: default_kind for l in labels}
        return samples, labels, kinds
    raise InputError("batch must be a Batch or a list of DataPartitions")


def capture_step_contributions(ckpt: Checkpoint, batch, recipe: TrainRecipe, *,
                               per_sample_grads=None, keep_per_sample: bool = True):
    """Decompose the AdamW update this batch would apply to ``ckpt``.

    ``batch`` is a training Batch or a list of DataPartitions (actual
    plus simulated).  Per-sample gradients are recomputed unless given.
    With ``keep_per_sample=False`` only per-partition share sums are
    retained (memory-light; enough for partition-level influence).
    """
    samples, labels, kinds = _as_samples(batch)
    if not samples:
        raise InputError("empty batch")
    n = len(samples)
    if per_sample_grads is None:
        per_sample_grads = [loss_and_grads(ckpt, t, m)[1] for t, m in samples]
    elif len(per_sample_grads) != n:
        raise StateError("captured per-sample gradients do not match the batch")

    groups = list(ckpt.params)
    mean_g = {g: sum(ps[g] for ps in per_sample_grads) / n for g in groups}
    norm = math.sqrt(sum(float(np.sum(mean_g[g].astype(np.float64) ** 2)) for g in groups))
    coef = 1.0 if norm <= recipe.grad_clip_norm else recipe.grad_clip_norm / norm
    lr = learning_rate(recipe, ckpt.step)
    t = ckpt.step + 1
    b1, b2 = recipe.betas
    bc1, bc2 = 1.0 - b1**t, 1.0 - b2**t

    denom, carry, wd, delta_total = {}, {}, {}, {}
    agg = {pid: {} for pid in kinds}
    shares = [dict() for _ in range(n)] if keep_per_sample else None
    for g in groups:
        m_prev, v_prev = ckpt.opt_state[g]
        eff = coef * mean_g[g]
        v_new = b2 * v_prev + (1.0 - b2) * eff * eff
        den = np.sqrt(v_new / bc2) + recipe.epsilon
        denom[g] = den
        scale = -lr * (1.0 - b1) * coef / (bc1 * n)
        total = np.zeros_like(ckpt.params[g], dtype=np.float64)
        for k in range(n):
            share = scale * per_sample_grads[k][g] / den
            if keep_per_sample:
                shares[k][g] = share
            pid = labels[k]
            if g in agg[pid]:
                agg[pid][g] = agg[pid][g] + share
            else:
                agg[pid][g] = share.copy() if keep_per_sample else share
            total += share
        carry[g] = -lr * b1 * m_prev / (bc1 * den)
        wd[g] = -lr * recipe.weight_decay * ckpt.params[g]
        delta_total[g] = (total + carry[g] + wd[g]).astype(ckpt.params[g].dtype)

    return StepCapture(step=ckpt.step, adam_t=t, lr=lr, clip_coef=coef,
                       config=ckpt.config, labels=labels, kinds=dict(kinds),
                       shares=shares, agg_shares=agg, carry=carry, wd=wd,
                       delta_total=delta_total)


@dataclass
class InfluenceTensor:
    step: int
    scores: dict                 # (group str, partition id) -> float
    residual: float
    partition_kinds: dict
    per_item: list = field(default_factory=list)   # (sum of scores, measured dL)

    def group_totals(self, kinds=None) -> dict:
        out: dict = {}
        for (g, pid), v in self.scores.items():
            if kinds is not None and self.partition_kinds.get(pid) not in kinds:
                continue
            out[g] = out.get(g, 0.0) + v
        return out


def _apply_delta(ckpt: Checkpoint, delta: dict) -> Checkpoint:
    params = {g: (p + delta[g]).astype(p.dtype) for g, p in ckpt.params.items()}
    return ckpt.replace(params=params, step=ckpt.step + 1)


def influence(capture: StepCapture, prediction_set: PredictionSet,
              ckpt_before: Checkpoint) -> InfluenceTensor:
    """Aggregated influence of every (parameter group, partition) on the
    prediction set's loss change across the captured step."""
    if capture.step != ckpt_before.step:
        raise InputError(f"capture is for step {capture.step}, checkpoint at {ckpt_before.step}")
    if capture.config != ckpt_before.config:
        raise InputError("capture and checkpoint disagree on model config")
    ckpt_after = _apply_delta(ckpt_before, capture.delta_total)

    partitions = sorted(capture.kinds)
    kinds = dict(capture.kinds)
    kinds[CARRY_PARTITION] = KIND_PSEUDO
    kinds[DECAY_PARTITION] = KIND_PSEUDO
    groups = list(ckpt_before.params)
    flat = {
        pid: {g: capture.agg_shares[pid][g].ravel() for g in capture.agg_shares[pid]}
        for pid in partitions
    }
    carry_flat = {g: capture.carry[g].ravel() for g in groups}
    wd_flat = {g: capture.wd[g].ravel() for g in groups}

    scores = {(str(g), pid): 0.0 for g in groups for pid in partitions}
    scores.update({(str(g), CARRY_PARTITION): 0.0 for g in groups})
    scores.update({(str(g), DECAY_PARTITION): 0.0 for g in groups})
    per_item = []
    residual = 0.0
    for toks, mask in prediction_set.items:
        l_before, grads = loss_and_grads(ckpt_before, toks, mask)
        l_after = model_loss(ckpt_after, toks, mask)
        dl = l_after - l_before
        item_sum = 0.0
        for g in groups:
            u = grads[g].ravel().astype(np.float64)
            for pid in partitions:
                s = flat[pid].get(g)
                if s is None:
                    continue
                phi = float(u @ s)
                scores[(str(g), pid)] += phi
                item_sum += phi
            phi_c = float(u @ carry_flat[g])
            phi_w = float(u @ wd_flat[g])
            scores[(str(g), CARRY_PARTITION)] += phi_c
            scores[(str(g), DECAY_PARTITION)] += phi_w
            item_sum += phi_c + phi_w
        per_item.append((item_sum, dl))
        residual += dl - item_sum
    return InfluenceTensor(step=capture.step, scores=scores, residual=residual,
                           partition_kinds=kinds, per_item=per_item)


def sample_influences(capture: StepCapture, prediction_set: PredictionSet,
                      ckpt_before: Checkpoint) -> list:
    """Per-sample total influence phi_k (summed over groups and items);
    requires a capture with per-sample shares."""
    if capture.shares is None:
        raise StateError("capture was taken without per-sample shares")
    out = [0.0] * len(capture.shares)
    for toks, mask in prediction_set.items:
        _, grads = loss_and_grads(ckpt_before, toks, mask)
        flat = {g: grads[g].ravel().astype(np.float64) for g in grads}
        for k, share in enumerate(capture.shares):
            out[k] += math.fsum(float(flat[g] @ share[g].ravel()) for g in share)
    return out


def reconstruction_errors(tensor: InfluenceTensor) -> list:
    """Per-item |sum(scores) - measured dL| / |dL|."""
    errs = []
    for item_sum, dl in tensor.per_item:
        if dl == 0.0:
            errs.append(0.0 if item_sum == 0.0 else float("inf"))
        else:
            errs.append(abs(item_sum - dl) / abs(dl))
    return errs


def d_copy(influence_copy: InfluenceTensor, influence_translate: InfluenceTensor) -> dict:
    """Per-group difference of influence on copy-targeted vs translation-
    targeted predictions, summed over simulated-parallel partitions."""
    if influence_copy.step != influence_translate.step:
        raise InputError("influence tensors come from different steps")
    out: dict = {}
    for (g, pid), v in influence_copy.scores.items():
        if influence_copy.partition_kinds.get(pid) != KIND_PARALLEL:
            continue
        out[g] = out.get(g, 0.0) + v - influence_translate.scores.get((g, pid), 0.0)
    return out


def select_copy_groups(series, window, mode: str):
    """Apply the 50%-of-TOP-1 rule over a step window.

    series: iterable of (step, {group: value}); window: (lo, hi) steps
    inclusive; mode 'promoting' keeps groups at least half as negative
    as the most negative, 'suppressing' the positive mirror.  Returns
    (ordered group list, warning flag); warning is set when the window
    has no value of the required sign.
    """
    if mode not in ("promoting", "suppressing"):
        raise InputError(f"unknown selection mode {mode!r}")
    lo, hi = window
    totals: dict = {}
    seen = False
    for step, values in series:
        if lo <= step <= hi:
            seen = True
            for g, v in values.items():
                totals[g] = totals.get(g, 0.0) + v
    if not seen:
        raise InputError("window matches no steps in the series")
    if mode == "promoting":
        extreme = min(totals.values(), default=0.0)
        if extreme >= 0.0:
            return [], True
        chosen = [g for g, v in totals.items() if v <= 0.5 * extreme]
        chosen.sort(key=lambda g: (totals[g], g))
    else:
        extreme = max(totals.values(), default=0.0)
        if extreme <= 0.0:
            return [], True
        chosen = [g for g, v in totals.items() if v >= 0.5 * extreme]
        chosen.sort(key=lambda g: (-totals[g], g))
    return chosen, False


def build_parallel_partition(concepts, languages, tokenizer, render=None,
                             partition_id: str = "parallel") -> DataPartition:
    """Simulated parallel samples: each concept rendered in two
    languages back-to-back with a single separating space, full-sequence
    loss."""
    if render is None:
        def render(c, lang):
            if lang not in c.forms:
                raise InputError(f"{c.concept_id} has no rendering in {lang}")
            return c.forms[lang] + "."
    pairs = list(combinations(languages, 2))
    if not pairs:
        raise InputError("need at least two languages for parallel data")
    samples = []
    for c in concepts:
        for a, b in pairs:
            text = render(c, a) + " " + render(c, b)
            toks = np.array([tokenizer.bos_id] + tokenizer.encode(text), dtype=np.int64)
            mask = np.ones(len(toks), dtype=bool)
            mask[0] = False
            samples.append((toks, mask))
    return DataPartition(partition_id=partition_id, samples=samples, kind=KIND_PARALLEL)


def _masked_item(tokenizer, prompt_text: str, target_word: str, max_seq_len: int):
    prompt_ids = [tokenizer.bos_id] + tokenizer.encode(prompt_text)
    word_ids = tokenizer.encode(target_word)
    toks = np.array(prompt_ids + word_ids, dtype=np.int64)
    if len(toks) > max_seq_len:
        raise InputError("prediction item exceeds max_seq_len")
    mask = np.zeros(len(toks), dtype=bool)
    mask[len(prompt_ids):] = True
    return toks, mask


def build_prediction_sets(dataset, records, tokenizer, max_seq_len: int,
                          languages=None, max_items: int | None = None,
                          seed: int = 0, n_shots: int = 5) -> dict:
    """B_WLT from concepts translated correctly in at least half their
    directions at the reference checkpoint; the challenging complement
    yields aligned B_translate / B_copy (same contexts, target swapped
    with the source word).  Loss is masked to the target-word tokens.
    """
    languages = list(languages) if languages is not None else list(dataset.languages)
    lang_set = set(languages)
    directions = [(a, b) for a in languages for b in languages if a != b]
    dir_index = {d: i for i, d in enumerate(dataset.directions())}
    per_concept: dict = {}
    for r in records:
        if r.src_lang in lang_set and r.tgt_lang in lang_set and r.src_lang != r.tgt_lang:
            tot, cor = per_concept.get(r.concept_id, (0, 0))
            per_concept[r.concept_id] = (tot + 1, cor + (1 if r.is_correct else 0))
    easy = sorted(c for c, (t, k) in per_concept.items() if t and k / t >= 0.5)
    hard = sorted(c for c, (t, k) in per_concept.items() if t and k / t < 0.5)

    def items_for(cids, target_of):
        out = []
        for src, tgt in directions:
            d_idx = dir_index.get((src, tgt), 0)
            for cid in cids:
                c = dataset.concept(cid)
                if src not in c.forms or tgt not in c.forms:
                    continue
                qids = sorted(dataset.query_ids)
                c_idx = qids.index(cid) if cid in qids else 0
                inst = build_prompt(dataset, cid, src, tgt, n_shots,
                                    seed=_instance_seed(seed, d_idx, c_idx))
                out.append(_masked_item(tokenizer, inst.prompt_text,
                                        target_of(inst, c), max_seq_len))
        return out

    rng = np.random.default_rng([seed, 7007])

    def clip(items):
        if max_items is not None and len(items) > max_items:
            keep = sorted(rng.choice(len(items), size=max_items, replace=False).tolist())
            return [items[i] for i in keep]
        return items

    b_wlt = clip(items_for(easy, lambda inst, c: c.forms[inst.tgt_lang]))
    rng2 = np.random.default_rng([seed, 7008])
    hard_items_t = items_for(hard, lambda inst, c: c.forms[inst.tgt_lang])
    hard_items_c = items_for(hard, lambda inst, c: inst.src_word)
    if max_items is not None and len(hard_items_t) > max_items:
        keep = sorted(rng2.choice(len(hard_items_t), size=max_items, replace=False).tolist())
        hard_items_t = [hard_items_t[i] for i in keep]
        hard_items_c = [hard_items_c[i] for i in keep]
    return {
        "B_WLT": PredictionSet("B_WLT", b_wlt),
        "B_translate": PredictionSet("B_translate", hard_items_t),
        "B_copy": PredictionSet("B_copy", hard_items_c),
    }


def layer_triples(n_layers: int) -> list:
    """Consecutive three-layer ranges; the last group may be short."""
    out = []
    lo = 0
    while lo < n_layers:
        out.append((lo, min(lo + 2, n_layers - 1)))
        lo += 3
    return out


def write_influence_csv(tensors, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["step", "group", "partition", "score", "residual"])
        for t in tensors:
            for (g, pid) in sorted(t.scores):
                w.writerow([t.step, g, pid, f"{t.scores[(g, pid)]:.10e}",
                            f"{t.residual:.10e}"])
