"""Checkpoint interventions: parameter-group scaling (excite/inhibit),
cross-checkpoint layer-block swapping, and the paired re-evaluation
sweep.

Interventions are pure checkpoint-to-checkpoint functions; untouched
tensors are shared by reference (checkpoints are immutable values).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint
from .errors import InputError
from .evalkit import eval_repetition, eval_wlt
from .model import (Component, GLOBAL_LAYER, LAYER_COMPONENTS, ParamGroupId,
                    param_group_ids)

BLOCK_NAMES = ("bottom", "intermediate", "top")


@dataclass(frozen=True)
class BlockSpec:
    bottom: tuple                 # (lo, hi) inclusive layer range
    intermediate: tuple
    top: tuple
    include_embeddings_in: str = "bottom"   # bottom | none
    include_unembedding_in: str = "top"     # top | none

    def __post_init__(self):
        ranges = [self.bottom, self.intermediate, self.top]
        prev_hi = -1
        nonempty = 0
        for name, (lo, hi) in zip(BLOCK_NAMES, ranges):
            if hi < lo - 1:
                raise InputError(f"{name} block range {lo}-{hi} is malformed")
            if lo != prev_hi + 1:
                raise InputError("block ranges must be contiguous and ordered")
            if hi >= lo:
                nonempty += 1
            prev_hi = hi
        if nonempty < 2:
            raise InputError("need at least 2 nonempty blocks")
        if self.include_embeddings_in not in ("bottom", "none"):
            raise InputError("include_embeddings_in must be 'bottom' or 'none'")
        if self.include_unembedding_in not in ("top", "none"):
            raise InputError("include_unembedding_in must be 'top' or 'none'")

    @property
    def n_layers(self) -> int:
        return self.top[1] + 1

    def ranges(self) -> dict:
        return {"bottom": self.bottom, "intermediate": self.intermediate, "top": self.top}


def default_block_spec(n_layers: int) -> BlockSpec:
    """Proportional to a 10/6/8 split over 24 layers; leftover layers go
    to the earliest blocks (8 layers -> 0-3 / 4-5 / 6-7).  Below 3
    layers the intermediate block is empty."""
    if n_layers == 2:
        return BlockSpec(bottom=(0, 0), intermediate=(1, 0), top=(1, 1))
    weights = (10, 6, 8)
    sizes = [n_layers * w // 24 for w in weights]
    missing = n_layers - sum(sizes)
    for i in range(missing):
        sizes[i % 3] += 1
    if min(sizes) < 1:
        sizes = [max(1, s) for s in sizes]
        while sum(sizes) > n_layers:
            sizes[int(np.argmax(sizes))] -= 1
    b = (0, sizes[0] - 1)
    m = (sizes[0], sizes[0] + sizes[1] - 1)
    t = (sizes[0] + sizes[1], n_layers - 1)
    return BlockSpec(bottom=b, intermediate=m, top=t)


def block_groups(spec: BlockSpec, config) -> dict:
    """ParamGroupIds per block; embeddings/unembedding/final-norm follow
    the spec flags (final norm travels with the unembedding)."""
    if spec.n_layers != config.n_layers:
        raise InputError(f"block spec covers {spec.n_layers} layers, model has {config.n_layers}")
    out = {name: set() for name in BLOCK_NAMES}
    for name, (lo, hi) in spec.ranges().items():
        for layer in range(lo, hi + 1):
            for c in LAYER_COMPONENTS:
                out[name].add(ParamGroupId(layer, c))
    if spec.include_embeddings_in == "bottom":
        out["bottom"].add(ParamGroupId(GLOBAL_LAYER, Component.token_embedding))
    if spec.include_unembedding_in == "top":
        out["top"].add(ParamGroupId(GLOBAL_LAYER, Component.unembedding))
        out["top"].add(ParamGroupId(GLOBAL_LAYER, Component.final_norm))
    return out


def scale_groups(ckpt: Checkpoint, groups, factor: float) -> Checkpoint:
    """New checkpoint with the listed tensors multiplied elementwise;
    everything else (optimizer state included) is untouched."""
    groups = set(groups)
    if not groups:
        raise InputError("no parameter groups to scale")
    if not math.isfinite(factor):
        raise InputError("scale factor must be finite")
    unknown = groups - set(ckpt.params)
    if unknown:
        raise InputError(f"unknown parameter groups: {sorted(map(str, unknown))}")
    params = dict(ckpt.params)
    for g in groups:
        params[g] = (ckpt.params[g] * np.asarray(factor, dtype=ckpt.params[g].dtype))
    return ckpt.replace(params=params)


def swap_blocks(recipient: Checkpoint, donor: Checkpoint, spec: BlockSpec,
                blocks) -> Checkpoint:
    """Hybrid checkpoint: parameters of the named blocks come from the
    donor, the rest from the recipient."""
    if recipient.config != donor.config:
        raise InputError("recipient and donor have different model configs")
    blocks = set(blocks)
    unknown = blocks - set(BLOCK_NAMES)
    if unknown:
        raise InputError(f"unknown blocks: {sorted(unknown)}")
    mapping = block_groups(spec, recipient.config)
    params = dict(recipient.params)
    for name in blocks:
        for g in mapping[name]:
            params[g] = donor.params[g]
    return recipient.replace(params=params)


def char_jaccard(a: str, b: str) -> float:
    """Normalized character overlap after case folding."""
    sa, sb = set(a.casefold()), set(b.casefold())
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


def parse_selector(text: str, config) -> list:
    """Parameter-group selector: comma-separated ``component@layer``,
    ``component@lo-hi``, ``component@*`` or a global component name."""
    out = []
    all_ids = set(param_group_ids(config))
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "@" in part:
            name, _, rng = part.partition("@")
            try:
                comp = Component[name]
            except KeyError:
                raise InputError(f"unknown component {name!r}") from None
            if rng == "*":
                layers = range(config.n_layers)
            elif "-" in rng:
                lo, _, hi = rng.partition("-")
                layers = range(int(lo), int(hi) + 1)
            else:
                layers = [int(rng)]
            for layer in layers:
                g = ParamGroupId(layer, comp)
                if g not in all_ids:
                    raise InputError(f"selector {part!r} names a missing group {g}")
                out.append(g)
        else:
            g = ParamGroupId.parse(part)
            if g not in all_ids:
                raise InputError(f"unknown parameter group {part!r}")
            out.append(g)
    if not out:
        raise InputError("empty selector")
    return out


def _parse_ranges(text: str) -> tuple:
    parts = text.split("/")
    if len(parts) != 3:
        raise InputError("block spec must be bottom/intermediate/top ranges")
    ranges = []
    for p in parts:
        lo, _, hi = p.partition("-")
        ranges.append((int(lo), int(hi if hi else lo)))
    return tuple(ranges)


@dataclass
class Intervention:
    """Declarative checkpoint intervention, parsed from one recipe line:

        scale groups=<selector> factor=<f>
        swap donor=<path> blocks=bottom,top [spec=<a-b/c-d/e-f>]
             [embeddings=bottom|none] [unembedding=top|none]
    """

    kind: str
    groups: list | None = None
    factor: float = 1.0
    donor_path: str | None = None
    blocks: tuple = ()
    spec: BlockSpec | None = None
    _donor: Checkpoint | None = None

    def describe(self) -> str:
        if self.kind == "scale":
            sel = ",".join(str(g) for g in self.groups)
            return f"scale groups={sel} factor={self.factor:g}"
        return f"swap donor={self.donor_path} blocks={','.join(sorted(self.blocks))}"

    def apply(self, ckpt: Checkpoint) -> Checkpoint:
        if self.kind == "scale":
            return scale_groups(ckpt, self.groups, self.factor)
        if self._donor is None:
            object.__setattr__(self, "_donor", load_checkpoint(self.donor_path))
        spec = self.spec or default_block_spec(ckpt.config.n_layers)
        return swap_blocks(ckpt, self._donor, spec, self.blocks)


def parse_intervention(line: str, config) -> Intervention:
    parts = line.split()
    if not parts:
        raise InputError("empty intervention recipe")
    kind = parts[0]
    kv = {}
    for p in parts[1:]:
        key, _, val = p.partition("=")
        if not val:
            raise InputError(f"malformed recipe field {p!r}")
        kv[key] = val
    if kind == "scale":
        if "groups" not in kv or "factor" not in kv:
            raise InputError("scale recipe needs groups= and factor=")
        return Intervention(kind="scale", groups=parse_selector(kv["groups"], config),
                            factor=float(kv["factor"]))
    if kind == "swap":
        if "donor" not in kv or "blocks" not in kv:
            raise InputError("swap recipe needs donor= and blocks=")
        blocks = tuple(b for b in kv["blocks"].split(",") if b)
        spec = None
        if "spec" in kv:
            b, m, t = _parse_ranges(kv["spec"])
            spec = BlockSpec(bottom=b, intermediate=m, top=t,
                             include_embeddings_in=kv.get("embeddings", "bottom"),
                             include_unembedding_in=kv.get("unembedding", "top"))
        return Intervention(kind="swap", donor_path=kv["donor"], blocks=blocks, spec=spec)
    raise InputError(f"unknown intervention kind {kind!r}")


def ablation_sweep(ckpts, intervention: Intervention, tokenizer, dataset,
                   seed: int = 0, n_shots: int = 5):
    """Paired (original, ablated) metric rows per checkpoint, including
    the copy-behavior decomposition and the character-Jaccard comparison
    of predictions against the source word."""
    rows = []
    for ckpt in ckpts:
        ablated = intervention.apply(ckpt)
        rec_o, sum_o = eval_wlt(ckpt, tokenizer, dataset, seed=seed, n_shots=n_shots)
        rec_a, sum_a = eval_wlt(ablated, tokenizer, dataset, seed=seed, n_shots=n_shots)
        _, rep_o = eval_repetition(ckpt, tokenizer, dataset, seed=seed, n_shots=n_shots)
        _, rep_a = eval_repetition(ablated, tokenizer, dataset, seed=seed, n_shots=n_shots)
        ja_o, ja_a, n_j = [], [], 0
        for ro, ra in zip(rec_o, rec_a):
            if ro.is_correct or ra.is_correct:
                n_j += 1
                ja_o.append(char_jaccard(ro.decoded, ro.src_word))
                ja_a.append(char_jaccard(ra.decoded, ra.src_word))
        rows.append({
            "step": ckpt.step,
            "tokens_seen": ckpt.tokens_seen,
            "original": sum_o,
            "ablated": sum_a,
            "original_repetition": rep_o,
            "ablated_repetition": rep_a,
            "jaccard_original": float(np.mean(ja_o)) if n_j else None,
            "jaccard_ablated": float(np.mean(ja_a)) if n_j else None,
            "jaccard_n": n_j,
        })
    return rows
