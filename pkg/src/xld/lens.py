"""Layer-wise readout: project intermediate residual states through the
final norm, unembedding and log softmax, score multi-token candidates
by teacher forcing, and track the translation-over-copy margin.

Layer indexing convention: index -1 is the embedding output, indices
0..n_layers-1 the post-block states.  Arrays returned here have length
n_layers + 1 with position 0 holding layer -1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .evalkit import _instance_seed
from .model import forward, lens_head
from .wlt import WLTDataset, WLTInstance, build_prompt


def lens_project(hidden_state, ckpt):
    """Log-probability vector(s) for one layer's hidden state(s)."""
    return lens_head(ckpt, np.asarray(hidden_state))


def score_word(ckpt, tokenizer, prompt: str, word: str) -> np.ndarray:
    """Length-normalized candidate score per layer.

    The candidate keeps its canonical tokenizer segmentation; each token
    is scored at the position where the ground-truth prefix ends, all
    from one captured forward pass.  Returns (n_layers + 1,) float64.
    """
    word_ids = tokenizer.encode(word)
    if len(word_ids) == 0:
        raise InputError("candidate word produced no tokens")
    prompt_ids = [tokenizer.bos_id] + tokenizer.encode(prompt)
    seq = np.array(prompt_ids + word_ids[:-1], dtype=np.int64)
    if len(seq) > ckpt.config.max_seq_len:
        raise InputError("prompt plus candidate exceeds max_seq_len")
    _, hidden = forward(ckpt, seq, capture=True)
    positions = np.arange(len(prompt_ids) - 1, len(seq))
    targets = np.array(word_ids, dtype=np.int64)
    scores = np.empty(len(hidden), dtype=np.float64)
    for li, h in enumerate(hidden):
        lp = lens_head(ckpt, h[positions])
        scores[li] = lp[np.arange(len(targets)), targets].mean()
    return scores


@dataclass(frozen=True)
class LayerScoreProfile:
    candidate: str
    scores: np.ndarray          # (n_layers + 1,), layer -1 first
    best_synonym_flag: bool = False


@dataclass(frozen=True)
class MarginProfile:
    m: np.ndarray               # per-layer margin
    dm: np.ndarray              # per-transition difference, len(m) - 1

    def transition_kinds(self):
        """'copy' where dm < 0, 'translation' where dm > 0, else 'flat'."""
        return ["copy" if d < 0 else ("translation" if d > 0 else "flat")
                for d in self.dm]


def candidate_words(dataset: WLTDataset, concept_id: str, lang: str, src_lang: str):
    """Synonyms of a concept in one language, relative to a source
    language: the per-direction valid set, or the canonical form when
    lang is the source itself."""
    c = dataset.concept(concept_id)
    if lang not in c.forms:
        raise InputError(f"{concept_id} has no form in {lang}")
    if lang == src_lang:
        return [c.forms[lang]]
    vs = c.valid_translations.get((src_lang, lang))
    if vs:
        return sorted(vs)
    return [c.forms[lang]]


def concept_profile(ckpt, tokenizer, instance: WLTInstance, dataset: WLTDataset,
                    languages=None) -> dict:
    """Best-synonym profile per language for the instance's concept.

    All synonyms are scored; the one with the highest final-layer value
    wins, ties broken by lexicographic candidate order.
    """
    languages = list(languages) if languages is not None else list(dataset.languages)
    out = {}
    for lang in languages:
        best = None
        for cand in candidate_words(dataset, instance.concept_id, lang, instance.src_lang):
            s = score_word(ckpt, tokenizer, instance.prompt_text, cand)
            if best is None or s[-1] > best.scores[-1]:
                best = LayerScoreProfile(candidate=cand, scores=s)
        out[lang] = LayerScoreProfile(candidate=best.candidate, scores=best.scores,
                                      best_synonym_flag=True)
    return out


def margin_profile(ckpt, tokenizer, instance: WLTInstance,
                   dataset: WLTDataset | None = None) -> MarginProfile:
    """Margin between the best translation candidate and the copy
    candidate, per layer, plus its per-transition differences."""
    if dataset is not None:
        cands = candidate_words(dataset, instance.concept_id, instance.tgt_lang,
                                instance.src_lang)
    else:
        cands = sorted(instance.valid)
    best = None
    for cand in cands:
        s = score_word(ckpt, tokenizer, instance.prompt_text, cand)
        if best is None or s[-1] > best[1][-1]:
            best = (cand, s)
    s_src = score_word(ckpt, tokenizer, instance.prompt_text, instance.src_word)
    m = best[1] - s_src
    return MarginProfile(m=m, dm=np.diff(m))


def margin_heatmap(ckpts, tokenizer, dataset: WLTDataset, directions=None,
                   concept_ids=None, seed: int = 0, n_shots: int = 5):
    """Mean per-transition margin difference over instances, one row per
    checkpoint.  Returns (steps, tokens_seen, grid, transition_labels).
    """
    directions = list(directions) if directions is not None else dataset.directions()
    qids = sorted(concept_ids if concept_ids is not None else dataset.query_ids)
    instances = []
    for d_idx, (src, tgt) in enumerate(directions):
        for c_idx, cid in enumerate(qids):
            c = dataset.concept(cid)
            if src in c.forms and tgt in c.forms:
                instances.append(build_prompt(dataset, cid, src, tgt, n_shots,
                                              seed=_instance_seed(seed, d_idx, c_idx)))
    if not instances:
        raise InputError("no instances cover the requested directions")
    n_layers = ckpts[0].config.n_layers
    steps, tokens, rows = [], [], []
    for ckpt in ckpts:
        acc = np.zeros(n_layers, dtype=np.float64)
        for inst in instances:
            acc += margin_profile(ckpt, tokenizer, inst, dataset).dm
        rows.append(acc / len(instances))
        steps.append(ckpt.step)
        tokens.append(ckpt.tokens_seen)
    labels = [f"{l - 1}>{l}" for l in range(n_layers)]
    return steps, tokens, np.array(rows), labels


def write_heatmap_csv(steps, tokens, grid, labels, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["step", "tokens_seen"] + list(labels))
        for s, t, row in zip(steps, tokens, grid):
            w.writerow([s, t] + [f"{x:.8f}" for x in row])


def block_score_curves(ckpts, tokenizer, dataset, blocks: dict, directions=None,
                       concept_ids=None, seed: int = 0, n_shots: int = 5):
    """Mean margin per layer block over checkpoints (block name ->
    series), for block-wise evolution plots.  ``blocks`` maps name ->
    (lo, hi) inclusive layer range."""
    directions = list(directions) if directions is not None else dataset.directions()
    qids = sorted(concept_ids if concept_ids is not None else dataset.query_ids)
    instances = []
    for d_idx, (src, tgt) in enumerate(directions):
        for c_idx, cid in enumerate(qids):
            c = dataset.concept(cid)
            if src in c.forms and tgt in c.forms:
                instances.append(build_prompt(dataset, cid, src, tgt, n_shots,
                                              seed=_instance_seed(seed, d_idx, c_idx)))
    curves = {name: [] for name in blocks}
    steps, tokens = [], []
    for ckpt in ckpts:
        mean_m = None
        for inst in instances:
            prof = margin_profile(ckpt, tokenizer, inst, dataset)
            mean_m = prof.m if mean_m is None else mean_m + prof.m
        mean_m = mean_m / len(instances)
        for name, (lo, hi) in blocks.items():
            curves[name].append(float(np.mean(mean_m[lo + 1:hi + 2])) if hi >= lo
                                else None)
        steps.append(ckpt.step)
        tokens.append(ckpt.tokens_seen)
    return steps, tokens, curves
