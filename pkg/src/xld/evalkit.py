"""Behavioral evaluation: greedy decoding, the copy error taxonomy,
token-overlap buckets, per-checkpoint metric series, minimal pairs, and
learning-phase detection.

Classification precedence for a decoded output (case-folded):
valid match (refined to valid copy when it also equals the source),
then source-word copy, then few-shot context copy, then other.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InputError
from .kernels import log_softmax_rows
from .model import DecodeSession, forward
from .wlt import WLTDataset, WLTInstance, build_prompt

LABELS = ("correct", "correct_valid_copy", "err_source_copy", "err_context_copy", "err_other")
BUCKETS = ("exact", "partial", "none")
CORRECT_LABELS = ("correct", "correct_valid_copy")
MAX_NEW_TOKENS = 16


@dataclass(frozen=True)
class PredictionRecord:
    concept_id: str
    src_lang: str
    tgt_lang: str
    src_word: str
    decoded: str
    label: str
    overlap_bucket: str
    checkpoint_step: int

    @property
    def is_correct(self) -> bool:
        return self.label in CORRECT_LABELS

    def to_dict(self) -> dict:
        return {"concept_id": self.concept_id, "src_lang": self.src_lang,
                "tgt_lang": self.tgt_lang, "src_word": self.src_word,
                "decoded": self.decoded, "label": self.label,
                "overlap_bucket": self.overlap_bucket,
                "checkpoint_step": self.checkpoint_step}


def classify_output(decoded: str, instance: WLTInstance) -> str:
    d = decoded.casefold()
    valid = {v.casefold() for v in instance.valid}
    src = instance.src_word.casefold()
    if d in valid:
        return "correct_valid_copy" if d == src else "correct"
    if d == src:
        return "err_source_copy"
    if d in {t.casefold() for _, t in instance.fewshot}:
        return "err_context_copy"
    return "err_other"


def overlap_bucket(src_word: str, valid_set, tokenizer) -> str:
    src = src_word.casefold()
    if any(v.casefold() == src for v in valid_set):
        return "exact"
    src_ids = set(tokenizer.encode(src_word))
    for v in sorted(valid_set):
        if src_ids & set(tokenizer.encode(v)):
            return "partial"
    return "none"


def _finish(tokenizer, ids) -> str:
    text = tokenizer.decode(ids)
    if '"' in text:
        text = text[:text.index('"')]
    return text.strip()


def greedy_decode(ckpt, tokenizer, instance: WLTInstance,
                  max_new_tokens: int = MAX_NEW_TOKENS) -> str:
    """Greedy continuation of the prompt, cut at the first quote."""
    return decode_instances(ckpt, tokenizer, [instance], max_new_tokens)[0]


def decode_instances(ckpt, tokenizer, instances, max_new_tokens: int = MAX_NEW_TOKENS):
    """Batched greedy decoding; prompts are grouped by token length so
    each group shares one KV cache.  Output order matches input order."""
    prompts = []
    for inst in instances:
        ids = [tokenizer.bos_id] + tokenizer.encode(inst.prompt_text)
        if len(ids) > ckpt.config.max_seq_len - max_new_tokens:
            raise InputError("prompt too long for decoding budget")
        prompts.append(ids)
    groups: dict = {}
    for i, ids in enumerate(prompts):
        groups.setdefault(len(ids), []).append(i)
    out = [""] * len(instances)
    for length in sorted(groups):
        idx = groups[length]
        toks = np.array([prompts[i] for i in idx], dtype=np.int64)
        session = DecodeSession(ckpt, toks)
        produced = [[] for _ in idx]
        done = [False] * len(idx)
        logits = session.last_logits
        for t in range(max_new_tokens):
            nxt = np.argmax(logits, axis=1)
            for k in range(len(idx)):
                if not done[k]:
                    produced[k].append(int(nxt[k]))
                    if '"' in tokenizer.decode(produced[k]):
                        done[k] = True
            if all(done) or t == max_new_tokens - 1:
                break
            logits = session.step(nxt)
        for k, i in enumerate(idx):
            out[i] = _finish(tokenizer, produced[k])
    return out


def _instance_seed(seed: int, d_idx: int, c_idx: int) -> int:
    return (seed * 1_000_003 + d_idx * 1009 + c_idx) % (2**31 - 1)


def _summarize(records) -> dict:
    n = len(records)
    label_counts = {l: 0 for l in LABELS}
    bucket_counts = {b: 0 for b in BUCKETS}
    bucket_correct = {b: 0 for b in BUCKETS}
    dir_n: dict = {}
    dir_correct: dict = {}
    for r in records:
        label_counts[r.label] += 1
        bucket_counts[r.overlap_bucket] += 1
        key = (r.src_lang, r.tgt_lang)
        dir_n[key] = dir_n.get(key, 0) + 1
        if r.is_correct:
            bucket_correct[r.overlap_bucket] += 1
            dir_correct[key] = dir_correct.get(key, 0) + 1
    accuracy = sum(label_counts[l] for l in CORRECT_LABELS) / n if n else 0.0
    direction_accuracy = {f"{a}>{b}": dir_correct.get((a, b), 0) / dir_n[(a, b)]
                          for (a, b) in sorted(dir_n)}
    langs = sorted({a for a, _ in dir_n} | {b for _, b in dir_n})
    asymmetry = {}
    for lang in langs:
        diffs = []
        for other in langs:
            if other == lang:
                continue
            fwd_key, rev_key = (lang, other), (other, lang)
            if fwd_key in dir_n and rev_key in dir_n:
                diffs.append(dir_correct.get(fwd_key, 0) / dir_n[fwd_key]
                             - dir_correct.get(rev_key, 0) / dir_n[rev_key])
        if diffs:
            asymmetry[lang] = float(np.mean(diffs))
    return {
        "n": n,
        "accuracy": accuracy,
        "label_counts": label_counts,
        "label_distribution": {l: (c / n if n else 0.0) for l, c in label_counts.items()},
        "bucket_counts": bucket_counts,
        "bucket_correct_counts": bucket_correct,
        "bucket_accuracy": {b: (bucket_correct[b] / bucket_counts[b]) if bucket_counts[b] else None
                            for b in BUCKETS},
        "direction_accuracy": direction_accuracy,
        "asymmetry": asymmetry,
    }


def eval_wlt(ckpt, tokenizer, dataset: WLTDataset, directions=None, seed: int = 0,
             n_shots: int = 5, query_ids=None):
    """Evaluate all query concepts over the directed pairs.

    Returns (records, summary).  Records are ordered by (direction,
    concept) so merges are deterministic.
    """
    directions = list(directions) if directions is not None else dataset.directions()
    qids = sorted(query_ids if query_ids is not None else dataset.query_ids)
    instances = []
    for d_idx, (src, tgt) in enumerate(directions):
        for c_idx, cid in enumerate(qids):
            c = dataset.concept(cid)
            if src not in c.forms or tgt not in c.forms:
                continue
            instances.append(build_prompt(dataset, cid, src, tgt, n_shots,
                                          seed=_instance_seed(seed, d_idx, c_idx)))
    decoded = decode_instances(ckpt, tokenizer, instances)
    records = []
    for inst, out in zip(instances, decoded):
        records.append(PredictionRecord(
            concept_id=inst.concept_id, src_lang=inst.src_lang, tgt_lang=inst.tgt_lang,
            src_word=inst.src_word, decoded=out, label=classify_output(out, inst),
            overlap_bucket=overlap_bucket(inst.src_word, inst.valid, tokenizer),
            checkpoint_step=ckpt.step))
    return records, _summarize(records)


def eval_repetition(ckpt, tokenizer, dataset: WLTDataset, seed: int = 0, n_shots: int = 5):
    """Same-language variant: the word must be copied verbatim."""
    directions = [(l, l) for l in dataset.languages]
    records, summary = eval_wlt(ckpt, tokenizer, dataset, directions, seed=seed,
                                n_shots=n_shots)
    summary["per_language"] = {
        lang: summary["direction_accuracy"][f"{lang}>{lang}"]
        for lang in dataset.languages if f"{lang}>{lang}" in summary["direction_accuracy"]}
    summary["asymmetry"] = {}
    return records, summary


@dataclass
class CheckpointMetrics:
    step: int
    tokens_seen: int
    wlt: dict
    repetition: dict

    def to_dict(self) -> dict:
        return {"step": self.step, "tokens_seen": self.tokens_seen,
                "wlt": self.wlt, "repetition": self.repetition}

    @staticmethod
    def from_dict(d) -> "CheckpointMetrics":
        return CheckpointMetrics(step=d["step"], tokens_seen=d["tokens_seen"],
                                 wlt=d["wlt"], repetition=d["repetition"])


def evaluate_checkpoint(ckpt, tokenizer, dataset, seed: int = 0, n_shots: int = 5):
    wlt_records, wlt_summary = eval_wlt(ckpt, tokenizer, dataset, seed=seed, n_shots=n_shots)
    rep_records, rep_summary = eval_repetition(ckpt, tokenizer, dataset, seed=seed,
                                               n_shots=n_shots)
    metrics = CheckpointMetrics(step=ckpt.step, tokens_seen=ckpt.tokens_seen,
                                wlt=wlt_summary, repetition=rep_summary)
    return metrics, wlt_records, rep_records


@dataclass
class PhaseReport:
    copy_peak_step: int
    first_no_overlap_success_step: int | None

    @property
    def peak_precedes_success(self) -> bool | None:
        if self.first_no_overlap_success_step is None:
            return None
        return self.copy_peak_step <= self.first_no_overlap_success_step


def detect_phases(series) -> PhaseReport:
    """Copy-error peak (earliest argmax of combined copy-error rate) and
    the first checkpoint with a correct no-overlap translation."""
    if len(series) < 3:
        raise InputError("phase detection needs at least 3 checkpoints")
    rates = []
    for m in series:
        dist = m.wlt["label_distribution"]
        rates.append(dist["err_source_copy"] + dist["err_context_copy"])
    peak_idx = int(np.argmax(rates))
    first_none = None
    for m in series:
        if m.wlt["bucket_correct_counts"].get("none", 0) >= 1:
            first_none = m.step
            break
    return PhaseReport(copy_peak_step=series[peak_idx].step,
                       first_no_overlap_success_step=first_none)


def sequence_logprob(ckpt, tokenizer, text: str) -> float:
    """Total log probability of the tokenized text after a bos marker,
    in float64."""
    ids = [tokenizer.bos_id] + tokenizer.encode(text)
    toks = np.asarray(ids, dtype=np.int64)
    logits = forward(ckpt, toks)
    lp = log_softmax_rows(logits[:-1])
    return float(lp[np.arange(len(ids) - 1), toks[1:]].sum())


def eval_minimal_pairs(ckpt, tokenizer, pairs_file) -> float:
    """Accuracy over (acceptable, unacceptable) sentence pairs using
    byte-length-normalized total log probability; ties score 0.5."""
    pairs = []
    with open(pairs_file, encoding="utf-8") as f:
        for ln, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 2 or not cols[0] or not cols[1]:
                raise FormatError(f"{pairs_file}: line {ln} is not a two-column pair")
            pairs.append((cols[0], cols[1]))
    if not pairs:
        raise FormatError(f"{pairs_file}: no pairs found")
    score = 0.0
    for good, bad in pairs:
        lg = sequence_logprob(ckpt, tokenizer, good) / len(good.encode("utf-8"))
        lb = sequence_logprob(ckpt, tokenizer, bad) / len(bad.encode("utf-8"))
        if lg > lb:
            score += 1.0
        elif lg == lb:
            score += 0.5
    return score / len(pairs)


def write_records_jsonl(records, path, append: bool = False) -> None:
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8") as f:
        for r in sorted(records, key=lambda r: (r.checkpoint_step, r.src_lang,
                                                r.tgt_lang, r.concept_id)):
            f.write(json.dumps(r.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


def load_records_jsonl(path):
    records = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            d = json.loads(line)
            records.append(PredictionRecord(**d))
    return records


SUMMARY_COLUMNS = ["step", "direction", "accuracy", "n",
                   "n_correct", "n_correct_valid_copy", "n_err_source_copy",
                   "n_err_context_copy", "n_err_other",
                   "acc_exact", "acc_partial", "acc_none"]


def write_summary_csv(all_records, path) -> None:
    """Per-(step, direction) rows plus an 'all' row per step, in the
    fixed column order."""
    by_step: dict = {}
    for r in all_records:
        by_step.setdefault(r.checkpoint_step, []).append(r)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(SUMMARY_COLUMNS)
        for step in sorted(by_step):
            recs = by_step[step]
            groups: dict = {"all": recs}
            for r in recs:
                groups.setdefault(f"{r.src_lang}>{r.tgt_lang}", []).append(r)
            for direction in ["all"] + sorted(k for k in groups if k != "all"):
                sub = groups[direction]
                s = _summarize(sub)
                row = [step, direction, f"{s['accuracy']:.6f}", s["n"]]
                row += [s["label_counts"][l] for l in LABELS]
                for b in BUCKETS:
                    a = s["bucket_accuracy"][b]
                    row.append("" if a is None else f"{a:.6f}")
                w.writerow(row)


def save_metric_series(series, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump([m.to_dict() for m in series], f, sort_keys=True)


def load_metric_series(path):
    with open(path, encoding="utf-8") as f:
        return [CheckpointMetrics.from_dict(d) for d in json.load(f)]
