"""Corpus-distribution analysis: windowed word and co-occurrence
counting over the consumed training stream, first-correct-step
extraction, and the Shapley decomposition of regression R².
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from itertools import combinations, permutations

import numpy as np

from .errors import InputError

_LETTER_RUN = re.compile(r"[^\W\d_]+", re.UNICODE)


def find_word_matches(text: str, words, spaced: bool = True) -> dict:
    """Start offsets of each target word in the text.

    Spaced scripts use word-boundary matches (maximal letter runs);
    unspaced scripts count every substring occurrence.
    """
    out = {w: [] for w in words}
    if spaced:
        for m in _LETTER_RUN.finditer(text):
            w = m.group(0)
            if w in out:
                out[w].append(m.start())
    else:
        for w in words:
            start = 0
            while True:
                k = text.find(w, start)
                if k < 0:
                    break
                out[w].append(k)
                start = k + 1
    return out


def _count_pair(pa, pb, window: int, same: bool) -> int:
    count = 0
    j0 = 0
    for x in pa:
        while j0 < len(pb) and pb[j0] < x - window:
            j0 += 1
        j = j0
        while j < len(pb) and pb[j] <= x + window:
            if not same or pb[j] != x:
                count += 1
            j += 1
    return count // 2 if same else count


def count_document(text: str, words, pairs, window_chars: int, spaced: bool = True):
    """Word frequencies and windowed pair co-occurrences for one document.

    Co-occurrence counts pairs of match start offsets within
    ``window_chars`` of each other.  Returns (freq dict, cooc dict).
    """
    if window_chars <= 0:
        raise InputError("window_chars must be positive")
    matches = find_word_matches(text, words, spaced)
    freq = {w: len(p) for w, p in matches.items() if p}
    cooc = {}
    for a, b in pairs:
        pa, pb = matches.get(a, ()), matches.get(b, ())
        if not pa or not pb:
            continue
        count = _count_pair(pa, pb, window_chars, a == b)
        if count:
            cooc[(a, b)] = count
    return freq, cooc


def count_document_naive(text: str, words, pairs, window_chars: int, spaced: bool = True):
    """O(n^2) oracle over all match-offset pairs; used to cross-check
    the scanning counter."""
    matches = find_word_matches(text, words, spaced)
    freq = {w: len(p) for w, p in matches.items() if p}
    cooc = {}
    for a, b in pairs:
        count = 0
        for x in matches.get(a, ()):
            for y in matches.get(b, ()):
                if a == b and y <= x:
                    continue
                if abs(x - y) <= window_chars:
                    count += 1
        if count:
            cooc[(a, b)] = count
    return freq, cooc


@dataclass
class CountTable:
    """Cumulative frequency / co-occurrence counts per checkpoint."""

    checkpoints: list = field(default_factory=list)
    word_counts: dict = field(default_factory=dict)    # (word, lang) -> [cumulative]
    cooc_counts: dict = field(default_factory=dict)    # (src, tgt) -> [cumulative]

    def column(self, key, table) -> list:
        return table.get(key, [0] * len(self.checkpoints))

    def validate_monotone(self) -> None:
        for table in (self.word_counts, self.cooc_counts):
            for key, col in table.items():
                if any(b < a for a, b in zip(col, col[1:])):
                    raise InputError(f"nonmonotone cumulative counts for {key}")


class StreamCounter:
    """Accumulates counts over the consumed document stream; snapshot at
    each checkpoint boundary.  Pair counting only touches pairs whose
    both members matched in the document."""

    def __init__(self, words_by_lang: dict, pairs, window_chars: int,
                 spaced_by_lang: dict | None = None):
        self.words_by_lang = {l: set(ws) for l, ws in words_by_lang.items()}
        self.all_words = sorted(set().union(*self.words_by_lang.values())) \
            if words_by_lang else []
        self.pairs = sorted(set(pairs))
        self.window = window_chars
        self.spaced = spaced_by_lang or {}
        self._pairs_by_word: dict = {}
        for pair in self.pairs:
            for w in set(pair):
                self._pairs_by_word.setdefault(w, []).append(pair)
        self._freq = {}
        self._cooc = {}
        self.table = CountTable()

    def add_document(self, text: str, lang: str) -> None:
        spaced = self.spaced.get(lang, True)
        matches = find_word_matches(text, self.all_words, spaced)
        found = {w for w, p in matches.items() if p}
        lang_words = self.words_by_lang.get(lang, set())
        for w in found:
            if w in lang_words:
                key = (w, lang)
                self._freq[key] = self._freq.get(key, 0) + len(matches[w])
        candidates = set()
        for w in found:
            for pair in self._pairs_by_word.get(w, ()):
                if pair[0] in found and pair[1] in found:
                    candidates.add(pair)
        for a, b in candidates:
            c = _count_pair(matches[a], matches[b], self.window, a == b)
            if c:
                self._cooc[(a, b)] = self._cooc.get((a, b), 0) + c

    def snapshot(self, step: int) -> None:
        n_prev = len(self.table.checkpoints)
        self.table.checkpoints.append(step)
        for store, out in ((self._freq, self.table.word_counts),
                           (self._cooc, self.table.cooc_counts)):
            for key, val in store.items():
                col = out.setdefault(key, [0] * n_prev)
                col.append(val)
            for key, col in out.items():
                if len(col) < len(self.table.checkpoints):
                    col.append(col[-1] if col else 0)


def count_occurrences(documents, words_by_lang, pairs, window_chars: int,
                      checkpoints=None, spaced_by_lang=None) -> CountTable:
    """Count a document stream [(text, lang, step)] into a cumulative
    table snapshotted at the given checkpoint steps (default: one final
    snapshot)."""
    counter = StreamCounter(words_by_lang, pairs, window_chars, spaced_by_lang)
    docs = list(documents)
    if checkpoints is None:
        for text, lang, _ in docs:
            counter.add_document(text, lang)
        last = docs[-1][2] if docs else 0
        counter.snapshot(last)
    else:
        it = iter(docs)
        pending = next(it, None)
        for step in checkpoints:
            while pending is not None and pending[2] < step:
                counter.add_document(pending[0], pending[1])
                pending = next(it, None)
            counter.snapshot(step)
    counter.table.validate_monotone()
    return counter.table


def first_correct_step(records) -> dict:
    """Earliest checkpoint with a correct prediction per directed word
    pair; pairs never correct map to None.  Key: (concept, src, tgt)."""
    out: dict = {}
    for r in sorted(records, key=lambda r: r.checkpoint_step):
        key = (r.concept_id, r.src_lang, r.tgt_lang)
        if key not in out:
            out[key] = None
        if r.is_correct and out[key] is None:
            out[key] = r.checkpoint_step
    return out


@dataclass
class RegressionReport:
    r2_full: float
    shapley: dict
    n: int
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {"r2_full": self.r2_full, "shapley": self.shapley,
                "n": self.n, "degenerate": self.degenerate}


def _ols_r2(x: np.ndarray, y: np.ndarray) -> tuple:
    """R² of OLS with intercept; ridge fallback (1e-8) on rank
    deficiency.  Returns (r2, degenerate_flag)."""
    n = len(y)
    design = np.column_stack([np.ones(n), x]) if x.shape[1] else np.ones((n, 1))
    degenerate = np.linalg.matrix_rank(design) < design.shape[1]
    if degenerate:
        a = design.T @ design + 1e-8 * np.eye(design.shape[1])
        a[0, 0] -= 1e-8  # intercept unpenalized
        beta = np.linalg.solve(a, design.T @ y)
    else:
        beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ beta
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0.0:
        return 0.0, True
    return 1.0 - float(np.sum(resid**2)) / sst, degenerate


def shapley_from_subsets(r2: dict, k: int) -> list:
    """Shapley values from a full table of subset R² values.

    r2 maps frozenset of predictor indices (every subset of range(k))
    to that submodel's R².  Value i is the marginal contribution of i
    averaged over all orderings.
    """
    n_perm = math.factorial(k)
    out = []
    for i in range(k):
        total = []
        for perm in permutations(range(k)):
            before = frozenset(perm[:perm.index(i)])
            total.append(r2[before | {i}] - r2[before])
        out.append(math.fsum(total) / n_perm)
    return out


def shapley_r2(x, y, predictor_names=None) -> RegressionReport:
    """Shapley decomposition of R² over all predictor subsets.

    The values sum exactly to the full-model R² (efficiency axiom, up
    to compensated summation).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2:
        raise InputError("predictor matrix must be 2-D")
    n, k = x.shape
    if n < 10:
        raise InputError(f"need at least 10 observations, got {n}")
    names = list(predictor_names) if predictor_names is not None else \
        [f"x{i}" for i in range(k)]
    r2: dict = {}
    degenerate = False
    for size in range(k + 1):
        for subset in combinations(range(k), size):
            val, deg = _ols_r2(x[:, list(subset)], y)
            r2[frozenset(subset)] = val
            degenerate = degenerate or deg
    values = shapley_from_subsets(r2, k)
    shap = {names[i]: values[i] for i in range(k)}
    return RegressionReport(r2_full=r2[frozenset(range(k))], shapley=shap, n=n,
                            degenerate=degenerate)


def build_regression_inputs(first_steps: dict, dataset, table: CountTable,
                            step_to_tokens=None):
    """Assemble (X, y) for the first-correct regression.

    Predictors per directed pair: source-word count, max valid-
    translation count, max co-occurrence with a valid translation, all
    from the final cumulative snapshot.  Pairs that are never correct or
    where a copy is possible are excluded.
    """
    xs, ys, kept = [], [], []
    for (cid, src, tgt), step in sorted(first_steps.items()):
        if step is None:
            continue
        c = dataset.concept(cid)
        valid = c.valid_translations.get((src, tgt), frozenset())
        src_word = c.forms[src]
        if src_word.casefold() in {v.casefold() for v in valid}:
            continue  # copy possible
        f_src = table.column((src_word, src), table.word_counts)[-1] if table.checkpoints else 0
        f_tgt = max((table.column((v, tgt), table.word_counts)[-1] if table.checkpoints else 0)
                    for v in valid)
        coocs = []
        for v in valid:
            key = (src_word, v) if (src_word, v) in table.cooc_counts else (v, src_word)
            coocs.append(table.column(key, table.cooc_counts)[-1] if table.checkpoints else 0)
        y_val = step_to_tokens[step] if step_to_tokens else step
        xs.append([f_src, f_tgt, max(coocs) if coocs else 0])
        ys.append(y_val)
        kept.append((cid, src, tgt))
    return np.array(xs, dtype=np.float64), np.array(ys, dtype=np.float64), kept


def write_count_table_csv(table: CountTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["kind", "key_a", "key_b"] + [str(s) for s in table.checkpoints])
        for (word, lang) in sorted(table.word_counts):
            w.writerow(["word", word, lang] + table.word_counts[(word, lang)])
        for (a, b) in sorted(table.cooc_counts):
            w.writerow(["cooc", a, b] + table.cooc_counts[(a, b)])
