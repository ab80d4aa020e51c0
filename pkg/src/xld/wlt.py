"""Word-level translation benchmark: concepts with per-direction
synonym sets, the few-shot/query split, and prompt construction.

A concept is an abstract meaning with one canonical surface form per
language.  For every directed language pair the concept carries a
nonempty valid-translation set containing the target canonical form,
optionally extended by inflected (suffix) variants.  A controlled
number of query concepts are identical cognates between lexicon-sharing
languages, which sets the dataset's valid-copy rate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import build_lexicons, language_names, _partner_index
from .errors import FormatError, InputError

POS_PRIORITY = ("noun", "verb", "adj", "adv")


def primary_pos_of(tags) -> str:
    for p in POS_PRIORITY:
        if p in tags:
            return p
    raise InputError(f"no known PoS tag in {sorted(tags)}")


@dataclass(frozen=True)
class ConceptEntry:
    concept_id: str
    forms: dict                 # lang -> canonical surface form
    valid_translations: dict    # (src, tgt) -> frozenset of strings
    pos_tags: frozenset
    primary_pos: str
    frequency_bin: int

    def validate(self) -> None:
        if self.primary_pos != primary_pos_of(self.pos_tags):
            raise FormatError(f"{self.concept_id}: primary_pos violates priority ordering")
        for a in self.forms:
            for b in self.forms:
                if a == b:
                    continue
                vs = self.valid_translations.get((a, b))
                if not vs:
                    raise FormatError(f"{self.concept_id}: missing synonym set for {a}>{b}")
                if self.forms[b] not in vs:
                    raise FormatError(
                        f"{self.concept_id}: {a}>{b} synonyms omit the canonical form")


@dataclass(frozen=True)
class WLTDataset:
    concepts: tuple
    fewshot_ids: frozenset
    query_ids: frozenset
    languages: tuple
    lang_names: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {c.concept_id: c for c in self.concepts})

    def concept(self, concept_id: str) -> ConceptEntry:
        try:
            return self._by_id[concept_id]
        except KeyError:
            raise InputError(f"unknown concept {concept_id!r}") from None

    def validate(self) -> None:
        if self.fewshot_ids & self.query_ids:
            raise FormatError("few-shot and query splits overlap")
        ids = {c.concept_id for c in self.concepts}
        if not (self.fewshot_ids | self.query_ids) <= ids:
            raise FormatError("split references unknown concept ids")
        for c in self.concepts:
            c.validate()
        for cid in self.fewshot_ids:
            c = self._by_id[cid]
            forms = [c.forms[l] for l in self.languages if l in c.forms]
            if len(set(f.casefold() for f in forms)) != len(forms):
                raise FormatError(f"few-shot concept {cid} repeats a form across languages")

    def directions(self) -> list:
        return [(a, b) for a in self.languages for b in self.languages if a != b]

    def valid_copy_rate(self) -> float:
        """Fraction of directed query pairs whose source form is itself
        a valid translation."""
        total = copies = 0
        for cid in sorted(self.query_ids):
            c = self._by_id[cid]
            for (a, b), vs in sorted(c.valid_translations.items()):
                if a not in c.forms:
                    continue
                total += 1
                if c.forms[a].casefold() in {v.casefold() for v in vs}:
                    copies += 1
        return copies / total if total else 0.0


@dataclass(frozen=True)
class WLTInstance:
    src_lang: str
    tgt_lang: str
    src_word: str
    valid: frozenset
    fewshot: tuple              # ordered (src word, tgt word) pairs
    prompt_text: str
    concept_id: str = ""

    @property
    def is_repetition(self) -> bool:
        return self.src_lang == self.tgt_lang


def _prompt_line(name_src, w_src, name_tgt, w_tgt) -> str:
    return f'{name_src}: "{w_src}" - {name_tgt}: "{w_tgt}"'


def build_prompt(dataset: WLTDataset, concept_id: str, src_lang: str, tgt_lang: str,
                 n_shots: int = 5, seed: int = 0) -> WLTInstance:
    """Prompt of n_shots example lines plus a query line that ends with
    an opening quote.  Few-shot concepts are drawn without replacement,
    never including the query concept."""
    c = dataset.concept(concept_id)
    if concept_id not in dataset.query_ids:
        raise InputError(f"{concept_id} is not a query concept")
    if src_lang not in c.forms or tgt_lang not in c.forms:
        raise InputError(f"{concept_id} lacks a form in {src_lang} or {tgt_lang}")
    pool = [i for i in sorted(dataset.fewshot_ids)
            if i != concept_id
            and src_lang in dataset.concept(i).forms and tgt_lang in dataset.concept(i).forms]
    if len(pool) < n_shots:
        raise InputError(f"only {len(pool)} few-shot concepts cover {src_lang}>{tgt_lang}")
    rng = np.random.default_rng([seed, 7005])
    picks = [pool[k] for k in rng.choice(len(pool), size=n_shots, replace=False)] \
        if n_shots else []
    name_src = dataset.lang_names.get(src_lang, src_lang)
    name_tgt = dataset.lang_names.get(tgt_lang, tgt_lang)
    shots = []
    lines = []
    for pid in picks:
        p = dataset.concept(pid)
        shots.append((p.forms[src_lang], p.forms[tgt_lang]))
        lines.append(_prompt_line(name_src, p.forms[src_lang], name_tgt, p.forms[tgt_lang]))
    src_word = c.forms[src_lang]
    lines.append(f'{name_src}: "{src_word}" - {name_tgt}: "')
    if src_lang == tgt_lang:
        valid = frozenset({src_word})
    else:
        valid = frozenset(c.valid_translations[(src_lang, tgt_lang)])
    return WLTInstance(src_lang=src_lang, tgt_lang=tgt_lang, src_word=src_word,
                       valid=valid, fewshot=tuple(shots), prompt_text="\n".join(lines),
                       concept_id=concept_id)


def parse_prompt(text: str):
    """Structural (regex-free) inverse of build_prompt.

    Returns (shots, (name_src, query_word, name_tgt)); raises
    FormatError when the text deviates from the prompt grammar.
    """

    def split_segment(line, is_query):
        i = line.find(': "')
        if i < 0:
            raise FormatError("missing source name separator")
        name_a = line[:i]
        j = line.find('"', i + 3)
        if j < 0:
            raise FormatError("unterminated source word")
        w_a = line[i + 3:j]
        if not line.startswith(' - ', j + 1):
            raise FormatError("missing pair separator")
        k = line.find(': "', j + 4)
        if k < 0:
            raise FormatError("missing target name separator")
        name_b = line[j + 4:k]
        rest = line[k + 3:]
        if is_query:
            if rest != "":
                raise FormatError("query line must end at the opening quote")
            return name_a, w_a, name_b, None
        if not rest.endswith('"') or '"' in rest[:-1]:
            raise FormatError("malformed target word")
        return name_a, w_a, name_b, rest[:-1]

    lines = text.split("\n")
    shots = []
    for line in lines[:-1]:
        _, w_a, _, w_b = split_segment(line, is_query=False)
        shots.append((w_a, w_b))
    name_a, q, name_b, _ = split_segment(lines[-1], is_query=True)
    return shots, (name_a, q, name_b)


DEFAULT_POS_TARGETS = {"noun": 40, "verb": 40, "adj": 25, "adv": 20}


def synthesize_wlt(specs, seed: int, n_concepts: int = 125, n_fewshot: int = 25,
                   pos_targets: dict | None = None, n_bins: int = 4,
                   target_copy_rate: float = 0.044, max_synonyms: int = 3) -> WLTDataset:
    """Build a fully covered concept inventory from the synthetic
    lexicons, stratified over PoS and Zipf-rank frequency bins, with the
    requested valid-copy rate realized via identical cognates between
    lexicon-sharing languages (query split only)."""
    pos_targets = dict(pos_targets or DEFAULT_POS_TARGETS)
    if sum(pos_targets.values()) != n_concepts:
        raise InputError("pos_targets must sum to n_concepts")
    rng = np.random.default_rng([seed, 7006])
    lexicons = build_lexicons(specs, seed)
    names = language_names(specs, seed)
    langs = [s.lang_id for s in specs]
    n_query = n_concepts - n_fewshot

    # identical-cognate budget: each cognate concept contributes one
    # copy-pair in each direction of its sharing pair
    pairs = []
    for i, spec in enumerate(specs):
        j = _partner_index(specs, i)
        if j is not None and spec.shared_form_fraction > 0:
            pairs.append((specs[j].lang_id, spec.lang_id))
    n_dirs = len(langs) * (len(langs) - 1)
    n_cognates = int(round(target_copy_rate * n_query * n_dirs / 2))
    if n_cognates > 0 and not pairs:
        raise InputError("target copy rate needs at least one lexicon-sharing pair")

    shared_pool = {}
    for a, b in pairs:
        pool = sorted(set(lexicons[a]) & set(lexicons[b]))
        if not pool:
            raise InputError(f"languages {a}/{b} share no lexicon forms")
        shared_pool[(a, b)] = pool

    bands = {lang: np.array_split(np.arange(len(lexicons[lang])), n_bins) for lang in langs}
    used = {lang: set() for lang in langs}

    def draw_form(lang, bin_, forbid):
        band = bands[lang][bin_]
        order = rng.permutation(len(band))
        for k in order:
            w = lexicons[lang][band[k]]
            if w not in used[lang] and w not in forbid:
                return w
        raise InputError(f"lexicon too small to stratify bin {bin_} of {lang}")

    pos_list = [p for p, n in pos_targets.items() for _ in range(n)]
    bin_list = [i % n_bins for i in range(n_concepts)]
    rng.shuffle(pos_list)
    rng.shuffle(bin_list)

    cognate_plan: dict = {}
    order = rng.permutation(n_concepts)[:n_cognates] if n_cognates else []
    for t, ci in enumerate(sorted(order)):
        cognate_plan[int(ci)] = pairs[t % len(pairs)]

    concepts = []
    for ci in range(n_concepts):
        cid = f"c{ci:03d}"
        primary = pos_list[ci]
        tags = {primary}
        for lower in POS_PRIORITY[POS_PRIORITY.index(primary) + 1:]:
            if rng.random() < 0.2:
                tags.add(lower)
        bin_ = bin_list[ci]
        forms: dict = {}
        cog = cognate_plan.get(ci)
        if cog is not None:
            a, b = cog
            pool = [w for w in shared_pool[(a, b)]
                    if w not in used[a] and w not in used[b]]
            if not pool:
                raise InputError(f"not enough shared forms between {a} and {b} for copy rate")
            w = pool[int(rng.integers(len(pool)))]
            forms[a] = forms[b] = w
            used[a].add(w)
            used[b].add(w)
        for lang in langs:
            if lang in forms:
                continue
            forms[lang] = draw_form(lang, bin_, set(forms.values()))
            used[lang].add(forms[lang])

        suffixes = {s.lang_id: list(s.morphology_suffixes) for s in specs}
        valid: dict = {}
        for a in langs:
            for b in langs:
                if a == b:
                    continue
                vs = {forms[b]}
                n_extra = int(rng.integers(0, max_synonyms))
                for _ in range(n_extra):
                    if suffixes[b]:
                        cand = forms[b] + suffixes[b][int(rng.integers(len(suffixes[b])))]
                        if cand.casefold() != forms[a].casefold() or forms[a] == forms[b]:
                            vs.add(cand)
                valid[(a, b)] = frozenset(vs)
        concepts.append(ConceptEntry(concept_id=cid, forms=forms,
                                     valid_translations=valid, pos_tags=frozenset(tags),
                                     primary_pos=primary, frequency_bin=bin_))

    # few-shot split: non-cognate concepts with distinct forms, spread
    # over (pos, bin) cells best-effort
    eligible = [c for i, c in enumerate(concepts)
                if i not in cognate_plan
                and len({f.casefold() for f in c.forms.values()}) == len(c.forms)]
    if len(eligible) < n_fewshot:
        raise InputError("not enough cognate-free concepts for the few-shot split")
    cells: dict = {}
    for c in eligible:
        cells.setdefault((c.primary_pos, c.frequency_bin), []).append(c.concept_id)
    fewshot: list = []
    keys = sorted(cells)
    while len(fewshot) < n_fewshot:
        progressed = False
        for key in keys:
            if cells[key] and len(fewshot) < n_fewshot:
                fewshot.append(cells[key].pop(0))
                progressed = True
        if not progressed:
            break
    fewshot_ids = frozenset(fewshot[:n_fewshot])
    query_ids = frozenset(c.concept_id for c in concepts) - fewshot_ids

    ds = WLTDataset(concepts=tuple(concepts), fewshot_ids=fewshot_ids,
                    query_ids=query_ids, languages=tuple(langs), lang_names=names)
    ds.validate()
    rate = ds.valid_copy_rate()
    if abs(rate - target_copy_rate) > 0.01:
        raise InputError(f"achieved copy rate {rate:.4f} misses target {target_copy_rate:.4f}")
    return ds


def save_wlt(dataset: WLTDataset, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        header = {"version": 1, "languages": list(dataset.languages),
                  "lang_names": dataset.lang_names,
                  "fewshot_ids": sorted(dataset.fewshot_ids),
                  "query_ids": sorted(dataset.query_ids)}
        f.write(json.dumps(header, ensure_ascii=False, sort_keys=True) + "\n")
        for c in dataset.concepts:
            row = {"concept_id": c.concept_id, "forms": c.forms,
                   "valid": {f"{a}>{b}": sorted(v) for (a, b), v in sorted(c.valid_translations.items())},
                   "pos_tags": sorted(c.pos_tags), "primary_pos": c.primary_pos,
                   "frequency_bin": c.frequency_bin}
            f.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def load_wlt(path) -> WLTDataset:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
        header = json.loads(lines[0])
        if header.get("version") != 1:
            raise FormatError(f"unsupported dataset version {header.get('version')!r}")
        concepts = []
        for line in lines[1:]:
            if not line.strip():
                continue
            row = json.loads(line)
            valid = {}
            for key, words in row["valid"].items():
                a, _, b = key.partition(">")
                if not a or not b:
                    raise FormatError(f"bad direction key {key!r}")
                valid[(a, b)] = frozenset(words)
            concepts.append(ConceptEntry(
                concept_id=row["concept_id"], forms=row["forms"],
                valid_translations=valid, pos_tags=frozenset(row["pos_tags"]),
                primary_pos=row["primary_pos"], frequency_bin=int(row["frequency_bin"])))
        ds = WLTDataset(concepts=tuple(concepts),
                        fewshot_ids=frozenset(header["fewshot_ids"]),
                        query_ids=frozenset(header["query_ids"]),
                        languages=tuple(header["languages"]),
                        lang_names=header.get("lang_names", {}))
    except (json.JSONDecodeError, KeyError, IndexError, ValueError) as e:
        raise FormatError(f"unreadable dataset file {path}: {e}") from e
    ds.validate()
    return ds
