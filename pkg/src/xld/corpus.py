"""Synthetic multilingual corpora and the mixture batch sampler.

Each synthetic language draws CV-syllable words over a script-specific
alphabet; different script tags use disjoint character ranges.  A
language may share a fraction of its lexicon (identical spellings) with
the first earlier language of the same script.  Documents are
Zipf-sampled word sequences with sentence punctuation, occasional
quoted words and dialog-style ``name: "..."`` lines, so the quote/colon
tokens the evaluation prompts rely on occur naturally in training text.
A configurable fraction of documents is incidental-parallel: the same
concept sequence rendered in two languages back-to-back, separated by a
single space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorpusExhausted, InputError

#: script tag -> (vowels, consonants); tags use disjoint character ranges
SCRIPTS = {
    "terra": ("aeiou", "bdfgklmnprstvz"),
    "halma": ("αεηιοω", "βγδθκλμνπρστφχ"),
    "runic": ("ᚢᚨᛁᛟ", "ᚦᚱᚲᚷᚺᛃᛏᛒᛚᛗ"),
}


@dataclass(frozen=True)
class SyntheticLanguageSpec:
    lang_id: str
    script: str = "terra"
    lexicon_size: int = 512
    shared_form_fraction: float = 0.0
    morphology_suffixes: tuple = ()
    zipf_exponent: float = 1.1

    def __post_init__(self):
        if self.script not in SCRIPTS:
            raise InputError(f"unknown script tag {self.script!r}")
        if not (0.0 <= self.shared_form_fraction <= 1.0):
            raise InputError("shared_form_fraction must be in [0, 1]")
        if self.lexicon_size < 8:
            raise InputError("lexicon_size too small")
        if self.zipf_exponent <= 0:
            raise InputError("zipf_exponent must be positive")

    def to_dict(self) -> dict:
        return {"lang_id": self.lang_id, "script": self.script,
                "lexicon_size": self.lexicon_size,
                "shared_form_fraction": self.shared_form_fraction,
                "morphology_suffixes": list(self.morphology_suffixes),
                "zipf_exponent": self.zipf_exponent}

    @staticmethod
    def from_dict(d: dict) -> "SyntheticLanguageSpec":
        d = dict(d)
        d["morphology_suffixes"] = tuple(d.get("morphology_suffixes", ()))
        return SyntheticLanguageSpec(**d)


def default_language_specs() -> list[SyntheticLanguageSpec]:
    """Four languages: two same-script with 15% shared forms, one
    same-script disjoint lexicon, one distinct script."""
    return [
        SyntheticLanguageSpec("L0", "terra", morphology_suffixes=("la", "ni")),
        SyntheticLanguageSpec("L1", "terra", shared_form_fraction=0.15,
                              morphology_suffixes=("ko", "su")),
        SyntheticLanguageSpec("L2", "terra", morphology_suffixes=("re", "ma")),
        SyntheticLanguageSpec("L3", "halma", morphology_suffixes=("θο", "ρι")),
    ]


def _make_word(rng, vowels, consonants, n_syllables) -> str:
    out = []
    for _ in range(n_syllables):
        out.append(consonants[rng.integers(len(consonants))])
        out.append(vowels[rng.integers(len(vowels))])
    if rng.random() < 0.3:
        out.append(consonants[rng.integers(len(consonants))])
    return "".join(out)


def _partner_index(specs, i) -> int | None:
    for j in range(i):
        if specs[j].script == specs[i].script:
            return j
    return None


def build_lexicons(specs, seed: int) -> dict:
    """Rank-ordered lexicon per language (index = Zipf rank).

    A language with a same-script predecessor copies
    ``shared_form_fraction`` of its words from that partner, spelled
    identically and placed at seeded random ranks.
    """
    lexicons = {}
    for i, spec in enumerate(specs):
        rng = np.random.default_rng([seed, 7001, i])
        vowels, consonants = SCRIPTS[spec.script]
        partner = _partner_index(specs, i)
        n_shared = 0
        shared: list = []
        if partner is not None and spec.shared_form_fraction > 0:
            pool = lexicons[specs[partner].lang_id]
            n_shared = min(int(round(spec.shared_form_fraction * spec.lexicon_size)), len(pool))
            shared = [pool[k] for k in rng.choice(len(pool), size=n_shared, replace=False)]
        words = set(shared)
        fresh = []
        while len(fresh) + n_shared < spec.lexicon_size:
            w = _make_word(rng, vowels, consonants, int(rng.integers(2, 5)))
            if w not in words:
                words.add(w)
                fresh.append(w)
        slots = list(rng.choice(spec.lexicon_size, size=n_shared, replace=False))
        lex: list = [None] * spec.lexicon_size
        for s, w in zip(sorted(slots), shared):
            lex[s] = w
        it = iter(fresh)
        for k in range(spec.lexicon_size):
            if lex[k] is None:
                lex[k] = next(it)
        lexicons[spec.lang_id] = lex
    return lexicons


def language_names(specs, seed: int) -> dict:
    """Self-name of each language, a word in its own script."""
    names = {}
    for i, spec in enumerate(specs):
        rng = np.random.default_rng([seed, 7002, i])
        vowels, consonants = SCRIPTS[spec.script]
        names[spec.lang_id] = _make_word(rng, vowels, consonants, 3).capitalize()
    return names


def _zipf_probs(n: int, s: float) -> np.ndarray:
    p = 1.0 / np.arange(1, n + 1, dtype=np.float64) ** s
    return p / p.sum()


@dataclass
class CorpusParams:
    doc_words: tuple = (20, 60)        # uniform inclusive range
    sentence_words: tuple = (4, 10)
    quote_prob: float = 0.12           # sentences with one quoted word
    dialog_prob: float = 0.06          # sentences as name: "..." lines
    dash_prob: float = 0.05            # sentences with a ' - ' aside
    newline_prob: float = 0.15         # sentences starting on a new line
    suffix_prob: float = 0.12          # words carrying a morphology suffix
    # word burstiness: documents reuse a small topic vocabulary, so rare
    # words recur within a document like they do in natural text
    topic_words: tuple = (6, 10)
    topic_prob: float = 0.35
    echo_prob: float = 0.08            # sentences repeated verbatim later
    parallel_fraction: float = 0.02    # incidental-parallel documents
    parallel_concepts: tuple = (4, 8)  # concepts per parallel document
    # incidental glossary documents: labeled word-pair lines, the way
    # web text carries bilingual word lists; echo glossaries pair a word
    # with itself (same label), over arbitrary lexicon words
    glossary_fraction: float = 0.02
    echo_glossary_fraction: float = 0.015
    glossary_lines: tuple = (3, 6)


def generate_corpus(specs, concepts, size_per_lang, seed: int,
                    params: CorpusParams | None = None) -> dict:
    """Per-language document lists; deterministic under the seed.
    size_per_lang: document count, or a per-language mapping."""
    if isinstance(size_per_lang, dict):
        sizes = {s.lang_id: int(size_per_lang[s.lang_id]) for s in specs}
    else:
        sizes = {s.lang_id: int(size_per_lang) for s in specs}
    params = params or CorpusParams()
    lexicons = build_lexicons(specs, seed)
    names = language_names(specs, seed)
    by_lang = {s.lang_id: s for s in specs}

    for c in concepts:
        for lang, form in c.forms.items():
            if lang in by_lang and form not in set(lexicons[lang]):
                raise InputError(f"concept {c.concept_id} form {form!r} not in {lang} lexicon")

    covered = {}
    for c in concepts:
        for a in c.forms:
            for b in c.forms:
                if a != b and a in by_lang and b in by_lang:
                    covered.setdefault((a, b), []).append(c)

    corpora = {}
    for i, spec in enumerate(specs):
        rng = np.random.default_rng([seed, 7003, i])
        lex = lexicons[spec.lang_id]
        probs = _zipf_probs(len(lex), spec.zipf_exponent)
        suffixes = list(spec.morphology_suffixes)
        docs = []
        n_docs = sizes[spec.lang_id]
        n_parallel = int(round(params.parallel_fraction * n_docs))
        n_glossary = int(round(params.glossary_fraction * n_docs))
        n_echo = int(round(params.echo_glossary_fraction * n_docs))
        special = rng.choice(n_docs, size=min(n_docs, n_parallel + n_glossary + n_echo),
                             replace=False).tolist()
        parallel_at = set(special[:n_parallel])
        glossary_at = set(special[n_parallel:n_parallel + n_glossary])
        echo_at = set(special[n_parallel + n_glossary:])
        partners = sorted(b for (a, b) in covered if a == spec.lang_id)
        for di in range(n_docs):
            if di in parallel_at and partners:
                other = partners[int(rng.integers(len(partners)))]
                pool = covered[(spec.lang_id, other)]
                k = int(rng.integers(params.parallel_concepts[0],
                                     params.parallel_concepts[1] + 1))
                picks = [pool[j] for j in rng.choice(len(pool), size=min(k, len(pool)),
                                                     replace=False)]
                first = " ".join(c.forms[spec.lang_id] for c in picks) + "."
                second = " ".join(c.forms[other] for c in picks) + "."
                docs.append(first + " " + second)
                continue
            if di in glossary_at and partners:
                other = partners[int(rng.integers(len(partners)))]
                pool = covered[(spec.lang_id, other)]
                k = int(rng.integers(params.glossary_lines[0],
                                     params.glossary_lines[1] + 1))
                picks = [pool[j] for j in rng.choice(len(pool), size=min(k, len(pool)),
                                                     replace=False)]
                docs.append("\n".join(
                    f'{names[spec.lang_id]}: "{c.forms[spec.lang_id]}"'
                    f' - {names[other]}: "{c.forms[other]}"' for c in picks))
                continue
            if di in echo_at:
                k = int(rng.integers(params.glossary_lines[0],
                                     params.glossary_lines[1] + 1))
                idx = rng.choice(len(lex), size=k, p=probs)
                ws = [lex[j] for j in idx]
                if suffixes:
                    for t in range(k):
                        if rng.random() < params.suffix_prob:
                            ws[t] = ws[t] + suffixes[int(rng.integers(len(suffixes)))]
                docs.append("\n".join(
                    f'{names[spec.lang_id]}: "{w}" - {names[spec.lang_id]}: "{w}"'
                    for w in ws))
                continue
            n_words = int(rng.integers(params.doc_words[0], params.doc_words[1] + 1))
            n_topic = int(rng.integers(params.topic_words[0], params.topic_words[1] + 1))
            topic = rng.choice(len(lex), size=n_topic, p=probs)
            sentences = []
            remaining = n_words
            while remaining > 0:
                n = int(rng.integers(params.sentence_words[0], params.sentence_words[1] + 1))
                n = min(n, remaining)
                remaining -= n
                if sentences and rng.random() < params.echo_prob:
                    sentences.append(sentences[int(rng.integers(len(sentences)))])
                    continue
                idx = rng.choice(len(lex), size=n, p=probs)
                from_topic = rng.random(n) < params.topic_prob
                idx[from_topic] = topic[rng.integers(0, n_topic, int(from_topic.sum()))]
                ws = [lex[j] for j in idx]
                if suffixes:
                    for k in range(n):
                        if rng.random() < params.suffix_prob:
                            ws[k] = ws[k] + suffixes[int(rng.integers(len(suffixes)))]
                r = rng.random()
                if r < params.dialog_prob:
                    speaker = names[spec.lang_id] if rng.random() < 0.5 \
                        else lex[int(rng.choice(len(lex), p=probs))]
                    sentences.append(f'{speaker}: "' + " ".join(ws) + '."')
                elif r < params.dialog_prob + params.quote_prob and n >= 2:
                    q = int(rng.integers(n))
                    ws[q] = '"' + ws[q] + '"'
                    sentences.append(" ".join(ws) + ".")
                elif r < params.dialog_prob + params.quote_prob + params.dash_prob and n >= 3:
                    cut = int(rng.integers(1, n))
                    sentences.append(" ".join(ws[:cut]) + " - " + " ".join(ws[cut:]) + ".")
                else:
                    sentences.append(" ".join(ws) + ".")
            parts = [sentences[0]]
            for sent in sentences[1:]:
                parts.append("\n" if rng.random() < params.newline_prob else " ")
                parts.append(sent)
            docs.append("".join(parts))
        corpora[spec.lang_id] = docs
    return corpora


def save_corpus(corpora: dict, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for lang, docs in corpora.items():
        (out_dir / f"{lang}.txt").write_text("\n\n".join(docs) + "\n", encoding="utf-8")


def load_corpus(out_dir, langs) -> dict:
    out_dir = Path(out_dir)
    corpora = {}
    for lang in langs:
        text = (out_dir / f"{lang}.txt").read_text(encoding="utf-8")
        corpora[lang] = [d.strip("\n") for d in text.split("\n\n") if d.strip()]
    return corpora


@dataclass(frozen=True)
class MixtureSpec:
    probs: dict

    def __post_init__(self):
        total = sum(self.probs.values())
        if abs(total - 1.0) > 1e-9:
            raise InputError(f"mixture probabilities sum to {total}, not 1")
        if any(p < 0 for p in self.probs.values()):
            raise InputError("mixture probabilities must be nonnegative")

    @property
    def langs(self) -> list:
        return sorted(self.probs)


def default_mixture(specs) -> MixtureSpec:
    """First language at 0.5, the rest uniform (mirrors a dominant-
    language mixture shape)."""
    rest = [s.lang_id for s in specs[1:]]
    probs = {specs[0].lang_id: 0.5}
    for r in rest:
        probs[r] = 0.5 / len(rest)
    return MixtureSpec(probs)


@dataclass
class Batch:
    tokens: np.ndarray      # (B, S) int32
    loss_mask: np.ndarray   # (B, S) bool; position 0 excluded
    langs: list             # per-sample language label

    def save(self, path) -> None:
        np.savez(path, tokens=self.tokens, loss_mask=self.loss_mask,
                 langs=np.array(self.langs, dtype="U16"))

    @staticmethod
    def load(path) -> "Batch":
        z = np.load(path)
        return Batch(tokens=z["tokens"], loss_mask=z["loss_mask"],
                     langs=[str(x) for x in z["langs"]])


class BatchSampler:
    """Draws each sample's language i.i.d. from the mixture and packs
    unused documents (bos-separated) to seq_len.  Every document is
    consumed at most once; exhaustion raises :class:`CorpusExhausted`.
    """

    def __init__(self, doc_tokens: dict, mixture: MixtureSpec, batch_size: int,
                 seq_len: int, seed: int, bos_id: int, track_docs: bool = False):
        for lang in mixture.probs:
            if lang not in doc_tokens:
                raise InputError(f"mixture language {lang!r} has no documents")
        self.docs = doc_tokens
        self.mixture = mixture
        self.batch_size = batch_size
        self.seq_len = seq_len
        self.bos_id = bos_id
        self.rng = np.random.default_rng([seed, 7004])
        self.cursors = {lang: 0 for lang in mixture.probs}
        self.track_docs = track_docs
        self.consumed_log: list = []
        self._langs = mixture.langs
        self._p = np.array([mixture.probs[l] for l in self._langs])

    def _next_doc(self, lang):
        cur = self.cursors[lang]
        if cur >= len(self.docs[lang]):
            raise CorpusExhausted(f"no unused documents left for language {lang!r}")
        self.cursors[lang] = cur + 1
        if self.track_docs:
            self.consumed_log.append((lang, cur))
        return self.docs[lang][cur]

    def next_batch(self) -> Batch:
        b, s = self.batch_size, self.seq_len
        tokens = np.empty((b, s), dtype=np.int32)
        langs = []
        for i in range(b):
            lang = self._langs[int(self.rng.choice(len(self._langs), p=self._p))]
            langs.append(lang)
            buf: list = []
            while len(buf) < s:
                buf.append(self.bos_id)
                buf.extend(self._next_doc(lang).tolist())
            tokens[i] = buf[:s]
        mask = np.ones((b, s), dtype=bool)
        mask[:, 0] = False
        return Batch(tokens=tokens, loss_mask=mask, langs=langs)

    def state_bytes(self) -> bytes:
        state = {"cursors": self.cursors, "rng": self.rng.bit_generator.state}
        return json.dumps(state, sort_keys=True).encode("utf-8")


def sample_batches(doc_tokens, mixture, batch_size, seq_len, seed, bos_id):
    """Generator form of the sampler; yields until the corpus runs out."""
    sampler = BatchSampler(doc_tokens, mixture, batch_size, seq_len, seed, bos_id)
    while True:
        try:
            yield sampler.next_batch()
        except CorpusExhausted:
            return
