"""Byte-pair tokenizer trained on piece frequencies.

Pretokenization splits text into pieces so that merges never cross a
word boundary and punctuation never fuses with letters: a piece is an
optional single leading space plus a maximal run of letters, or of
non-letter non-space characters, or a lone whitespace character.  In
particular a quote is never glued to the word it wraps, so a word
tokenizes identically on its own and inside ``"..."``.

Specials are ``<pad>`` (id 0) and ``<bos>`` (id 1); quotes are ordinary
tokens.  Encoding then decoding any string over the known alphabet is
lossless.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InputError

PAD, BOS = "<pad>", "<bos>"
N_SPECIALS = 2

# optional-space letter run | optional-space other run | lone whitespace
_PIECE_RE = re.compile(r" ?[^\W\d_]+| ?(?:\d|_|[^\w\s])+|\s", re.UNICODE)


def pretokenize(text: str) -> list[str]:
    return _PIECE_RE.findall(text)


@dataclass
class TokenizerModel:
    merges: list            # ordered (left, right) string pairs
    vocab: dict             # token string -> id, specials included
    specials: dict = field(default_factory=lambda: {"pad": 0, "bos": 1})

    def __post_init__(self):
        self._id_to_str = [""] * len(self.vocab)
        for s, i in self.vocab.items():
            self._id_to_str[i] = s
        self._ranks = {tuple(m): r for r, m in enumerate(self.merges)}
        self._piece_cache: dict = {}

    @property
    def n_tokens(self) -> int:
        return len(self.vocab)

    @property
    def pad_id(self) -> int:
        return self.specials["pad"]

    @property
    def bos_id(self) -> int:
        return self.specials["bos"]

    def _merge_piece(self, piece: str) -> list[str]:
        parts = list(piece)
        while len(parts) > 1:
            best_rank, best_i = None, -1
            for i in range(len(parts) - 1):
                r = self._ranks.get((parts[i], parts[i + 1]))
                if r is not None and (best_rank is None or r < best_rank):
                    best_rank, best_i = r, i
            if best_rank is None:
                break
            parts[best_i:best_i + 2] = [parts[best_i] + parts[best_i + 1]]
        return parts

    def encode_piece(self, piece: str) -> list[int]:
        ids = self._piece_cache.get(piece)
        if ids is None:
            try:
                ids = [self.vocab[p] for p in self._merge_piece(piece)]
            except KeyError as e:
                raise InputError(f"character {e.args[0]!r} not in tokenizer alphabet") from e
            self._piece_cache[piece] = ids
        return ids

    def encode(self, text: str) -> list[int]:
        out = []
        for piece in pretokenize(text):
            out.extend(self.encode_piece(piece))
        return out

    def decode(self, ids) -> str:
        skip = set(self.specials.values())
        return "".join(self._id_to_str[int(i)] for i in ids if int(i) not in skip)

    def save(self, path) -> None:
        blob = {"version": 1, "specials": self.specials,
                "merges": [list(m) for m in self.merges],
                "vocab_list": self._id_to_str}
        with open(path, "w", encoding="utf-8") as f:
            json.dump(blob, f, ensure_ascii=False, sort_keys=True)

    @staticmethod
    def load(path) -> "TokenizerModel":
        try:
            with open(path, encoding="utf-8") as f:
                blob = json.load(f)
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            raise FormatError(f"unreadable tokenizer file: {e}") from e
        if blob.get("version") != 1:
            raise FormatError(f"unsupported tokenizer version {blob.get('version')!r}")
        vocab = {s: i for i, s in enumerate(blob["vocab_list"])}
        if len(vocab) != len(blob["vocab_list"]):
            raise FormatError("tokenizer vocab contains duplicates")
        return TokenizerModel(merges=[tuple(m) for m in blob["merges"]],
                              vocab=vocab, specials=blob["specials"])


def train_tokenizer(corpora, vocab_size: int, extra_chars: str = '\n -":.') -> TokenizerModel:
    """Learn BPE merges from text.

    corpora: iterable of strings, or a mapping whose values are iterables
    of strings (per-language document sets).  ``vocab_size`` counts text
    tokens (alphabet + merges); the two specials come on top.
    """
    if isinstance(corpora, dict):
        texts = (doc for docs in corpora.values() for doc in docs)
    else:
        texts = iter(corpora)

    piece_freq = Counter()
    alphabet = set(extra_chars)
    for text in texts:
        piece_freq.update(pretokenize(text))
    for piece in piece_freq:
        alphabet.update(piece)
    alphabet = sorted(alphabet)
    if vocab_size < len(alphabet):
        raise InputError(f"vocab_size {vocab_size} below alphabet size {len(alphabet)}")
    n_merges = vocab_size - len(alphabet)

    words = {tuple(p): f for p, f in piece_freq.items()}
    pair_counts = Counter()
    pair_words: dict = {}
    for w, f in words.items():
        for i in range(len(w) - 1):
            pair = (w[i], w[i + 1])
            pair_counts[pair] += f
            pair_words.setdefault(pair, set()).add(w)

    merges = []
    for _ in range(n_merges):
        best = None
        for pair, cnt in pair_counts.items():
            if cnt < 2:
                continue
            if best is None or cnt > best[0] or (cnt == best[0] and pair < best[1]):
                best = (cnt, pair)
        if best is None:
            break
        pair = best[1]
        merges.append(pair)
        joined = pair[0] + pair[1]
        for w in list(pair_words.get(pair, ())):
            f = words.pop(w, None)
            if f is None:
                continue
            for i in range(len(w) - 1):
                p = (w[i], w[i + 1])
                pair_counts[p] -= f
                s = pair_words.get(p)
                if s is not None:
                    s.discard(w)
            new = []
            i = 0
            while i < len(w):
                if i < len(w) - 1 and w[i] == pair[0] and w[i + 1] == pair[1]:
                    new.append(joined)
                    i += 2
                else:
                    new.append(w[i])
                    i += 1
            new = tuple(new)
            words[new] = words.get(new, 0) + f
            for i in range(len(new) - 1):
                p = (new[i], new[i + 1])
                pair_counts[p] += f
                pair_words.setdefault(p, set()).add(new)

    vocab = {PAD: 0, BOS: 1}
    for ch in alphabet:
        vocab[ch] = len(vocab)
    for left, right in merges:
        vocab[left + right] = len(vocab)
    return TokenizerModel(merges=merges, vocab=vocab)


def tokenize_documents(tok: TokenizerModel, docs) -> list[np.ndarray]:
    return [np.array(tok.encode(d), dtype=np.int32) for d in docs]
