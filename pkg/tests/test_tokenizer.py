import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xld.errors import FormatError, InputError
from xld.tokenizer import TokenizerModel, pretokenize, train_tokenizer

RNG = np.random.default_rng(5)


def test_pretokenize_lossless_and_quote_isolated():
    text = 'Name: "word" - Other: "wb"\nplain words  here.'
    pieces = pretokenize(text)
    assert "".join(pieces) == text
    assert "word" in pieces and "wb" in pieces, "quoted words must stay bare pieces"
    assert ' "' in pieces and ' -' in pieces


def test_roundtrip_random_corpus_strings(corpora, tokenizer):
    rng = np.random.default_rng(0)
    docs = [d for docs in corpora.values() for d in docs]
    for _ in range(1000):
        doc = docs[rng.integers(len(docs))]
        a = rng.integers(0, max(1, len(doc) - 1))
        b = rng.integers(a + 1, len(doc) + 1)
        s = doc[a:b]
        assert tokenizer.decode(tokenizer.encode(s)) == s


def test_char_tokenizer_at_alphabet_size(corpora):
    probe = train_tokenizer(corpora, 10_000)
    alphabet = sum(1 for t in probe.vocab if len(t) == 1)
    tok = train_tokenizer(corpora, alphabet)
    assert tok.merges == []
    assert tok.n_tokens == alphabet + 2
    with pytest.raises(InputError):
        train_tokenizer(corpora, alphabet - 1)


def test_identical_words_encode_identically(tokenizer):
    # encoding is a pure function of the string, whatever language it
    # came from
    assert tokenizer.encode("mita") == tokenizer.encode("mita")


def test_unknown_character_rejected(tokenizer):
    with pytest.raises(InputError):
        tokenizer.encode("helloӧ")


def test_specials(tokenizer):
    assert tokenizer.pad_id == 0
    assert tokenizer.bos_id == 1
    assert tokenizer.decode([tokenizer.bos_id]) == ""


def test_save_load_roundtrip(tokenizer, tmp_path):
    p = tmp_path / "tok.json"
    tokenizer.save(p)
    loaded = TokenizerModel.load(p)
    assert loaded.merges == tokenizer.merges
    assert loaded.vocab == tokenizer.vocab
    s = 'a: "mita" - b: "kelo"'
    assert loaded.encode(s) == tokenizer.encode(s)


def test_load_rejects_bad_version(tokenizer, tmp_path):
    p = tmp_path / "tok.json"
    tokenizer.save(p)
    import json
    blob = json.loads(p.read_text())
    blob["version"] = 9
    p.write_text(json.dumps(blob))
    with pytest.raises(FormatError):
        TokenizerModel.load(p)
    p.write_text("not json")
    with pytest.raises(FormatError):
        TokenizerModel.load(p)


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet=sorted('abkmz αβγ .-:"\n'), max_size=60))
def test_roundtrip_property(s):
    tok = _PROPERTY_TOK
    assert tok.decode(tok.encode(s)) == s


_PROPERTY_TOK = train_tokenizer(
    ['abba kazam mez. "mez" - αβγ: "βα βγ."\nmore kazam words'], 80)
