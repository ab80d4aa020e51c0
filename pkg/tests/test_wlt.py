from collections import Counter
from dataclasses import replace

import numpy as np
import pytest

from xld.corpus import SyntheticLanguageSpec
from xld.errors import FormatError, InputError
from xld.wlt import (ConceptEntry, WLTDataset, build_prompt, load_wlt, parse_prompt,
                     primary_pos_of, save_wlt, synthesize_wlt)


def test_default_split_sizes(dataset):
    assert len(dataset.fewshot_ids) == 25
    assert len(dataset.query_ids) == 100
    assert not (dataset.fewshot_ids & dataset.query_ids)


def test_pos_histogram(dataset):
    hist = Counter(c.primary_pos for c in dataset.concepts)
    assert hist == {"noun": 40, "verb": 40, "adj": 25, "adv": 20}


def test_primary_pos_priority():
    assert primary_pos_of({"adv", "noun"}) == "noun"
    assert primary_pos_of({"adj", "verb"}) == "verb"
    for c in synthesize_wlt([SyntheticLanguageSpec("A"), SyntheticLanguageSpec("B", shared_form_fraction=0.2)], seed=1, n_concepts=20,
                            n_fewshot=5, pos_targets={"noun": 8, "verb": 6, "adj": 3, "adv": 3},
                            target_copy_rate=2 / 30).concepts:
        assert c.primary_pos == primary_pos_of(c.pos_tags)


def test_fewshot_forms_unique_across_languages(dataset):
    for cid in dataset.fewshot_ids:
        forms = list(dataset.concept(cid).forms.values())
        assert len({f.casefold() for f in forms}) == len(forms)


def test_cognates_only_in_query(dataset):
    for cid in dataset.fewshot_ids:
        c = dataset.concept(cid)
        for (a, b), vs in c.valid_translations.items():
            assert c.forms[a].casefold() not in {v.casefold() for v in vs}


def test_copy_rate_within_one_point(dataset):
    assert abs(dataset.valid_copy_rate() - 0.044) <= 0.01


def test_copy_rate_configurable(specs):
    ds = synthesize_wlt(specs, seed=2, target_copy_rate=0.08)
    assert abs(ds.valid_copy_rate() - 0.08) <= 0.01


def test_valid_sets_contain_canonical(dataset):
    for c in dataset.concepts:
        for (a, b), vs in c.valid_translations.items():
            assert c.forms[b] in vs
            assert 1 <= len(vs) <= 3


def test_prompt_exact_format(dataset):
    cid = sorted(dataset.query_ids)[0]
    inst = build_prompt(dataset, cid, "L0", "L1", n_shots=5, seed=0)
    lines = inst.prompt_text.split("\n")
    assert len(lines) == 6
    name_src = dataset.lang_names["L0"]
    name_tgt = dataset.lang_names["L1"]
    for line, (ws, wt) in zip(lines[:5], inst.fewshot):
        assert line == f'{name_src}: "{ws}" - {name_tgt}: "{wt}"'
    assert lines[-1] == f'{name_src}: "{inst.src_word}" - {name_tgt}: "'
    assert not inst.prompt_text.endswith('""')


def test_prompt_repetition_variant(dataset):
    cid = sorted(dataset.query_ids)[1]
    inst = build_prompt(dataset, cid, "L2", "L2", n_shots=5, seed=0)
    for ws, wt in inst.fewshot:
        assert ws == wt
    assert inst.valid == frozenset({inst.src_word})


def test_prompt_zero_shots(dataset):
    cid = sorted(dataset.query_ids)[0]
    inst = build_prompt(dataset, cid, "L0", "L1", n_shots=0, seed=0)
    assert "\n" not in inst.prompt_text
    assert inst.prompt_text.endswith(': "')


def test_prompt_excludes_query_and_samples_without_replacement(dataset):
    cid = sorted(dataset.query_ids)[0]
    for seed in range(5):
        inst = build_prompt(dataset, cid, "L0", "L1", n_shots=5, seed=seed)
        ids = [ws for ws, _ in inst.fewshot]
        assert len(set(ids)) == 5
        assert inst.src_word not in ids


def test_prompt_preconditions(dataset):
    fid = sorted(dataset.fewshot_ids)[0]
    with pytest.raises(InputError):
        build_prompt(dataset, fid, "L0", "L1")      # not a query concept
    cid = sorted(dataset.query_ids)[0]
    with pytest.raises(InputError):
        build_prompt(dataset, cid, "L0", "L1", n_shots=26)


def test_prompt_parser_roundtrip(dataset):
    for cid in sorted(dataset.query_ids)[:10]:
        inst = build_prompt(dataset, cid, "L1", "L3", n_shots=5, seed=3)
        shots, (name_a, q, name_b) = parse_prompt(inst.prompt_text)
        assert shots == list(inst.fewshot)
        assert q == inst.src_word
        assert name_a == dataset.lang_names["L1"]
        assert name_b == dataset.lang_names["L3"]


def test_prompt_parser_rejects_garbage():
    with pytest.raises(FormatError):
        parse_prompt("no separators here")
    with pytest.raises(FormatError):
        parse_prompt('A: "x" - B: "y" trailing')


def test_io_roundtrip(dataset, tmp_path):
    p = tmp_path / "wlt.jsonl"
    save_wlt(dataset, p)
    assert load_wlt(p) == dataset


def test_io_rejects_missing_direction(dataset, tmp_path):
    c0 = dataset.concepts[0]
    broken_valid = dict(c0.valid_translations)
    broken_valid.pop(("L0", "L1"))
    broken = replace(c0, valid_translations=broken_valid)
    bad = WLTDataset(concepts=(broken,) + dataset.concepts[1:],
                     fewshot_ids=dataset.fewshot_ids, query_ids=dataset.query_ids,
                     languages=dataset.languages, lang_names=dataset.lang_names)
    p = tmp_path / "bad.jsonl"
    save_wlt(bad, p)
    with pytest.raises(FormatError):
        load_wlt(p)


def test_hand_written_file_loads(tmp_path):
    lines = [
        '{"version": 1, "languages": ["A", "B"], "lang_names": {"A": "Aa", "B": "Bb"},'
        ' "fewshot_ids": ["c0"], "query_ids": ["c1"]}',
        '{"concept_id": "c0", "forms": {"A": "ka", "B": "lo"},'
        ' "valid": {"A>B": ["lo"], "B>A": ["ka"]},'
        ' "pos_tags": ["noun"], "primary_pos": "noun", "frequency_bin": 0}',
        '{"concept_id": "c1", "forms": {"A": "mi", "B": "mi"},'
        ' "valid": {"A>B": ["mi"], "B>A": ["mi"]},'
        ' "pos_tags": ["verb"], "primary_pos": "verb", "frequency_bin": 1}',
    ]
    p = tmp_path / "hand.jsonl"
    p.write_text("\n".join(lines), encoding="utf-8")
    ds = load_wlt(p)
    assert ds.fewshot_ids == frozenset({"c0"})
    assert ds.query_ids == frozenset({"c1"})
    assert ds.valid_copy_rate() == 1.0


def test_dataset_validation_catches_cognate_in_fewshot(tmp_path):
    c = ConceptEntry(concept_id="c0", forms={"A": "ka", "B": "ka"},
                     valid_translations={("A", "B"): frozenset({"ka"}),
                                         ("B", "A"): frozenset({"ka"})},
                     pos_tags=frozenset({"noun"}), primary_pos="noun", frequency_bin=0)
    ds = WLTDataset(concepts=(c,), fewshot_ids=frozenset({"c0"}),
                    query_ids=frozenset(), languages=("A", "B"))
    with pytest.raises(FormatError):
        ds.validate()
