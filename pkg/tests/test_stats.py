import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xld.errors import InputError
from xld.evalkit import PredictionRecord
from xld.stats import (CountTable, StreamCounter, build_regression_inputs,
                       count_document, count_document_naive, count_occurrences,
                       find_word_matches, first_correct_step, shapley_from_subsets,
                       shapley_r2, write_count_table_csv)

RNG = np.random.default_rng(6)
WORDS = ["ab", "cd", "ef", "gh"]
PAIRS = [("ab", "cd"), ("cd", "ef"), ("ab", "ab"), ("ef", "gh")]


class TestCounting:
    def test_simple_cooccurrence(self):
        freq, cooc = count_document("ab cd", ["ab", "cd"], [("ab", "cd")], 150)
        assert freq == {"ab": 1, "cd": 1}
        assert cooc == {("ab", "cd"): 1}

    def test_window_boundary(self):
        text = "ab" + " " * 199 + "cd"
        _, cooc = count_document(text, ["ab", "cd"], [("ab", "cd")], 150)
        assert cooc == {}
        _, cooc = count_document(text, ["ab", "cd"], [("ab", "cd")], 201)
        assert cooc == {("ab", "cd"): 1}

    def test_word_boundaries_respected(self):
        matches = find_word_matches("abc ab cdab ab.", ["ab"])
        assert matches["ab"] == [4, 12]

    def test_substring_mode(self):
        matches = find_word_matches("ababab", ["ab"], spaced=False)
        assert matches["ab"] == [0, 2, 4]

    def test_matches_naive_oracle_random_docs(self):
        vocab = WORDS + ["xx", "yy", "zz"]
        for _ in range(100):
            n = RNG.integers(50, 400)
            doc = " ".join(vocab[i] for i in RNG.integers(0, len(vocab), n))
            window = int(RNG.integers(5, 60))
            fast = count_document(doc, WORDS, PAIRS, window)
            naive = count_document_naive(doc, WORDS, PAIRS, window)
            assert fast == naive

    def test_stream_counter_matches_single_doc_counts(self):
        docs = [("ab cd ef", "L0"), ("cd ef gh cd", "L1")]
        counter = StreamCounter({"L0": WORDS, "L1": WORDS}, PAIRS, 150)
        for text, lang in docs:
            counter.add_document(text, lang)
        counter.snapshot(10)
        t = counter.table
        assert t.word_counts[("cd", "L0")] == [1]
        assert t.word_counts[("cd", "L1")] == [2]
        assert t.cooc_counts[("cd", "ef")] == [3]

    def test_cumulative_monotone_snapshots(self):
        counter = StreamCounter({"L0": WORDS}, PAIRS, 150)
        counter.add_document("ab cd", "L0")
        counter.snapshot(0)
        counter.add_document("ab ab cd", "L0")
        counter.snapshot(1)
        counter.snapshot(2)
        t = counter.table
        assert t.word_counts[("ab", "L0")] == [1, 3, 3]
        assert t.cooc_counts[("ab", "cd")] == [1, 3, 3]
        t.validate_monotone()

    def test_count_occurrences_stream(self):
        docs = [("ab cd", "L0", 0), ("ab", "L0", 5), ("cd", "L0", 12)]
        table = count_occurrences(docs, {"L0": ["ab", "cd"]}, [("ab", "cd")], 150,
                                  checkpoints=[0, 10, 20])
        assert table.word_counts[("ab", "L0")] == [0, 2, 2]
        assert table.word_counts[("cd", "L0")] == [0, 1, 2]

    def test_window_must_be_positive(self):
        with pytest.raises(InputError):
            count_document("ab", ["ab"], [], 0)

    def test_csv(self, tmp_path):
        table = CountTable(checkpoints=[0, 5],
                           word_counts={("ab", "L0"): [1, 2]},
                           cooc_counts={("ab", "cd"): [0, 1]})
        p = tmp_path / "c.csv"
        write_count_table_csv(table, p)
        lines = p.read_text().splitlines()
        assert lines[0] == "kind,key_a,key_b,0,5"
        assert "word,ab,L0,1,2" in lines
        assert "cooc,ab,cd,0,1" in lines


def rec(cid, a, b, label, step):
    return PredictionRecord(concept_id=cid, src_lang=a, tgt_lang=b, src_word="w",
                            decoded="d", label=label, overlap_bucket="none",
                            checkpoint_step=step)


class TestFirstCorrect:
    def test_earliest_correct_step(self):
        records = [rec("c", "A", "B", "err_other", 0),
                   rec("c", "A", "B", "correct", 10),
                   rec("c", "A", "B", "err_other", 20),
                   rec("c", "A", "B", "correct_valid_copy", 30)]
        assert first_correct_step(records)[("c", "A", "B")] == 10

    def test_only_last_checkpoint_correct(self):
        records = [rec("c", "A", "B", "err_other", s) for s in (0, 10)] + \
                  [rec("c", "A", "B", "correct", 20)]
        assert first_correct_step(records)[("c", "A", "B")] == 20

    def test_never_correct_is_none(self):
        records = [rec("c", "A", "B", "err_source_copy", s) for s in (0, 10)]
        assert first_correct_step(records)[("c", "A", "B")] is None


class TestShapley:
    def test_hand_example_two_predictors(self):
        r2 = {frozenset(): 0.0, frozenset({0}): 0.5, frozenset({1}): 0.3,
              frozenset({0, 1}): 0.6}
        values = shapley_from_subsets(r2, 2)
        assert values[0] == pytest.approx(0.4, abs=1e-12)
        assert values[1] == pytest.approx(0.2, abs=1e-12)

    def test_efficiency_axiom(self):
        n = 60
        x = RNG.standard_normal((n, 3))
        y = x @ np.array([1.0, -2.0, 0.5]) + 0.3 * RNG.standard_normal(n)
        report = shapley_r2(x, y)
        assert sum(report.shapley.values()) == pytest.approx(report.r2_full, abs=1e-9)
        assert not report.degenerate

    def test_orthogonal_predictors_additive(self):
        n = 64
        base = RNG.standard_normal((n, 3))
        q, _ = np.linalg.qr(base - base.mean(0))
        x = q[:, :3]
        y = 2 * x[:, 0] + 1 * x[:, 1] + 0.5 * x[:, 2]
        report = shapley_r2(x, y)
        for i, name in enumerate(report.shapley):
            solo = shapley_r2(x[:, [i]], y)
            assert report.shapley[name] == pytest.approx(solo.r2_full, abs=1e-9)

    def test_duplicated_predictor_splits_evenly(self):
        n = 50
        a = RNG.standard_normal(n)
        b = RNG.standard_normal(n)
        y = a + 0.5 * b + 0.1 * RNG.standard_normal(n)
        x = np.column_stack([a, a, b])
        report = shapley_r2(x, y, ["a1", "a2", "b"])
        assert report.shapley["a1"] == pytest.approx(report.shapley["a2"], abs=1e-9)
        assert report.degenerate

    def test_too_few_observations(self):
        with pytest.raises(InputError):
            shapley_r2(np.zeros((5, 3)), np.zeros(5))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_efficiency_property(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((20, 3))
        y = rng.standard_normal(20)
        report = shapley_r2(x, y)
        assert sum(report.shapley.values()) == pytest.approx(report.r2_full, abs=1e-9)
        assert report.r2_full <= 1.0 + 1e-12


class TestRegressionInputs:
    def test_copy_possible_and_never_correct_excluded(self, dataset):
        qids = sorted(dataset.query_ids)
        cognate = None
        plain = None
        for cid in qids:
            c = dataset.concept(cid)
            vs = {v.casefold() for v in c.valid_translations[("L0", "L1")]}
            if c.forms["L0"].casefold() in vs and cognate is None:
                cognate = cid
            elif c.forms["L0"].casefold() not in vs and plain is None:
                plain = cid
        assert cognate and plain
        records = [rec2(cognate, 10, "correct", dataset),
                   rec2(plain, 20, "correct", dataset),
                   rec2(qids[50], 0, "err_other", dataset)]
        firsts = first_correct_step(records)
        table = CountTable(checkpoints=[0], word_counts={}, cooc_counts={})
        x, y, kept = build_regression_inputs(firsts, dataset, table)
        assert [k[0] for k in kept] == [plain]


def rec2(cid, step, label, dataset):
    c = dataset.concept(cid)
    return PredictionRecord(concept_id=cid, src_lang="L0", tgt_lang="L1",
                            src_word=c.forms["L0"], decoded="d", label=label,
                            overlap_bucket="none", checkpoint_step=step)
